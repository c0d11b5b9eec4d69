#include "imc/spectra.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "imc/error.hpp"
#include "imc/rng.hpp"

namespace imc {

std::string_view label_name(Label l) {
  switch (l) {
    case Label::Healthy: return "healthy";
    case Label::HeartAttack: return "heart_attack";
    case Label::LiverCancer: return "liver_cancer";
  }
  return "?";
}

Label parse_label(std::string_view s) {
  for (int c = 0; c < kNumClasses; ++c)
    if (label_name(static_cast<Label>(c)) == s) return static_cast<Label>(c);
  fail(ErrorKind::Data, "unknown label '" + std::string(s) + "'");
}

std::string_view provenance_name(Provenance p) {
  return p == Provenance::Synthetic ? "synthetic" : "generated";
}

// ---- dataset ------------------------------------------------------------------

ClassCounts SpectralDataset::class_counts() const {
  ClassCounts c{};
  for (const auto& s : spectra) ++c[static_cast<int>(s.label)];
  return c;
}

ClassCounts SpectralDataset::class_counts(Split which) const {
  ClassCounts c{};
  for (std::size_t i = 0; i < spectra.size(); ++i)
    if (assignment.at(i) == which) ++c[static_cast<int>(spectra[i].label)];
  return c;
}

std::vector<std::size_t> SpectralDataset::ids(Split which) const {
  if (assignment.size() != spectra.size()) fail(ErrorKind::Contract, "dataset has no split assignment");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < spectra.size(); ++i)
    if (assignment[i] == which) out.push_back(i);
  return out;
}

Matrix SpectralDataset::matrix(const std::vector<std::size_t>& which) const {
  Matrix m(which.size(), length);
  for (std::size_t r = 0; r < which.size(); ++r) {
    const auto& v = spectra.at(which[r]).intensities;
    std::copy(v.begin(), v.end(), m.row(r).begin());
  }
  return m;
}

std::vector<int> SpectralDataset::labels(const std::vector<std::size_t>& which) const {
  std::vector<int> out;
  out.reserve(which.size());
  for (auto i : which) out.push_back(static_cast<int>(spectra.at(i).label));
  return out;
}

// ---- generator ----------------------------------------------------------------

std::array<std::array<std::size_t, 3>, kNumClasses> signature_positions(std::size_t length) {
  static constexpr double kFractions[kNumClasses][3] = {
      {0.10, 0.42, 0.74},  // healthy
      {0.20, 0.52, 0.84},  // heart attack
      {0.30, 0.62, 0.93},  // liver cancer
  };
  std::array<std::array<std::size_t, 3>, kNumClasses> out{};
  const double span = static_cast<double>(length - 1);
  for (int c = 0; c < kNumClasses; ++c)
    for (int k = 0; k < 3; ++k) out[c][k] = static_cast<std::size_t>(std::lround(kFractions[c][k] * span));
  return out;
}

namespace {

struct Peak {
  double center, width, amp;
  bool lorentzian;
};

void add_peak(std::vector<double>& x, const Peak& p) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  if (p.lorentzian) {
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const double d = (static_cast<double>(i) - p.center) / p.width;
      x[i] += p.amp / (1.0 + d * d);
    }
  } else {
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(p.center - 8 * p.width));
    const auto hi = std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(p.center + 8 * p.width));
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
      const double d = (static_cast<double>(i) - p.center) / p.width;
      x[i] += p.amp * std::exp(-0.5 * d * d);
    }
  }
}

std::vector<double> make_spectrum(Label label, const GeneratorParams& gp, Rng& rng) {
  const std::size_t L = gp.length;
  const auto sig = signature_positions(L);
  const int own = static_cast<int>(label);
  std::vector<double> x(L, 0.0);

  // Slowly varying baseline.
  const double level = gp.baseline_level * rng.uniform(0.6, 1.0);
  const double slope = rng.uniform(-0.3, 0.3), curve = rng.uniform(-0.4, 0.4);
  const double wave = rng.uniform(0.0, 0.1), freq = rng.uniform(0.5, 1.5), phase = rng.uniform(0.0, 2 * std::numbers::pi);
  for (std::size_t i = 0; i < L; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(L - 1) - 0.5;
    x[i] = level + slope * u + curve * u * u + wave * std::sin(2 * std::numbers::pi * freq * u + phase);
  }

  auto width = [&] { return rng.uniform(gp.peak_width_min, gp.peak_width_max); };
  auto jitter = [&] { return rng.uniform(-gp.position_jitter, gp.position_jitter); };
  auto shape = [&] { return rng.bernoulli(0.5); };

  const auto total = static_cast<std::size_t>(rng.uniform_int(6, 12));
  for (std::size_t k = 0; k < 3; ++k) {
    const double c = static_cast<double>(sig[own][k]) + jitter();
    const double w = width(), a = rng.uniform(gp.signature_amp_min, gp.signature_amp_max);
    add_peak(x, {c, w, a, shape()});
  }
  // Other classes' signature positions appear with a weaker amplitude.
  std::vector<std::size_t> cross;
  for (int c = 0; c < kNumClasses; ++c)
    if (c != own)
      for (auto p : sig[c]) cross.push_back(p);
  std::size_t n_cross = 0;
  for (std::size_t k = 0; k < cross.size(); ++k) n_cross += rng.bernoulli(0.5);
  n_cross = std::min(n_cross, total - 3);
  for (std::size_t k = 0; k < n_cross; ++k) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(k), static_cast<std::int64_t>(cross.size()) - 1));
    std::swap(cross[k], cross[j]);
    const double w = width(), a = rng.uniform(0.0, gp.cross_amp_max);
    add_peak(x, {static_cast<double>(cross[k]) + jitter(), w, a, shape()});
  }
  for (std::size_t k = 3 + n_cross; k < total; ++k) {
    const double c = rng.uniform(40.0, static_cast<double>(L) - 40.0);
    const double w = width(), a = rng.uniform(0.1, gp.distractor_amp_max);
    add_peak(x, {c, w, a, shape()});
  }

  const double gain = std::exp(gp.gain_log_sigma * rng.normal());
  for (auto& v : x) v = std::max(0.0, gain * v + gp.noise_sigma * rng.normal());
  return x;
}

}  // namespace

SpectralDataset generate_synthetic(const ClassCounts& counts, const GeneratorParams& params, std::uint64_t seed) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (total == 0) fail(ErrorKind::Data, "generate_synthetic: empty dataset requested");
  if (params.length < 100) fail(ErrorKind::Contract, "generate_synthetic: length must be at least 100");
  SpectralDataset ds;
  ds.length = params.length;
  ds.spectra.reserve(total);
  const Rng root(seed);
  std::size_t id = 0;
  for (int c = 0; c < kNumClasses; ++c)
    for (std::size_t k = 0; k < counts[c]; ++k, ++id) {
      Rng rng = root.split(id);
      ds.spectra.push_back({make_spectrum(static_cast<Label>(c), params, rng), static_cast<Label>(c),
                            Provenance::Synthetic, std::nullopt});
    }
  return ds;
}

// ---- split --------------------------------------------------------------------------

std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size(), 0);
  if (total == 0 || wsum <= 0.0) return out;
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / wsum;
    out[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    used += out[i];
    rema.emplace_back(exact - static_cast<double>(out[i]), i);
  }
  std::stable_sort(rema.begin(), rema.end(), [](auto& a, auto& b) { return a.first > b.first + 1e-12; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++out[rema[k % rema.size()].second];
  return out;
}

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

std::vector<std::string> split(SpectralDataset& ds, const SplitOptions& opt) {
  if (ds.spectra.empty()) fail(ErrorKind::Data, "split: empty dataset");
  std::vector<std::string> warnings;
  const bool augmented = opt.mode == SplitMode::AugmentedTestRealOnly;
  const Rng root = Rng(opt.seed).split(streams::kSplit);
  ds.assignment.assign(ds.size(), Split::Train);
  ds.split_seed = opt.seed;

  // In augmented mode only Synthetic spectra are "primary"; Generated ones
  // inherit their source's split afterwards. Plain mode treats all alike.
  std::array<std::vector<std::size_t>, kNumClasses> primary;
  std::vector<std::size_t> secondary;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (augmented && ds.spectra[i].provenance == Provenance::Generated) secondary.push_back(i);
    else primary[static_cast<int>(ds.spectra[i].label)].push_back(i);
  }

  ClassCounts primary_counts{};
  for (int c = 0; c < kNumClasses; ++c) primary_counts[c] = primary[c].size();
  std::vector<std::size_t> test_per_class(kNumClasses, 0);
  if (opt.test_count > 0) {
    const std::size_t available = std::accumulate(primary_counts.begin(), primary_counts.end(), std::size_t{0});
    if (opt.test_count > available)
      fail(ErrorKind::Data, "split: test_count " + std::to_string(opt.test_count) + " exceeds " +
                                std::to_string(available) + " eligible spectra");
    test_per_class = apportion(opt.test_count, {double(primary_counts[0]), double(primary_counts[1]), double(primary_counts[2])});
  }

  for (int c = 0; c < kNumClasses; ++c) {
    auto& ids = primary[c];
    if (ids.empty()) continue;
    Rng rng = root.split(static_cast<std::uint64_t>(c));
    shuffle(ids, rng);
    std::size_t n_train, n_val, n_test;
    if (opt.test_count > 0) {
      n_test = test_per_class[c];
      auto tv = apportion(ids.size() - n_test, {opt.ratios[0], opt.ratios[1]});
      n_train = tv[0];
      n_val = tv[1];
    } else {
      auto parts = apportion(ids.size(), {opt.ratios[0], opt.ratios[1], opt.ratios[2]});
      n_train = parts[0];
      n_val = parts[1];
      n_test = parts[2];
    }
    const int wanted = (opt.ratios[0] > 0) + (opt.ratios[1] > 0) + (opt.ratios[2] > 0 || opt.test_count > 0);
    if (static_cast<int>(ids.size()) < wanted)
      warnings.push_back("class " + std::string(label_name(static_cast<Label>(c))) + " has only " +
                         std::to_string(ids.size()) + " spectra; stratification is best effort");
    std::size_t k = 0;
    for (; k < n_test; ++k) ds.assignment[ids[k]] = Split::Test;
    for (std::size_t e = k + n_train; k < e; ++k) ds.assignment[ids[k]] = Split::Train;
    for (std::size_t e = k + n_val; k < e; ++k) ds.assignment[ids[k]] = Split::Val;
    (void)n_val;
  }

  if (!secondary.empty()) {
    Rng rng = root.split(100);
    const double p_train = opt.ratios[0] / std::max(1e-12, opt.ratios[0] + opt.ratios[1]);
    for (auto i : secondary) {
      const auto& src = ds.spectra[i].source_id;
      const bool inherit = src && *src < ds.size() && ds.spectra[*src].provenance == Provenance::Synthetic &&
                           ds.assignment[*src] != Split::Test;
      const double u = rng.uniform();  // drawn unconditionally so order is stable
      ds.assignment[i] = inherit ? ds.assignment[*src] : (u < p_train ? Split::Train : Split::Val);
    }
  }
  return warnings;
}

// ---- text format ------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

void write_record(std::ostream& os, const Spectrum& s) {
  os << label_name(s.label) << ',' << provenance_name(s.provenance) << ',';
  if (s.source_id) os << *s.source_id;
  for (double v : s.intensities) os << ',' << format_double(v);
  os << '\n';
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    fail(ErrorKind::Data, "line " + std::to_string(line_no) + ": bad value '" + std::string(s) + "'");
  return v;
}

}  // namespace

void write_dataset(std::ostream& os, const SpectralDataset& ds) {
  os << "# spectra L=" << ds.length << '\n';
  for (const auto& s : ds.spectra) write_record(os, s);
}

void write_dataset(const std::filesystem::path& path, const SpectralDataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Data, "cannot write " + path.string());
  write_dataset(os, ds);
  if (!os) fail(ErrorKind::Data, "write failed: " + path.string());
}

SpectralDataset read_dataset(std::istream& is) {
  SpectralDataset ds;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# spectra L=", 0) != 0)
    fail(ErrorKind::Data, "dataset: missing '# spectra L=<L>' header");
  ds.length = static_cast<std::size_t>(std::stoul(line.substr(12)));
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_fields(line);
    if (fields.size() != 3 + ds.length)
      fail(ErrorKind::Data, "line " + std::to_string(line_no) + ": expected " + std::to_string(ds.length) +
                                " values, got " + std::to_string(fields.size() >= 3 ? fields.size() - 3 : 0));
    Spectrum s;
    s.label = parse_label(fields[0]);
    if (fields[1] == "synthetic") s.provenance = Provenance::Synthetic;
    else if (fields[1] == "generated") s.provenance = Provenance::Generated;
    else fail(ErrorKind::Data, "line " + std::to_string(line_no) + ": bad provenance");
    if (!fields[2].empty()) s.source_id = static_cast<std::size_t>(parse_double(fields[2], line_no));
    s.intensities.reserve(ds.length);
    for (std::size_t k = 0; k < ds.length; ++k) s.intensities.push_back(parse_double(fields[3 + k], line_no));
    ds.spectra.push_back(std::move(s));
  }
  return ds;
}

SpectralDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Data, "cannot read " + path.string());
  return read_dataset(is);
}

void write_snapshots(std::ostream& os, const std::vector<Snapshot>& snaps, Label label) {
  for (const auto& snap : snaps) {
    os << "# snapshots t=" << snap.t << '\n';
    for (const auto& sig : snap.signals) {
      Spectrum s{sig, label, Provenance::Generated, std::nullopt};
      write_record(os, s);
    }
  }
}

// ---- resampling --------------------------------------------------------------------

std::vector<double> resample_linear(std::span<const double> x, std::size_t out_len) {
  std::vector<double> out(out_len);
  const std::size_t n = x.size();
  if (n == 0 || out_len == 0) return out;
  if (n == 1 || out_len == 1) {
    std::fill(out.begin(), out.end(), x[0]);
    return out;
  }
  const double step = static_cast<double>(n - 1) / static_cast<double>(out_len - 1);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double p = static_cast<double>(i) * step;
    const auto lo = std::min(static_cast<std::size_t>(p), n - 2);
    const double f = p - static_cast<double>(lo);
    out[i] = x[lo] * (1.0 - f) + x[lo + 1] * f;
  }
  return out;
}

std::vector<double> downsample_box(std::span<const double> x, std::size_t out_len) {
  const std::size_t n = x.size();
  if (out_len >= n || out_len < 2) return resample_linear(x, out_len);
  std::vector<double> out(out_len);
  const double step = static_cast<double>(n - 1) / static_cast<double>(out_len - 1);
  const double half = step / 2.0;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double c = static_cast<double>(i) * step;
    const auto lo = static_cast<std::size_t>(std::max(0.0, std::ceil(c - half)));
    const auto hi = static_cast<std::size_t>(std::min(static_cast<double>(n - 1), std::floor(c + half)));
    double s = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) s += x[k];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

}  // namespace imc
