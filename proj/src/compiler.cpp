#include "imc/compiler.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "imc/error.hpp"
#include "imc/spectra.hpp"

namespace imc {

SplitInput split_signed_input(std::span<const int> x) {
  SplitInput s{std::vector<std::uint8_t>(x.size(), 0), std::vector<std::uint8_t>(x.size(), 0)};
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < -255 || x[i] > 255)
      fail(ErrorKind::Contract, "split_signed_input: value " + std::to_string(x[i]) + " exceeds 9-bit signed range");
    if (x[i] > 0) s.pos[i] = static_cast<std::uint8_t>(x[i]);
    else s.neg[i] = static_cast<std::uint8_t>(-x[i]);
  }
  return s;
}

// ---- conductance encoding ----------------------------------------------------------

void ConductanceEncoding::validate() const {
  if (!(0 <= g_lo && g_lo < g_hi && g_hi <= 255))
    fail(ErrorKind::Contract, "conductance encoding needs 0 <= g_lo < g_hi <= 255");
}

std::uint8_t ConductanceEncoding::encode(int w_q) const {
  if (w_q < -128 || w_q > 127) fail(ErrorKind::Contract, "encode: weight code outside int8");
  const std::int64_t g255 = g0_255() + span() * w_q;  // >= 255 * g_lo >= 0
  return static_cast<std::uint8_t>((2 * g255 + 255) / 510);  // round half up
}

int ConductanceEncoding::decode(std::uint8_t level) const {
  const double w = 255.0 * (static_cast<double>(level) - g_lo) / static_cast<double>(span()) - 128.0;
  return static_cast<int>(std::clamp(std::round(w), -128.0, 127.0));
}

EncodedColumnMeta ConductanceEncoding::meta() const {
  return {static_cast<double>(g0_255()) / 255.0, static_cast<double>(span()) / 255.0};
}

std::vector<std::uint8_t> encode_conductance(std::span<const std::int8_t> w_q, const ConductanceEncoding& enc) {
  enc.validate();
  std::vector<std::uint8_t> out(w_q.size());
  for (std::size_t i = 0; i < w_q.size(); ++i) out[i] = enc.encode(w_q[i]);
  return out;
}

// ---- plan bookkeeping --------------------------------------------------------------

std::size_t MappingPlan::used_cells() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.used_rows() * l.out;
  return n;
}

std::size_t MappingPlan::macs_per_sample() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.used_rows() * l.out * l.passes();
  return n;
}

std::size_t MappingPlan::vmms_per_sample() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.passes();
  return n;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h) {
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t MappingPlan::hash() const {
  const std::string text = plan_text(*this);
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

std::uint64_t fingerprint(const QuantizedModel& model) {
  std::vector<std::uint8_t> bytes;
  put_u64(bytes, model.layers.size());
  for (const auto& l : model.layers) {
    put_u64(bytes, l.in);
    put_u64(bytes, l.out);
    for (auto w : l.weight) bytes.push_back(static_cast<std::uint8_t>(w));
    for (auto b : l.bias) bytes.push_back(static_cast<std::uint8_t>(b));
    put_u64(bytes, std::bit_cast<std::uint64_t>(l.weight_q.scale));
    put_u64(bytes, std::bit_cast<std::uint64_t>(l.bias_scale));
    put_u64(bytes, std::bit_cast<std::uint64_t>(l.input_q.scale));
    put_u64(bytes, static_cast<std::uint64_t>(l.input_q.zero_point));
    put_u64(bytes, static_cast<std::uint64_t>(l.input_q.bit_width));
    bytes.push_back(l.input_q.is_signed);
    bytes.push_back(l.relu);
  }
  return fnv1a64(bytes);
}

// ---- execution ---------------------------------------------------------------------

std::int64_t adc_reference(const MappingPlan& plan, const LayerPlan& layer, std::int64_t input_sum) {
  const std::int64_t q = plan.encoding.g0_255() * input_sum;
  return q / 255 - static_cast<std::int64_t>(layer.zero_code) * (std::int64_t{1} << layer.adc_shift);
}

std::int64_t reconstruct_dot(const MappingPlan& plan, const LayerPlan& layer, std::uint8_t code,
                             std::int64_t input_sum) {
  const std::int64_t q = plan.encoding.g0_255() * input_sum;
  const std::int64_t step = std::int64_t{1} << layer.adc_shift;
  std::int64_t acc2;
  if (layer.zero_code == 0 && code == 0) {
    acc2 = 2 * (q / 255);  // everything at or below zero reads as zero
  } else {
    const std::int64_t ref = adc_reference(plan, layer, input_sum);
    acc2 = layer.adc_shift > 0 ? 2 * ref + (2 * std::int64_t{code} + 1) * step : 2 * (ref + code);
  }
  return 255 * acc2 - 2 * q;
}

namespace {

struct Pass {
  std::vector<std::uint8_t> dac;  // 256 row codes
  std::int64_t sum = 0;
  int sign = 1;
};

std::vector<Pass> build_passes(const LayerPlan& layer, std::span<const int> codes) {
  if (codes.size() != layer.in) fail(ErrorKind::Dimension, "execute: layer input width mismatch");
  std::vector<Pass> passes;
  auto finish = [&](std::vector<std::uint8_t> dac, int sign) {
    Pass p{std::move(dac), 0, sign};
    for (auto v : p.dac) p.sum += v;
    passes.push_back(std::move(p));
  };
  if (layer.split_input) {
    auto s = split_signed_input(codes);
    std::vector<std::uint8_t> pos(kTileDim, 0), neg(kTileDim, 0);
    std::copy(s.pos.begin(), s.pos.end(), pos.begin());
    std::copy(s.neg.begin(), s.neg.end(), neg.begin());
    pos[layer.in] = 255;  // bias row rides on the positive pass only
    finish(std::move(pos), 1);
    finish(std::move(neg), -1);
  } else {
    std::vector<std::uint8_t> dac(kTileDim, 0);
    for (std::size_t i = 0; i < codes.size(); ++i) {
      if (codes[i] < 0 || codes[i] > 255) fail(ErrorKind::Contract, "execute: unsigned input code out of range");
      dac[i] = static_cast<std::uint8_t>(codes[i]);
    }
    dac[layer.in] = 255;
    finish(std::move(dac), 1);
  }
  return passes;
}

LayerTrace execute_layer(const MappingPlan& plan, const LayerPlan& layer, const LayerPlan* next,
                         std::span<const int> codes, const AccumulateFn& accumulate) {
  LayerTrace tr;
  std::vector<std::int64_t> num(layer.bias_trim.begin(), layer.bias_trim.end());
  num.resize(layer.out, 0);
  for (const auto& pass : build_passes(layer, codes)) {
    const auto acc = accumulate(layer, pass.dac);
    const AdcConfig adc{layer.adc_shift, adc_reference(plan, layer, pass.sum)};
    std::vector<std::uint8_t> out(layer.out);
    for (std::size_t j = 0; j < layer.out; ++j) {
      out[j] = adc_convert(acc[j], adc);
      num[j] += pass.sign * reconstruct_dot(plan, layer, out[j], pass.sum);
    }
    tr.adc.push_back(std::move(out));
  }
  const double unit = layer.weight_scale * layer.input_q.scale / (2.0 * static_cast<double>(plan.encoding.span()));
  tr.real.resize(layer.out);
  for (std::size_t j = 0; j < layer.out; ++j) tr.real[j] = static_cast<double>(num[j]) * unit;
  if (next) {
    tr.next_codes.resize(layer.out);
    for (std::size_t j = 0; j < layer.out; ++j)
      tr.next_codes[j] = next->input_q.quantize(layer.relu ? std::max(0.0, tr.real[j]) : tr.real[j]);
  }
  return tr;
}

std::vector<int> input_codes(const LayerPlan& first, std::span<const double> features) {
  if (features.size() != first.in) fail(ErrorKind::Dimension, "execute: feature width mismatch");
  std::vector<int> codes(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) codes[i] = first.input_q.quantize(features[i]);
  return codes;
}

}  // namespace

ExecutionTrace execute_plan(const MappingPlan& plan, std::span<const double> features, const AccumulateFn& accumulate) {
  if (plan.layers.empty()) fail(ErrorKind::Contract, "execute: empty plan");
  ExecutionTrace trace;
  std::vector<int> codes = input_codes(plan.layers.front(), features);
  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    const auto& layer = plan.layers[l];
    const LayerPlan* next = l + 1 < plan.layers.size() ? &plan.layers[l + 1] : nullptr;
    auto tr = execute_layer(plan, layer, next, codes, accumulate);
    trace.vmm_count += layer.passes();
    trace.mac_count += layer.used_rows() * layer.out * layer.passes();
    codes = tr.next_codes;
    trace.layers.push_back(std::move(tr));
  }
  const auto& last = trace.layers.back();
  for (const auto& pass : last.adc) trace.logit_codes.insert(trace.logit_codes.end(), pass.begin(), pass.end());
  trace.predicted = argmax(last.real);
  return trace;
}

AccumulateFn golden_accumulator(const MappingPlan& plan) {
  return [&plan](const LayerPlan& layer, std::span<const std::uint8_t> dac) {
    const auto& g = plan.tiles.at(layer.tile).levels;
    std::vector<std::int64_t> acc(layer.out, 0);
    for (std::size_t i = 0; i < kTileDim; ++i) {
      const std::int64_t v = dac[i];
      if (!v) continue;
      const std::uint8_t* row = g.data() + i * kTileDim + layer.col_begin;
      for (std::size_t j = 0; j < layer.out; ++j) acc[j] += v * row[j];
    }
    return acc;
  };
}

ExecutionTrace golden_infer(const MappingPlan& plan, std::span<const double> features) {
  return execute_plan(plan, features, golden_accumulator(plan));
}

// ---- compile -----------------------------------------------------------------------

namespace {

struct Conversion {
  std::int64_t acc, input_sum;
};

double clamp_fraction(const MappingPlan& plan, LayerPlan layer, unsigned shift, const std::vector<Conversion>& conv) {
  layer.adc_shift = shift;
  std::size_t clamped = 0;
  for (const auto& c : conv) {
    const std::int64_t q = (c.acc - adc_reference(plan, layer, c.input_sum)) >> shift;
    if (q > 255 || (layer.zero_code > 0 && q < 0)) ++clamped;
  }
  return conv.empty() ? 0.0 : static_cast<double>(clamped) / static_cast<double>(conv.size());
}

}  // namespace

MappingPlan compile(const QuantizedModel& model, const Matrix& calibration, const CompileConfig& cfg) {
  cfg.encoding.validate();
  if (model.layers.empty()) fail(ErrorKind::Contract, "compile: empty model");
  if (calibration.rows == 0) fail(ErrorKind::Data, "compile: empty calibration batch");
  MappingPlan plan;
  plan.model_fingerprint = fingerprint(model);
  plan.npu_count = cfg.npu_count;
  plan.encoding = cfg.encoding;
  const auto& enc = plan.encoding;
  const std::uint8_t zero_level = enc.encode(0);

  // First-fit column packing; every layer's rows start at row 0.
  std::vector<std::size_t> cols_used;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& ql = model.layers[l];
    if (ql.in + 1 > kTileDim || ql.out > kTileDim)
      fail(ErrorKind::Capacity, "compile: layer " + std::to_string(l + 1) + " (" + std::to_string(ql.in) + "+1 x " +
                                    std::to_string(ql.out) + ") exceeds one 256x256 tile");
    if (!ql.input_q.is_signed && ql.input_q.zero_point != 0)
      fail(ErrorKind::Contract, "compile: unsigned layer inputs must have zero point 0");
    LayerPlan lp;
    lp.in = ql.in;
    lp.out = ql.out;
    lp.split_input = ql.input_q.is_signed;
    lp.relu = ql.relu;
    lp.zero_code = (lp.split_input || !lp.relu) ? 128 : 0;
    lp.weight_scale = ql.weight_q.scale;
    lp.input_q = ql.input_q;
    std::size_t t = 0;
    while (t < cols_used.size() && cols_used[t] + ql.out > kTileDim) ++t;
    if (t == cols_used.size()) {
      if (cols_used.size() == cfg.npu_count)
        fail(ErrorKind::Capacity, "compile: model needs more than " + std::to_string(cfg.npu_count) + " tiles");
      cols_used.push_back(0);
      plan.tiles.push_back({std::vector<std::uint8_t>(kTileCells, zero_level)});
    }
    lp.tile = t;
    lp.col_begin = cols_used[t];
    cols_used[t] += ql.out;

    // Transposed onto the array: input i drives row i, output j is column j.
    auto& g = plan.tiles[t].levels;
    const auto folded = fold_bias<std::int8_t>(ql.weight, ql.out, ql.in, ql.bias);
    for (std::size_t j = 0; j < ql.out; ++j)
      for (std::size_t i = 0; i <= ql.in; ++i)
        g[i * kTileDim + lp.col_begin + j] = enc.encode(folded[j * (ql.in + 1) + i]);
    lp.bias_trim.resize(ql.out);
    for (std::size_t j = 0; j < ql.out; ++j) {
      const std::int64_t level = g[ql.in * kTileDim + lp.col_begin + j];
      lp.bias_trim[j] = 2 * 255 * (enc.span() * ql.bias[j] - (255 * level - enc.g0_255()));
    }
    plan.layers.push_back(std::move(lp));
  }
  if (plan.used_cells() > cfg.npu_count * kTileCells) fail(ErrorKind::Capacity, "compile: plan exceeds capacity");

  // ADC calibration on the exact integer path, layer by layer.
  const std::size_t n = std::min(calibration.rows, std::max<std::size_t>(1, cfg.calibration_samples));
  const auto golden = golden_accumulator(plan);
  std::vector<std::vector<int>> codes(n);
  for (std::size_t s = 0; s < n; ++s) codes[s] = input_codes(plan.layers.front(), calibration.row(s));
  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    auto& layer = plan.layers[l];
    std::vector<Conversion> conv;
    for (std::size_t s = 0; s < n; ++s)
      for (const auto& pass : build_passes(layer, codes[s])) {
        const auto acc = golden(layer, pass.dac);
        for (auto a : acc) conv.push_back({a, pass.sum});
      }
    unsigned shift = 0;
    double frac = clamp_fraction(plan, layer, 0, conv);
    while (frac > cfg.max_clamp_fraction && shift < cfg.max_shift) frac = clamp_fraction(plan, layer, ++shift, conv);
    if (frac > cfg.fail_clamp_fraction) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "compile: layer %zu clamps %.1f%% of calibration conversions at shift %u", l + 1,
                    100.0 * frac, shift);
      fail(ErrorKind::Calibration, buf);
    }
    layer.adc_shift = shift;
    layer.calibration_clamp = frac;
    const LayerPlan* next = l + 1 < plan.layers.size() ? &plan.layers[l + 1] : nullptr;
    if (next)
      for (std::size_t s = 0; s < n; ++s) codes[s] = execute_layer(plan, layer, next, codes[s], golden).next_codes;
  }
  return plan;
}

// ---- programming -------------------------------------------------------------------

ProgrammedDevice program_plan(const MappingPlan& plan, const DeviceParams& params, std::uint64_t seed) {
  ProgrammedDevice dev;
  dev.plan_hash = plan.hash();
  const Rng root = Rng(seed).split(streams::kDevice);
  const double slope = plan.encoding.meta().slope;
  for (std::size_t k = 0; k < plan.tiles.size(); ++k) {
    CrossbarTile tile(params, root.split(k));
    ProgramReport rep;
    try {
      rep = tile.program_closed_loop(plan.tiles[k].levels);
    } catch (const ProgrammingError& e) {
      throw ProgrammingError("tile " + std::to_string(k) + ": " + e.what(), e.report());
    }
    for (const auto& sc : rep.stuck_cells)
      for (std::size_t l = 0; l < plan.layers.size(); ++l) {
        const auto& lp = plan.layers[l];
        if (lp.tile != k || sc.row >= lp.used_rows() || sc.col < lp.col_begin || sc.col >= lp.col_begin + lp.out)
          continue;
        const double level = sc.state == CellState::StuckOff ? 0.0 : 255.0;
        dev.stuck_weights.push_back({k, l, sc.row, sc.col - lp.col_begin, (level - sc.target) / slope});
      }
    dev.tiles.push_back(std::move(tile));
    dev.reports.push_back(std::move(rep));
  }
  return dev;
}

// ---- text form ---------------------------------------------------------------------

void write_plan(std::ostream& os, const MappingPlan& plan) {
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(plan.model_fingerprint));
  os << "plan v1\n";
  os << "model_fingerprint " << hex << '\n';
  os << "npu_count " << plan.npu_count << '\n';
  os << "encoding g_lo=" << plan.encoding.g_lo << " g_hi=" << plan.encoding.g_hi << '\n';
  os << "tile_count " << plan.tiles.size() << '\n';
  os << "layer_count " << plan.layers.size() << '\n';
  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    const auto& lp = plan.layers[l];
    os << "\n[layer " << l + 1 << "]\n";
    os << "tile " << lp.tile << '\n';
    os << "rows 0 " << lp.used_rows() << '\n';
    os << "cols " << lp.col_begin << ' ' << lp.col_begin + lp.out << '\n';
    os << "in " << lp.in << '\n';
    os << "out " << lp.out << '\n';
    os << "split_input " << lp.split_input << '\n';
    os << "relu " << lp.relu << '\n';
    os << "adc_shift " << lp.adc_shift << '\n';
    os << "zero_code " << lp.zero_code << '\n';
    os << "weight_scale " << format_double(lp.weight_scale) << '\n';
    os << "input_scale " << format_double(lp.input_q.scale) << '\n';
    os << "input_zero_point " << lp.input_q.zero_point << '\n';
    os << "input_bits " << lp.input_q.bit_width << '\n';
    os << "input_signed " << lp.input_q.is_signed << '\n';
    os << "calibration_clamp " << format_double(lp.calibration_clamp) << '\n';
    os << "bias_trim";
    for (auto v : lp.bias_trim) os << ' ' << v;
    os << '\n';
    os << "levels\n";
    const auto& g = plan.tiles[lp.tile].levels;
    for (std::size_t i = 0; i < lp.used_rows(); ++i) {
      for (std::size_t j = 0; j < lp.out; ++j) os << (j ? " " : "") << int(g[i * kTileDim + lp.col_begin + j]);
      os << '\n';
    }
    os << "end\n";
  }
}

std::string plan_text(const MappingPlan& plan) {
  std::ostringstream os;
  write_plan(os, plan);
  return os.str();
}

namespace {

class LineReader {
 public:
  explicit LineReader(std::istream& is) : is_(is) {}

  std::string next() {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_no_;
      if (!line.empty()) return line;
    }
    fail(ErrorKind::Data, "plan: unexpected end of file");
  }
  // "key value..." -> value part; checks the key.
  std::string expect(const std::string& key) {
    const auto line = next();
    if (line.rfind(key, 0) != 0 || (line.size() > key.size() && line[key.size()] != ' '))
      fail(ErrorKind::Data, "plan line " + std::to_string(line_no_) + ": expected '" + key + "'");
    return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
  }
  template <class T>
  T number(const std::string& key) {
    return parse<T>(expect(key));
  }
  template <class T>
  T parse(std::string_view s) const {
    T v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      fail(ErrorKind::Data, "plan line " + std::to_string(line_no_) + ": bad number '" + std::string(s) + "'");
    return v;
  }
  template <class T>
  std::vector<T> numbers(std::string_view s) const {
    std::vector<T> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
      const auto end = std::min(s.find(' ', pos), s.size());
      out.push_back(parse<T>(s.substr(pos, end - pos)));
      pos = end + 1;
    }
    return out;
  }

 private:
  std::istream& is_;
  std::size_t line_no_ = 0;
};

}  // namespace

MappingPlan read_plan(std::istream& is) {
  LineReader in(is);
  if (in.next() != "plan v1") fail(ErrorKind::Data, "plan: missing 'plan v1' header");
  MappingPlan plan;
  {
    const auto hex = in.expect("model_fingerprint");
    auto res = std::from_chars(hex.data(), hex.data() + hex.size(), plan.model_fingerprint, 16);
    if (res.ec != std::errc() || hex.size() != 16) fail(ErrorKind::Data, "plan: bad fingerprint");
  }
  plan.npu_count = in.number<std::size_t>("npu_count");
  {
    const auto e = in.expect("encoding");
    if (std::sscanf(e.c_str(), "g_lo=%d g_hi=%d", &plan.encoding.g_lo, &plan.encoding.g_hi) != 2)
      fail(ErrorKind::Data, "plan: bad encoding line");
    plan.encoding.validate();
  }
  const auto n_tiles = in.number<std::size_t>("tile_count");
  const auto n_layers = in.number<std::size_t>("layer_count");
  if (n_tiles > plan.npu_count) fail(ErrorKind::Data, "plan: more tiles than NPUs");
  plan.tiles.assign(n_tiles, {std::vector<std::uint8_t>(kTileCells, plan.encoding.encode(0))});
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (in.next() != "[layer " + std::to_string(l + 1) + "]") fail(ErrorKind::Data, "plan: expected layer section");
    LayerPlan lp;
    lp.tile = in.number<std::size_t>("tile");
    const auto rows = in.numbers<std::size_t>(in.expect("rows"));
    const auto cols = in.numbers<std::size_t>(in.expect("cols"));
    lp.in = in.number<std::size_t>("in");
    lp.out = in.number<std::size_t>("out");
    if (lp.tile >= n_tiles || rows.size() != 2 || cols.size() != 2 || rows[0] != 0 || rows[1] != lp.in + 1 ||
        cols[1] != cols[0] + lp.out || cols[1] > kTileDim || rows[1] > kTileDim)
      fail(ErrorKind::Data, "plan: inconsistent extents in layer " + std::to_string(l + 1));
    lp.col_begin = cols[0];
    lp.split_input = in.number<int>("split_input") != 0;
    lp.relu = in.number<int>("relu") != 0;
    lp.adc_shift = in.number<unsigned>("adc_shift");
    lp.zero_code = in.number<int>("zero_code");
    lp.weight_scale = in.number<double>("weight_scale");
    lp.input_q.scale = in.number<double>("input_scale");
    lp.input_q.zero_point = in.number<int>("input_zero_point");
    lp.input_q.bit_width = in.number<int>("input_bits");
    lp.input_q.is_signed = in.number<int>("input_signed") != 0;
    lp.calibration_clamp = in.number<double>("calibration_clamp");
    lp.bias_trim = in.numbers<std::int64_t>(in.expect("bias_trim"));
    if (lp.bias_trim.size() != lp.out || lp.adc_shift > 40) fail(ErrorKind::Data, "plan: bad layer recipe");
    in.expect("levels");
    auto& g = plan.tiles[lp.tile].levels;
    for (std::size_t i = 0; i < lp.used_rows(); ++i) {
      const auto row = in.numbers<int>(in.next());
      if (row.size() != lp.out) fail(ErrorKind::Data, "plan: level row has the wrong width");
      for (std::size_t j = 0; j < lp.out; ++j) {
        if (row[j] < 0 || row[j] > 255) fail(ErrorKind::Data, "plan: level out of range");
        g[i * kTileDim + lp.col_begin + j] = static_cast<std::uint8_t>(row[j]);
      }
    }
    if (in.next() != "end") fail(ErrorKind::Data, "plan: missing 'end' of layer section");
    plan.layers.push_back(std::move(lp));
  }
  return plan;
}

}  // namespace imc
