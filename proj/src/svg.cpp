#include "imc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace imc {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
constexpr double kLeft = 64, kRight = 140, kTop = 36, kBottom = 48;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  const ChartSpec& spec;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (spec.width - kLeft - kRight); }
  double py(double y) const { return spec.height - kBottom - (y - y0) / (y1 - y0) * (spec.height - kTop - kBottom); }
};

void header(std::ostringstream& os, const ChartSpec& spec) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(spec.width) << "\" height=\"" << num(spec.height)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(spec.width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(spec.title) << "</text>\n";
}

void axes(std::ostringstream& os, const Frame& f, bool numeric_x) {
  const auto& s = f.spec;
  const double bottom = s.height - kBottom, right = s.width - kRight;
  os << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(bottom) << "\" x2=\"" << num(right) << "\" y2=\""
     << num(bottom) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(kLeft) << "\" y2=\""
     << num(bottom) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = f.y0 + (f.y1 - f.y0) * k / 4.0;
    const double shown = s.log_y ? std::pow(10.0, y) : y;
    os << "<text x=\"" << num(kLeft - 4) << "\" y=\"" << num(f.py(y) + 4) << "\" text-anchor=\"end\">"
       << tick_label(shown) << "</text>\n";
    if (numeric_x) {
      const double x = f.x0 + (f.x1 - f.x0) * k / 4.0;
      os << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(bottom + 14) << "\" text-anchor=\"middle\">"
         << tick_label(x) << "</text>\n";
    }
  }
  os << "<text x=\"" << num((kLeft + right) / 2) << "\" y=\"" << num(s.height - 10) << "\" text-anchor=\"middle\">"
     << escape(s.x_label) << "</text>\n";
  os << "<text x=\"14\" y=\"" << num((kTop + bottom) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << num((kTop + bottom) / 2) << ")\">" << escape(s.y_label) << "</text>\n";
}

void legend(std::ostringstream& os, const ChartSpec& spec, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 16.0 * static_cast<double>(i);
    os << "<rect x=\"" << num(spec.width - kRight + 10) << "\" y=\"" << num(y) << "\" width=\"10\" height=\"10\" fill=\""
       << kPalette[i % 7] << "\"/>\n";
    os << "<text x=\"" << num(spec.width - kRight + 24) << "\" y=\"" << num(y + 9) << "\">" << escape(names[i])
       << "</text>\n";
  }
}

}  // namespace

std::string line_chart(const std::vector<Series>& series, const ChartSpec& spec) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto yval = [&](double y) { return spec.log_y ? std::log10(y) : y; };
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (spec.log_y && !(s.y[i] > 0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, yval(s.y[i]));
      y1 = std::max(y1, yval(s.y[i]));
    }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const Frame f{x0, x1, y0, y1, spec};
  std::ostringstream os;
  header(os, spec);
  axes(os, f, true);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    names.push_back(s.name);
    os << "<polyline fill=\"none\" stroke=\"" << kPalette[k % 7] << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (spec.log_y && !(s.y[i] > 0)) continue;
      os << (first ? "" : " ") << num(f.px(s.x[i])) << ',' << num(f.py(yval(s.y[i])));
      first = false;
    }
    os << "\"/>\n";
  }
  legend(os, spec, names);
  os << "</svg>\n";
  return os.str();
}

std::string bar_chart(const std::vector<BarGroup>& groups, const std::vector<std::string>& series_names,
                      const ChartSpec& spec) {
  double y1 = 0.0;
  for (const auto& g : groups)
    for (double v : g.values) y1 = std::max(y1, v);
  if (y1 <= 0) y1 = 1;
  const Frame f{0, 1, 0, y1 * 1.05, spec};
  std::ostringstream os;
  header(os, spec);
  axes(os, f, false);
  const double plot_w = spec.width - kLeft - kRight;
  const double group_w = groups.empty() ? plot_w : plot_w / static_cast<double>(groups.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(1, series_names.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = kLeft + group_w * static_cast<double>(g) + group_w * 0.1;
    for (std::size_t k = 0; k < groups[g].values.size(); ++k) {
      const double v = groups[g].values[k];
      os << "<rect x=\"" << num(gx + bar_w * static_cast<double>(k)) << "\" y=\"" << num(f.py(v)) << "\" width=\""
         << num(bar_w * 0.95) << "\" height=\"" << num(f.py(0) - f.py(v)) << "\" fill=\"" << kPalette[k % 7]
         << "\"><title>" << tick_label(v) << "</title></rect>\n";
    }
    os << "<text x=\"" << num(gx + group_w * 0.4) << "\" y=\"" << num(spec.height - kBottom + 14)
       << "\" text-anchor=\"middle\">" << escape(groups[g].label) << "</text>\n";
  }
  legend(os, spec, series_names);
  os << "</svg>\n";
  return os.str();
}

}  // namespace imc
