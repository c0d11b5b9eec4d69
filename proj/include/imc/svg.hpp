#pragma once

// Minimal SVG charts for the report command. Output is deterministic text.

#include <string>
#include <vector>

namespace imc {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct ChartSpec {
  std::string title, x_label, y_label;
  double width = 640, height = 400;
  bool log_y = false;  // non-positive values are dropped
};

std::string line_chart(const std::vector<Series>& series, const ChartSpec& spec);

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one per series name
};
std::string bar_chart(const std::vector<BarGroup>& groups, const std::vector<std::string>& series_names,
                      const ChartSpec& spec);

}  // namespace imc
