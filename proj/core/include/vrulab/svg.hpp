#pragma once

#include <string>
#include <vector>

namespace vrulab::svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::vector<double> err;  // optional symmetric error bars
};

std::string line_plot(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series);

// values[row][col]; rows drawn top to bottom.
std::string heatmap(const std::string& title, const std::string& row_label,
                    const std::string& col_label,
                    const std::vector<std::vector<double>>& values);

// One row of tokens, each shaded by its weight in [0, 1].
struct WeightedTokens {
  std::string caption;
  std::vector<std::string> tokens;
  std::vector<double> weights;
};
std::string text_heatmap(const std::string& title, const std::vector<WeightedTokens>& rows);

std::string escape(const std::string& text);

}  // namespace vrulab::svg
