#include "vrulab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace vrulab::svg {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label_fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// White to blue ramp for weights in [0, 1].
std::string ramp(double w) {
  w = std::clamp(std::isfinite(w) ? w : 0.0, 0.0, 1.0);
  const int r = static_cast<int>(255 - w * (255 - 8));
  const int g = static_cast<int>(255 - w * (255 - 48));
  const int b = static_cast<int>(255 - w * (255 - 107));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
  return out;
}

std::string line_plot(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series) {
  const double W = 640, H = 400, left = 60, right = 150, top = 40, bottom = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double e = i < s.err.size() ? s.err[i] : 0.0;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i] - e);
      ymax = std::max(ymax, s.y[i] + e);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W) + "\" height=\"" +
                    fmt(H) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt(W / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) + "</text>\n";
  out += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(top + ph) + "\" x2=\"" + fmt(left + pw) + "\" y2=\"" +
         fmt(top + ph) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(top) + "\" x2=\"" + fmt(left) + "\" y2=\"" +
         fmt(top + ph) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0, xv = xmin + (xmax - xmin) * k / 4.0;
    out += "<text x=\"" + fmt(left - 6) + "\" y=\"" + fmt(py(yv) + 4) + "\" text-anchor=\"end\">" + label_fmt(yv) + "</text>\n";
    out += "<text x=\"" + fmt(px(xv)) + "\" y=\"" + fmt(top + ph + 16) + "\" text-anchor=\"middle\">" + label_fmt(xv) + "</text>\n";
  }
  out += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"" + fmt(H - 10) + "\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
  out += "<text x=\"15\" y=\"" + fmt(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " +
         fmt(top + ph / 2) + ")\">" + escape(y_label) + "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const std::string color = kPalette[si % 6];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) pts += fmt(px(s.x[i])) + "," + fmt(py(s.y[i])) + " ";
    out += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out += "<circle cx=\"" + fmt(px(s.x[i])) + "\" cy=\"" + fmt(py(s.y[i])) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
      if (i < s.err.size() && s.err[i] > 0) {
        out += "<line x1=\"" + fmt(px(s.x[i])) + "\" y1=\"" + fmt(py(s.y[i] - s.err[i])) + "\" x2=\"" +
               fmt(px(s.x[i])) + "\" y2=\"" + fmt(py(s.y[i] + s.err[i])) + "\" stroke=\"" + color + "\"/>\n";
      }
    }
    const double ly = top + 16.0 * static_cast<double>(si);
    out += "<rect x=\"" + fmt(W - right + 10) + "\" y=\"" + fmt(ly) + "\" width=\"12\" height=\"12\" fill=\"" + color + "\"/>\n";
    out += "<text x=\"" + fmt(W - right + 28) + "\" y=\"" + fmt(ly + 10) + "\">" + escape(s.label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string heatmap(const std::string& title, const std::string& row_label,
                    const std::string& col_label,
                    const std::vector<std::vector<double>>& values) {
  const double cell = 22, left = 60, top = 40;
  const std::size_t rows = values.size();
  const std::size_t cols = rows ? values[0].size() : 0;
  double vmax = 0;
  for (const auto& r : values) {
    for (double v : r) {
      if (std::isfinite(v)) vmax = std::max(vmax, std::abs(v));
    }
  }
  if (vmax == 0) vmax = 1;
  const double W = left + cell * static_cast<double>(cols) + 90;
  const double H = top + cell * static_cast<double>(rows) + 50;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W) + "\" height=\"" +
                    fmt(H) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt(W / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) + "</text>\n";
  for (std::size_t r = 0; r < rows; ++r) {
    out += "<text x=\"" + fmt(left - 6) + "\" y=\"" + fmt(top + cell * r + 15) + "\" text-anchor=\"end\">" +
           std::to_string(r) + "</text>\n";
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = values[r][c];
      out += "<rect x=\"" + fmt(left + cell * c) + "\" y=\"" + fmt(top + cell * r) + "\" width=\"" + fmt(cell) +
             "\" height=\"" + fmt(cell) + "\" fill=\"" + ramp(std::abs(v) / vmax) + "\" stroke=\"#ccc\"><title>" +
             std::to_string(r) + "." + std::to_string(c) + ": " + label_fmt(v) + "</title></rect>\n";
    }
  }
  for (std::size_t c = 0; c < cols; ++c) {
    out += "<text x=\"" + fmt(left + cell * c + cell / 2) + "\" y=\"" + fmt(top + cell * rows + 14) +
           "\" text-anchor=\"middle\">" + std::to_string(c) + "</text>\n";
  }
  out += "<text x=\"" + fmt(left + cell * cols / 2) + "\" y=\"" + fmt(H - 8) + "\" text-anchor=\"middle\">" +
         escape(col_label) + "</text>\n";
  out += "<text x=\"14\" y=\"" + fmt(top + cell * rows / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         fmt(top + cell * rows / 2) + ")\">" + escape(row_label) + "</text>\n";
  out += "<text x=\"" + fmt(W - 80) + "\" y=\"" + fmt(top + 10) + "\">max |v| " + label_fmt(vmax) + "</text>\n";
  out += "</svg>\n";
  return out;
}

std::string text_heatmap(const std::string& title, const std::vector<WeightedTokens>& rows) {
  const double char_w = 7.5, line_h = 22, left = 10, top = 40, max_w = 1100;
  std::string body;
  double y = top;
  for (const auto& row : rows) {
    body += "<text x=\"" + fmt(left) + "\" y=\"" + fmt(y + 14) + "\" font-weight=\"bold\">" + escape(row.caption) + "</text>\n";
    y += line_h;
    double x = left;
    for (std::size_t i = 0; i < row.tokens.size(); ++i) {
      const std::string shown = row.tokens[i] == "\n" ? "\\n" : row.tokens[i];
      const double w = char_w * static_cast<double>(shown.size()) + 6;
      if (x + w > max_w) {
        x = left;
        y += line_h;
      }
      const double wt = i < row.weights.size() ? row.weights[i] : 0.0;
      body += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(w) + "\" height=\"18\" fill=\"" +
              ramp(wt) + "\"><title>" + label_fmt(wt) + "</title></rect>\n";
      body += "<text x=\"" + fmt(x + 3) + "\" y=\"" + fmt(y + 13) + "\" font-family=\"monospace\">" + escape(shown) + "</text>\n";
      x += w + 2;
    }
    y += line_h * 1.5;
  }
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(max_w + 20) + "\" height=\"" +
                    fmt(y + 10) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt(left) + "\" y=\"22\" font-size=\"14\">" + escape(title) + "</text>\n";
  out += body + "</svg>\n";
  return out;
}

}  // namespace vrulab::svg
