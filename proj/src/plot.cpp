#include "irisseg/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "irisseg/errors.hpp"

namespace irisseg {
namespace fs = std::filesystem;

namespace {

constexpr int kWidth = 900;
constexpr int kHeight = 600;
constexpr int kLeft = 90, kRight = 30, kTop = 50, kBottom = 70;
constexpr int kFont = cv::FONT_HERSHEY_SIMPLEX;

// Tableau-like palette, BGR.
const cv::Scalar kPalette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214},
                               {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

bool parse_double(const std::string& s, double& v) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && ptr == end;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table read_table(const fs::path& csv) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw MalformedCsv("cannot open " + csv.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw MalformedCsv(csv.string() + ": empty file");
  t.header = split_csv(line);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    if (cells.size() != t.header.size()) {
      throw MalformedCsv(fmt::format("{}:{}: expected {} fields, got {}", csv.string(), line_no,
                                     t.header.size(), cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

double cell_value(const fs::path& csv, std::size_t row, const std::string& cell) {
  double v = 0.0;
  if (!parse_double(cell, v)) {
    throw MalformedCsv(fmt::format("{}:{}: '{}' is not a number", csv.string(), row + 2, cell));
  }
  return v;
}

std::string tick_label(double v) {
  if (v != 0.0 && (std::abs(v) < 1e-3 || std::abs(v) >= 1e4)) return fmt::format("{:.1e}", v);
  return fmt::format("{:.3g}", v);
}

void draw_text(cv::Mat& img, const std::string& text, cv::Point at, double scale, bool centre) {
  int baseline = 0;
  const cv::Size size = cv::getTextSize(text, kFont, scale, 1, &baseline);
  if (centre) at.x -= size.width / 2;
  cv::putText(img, text, at, kFont, scale, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
}

}  // namespace

void render_figure(const Figure& figure, const fs::path& png) {
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : figure.series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x_lo = std::min(x_lo, s.x[i]), x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.y[i]), y_hi = std::max(y_hi, s.y[i]);
    }
  }
  if (!std::isfinite(x_lo)) throw UserError("figure '" + figure.title + "' has no data points");
  if (figure.unit_axes) {
    x_lo = y_lo = 0.0;
    x_hi = y_hi = 1.0;
  } else {
    if (x_hi == x_lo) x_lo -= 0.5, x_hi += 0.5;
    if (y_hi == y_lo) y_lo -= 0.5, y_hi += 0.5;
    const double pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;
  }

  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + static_cast<int>(std::lround((x - x_lo) / (x_hi - x_lo) * pw)); };
  auto py = [&](double y) { return kTop + ph - static_cast<int>(std::lround((y - y_lo) / (y_hi - y_lo) * ph)); };

  constexpr int kTicks = 5;
  for (int t = 0; t <= kTicks; ++t) {
    const double xv = x_lo + (x_hi - x_lo) * t / kTicks;
    const double yv = y_lo + (y_hi - y_lo) * t / kTicks;
    cv::line(img, {px(xv), kTop}, {px(xv), kTop + ph}, cv::Scalar(230, 230, 230));
    cv::line(img, {kLeft, py(yv)}, {kLeft + pw, py(yv)}, cv::Scalar(230, 230, 230));
    draw_text(img, tick_label(xv), {px(xv), kTop + ph + 20}, 0.45, true);
    draw_text(img, tick_label(yv), {8, py(yv) + 5}, 0.45, false);
  }
  cv::rectangle(img, {kLeft, kTop}, {kLeft + pw, kTop + ph}, cv::Scalar(0, 0, 0));
  draw_text(img, figure.title, {kWidth / 2, 30}, 0.7, true);
  draw_text(img, figure.x_label, {kLeft + pw / 2, kHeight - 20}, 0.55, true);

  // Vertical y label: draw on a strip and rotate.
  {
    int baseline = 0;
    const cv::Size size = cv::getTextSize(figure.y_label, kFont, 0.55, 1, &baseline);
    cv::Mat strip(size.height + baseline + 6, size.width + 6, CV_8UC3, cv::Scalar(255, 255, 255));
    cv::putText(strip, figure.y_label, {3, size.height + 2}, kFont, 0.55, cv::Scalar(0, 0, 0), 1,
                cv::LINE_AA);
    cv::Mat rotated;
    cv::rotate(strip, rotated, cv::ROTATE_90_COUNTERCLOCKWISE);
    const int y0 = std::max(0, kTop + ph / 2 - rotated.rows / 2);
    const int h = std::min(rotated.rows, kHeight - y0);
    const int w = std::min(rotated.cols, kLeft - 60);
    if (w > 0) rotated(cv::Rect(0, 0, w, h)).copyTo(img(cv::Rect(2, y0, w, h)));
  }

  for (std::size_t k = 0; k < figure.series.size(); ++k) {
    const auto& s = figure.series[k];
    const cv::Scalar colour = kPalette[k % std::size(kPalette)];
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) pts.emplace_back(px(s.x[i]), py(s.y[i]));
    }
    if (pts.size() == 1) cv::circle(img, pts[0], 3, colour, cv::FILLED, cv::LINE_AA);
    cv::polylines(img, pts, false, colour, 2, cv::LINE_AA);
  }

  // Legend, top right inside the plot area.
  const int row_h = 22;
  int legend_w = 0;
  for (const auto& s : figure.series) {
    int baseline = 0;
    legend_w = std::max(legend_w, cv::getTextSize(s.label, kFont, 0.5, 1, &baseline).width);
  }
  legend_w += 50;
  const int lx = kLeft + pw - legend_w - 10, ly = kTop + 10;
  cv::rectangle(img, {lx, ly}, {lx + legend_w, ly + row_h * static_cast<int>(figure.series.size()) + 8},
                cv::Scalar(255, 255, 255), cv::FILLED);
  cv::rectangle(img, {lx, ly}, {lx + legend_w, ly + row_h * static_cast<int>(figure.series.size()) + 8},
                cv::Scalar(160, 160, 160));
  for (std::size_t k = 0; k < figure.series.size(); ++k) {
    const int y = ly + 16 + row_h * static_cast<int>(k);
    cv::line(img, {lx + 8, y - 4}, {lx + 36, y - 4}, kPalette[k % std::size(kPalette)], 2, cv::LINE_AA);
    draw_text(img, figure.series[k].label, {lx + 42, y}, 0.5, false);
  }

  if (png.has_parent_path()) fs::create_directories(png.parent_path());
  if (!cv::imwrite(png.string(), img)) throw IoFailure("cannot write " + png.string());
}

std::vector<Series> read_loss_series(const fs::path& csv, const std::string& label) {
  const Table t = read_table(csv);
  if (t.header.size() < 2 || t.header[0] != "epoch") {
    throw MalformedCsv(csv.string() + ": first column must be 'epoch'");
  }
  std::vector<std::size_t> columns;
  const bool train_log = t.header[1] == "mean_loss";
  if (train_log) {
    columns.push_back(1);
  } else {
    for (std::size_t c = 1; c < t.header.size(); ++c) columns.push_back(c);
  }
  std::vector<Series> out;
  for (std::size_t c : columns) {
    Series s;
    s.label = train_log ? (label.empty() ? csv.stem().string() : label)
                        : (label.empty() ? t.header[c] : label + " " + t.header[c]);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      if (t.rows[r][c].empty()) continue;  // arm stopped early
      s.x.push_back(cell_value(csv, r, t.rows[r][0]));
      s.y.push_back(cell_value(csv, r, t.rows[r][c]));
    }
    out.push_back(std::move(s));
  }
  if (t.rows.empty()) throw MalformedCsv(csv.string() + ": no rows");
  return out;
}

Series read_pr_series(const fs::path& csv, const std::string& label) {
  const Table t = read_table(csv);
  if (t.header != std::vector<std::string>{"threshold", "precision", "recall"}) {
    throw MalformedCsv(csv.string() + ": expected 'threshold,precision,recall' header");
  }
  if (t.rows.empty()) throw MalformedCsv(csv.string() + ": no rows");
  Series s;
  s.label = label.empty() ? csv.stem().string() : label;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    cell_value(csv, r, t.rows[r][0]);
    s.y.push_back(cell_value(csv, r, t.rows[r][1]));
    s.x.push_back(cell_value(csv, r, t.rows[r][2]));
  }
  return s;
}

}  // namespace irisseg
