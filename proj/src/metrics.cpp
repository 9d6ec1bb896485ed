#include "rlcer/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace rlcer {
namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

double parse_double(const std::string& cell, const char* column) {
  try {
    std::size_t consumed = 0;
    const double v = std::stod(cell, &consumed);
    if (consumed != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw IoFailure(std::string("bad numeric cell in column ") + column +
                    ": '" + cell + "'");
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

struct Series {
  const char* name;
  double (*get)(const MetricsRow&);
};

const Series kPlotSeries[] = {
    {"train_accuracy", [](const MetricsRow& r) { return r.train_accuracy; }},
    {"eval_pass1",
     [](const MetricsRow& r) { return r.eval_pass1.value_or(NAN); }},
    {"mean_corr_valid", [](const MetricsRow& r) { return r.mean_corr_valid; }},
    {"mean_corr_all", [](const MetricsRow& r) { return r.mean_corr_all; }},
    {"valid_fraction", [](const MetricsRow& r) { return r.valid_fraction; }},
    {"mean_cot", [](const MetricsRow& r) { return r.mean_cot; }},
    {"mean_evolving", [](const MetricsRow& r) { return r.mean_evolving; }},
    {"mean_reasoner_total",
     [](const MetricsRow& r) { return r.mean_reasoner_total; }},
    {"clip_fraction", [](const MetricsRow& r) { return r.clip_fraction; }},
    {"grad_norm", [](const MetricsRow& r) { return r.grad_norm; }},
};

std::string polyline(std::span<const double> xs, std::span<const double> ys,
                     const char* color, double width) {
  std::string out = "  <polyline fill=\"none\" stroke=\"";
  out += color;
  out += "\" stroke-width=\"";
  out += format_double(width);
  out += "\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::isnan(ys[i])) continue;
    out += format_double(xs[i]);
    out += ",";
    out += format_double(ys[i]);
    out += " ";
  }
  out += "\"/>\n";
  return out;
}

}  // namespace

const char* const kMetricsHeader =
    "step,train_accuracy,eval_pass1,mean_corr_valid,mean_corr_all,"
    "valid_fraction,mean_cot,mean_evolving,mean_reasoner_total,"
    "clip_fraction,grad_norm";

std::string metrics_to_csv(std::span<const MetricsRow> rows) {
  if (rows.empty()) throw EmptyTable("metrics table is empty");
  std::string out = kMetricsHeader;
  out += "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step);
    out += ",";
    out += format_double(r.train_accuracy);
    out += ",";
    if (r.eval_pass1) out += format_double(*r.eval_pass1);
    out += ",";
    out += format_double(r.mean_corr_valid);
    out += ",";
    out += format_double(r.mean_corr_all);
    out += ",";
    out += format_double(r.valid_fraction);
    out += ",";
    out += format_double(r.mean_cot);
    out += ",";
    out += format_double(r.mean_evolving);
    out += ",";
    out += format_double(r.mean_reasoner_total);
    out += ",";
    out += format_double(r.clip_fraction);
    out += ",";
    out += format_double(r.grad_norm);
    out += "\n";
  }
  return out;
}

std::vector<MetricsRow> metrics_from_csv(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line)) throw IoFailure("metrics CSV is empty");
  if (line != kMetricsHeader) {
    throw IoFailure("metrics CSV header mismatch: '" + line + "'");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 11) {
      throw IoFailure("metrics CSV row has " + std::to_string(cells.size()) +
                      " cells, expected 11");
    }
    MetricsRow r;
    r.step = static_cast<int>(parse_double(cells[0], "step"));
    r.train_accuracy = parse_double(cells[1], "train_accuracy");
    if (!cells[2].empty()) r.eval_pass1 = parse_double(cells[2], "eval_pass1");
    r.mean_corr_valid = parse_double(cells[3], "mean_corr_valid");
    r.mean_corr_all = parse_double(cells[4], "mean_corr_all");
    r.valid_fraction = parse_double(cells[5], "valid_fraction");
    r.mean_cot = parse_double(cells[6], "mean_cot");
    r.mean_evolving = parse_double(cells[7], "mean_evolving");
    r.mean_reasoner_total = parse_double(cells[8], "mean_reasoner_total");
    r.clip_fraction = parse_double(cells[9], "clip_fraction");
    r.grad_norm = parse_double(cells[10], "grad_norm");
    rows.push_back(r);
  }
  return rows;
}

void write_metrics_csv(const std::string& path,
                       std::span<const MetricsRow> rows) {
  const std::string text = metrics_to_csv(rows);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open metrics CSV for writing: " + path);
  out << text;
  if (!out) throw IoFailure("failed writing metrics CSV: " + path);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open metrics CSV: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return metrics_from_csv(buffer.str());
}

std::vector<double> rolling_mean(std::span<const double> values,
                                 std::size_t window) {
  if (window == 0) throw std::invalid_argument("window must be positive");
  std::vector<double> out(values.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    const std::size_t count = std::min(i + 1, window);
    out[i] = sum / static_cast<double>(count);
  }
  return out;
}

void write_metrics_plots(const std::string& directory,
                         std::span<const MetricsRow> rows) {
  if (rows.empty()) throw EmptyTable("metrics table is empty");
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoFailure("cannot create plot directory: " + directory);

  constexpr double kWidth = 640, kHeight = 360, kMargin = 40;
  for (const auto& series : kPlotSeries) {
    std::vector<double> raw;
    std::vector<double> steps;
    for (const auto& r : rows) {
      const double v = series.get(r);
      if (std::isnan(v)) continue;
      raw.push_back(v);
      steps.push_back(static_cast<double>(r.step));
    }
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      format_double(kWidth) + "\" height=\"" +
                      format_double(kHeight) + "\">\n";
    svg += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "  <text x=\"12\" y=\"20\" font-size=\"14\">";
    svg += series.name;
    svg += " (raw, rolling-3, rolling-5)</text>\n";
    if (!raw.empty()) {
      double lo = *std::min_element(raw.begin(), raw.end());
      double hi = *std::max_element(raw.begin(), raw.end());
      if (hi == lo) hi = lo + 1.0;
      const double x_lo = steps.front();
      const double x_hi = std::max(steps.back(), x_lo + 1.0);
      auto scale = [&](std::span<const double> ys) {
        std::vector<double> out(ys.size());
        for (std::size_t i = 0; i < ys.size(); ++i) {
          out[i] = kHeight - kMargin -
                   (ys[i] - lo) / (hi - lo) * (kHeight - 2 * kMargin);
        }
        return out;
      };
      std::vector<double> xs(steps.size());
      for (std::size_t i = 0; i < steps.size(); ++i) {
        xs[i] = kMargin + (steps[i] - x_lo) / (x_hi - x_lo) *
                              (kWidth - 2 * kMargin);
      }
      svg += polyline(xs, scale(raw), "#c0c8e0", 1.0);
      svg += polyline(xs, scale(rolling_mean(raw, 3)), "#4060c0", 1.6);
      svg += polyline(xs, scale(rolling_mean(raw, 5)), "#c04040", 1.6);
      svg += "  <text x=\"12\" y=\"" + format_double(kHeight - 8) +
             "\" font-size=\"11\">min " + format_double(lo) + "  max " +
             format_double(hi) + "</text>\n";
    }
    svg += "</svg>\n";
    const std::string path =
        (std::filesystem::path(directory) / (std::string(series.name) + ".svg"))
            .string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot open plot for writing: " + path);
    out << svg;
    if (!out) throw IoFailure("failed writing plot: " + path);
  }
}

}  // namespace rlcer
