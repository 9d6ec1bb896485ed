#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlcer/errors.hpp"

namespace rlcer {

struct EmptyTable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One logged training step. eval_pass1 is present only on evaluation steps
// and serializes as an empty CSV cell otherwise.
struct MetricsRow {
  int step = 0;
  double train_accuracy = 0.0;
  std::optional<double> eval_pass1;
  double mean_corr_valid = 0.0;
  double mean_corr_all = 0.0;
  double valid_fraction = 0.0;
  double mean_cot = 0.0;
  double mean_evolving = 0.0;
  double mean_reasoner_total = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
};

// Fixed column order; identical tables produce identical bytes.
extern const char* const kMetricsHeader;

std::string metrics_to_csv(std::span<const MetricsRow> rows);
std::vector<MetricsRow> metrics_from_csv(const std::string& text);

void write_metrics_csv(const std::string& path,
                       std::span<const MetricsRow> rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// Rolling mean over a trailing window (partial windows at the start).
std::vector<double> rolling_mean(std::span<const double> values,
                                 std::size_t window);

// One SVG line chart per metric column, with rolling-average overlays of
// window 3 and window 5 on top of the raw series.
void write_metrics_plots(const std::string& directory,
                         std::span<const MetricsRow> rows);

}  // namespace rlcer
