#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace eciin::train {

/// Binary confusion counts with the onfocus class (label 1) as positive.
struct MetricsReport {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  /// Precision + recall was zero; f_measure is reported as 0.
  bool f_undefined = false;

  std::size_t total() const { return tp + tn + fp + fn; }
};

/// Throws DataError on an empty input, ConfigError on mismatched lengths or non-binary labels.
MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);
MetricsReport metrics_from_counts(std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn);

std::string format_report(const MetricsReport& r);
std::string report_csv_header();
std::string report_csv_row(const MetricsReport& r);

}  // namespace eciin::train
