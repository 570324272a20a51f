#include "eciin/metrics.hpp"

#include <cstdio>

#include "eciin/errors.hpp"
#include "eciin/kv.hpp"

namespace eciin::train {

MetricsReport metrics_from_counts(std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn) {
  MetricsReport r;
  r.tp = tp;
  r.tn = tn;
  r.fp = fp;
  r.fn = fn;
  const std::size_t n = r.total();
  if (n == 0) throw DataError("metrics: empty dataset");
  r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(n);
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  if (r.precision + r.recall > 0.0) {
    r.f_measure = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  } else {
    r.f_undefined = true;
  }
  return r;
}

MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw ConfigError("metrics: " + std::to_string(predictions.size()) + " predictions for " +
                      std::to_string(labels.size()) + " labels");
  }
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i], y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw ConfigError("metrics: labels must be 0 or 1");
    if (p == 1) {
      y == 1 ? ++tp : ++fp;
    } else {
      y == 0 ? ++tn : ++fn;
    }
  }
  return metrics_from_counts(tp, tn, fp, fn);
}

std::string format_report(const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "samples   %zu\nTP %zu  TN %zu  FP %zu  FN %zu\naccuracy  %.4f\nprecision %.4f\nrecall    %.4f\n"
                "F-measure %.4f%s\n",
                r.total(), r.tp, r.tn, r.fp, r.fn, r.accuracy, r.precision, r.recall, r.f_measure,
                r.f_undefined ? " (undefined: P+R = 0)" : "");
  return buf;
}

std::string report_csv_header() { return "tp,tn,fp,fn,accuracy,precision,recall,f_measure,f_undefined"; }

std::string report_csv_row(const MetricsReport& r) {
  return std::to_string(r.tp) + "," + std::to_string(r.tn) + "," + std::to_string(r.fp) + "," +
         std::to_string(r.fn) + "," + format_double(r.accuracy) + "," + format_double(r.precision) + "," +
         format_double(r.recall) + "," + format_double(r.f_measure) + "," + (r.f_undefined ? "1" : "0");
}

}  // namespace eciin::train
