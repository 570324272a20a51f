#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "eciin/dataset.hpp"
#include "eciin/kv.hpp"
#include "eciin/metrics.hpp"
#include "eciin/model.hpp"
#include "eciin/optimizer.hpp"

namespace eciin::train {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  OptimizerConfig optimizer;
  double margin_start = 0.2;
  double margin_end = 0.9;
  std::uint64_t seed = 0;
  int eval_batch_size = 64;

  std::vector<std::string> violations() const;
  void validate() const;
  KeyValues to_key_values() const;
  void apply(const std::string& key, const std::string& value);
  static std::vector<std::string> keys();
};

struct EpochLog {
  int epoch = 0;       // 1-based
  double loss = 0.0;   // sample-weighted mean over the epoch
  double margin = 0.0; // margin used by the epoch's last step
  double train_acc = 0.0;
  std::optional<double> val_acc;
  std::optional<double> f_measure;
};

std::string epoch_log_header();
/// Shortest round-trip formatting, so equal logs are byte-equal.
std::string epoch_log_row(const EpochLog& row);

struct TrainResult {
  std::vector<EpochLog> log;
  long steps = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minimizes total_loss with the margin ramped over all planned optimizer steps.
/// On a non-finite value the parameters are restored to the start of the
/// failing epoch and NumericError is rethrown.
TrainResult train(model::EciinModel& model, const std::vector<data::Sample>& train_set,
                  const std::vector<data::Sample>& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct Evaluation {
  MetricsReport report;
  std::vector<int> predictions;
  std::vector<mining::BBox> boxes;
  std::vector<bool> fallback;
};

Evaluation evaluate_detailed(const model::EciinModel& model, const std::vector<data::Sample>& samples,
                             int batch_size = 64);
MetricsReport evaluate(const model::EciinModel& model, const std::vector<data::Sample>& samples,
                       int batch_size = 64);

}  // namespace eciin::train
