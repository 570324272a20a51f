#include "eciin/trainer.hpp"

#include <algorithm>

#include "eciin/errors.hpp"
#include "eciin/loss.hpp"

namespace eciin::train {

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> v;
  if (epochs < 1) v.push_back("train.epochs: expected >= 1, got " + std::to_string(epochs));
  if (batch_size < 1) v.push_back("train.batch_size: expected >= 1, got " + std::to_string(batch_size));
  if (eval_batch_size < 1) v.push_back("train.eval_batch_size: expected >= 1");
  if (!(optimizer.learning_rate > 0.0)) v.push_back("train.learning_rate: expected > 0");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) v.push_back("train.momentum: expected [0,1)");
  if (!(margin_start > 0.0 && margin_start < 1.0)) v.push_back("train.margin_start: expected (0,1)");
  if (!(margin_end > 0.0 && margin_end < 1.0)) v.push_back("train.margin_end: expected (0,1)");
  if (!(margin_start < margin_end)) v.push_back("train.margin_start: expected < train.margin_end");
  return v;
}

void TrainConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid training config:";
  for (const auto& s : v) msg += "\n  " + s;
  throw ConfigError(msg);
}

KeyValues TrainConfig::to_key_values() const {
  return {{"train.epochs", std::to_string(epochs)},
          {"train.batch_size", std::to_string(batch_size)},
          {"train.eval_batch_size", std::to_string(eval_batch_size)},
          {"train.optimizer", to_string(optimizer.kind)},
          {"train.learning_rate", format_double(optimizer.learning_rate)},
          {"train.momentum", format_double(optimizer.momentum)},
          {"train.margin_start", format_double(margin_start)},
          {"train.margin_end", format_double(margin_end)},
          {"train.seed", std::to_string(seed)}};
}

std::vector<std::string> TrainConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, v] : TrainConfig{}.to_key_values()) out.push_back(k);
  return out;
}

void TrainConfig::apply(const std::string& key, const std::string& value) {
  if (key == "train.epochs") {
    epochs = parse_int(key, value);
  } else if (key == "train.batch_size") {
    batch_size = parse_int(key, value);
  } else if (key == "train.eval_batch_size") {
    eval_batch_size = parse_int(key, value);
  } else if (key == "train.optimizer") {
    optimizer.kind = parse_optimizer(value);
  } else if (key == "train.learning_rate") {
    optimizer.learning_rate = parse_double(key, value);
  } else if (key == "train.momentum") {
    optimizer.momentum = parse_double(key, value);
  } else if (key == "train.margin_start") {
    margin_start = parse_double(key, value);
  } else if (key == "train.margin_end") {
    margin_end = parse_double(key, value);
  } else if (key == "train.seed") {
    const int s = parse_int(key, value);
    if (s < 0) throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
    seed = static_cast<std::uint64_t>(s);
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

std::string epoch_log_header() { return "epoch,loss,margin,train_acc,val_acc,f_measure"; }

std::string epoch_log_row(const EpochLog& r) {
  return std::to_string(r.epoch) + "," + format_double(r.loss) + "," + format_double(r.margin) + "," +
         format_double(r.train_acc) + "," + (r.val_acc ? format_double(*r.val_acc) : "") + "," +
         (r.f_measure ? format_double(*r.f_measure) : "");
}

namespace {

std::vector<int> labels_of(const std::vector<data::Sample>& samples, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(samples[i].label);
  return out;
}

}  // namespace

TrainResult train(model::EciinModel& model, const std::vector<data::Sample>& train_set,
                  const std::vector<data::Sample>& val_set, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw DataError("train: empty training set");

  auto& params = model.parameters();
  auto opt = make_optimizer(cfg.optimizer);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const long batches_per_epoch = static_cast<long>((train_set.size() + bs - 1) / bs);
  const long total_steps = batches_per_epoch * cfg.epochs;
  const double alpha = model.config().loss_alpha;

  TrainResult result;
  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const TensorMap snapshot = params.snapshot();
    const auto batches = data::batch_iter(train_set.size(), bs, cfg.seed + static_cast<std::uint64_t>(epoch), true);
    double loss_sum = 0.0, margin = cfg.margin_start;
    std::size_t correct = 0;
    try {
      for (const auto& idx : batches) {
        margin = margin_schedule(step, total_steps - 1, cfg.margin_start, cfg.margin_end);
        const std::vector<int> labels = labels_of(train_set, idx);
        params.zero_grad();
        const model::BatchOutput out = model.forward(data::stack_pixels(train_set, idx));
        const ad::Var loss = model::total_loss(out, labels, margin, alpha);
        ad::backward(loss);
        opt->step(params);
        ++step;
        loss_sum += loss.value()[0] * static_cast<double>(idx.size());
        const auto pred = out.predictions();
        for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
      }
    } catch (const NumericError& e) {
      params.load(snapshot);
      throw NumericError("training diverged in epoch " + std::to_string(epoch) + " at step " + std::to_string(step) +
                         "; parameters restored to the start of the epoch: " + e.what());
    }
    EpochLog row;
    row.epoch = epoch;
    row.loss = loss_sum / static_cast<double>(train_set.size());
    row.margin = margin;
    row.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      const MetricsReport r = evaluate(model, val_set, cfg.eval_batch_size);
      row.val_acc = r.accuracy;
      row.f_measure = r.f_measure;
    }
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  result.steps = step;
  return result;
}

Evaluation evaluate_detailed(const model::EciinModel& model, const std::vector<data::Sample>& samples,
                             int batch_size) {
  if (samples.empty()) throw DataError("evaluate: empty dataset");
  if (batch_size < 1) throw ConfigError("evaluate: batch size must be >= 1");
  ad::NoGradGuard no_grad;
  Evaluation ev;
  std::vector<int> labels;
  for (const auto& idx : data::batch_iter(samples.size(), static_cast<std::size_t>(batch_size), 0, false)) {
    const model::BatchOutput out = model.forward(data::stack_pixels(samples, idx));
    const auto pred = out.predictions();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ev.predictions.push_back(pred[i]);
      labels.push_back(samples[idx[i]].label);
      ev.boxes.push_back(out.boxes[i]);
      ev.fallback.push_back(out.fallback[i]);
    }
  }
  ev.report = compute_metrics(ev.predictions, labels);
  return ev;
}

MetricsReport evaluate(const model::EciinModel& model, const std::vector<data::Sample>& samples, int batch_size) {
  return evaluate_detailed(model, samples, batch_size).report;
}

}  // namespace eciin::train
