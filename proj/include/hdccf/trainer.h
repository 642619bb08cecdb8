#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "hdccf/dataset.h"
#include "hdccf/loss.h"
#include "hdccf/model.h"
#include "hdccf/sampler.h"

namespace hdccf {

struct TrainConfig {
  std::size_t dim = 64;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-6;
  std::size_t patience = 10;
  std::size_t eval_every = 1;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  bool modulated = true;
  SamplerConfig sampler;
  LossConfig loss;

  void validate() const;
};

/// Adam over row-sparse gradients: moments and parameters of a table row are
/// only updated on steps that touch it, with bias correction from the global
/// step count. L2 decay is added to touched rows only.
class SparseAdam {
 public:
  SparseAdam(const ModelParams& like, const TrainConfig& cfg);

  void step(ModelParams& params, const GradientBuffer& grads);
  std::uint64_t steps() const { return t_; }

 private:
  struct Moments {
    RowMatrix m;
    RowMatrix v;
  };
  void update_rows(RowMatrix& table, const SparseRowGrad& g, Moments& mom, double lr_t, double bc2);

  double lr_, beta1_, beta2_, eps_, decay_;
  std::uint64_t t_ = 0;
  Moments user_emb_, item_emb_, user_factor_, item_factor_, mod_weights_, mod_bias_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per pair
  bool evaluated = false;
  double val_hr10 = 0.0;
  double val_ndcg10 = 0.0;
  double wall_seconds = 0.0;
};

struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint;   // best parameters
  std::optional<std::filesystem::path> metrics_csv;  // one row per epoch
  std::filesystem::path debug_dir = ".";             // where a failing batch is dumped
};

struct TrainResult {
  ModelParams best;
  std::size_t best_epoch = 0;
  double best_ndcg10 = -1.0;
  std::vector<EpochRecord> trace;
  LossDiagnostics diagnostics;
  bool stopped_early = false;
};

class Trainer {
 public:
  Trainer(const SplitDataset& split, TrainConfig cfg);
  Trainer(const SplitDataset& split, TrainConfig cfg, ModelParams init);

  /// One optimizer step on `batch`; returns the batch loss.
  double step(const Batch& batch);
  /// ceil(|train| / M) sampled steps; returns the mean loss per pair.
  double run_epoch();
  TrainResult train(const TrainOutputs& outputs = {}, const std::function<void(const EpochRecord&)>& on_epoch = {});

  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  const TrainConfig& config() const { return cfg_; }
  const LossDiagnostics& diagnostics() const { return diagnostics_; }
  void set_debug_dir(std::filesystem::path dir) { debug_dir_ = std::move(dir); }

 private:
  [[noreturn]] void fail(const Batch& batch, const std::string& why);

  const SplitDataset* split_;
  TrainConfig cfg_;
  ModelParams params_;
  BatchSampler sampler_;
  SparseAdam optimizer_;
  GradientBuffer grads_;
  LossDiagnostics diagnostics_;
  std::filesystem::path debug_dir_ = ".";
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(const EpochRecord& r, std::ostream& out);

}  // namespace hdccf
