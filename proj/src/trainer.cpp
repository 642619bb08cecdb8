#include "hdccf/trainer.h"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "hdccf/checkpoint.h"
#include "hdccf/error.h"
#include "hdccf/evaluator.h"
#include "hdccf/log.h"
#include "hdccf/parallel.h"
#include "hdccf/random.h"
#include "hdccf/scoring.h"
#include "json.hpp"

namespace hdccf {

namespace {

SamplerConfig seeded(SamplerConfig s, std::uint64_t root) {
  s.seed = derive_seed(root, stream::sampler);
  return s;
}

template <class Table, class Grad>
void adam_dense(Table& theta, const Grad& g, RowMatrix& m, RowMatrix& v, double beta1, double beta2, double eps,
                double decay, double lr_t, double bc2) {
  auto th = theta.reshaped();
  auto gr = g.reshaped();
  auto mm = m.reshaped();
  auto vv = v.reshaped();
  for (Eigen::Index k = 0; k < th.size(); ++k) {
    const double gk = gr(k) + decay * th(k);
    mm(k) = beta1 * mm(k) + (1.0 - beta1) * gk;
    vv(k) = beta2 * vv(k) + (1.0 - beta2) * gk * gk;
    th(k) -= lr_t * mm(k) / (std::sqrt(vv(k) / bc2) + eps);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (dim == 0) throw ConfigError("dim must be at least 1");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (eval_every == 0) throw ConfigError("eval_every must be at least 1");
  if (threads == 0) throw ConfigError("threads must be at least 1");
  sampler.validate();
  loss.validate();
}

SparseAdam::SparseAdam(const ModelParams& like, const TrainConfig& cfg)
    : lr_(cfg.learning_rate), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.epsilon), decay_(cfg.weight_decay) {
  auto zeros = [](Eigen::Index r, Eigen::Index c) { return Moments{RowMatrix::Zero(r, c), RowMatrix::Zero(r, c)}; };
  user_emb_ = zeros(like.user_emb.rows(), like.user_emb.cols());
  item_emb_ = zeros(like.item_emb.rows(), like.item_emb.cols());
  user_factor_ = zeros(like.user_factor.rows(), like.user_factor.cols());
  item_factor_ = zeros(like.item_factor.rows(), like.item_factor.cols());
  mod_weights_ = zeros(like.mod_weights.rows(), like.mod_weights.cols());
  mod_bias_ = zeros(1, like.mod_bias.size());
}

void SparseAdam::update_rows(RowMatrix& table, const SparseRowGrad& g, Moments& mom, double lr_t, double bc2) {
  for (Index r : g.touched_rows()) {
    auto theta = table.row(r);
    auto grad = g.row(r);
    auto m = mom.m.row(r);
    auto v = mom.v.row(r);
    for (Eigen::Index c = 0; c < theta.size(); ++c) {
      const double gk = grad(c) + decay_ * theta(c);
      m(c) = beta1_ * m(c) + (1.0 - beta1_) * gk;
      v(c) = beta2_ * v(c) + (1.0 - beta2_) * gk * gk;
      theta(c) -= lr_t * m(c) / (std::sqrt(v(c) / bc2) + eps_);
    }
  }
}

void SparseAdam::step(ModelParams& params, const GradientBuffer& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const double lr_t = lr_ / bc1;
  update_rows(params.user_emb, grads.user_emb, user_emb_, lr_t, bc2);
  update_rows(params.item_emb, grads.item_emb, item_emb_, lr_t, bc2);
  update_rows(params.user_factor, grads.user_factor, user_factor_, lr_t, bc2);
  update_rows(params.item_factor, grads.item_factor, item_factor_, lr_t, bc2);
  if (grads.mod_touched) {
    adam_dense(params.mod_weights, grads.mod_weights, mod_weights_.m, mod_weights_.v, beta1_, beta2_, eps_, decay_,
               lr_t, bc2);
    adam_dense(params.mod_bias, grads.mod_bias, mod_bias_.m, mod_bias_.v, beta1_, beta2_, eps_, decay_, lr_t, bc2);
  }
}

Trainer::Trainer(const SplitDataset& split, TrainConfig cfg)
    : Trainer(split, cfg,
              init_params(split.train.n_users(), split.train.n_items(), cfg.dim, derive_seed(cfg.seed, stream::init))) {}

Trainer::Trainer(const SplitDataset& split, TrainConfig cfg, ModelParams init)
    : split_(&split),
      cfg_((cfg.validate(), cfg)),
      params_(std::move(init)),
      sampler_(split.train, seeded(cfg.sampler, cfg.seed)),
      optimizer_(params_, cfg_),
      grads_(params_) {
  if (params_.n_users() != split.train.n_users() || params_.n_items() != split.train.n_items() ||
      params_.dim != cfg_.dim) {
    throw ConfigError("initial parameters do not match the dataset and dim");
  }
  keep_large_buffers_resident();
}

void Trainer::fail(const Batch& batch, const std::string& why) {
  nlohmann::json dump = {{"reason", why},
                         {"step", optimizer_.steps()},
                         {"pairs", nlohmann::json::array()},
                         {"n_pos", batch.n_pos},
                         {"n_neg", batch.n_neg},
                         {"pool_items", batch.pool_items},
                         {"pool_users", batch.pool_users},
                         {"item_slots", batch.item_slots},
                         {"user_slots", batch.user_slots}};
  for (const auto& p : batch.pairs) dump["pairs"].push_back({p.user, p.item});
  std::filesystem::create_directories(debug_dir_);
  auto path = debug_dir_ / ("failed_batch_step" + std::to_string(optimizer_.steps()) + ".json");
  std::ofstream out(path);
  out << dump.dump(1) << '\n';
  throw NumericError(why + "; batch written to " + path.string());
}

double Trainer::step(const Batch& batch) {
  ScoreCache cache;
  BatchScores scores = score_batch(params_, batch, cfg_.modulated, cfg_.threads, &cache);
  const bool debias = cfg_.loss.debias && cfg_.loss.family == LossFamily::hdccf;
  std::optional<DebiasContext> ctx;
  if (debias) {
    ctx = build_debias_context(batch, split_->train, cfg_.loss.lambda_u != 0.0 || cfg_.loss.lambda_i != 0.0);
  }
  LossOutput out;
  try {
    out = total_loss(scores, ctx ? &*ctx : nullptr, cfg_.loss);
  } catch (const NumericError& e) {
    fail(batch, e.what());
  }
  if (!std::isfinite(out.value)) fail(batch, "non-finite loss");
  diagnostics_ += out.diagnostics;
  grads_.clear();
  backprop_batch(params_, batch, out.grad, cfg_.modulated, grads_, cfg_.threads, &cache);
  optimizer_.step(params_, grads_);
  if (!params_.all_finite()) fail(batch, "non-finite parameters after the update");
  return out.value;
}

double Trainer::run_epoch() {
  const std::size_t m = cfg_.sampler.batch_size;
  const std::size_t batches = (split_->train.size() + m - 1) / m;
  double total = 0.0;
  for (std::size_t b = 0; b < batches; ++b) total += step(sampler_.next());
  return total / static_cast<double>(batches * m);
}

TrainResult Trainer::train(const TrainOutputs& outputs, const std::function<void(const EpochRecord&)>& on_epoch) {
  debug_dir_ = outputs.debug_dir;
  TrainResult result;
  result.best = params_;
  std::ofstream metrics;
  if (outputs.metrics_csv) {
    if (outputs.metrics_csv->has_parent_path()) std::filesystem::create_directories(outputs.metrics_csv->parent_path());
    metrics.open(*outputs.metrics_csv, std::ios::trunc);
    if (!metrics) throw DataError("cannot write metrics file " + outputs.metrics_csv->string());
    write_metrics_header(metrics);
  }
  EvalOptions eval;
  eval.ks = {10};
  eval.threads = cfg_.threads;
  std::size_t stale = 0;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = run_epoch();
    if (epoch % cfg_.eval_every == 0 || epoch == cfg_.epochs) {
      auto report = evaluate(params_, cfg_.modulated, *split_, eval);
      rec.evaluated = true;
      rec.val_hr10 = report.hr_at(10);
      rec.val_ndcg10 = report.ndcg_at(10);
      if (rec.val_ndcg10 > result.best_ndcg10) {
        result.best_ndcg10 = rec.val_ndcg10;
        result.best_epoch = epoch;
        result.best = params_;
        stale = 0;
        if (outputs.checkpoint) save_checkpoint(params_, cfg_.seed, cfg_.modulated, *outputs.checkpoint);
      } else {
        ++stale;
      }
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.trace.push_back(rec);
    if (metrics.is_open()) {
      write_metrics_row(rec, metrics);
      metrics.flush();
    }
    std::ostringstream msg;
    msg << "epoch " << epoch << " loss " << rec.train_loss;
    if (rec.evaluated) msg << " val_hr10 " << rec.val_hr10 << " val_ndcg10 " << rec.val_ndcg10;
    msg << " (" << std::fixed << std::setprecision(1) << rec.wall_seconds << "s)";
    log_info(msg.str());
    if (on_epoch) on_epoch(rec);
    if (stale >= cfg_.patience) {
      result.stopped_early = true;
      log_info("early stop: no validation improvement for " + std::to_string(stale) + " evaluations");
      break;
    }
  }
  result.diagnostics = diagnostics_;
  return result;
}

void write_metrics_header(std::ostream& out) { out << "epoch,train_loss,val_hr10,val_ndcg10,wall_seconds\n"; }

void write_metrics_row(const EpochRecord& r, std::ostream& out) {
  std::ostringstream line;
  line << std::setprecision(17) << r.epoch << ',' << r.train_loss << ',';
  if (r.evaluated) line << r.val_hr10 << ',' << r.val_ndcg10;
  else line << ',';
  line << ',' << std::fixed << std::setprecision(3) << r.wall_seconds << '\n';
  out << line.str();
}

}  // namespace hdccf
