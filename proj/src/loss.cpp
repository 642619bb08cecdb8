#include "hdccf/loss.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <limits>
#include <vector>

#include "hdccf/error.h"

namespace hdccf {

namespace {

double logaddexp(double a, double b) {
  double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

void require_finite(const BatchScores& s, std::size_t k, bool aux) {
  const auto col = static_cast<Eigen::Index>(k);
  bool ok = std::isfinite(s.anchor(col)) && s.items.col(col).allFinite() && s.users.col(col).allFinite();
  if (aux) ok = ok && s.uu.col(col).allFinite() && s.ii.col(col).allFinite();
  if (!ok) throw NumericError("non-finite relevance score in batch pair " + std::to_string(k));
}

LossOutput empty_output(const BatchScores& scores) {
  LossOutput out;
  out.grad = BatchScores::zeros(scores.size(), scores.n_pos, scores.n_neg);
  return out;
}

// Neighbourhood between the pool slots of one batch side. Small pools are
// tabulated once; large ones fall back to direct checks.
class SlotNeighbours {
 public:
  template <class Pred>
  SlotNeighbours(const std::vector<Index>& pool, Pred pred) : pool_(&pool), pred_(std::move(pred)) {
    n_ = pool.size();
    dense_ = n_ <= 4096;
    if (!dense_) return;
    table_.assign(n_ * n_, 0);
    for (std::size_t a = 0; a < n_; ++a) {
      for (std::size_t b = a + 1; b < n_; ++b) {
        const std::uint8_t v = pred_(pool[a], pool[b]) ? 1 : 0;
        table_[a * n_ + b] = v;
        table_[b * n_ + a] = v;
      }
    }
    free_total_.assign(n_, 0);
    for (std::size_t a = 0; a < n_; ++a) {
      for (std::size_t b = 0; b < n_; ++b) free_total_[b] += table_[a * n_ + b] ? 0 : 1;
    }
  }

  bool operator()(std::uint32_t a, std::uint32_t b) const {
    return dense_ ? table_[a * n_ + b] != 0 : pred_((*pool_)[a], (*pool_)[b]);
  }
  bool dense() const { return dense_; }
  std::size_t size() const { return n_; }
  // sum over every pool slot a of 1[a, b not neighboured]
  std::int32_t free_total(std::uint32_t b) const { return free_total_[b]; }

 private:
  const std::vector<Index>* pool_;
  std::function<bool(Index, Index)> pred_;
  std::size_t n_ = 0;
  bool dense_ = true;
  std::vector<std::uint8_t> table_;
  std::vector<std::int32_t> free_total_;
};

// free(j, k) = sum over the negatives j' of anchor k of 1[(e_j', e_j) not
// neighboured]. When the negatives are every pool slot except a few (the
// in-batch layout) it is the pool total minus those few.
template <class SlotAt>
void fill_free_counts(const Batch& batch, SlotAt slot_at, const SlotNeighbours& nb, CountMatrix& out) {
  const std::size_t m = batch.size();
  const std::size_t n = batch.n_neg;
  std::vector<std::uint32_t> negs(n);
  std::vector<std::uint32_t> uses(nb.size());
  std::vector<std::uint32_t> missing;
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t j = 0; j < n; ++j) negs[j] = slot_at(batch.n_pos + j, k);
    bool complement = nb.dense();
    if (complement) {
      std::fill(uses.begin(), uses.end(), 0);
      for (auto s : negs) complement &= ++uses[s] == 1;
      missing.clear();
      for (std::uint32_t s = 0; s < uses.size() && complement; ++s) {
        if (uses[s] == 0) missing.push_back(s);
      }
      complement &= missing.size() < n;
    }
    for (std::size_t j = 0; j < n; ++j) {
      std::int32_t free = 0;
      if (complement) {
        free = nb.free_total(negs[j]);
        for (auto s : missing) free -= nb(s, negs[j]) ? 0 : 1;
      } else {
        for (std::size_t jj = 0; jj < n; ++jj) free += nb(negs[jj], negs[j]) ? 0 : 1;
      }
      out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = free;
    }
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (lambda_u < 0.0 || lambda_i < 0.0) throw ConfigError("lambda_u and lambda_i must be non-negative");
  if (!(omega_u >= 0.0 && omega_u < 1.0) || !(omega_i >= 0.0 && omega_i < 1.0)) {
    throw ConfigError("omega_u and omega_i must lie in [0, 1)");
  }
}

BatchScores BatchScores::zeros(std::size_t m, std::size_t n_pos, std::size_t n_neg) {
  BatchScores s;
  s.n_pos = n_pos;
  s.n_neg = n_neg;
  const auto rows = static_cast<Eigen::Index>(n_pos + n_neg);
  const auto cols = static_cast<Eigen::Index>(m);
  s.anchor = Eigen::VectorXd::Zero(cols);
  s.items = Eigen::MatrixXd::Zero(rows, cols);
  s.users = Eigen::MatrixXd::Zero(rows, cols);
  s.uu = Eigen::MatrixXd::Zero(rows, cols);
  s.ii = Eigen::MatrixXd::Zero(rows, cols);
  return s;
}

BatchScores& BatchScores::operator+=(const BatchScores& other) {
  anchor += other.anchor;
  items += other.items;
  users += other.users;
  uu += other.uu;
  ii += other.ii;
  return *this;
}

BatchScores& BatchScores::operator*=(double factor) {
  anchor *= factor;
  items *= factor;
  users *= factor;
  uu *= factor;
  ii *= factor;
  return *this;
}

LossDiagnostics& LossDiagnostics::operator+=(const LossDiagnostics& other) {
  clamped += other.clamped;
  degenerate += other.degenerate;
  dropped_terms += other.dropped_terms;
  return *this;
}

DebiasContext DebiasContext::unobserved(std::size_t m, std::size_t n_neg) {
  const auto rows = static_cast<Eigen::Index>(n_neg);
  const auto cols = static_cast<Eigen::Index>(m);
  DebiasContext ctx;
  ctx.item_observed = FlagMatrix::Zero(rows, cols);
  ctx.user_observed = FlagMatrix::Zero(rows, cols);
  ctx.uu_anchor_neighboured = FlagMatrix::Zero(rows, cols);
  ctx.ii_anchor_neighboured = FlagMatrix::Zero(rows, cols);
  ctx.uu_free_count = CountMatrix::Constant(rows, cols, static_cast<std::int32_t>(n_neg));
  ctx.ii_free_count = CountMatrix::Constant(rows, cols, static_cast<std::int32_t>(n_neg));
  return ctx;
}

DebiasContext build_debias_context(const Batch& batch, const InteractionDataset& train, bool with_auxiliary) {
  const std::size_t m = batch.size();
  const std::size_t n = batch.n_neg;
  DebiasContext ctx = DebiasContext::unobserved(m, n);
  for (std::size_t k = 0; k < m; ++k) {
    const auto [u, i] = batch.pairs[k];
    for (std::size_t j = 0; j < n; ++j) {
      const auto row = static_cast<Eigen::Index>(j);
      const auto col = static_cast<Eigen::Index>(k);
      ctx.item_observed(row, col) = train.contains(u, batch.item_at(batch.n_pos + j, k)) ? 1 : 0;
      ctx.user_observed(row, col) = train.contains(batch.user_at(batch.n_pos + j, k), i) ? 1 : 0;
    }
  }
  if (!with_auxiliary) return ctx;

  SlotNeighbours user_nb(batch.pool_users, [&train](Index a, Index b) { return train.users_neighboured(a, b); });
  SlotNeighbours item_nb(batch.pool_items, [&train](Index a, Index b) { return train.items_neighboured(a, b); });

  for (std::size_t k = 0; k < m; ++k) {
    const auto [u, i] = batch.pairs[k];
    for (std::size_t j = 0; j < n; ++j) {
      const auto row = static_cast<Eigen::Index>(j);
      const auto col = static_cast<Eigen::Index>(k);
      ctx.uu_anchor_neighboured(row, col) = train.users_neighboured(u, batch.user_at(batch.n_pos + j, k)) ? 1 : 0;
      ctx.ii_anchor_neighboured(row, col) = train.items_neighboured(i, batch.item_at(batch.n_pos + j, k)) ? 1 : 0;
    }
  }
  fill_free_counts(batch, [&batch](std::size_t r, std::size_t k) { return batch.user_slot(r, k); }, user_nb,
                   ctx.uu_free_count);
  fill_free_counts(batch, [&batch](std::size_t r, std::size_t k) { return batch.item_slot(r, k); }, item_nb,
                   ctx.ii_free_count);
  return ctx;
}

double log_clamp_floor(ClampMode mode, std::size_t n_neg, double temperature) {
  const double base = std::log(static_cast<double>(n_neg));
  switch (mode) {
    case ClampMode::paper:
      return base + 1.0 / temperature;
    case ClampMode::robinson:
      return base - 1.0 / temperature;
    case ClampMode::off:
      break;
  }
  return -std::numeric_limits<double>::infinity();
}

double clamp_floor(ClampMode mode, std::size_t n_neg, double temperature) {
  return std::exp(log_clamp_floor(mode, n_neg, temperature));
}

DebiasedScore debiased_negative_score(std::span<const double> negative_scores,
                                      std::span<const std::uint8_t> negative_observed,
                                      std::span<const double> positive_scores, double omega_plus,
                                      double temperature, ClampMode clamp, double shift) {
  if (negative_scores.size() != negative_observed.size()) {
    throw ConfigError("negative scores and observed flags differ in length");
  }
  DebiasedScore out;
  const std::size_t n = negative_scores.size();
  const double q = static_cast<double>(n);
  std::size_t unobserved = 0;
  for (auto flag : negative_observed) unobserved += flag ? 0 : 1;
  if (unobserved == 0) {
    // Nothing left to estimate from; fall back to the floor (the smaller one
    // when clamping is off).
    auto mode = clamp == ClampMode::off ? ClampMode::robinson : clamp;
    out.value = std::exp(log_clamp_floor(mode, std::max<std::size_t>(n, 1), temperature) - shift);
    out.clamped = true;
    out.degenerate = true;
    return out;
  }
  const double omega_minus = 1.0 - omega_plus;
  out.pi0 = q / (omega_minus * static_cast<double>(unobserved));
  out.pi1 = positive_scores.empty() || omega_plus == 0.0
                ? 0.0
                : q * omega_plus / (omega_minus * static_cast<double>(positive_scores.size()));
  double negative_mass = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!negative_observed[j]) negative_mass += out.pi0 * std::exp(negative_scores[j] / temperature - shift);
  }
  double positive_mass = 0.0;
  for (double s : positive_scores) positive_mass += out.pi1 * std::exp(s / temperature - shift);
  out.value = negative_mass - positive_mass;
  if (clamp != ClampMode::off) {
    double floor = std::exp(log_clamp_floor(clamp, n, temperature) - shift);
    if (out.value < floor) {
      out.value = floor;
      out.clamped = true;
    }
  }
  return out;
}

LossOutput ui_contrastive(const BatchScores& scores, const LossConfig& cfg) {
  cfg.validate();
  const double tau = cfg.temperature;
  const auto p = static_cast<Eigen::Index>(scores.n_pos);
  const auto n = static_cast<Eigen::Index>(scores.n_neg);
  LossOutput out = empty_output(scores);
  out.recog_anchor = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(scores.size()));
  out.recog_items = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(scores.size()));
  out.recog_users = out.recog_items;
  Eigen::VectorXd eu(n);
  Eigen::VectorXd ei(n);
  for (std::size_t kk = 0; kk < scores.size(); ++kk) {
    require_finite(scores, kk, false);
    const auto k = static_cast<Eigen::Index>(kk);
    const double s0 = scores.anchor(k) / tau;
    double c = s0;
    for (Eigen::Index j = 0; j < n; ++j) {
      c = std::max(c, scores.users(p + j, k) / tau);
      c = std::max(c, scores.items(p + j, k) / tau);
    }
    double user_mass = 0.0;
    double item_mass = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      eu(j) = std::exp(scores.users(p + j, k) / tau - c);
      user_mass += eu(j);
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      ei(j) = std::exp(scores.items(p + j, k) / tau - c);
      item_mass += ei(j);
    }
    const double e0 = std::exp(s0 - c);
    const double denom = (user_mass + item_mass) + e0;
    out.value += std::log(denom) - (s0 - c);
    const double p0 = e0 / denom;
    out.recog_anchor(k) = p0;
    out.grad.anchor(k) = (p0 - 1.0) / tau;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double pu = eu(j) / denom;
      const double pi = ei(j) / denom;
      out.recog_users(j, k) = pu;
      out.recog_items(j, k) = pi;
      out.grad.users(p + j, k) = pu / tau;
      out.grad.items(p + j, k) = pi / tau;
    }
  }
  out.ui_value = out.value;
  return out;
}

LossOutput debiased_ui_contrastive(const BatchScores& scores, const DebiasContext& ctx, const LossConfig& cfg) {
  cfg.validate();
  const double tau = cfg.temperature;
  const auto p = static_cast<Eigen::Index>(scores.n_pos);
  const auto n = static_cast<Eigen::Index>(scores.n_neg);
  LossOutput out = empty_output(scores);
  out.recog_anchor = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(scores.size()));
  out.recog_items = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(scores.size()));
  out.recog_users = out.recog_items;

  std::vector<double> neg_u(static_cast<std::size_t>(n));
  std::vector<double> neg_i(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> obs_u(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> obs_i(static_cast<std::size_t>(n));
  std::vector<double> pos_u(static_cast<std::size_t>(p + 1));
  std::vector<double> pos_i(static_cast<std::size_t>(p + 1));

  for (std::size_t kk = 0; kk < scores.size(); ++kk) {
    require_finite(scores, kk, false);
    const auto k = static_cast<Eigen::Index>(kk);
    const double s0 = scores.anchor(k) / tau;
    double c = s0;
    for (Eigen::Index j = 0; j < n; ++j) {
      c = std::max(c, scores.users(p + j, k) / tau);
      c = std::max(c, scores.items(p + j, k) / tau);
    }
    if (cfg.clamp != ClampMode::off) c = std::max(c, log_clamp_floor(cfg.clamp, scores.n_neg, tau));

    for (Eigen::Index j = 0; j < n; ++j) {
      neg_u[j] = scores.users(p + j, k);
      neg_i[j] = scores.items(p + j, k);
      obs_u[j] = ctx.user_observed(j, k);
      obs_i[j] = ctx.item_observed(j, k);
    }
    // positives: sampled neighbours plus the anchor pair itself
    for (Eigen::Index r = 0; r < p; ++r) {
      pos_u[r] = scores.users(r, k);
      pos_i[r] = scores.items(r, k);
    }
    pos_u[p] = scores.anchor(k);
    pos_i[p] = scores.anchor(k);

    auto user_side = debiased_negative_score(neg_u, obs_u, pos_u, cfg.omega_u, tau, cfg.clamp, c);
    auto item_side = debiased_negative_score(neg_i, obs_i, pos_i, cfg.omega_i, tau, cfg.clamp, c);
    out.diagnostics.clamped += (user_side.clamped ? 1 : 0) + (item_side.clamped ? 1 : 0);
    out.diagnostics.degenerate += (user_side.degenerate ? 1 : 0) + (item_side.degenerate ? 1 : 0);

    const double e0 = std::exp(s0 - c);
    const double denom = (user_side.value + item_side.value) + e0;
    if (!(denom > 0.0) || !std::isfinite(denom)) {
      throw NumericError("debiased denominator is not positive for batch pair " + std::to_string(kk) +
                         " (enable clamping)");
    }
    out.value += std::log(denom) - (s0 - c);

    double coef = 1.0;
    if (!user_side.clamped) coef -= user_side.pi1;
    if (!item_side.clamped) coef -= item_side.pi1;
    out.recog_anchor(k) = e0 / denom;
    out.grad.anchor(k) = (e0 * coef / denom - 1.0) / tau;

    for (Eigen::Index j = 0; j < n; ++j) {
      if (!user_side.clamped && !obs_u[j]) {
        const double w = user_side.pi0 * std::exp(neg_u[j] / tau - c) / denom;
        out.recog_users(j, k) = w;
        out.grad.users(p + j, k) = w / tau;
      }
      if (!item_side.clamped && !obs_i[j]) {
        const double w = item_side.pi0 * std::exp(neg_i[j] / tau - c) / denom;
        out.recog_items(j, k) = w;
        out.grad.items(p + j, k) = w / tau;
      }
    }
    for (Eigen::Index r = 0; r < p; ++r) {
      if (!user_side.clamped) out.grad.users(r, k) = -(user_side.pi1 * std::exp(pos_u[r] / tau - c)) / denom / tau;
      if (!item_side.clamped) out.grad.items(r, k) = -(item_side.pi1 * std::exp(pos_i[r] / tau - c)) / denom / tau;
    }
  }
  out.ui_value = out.value;
  return out;
}

namespace {

// Shared body of the biased and debiased auxiliary losses. `weights` is null
// for the biased form.
LossOutput auxiliary_impl(const BatchScores& scores, AuxSide side, const LossConfig& cfg,
                          const DebiasContext* ctx) {
  cfg.validate();
  const double tau = cfg.temperature;
  const auto p = static_cast<Eigen::Index>(scores.n_pos);
  const auto n = static_cast<Eigen::Index>(scores.n_neg);
  const Eigen::MatrixXd& block = side == AuxSide::user_user ? scores.uu : scores.ii;
  LossOutput out = empty_output(scores);
  Eigen::MatrixXd& grad = side == AuxSide::user_user ? out.grad.uu : out.grad.ii;
  const double q = static_cast<double>(scores.n_neg);

  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  for (std::size_t kk = 0; kk < scores.size(); ++kk) {
    require_finite(scores, kk, true);
    const auto k = static_cast<Eigen::Index>(kk);
    if (ctx != nullptr) {
      const auto& anchor_nb = side == AuxSide::user_user ? ctx->uu_anchor_neighboured : ctx->ii_anchor_neighboured;
      const auto& free = side == AuxSide::user_user ? ctx->uu_free_count : ctx->ii_free_count;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (free(j, k) == 0) {
          w(j) = 0.0;
          ++out.diagnostics.dropped_terms;
        } else {
          w(j) = (anchor_nb(j, k) ? 0.0 : q) / static_cast<double>(free(j, k));
        }
      }
    }
    double c = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (w(j) > 0.0) c = std::max(c, block(p + j, k) / tau);
    }
    double mass = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (w(j) > 0.0) mass += w(j) * std::exp(block(p + j, k) / tau - c);
    }
    const double log_neg = mass > 0.0 ? c + std::log(mass) : -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < p; ++r) {
      const double sp = block(r, k) / tau;
      const double lse = mass > 0.0 ? logaddexp(sp, log_neg) : sp;
      out.value += lse - sp;
      grad(r, k) += (std::exp(sp - lse) - 1.0) / tau;
      if (mass > 0.0) {
        for (Eigen::Index j = 0; j < n; ++j) {
          if (w(j) > 0.0) grad(p + j, k) += w(j) * std::exp(block(p + j, k) / tau - lse) / tau;
        }
      }
    }
  }
  if (side == AuxSide::user_user) {
    out.uu_value = out.value;
  } else {
    out.ii_value = out.value;
  }
  return out;
}

}  // namespace

LossOutput auxiliary_contrastive(const BatchScores& scores, AuxSide side, const LossConfig& cfg) {
  return auxiliary_impl(scores, side, cfg, nullptr);
}

LossOutput debiased_auxiliary_contrastive(const BatchScores& scores, const DebiasContext& ctx, AuxSide side,
                                          const LossConfig& cfg) {
  return auxiliary_impl(scores, side, cfg, &ctx);
}

LossOutput bpr_loss(const BatchScores& scores) {
  const auto p = static_cast<Eigen::Index>(scores.n_pos);
  const auto n = static_cast<Eigen::Index>(scores.n_neg);
  LossOutput out = empty_output(scores);
  for (std::size_t kk = 0; kk < scores.size(); ++kk) {
    require_finite(scores, kk, false);
    const auto k = static_cast<Eigen::Index>(kk);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double margin = scores.anchor(k) - scores.items(p + j, k);
      out.value += softplus(-margin);
      // d softplus(-x) / dx = -sigmoid(-x)
      const double g = margin >= 0.0 ? std::exp(-margin) / (1.0 + std::exp(-margin)) : 1.0 / (1.0 + std::exp(margin));
      out.grad.anchor(k) -= g;
      out.grad.items(p + j, k) += g;
    }
  }
  out.ui_value = out.value;
  return out;
}

LossOutput total_loss(const BatchScores& scores, const DebiasContext* ctx, const LossConfig& cfg) {
  cfg.validate();
  if (cfg.family == LossFamily::bpr) return bpr_loss(scores);
  if (cfg.debias && ctx == nullptr) throw ConfigError("debiased loss needs a debias context");

  LossOutput out = cfg.debias ? debiased_ui_contrastive(scores, *ctx, cfg) : ui_contrastive(scores, cfg);
  if (cfg.lambda_u != 0.0) {
    auto uu = cfg.debias ? debiased_auxiliary_contrastive(scores, *ctx, AuxSide::user_user, cfg)
                         : auxiliary_contrastive(scores, AuxSide::user_user, cfg);
    out.uu_value = uu.value;
    out.value += cfg.lambda_u * uu.value;
    out.grad.uu += cfg.lambda_u * uu.grad.uu;
    out.diagnostics += uu.diagnostics;
  }
  if (cfg.lambda_i != 0.0) {
    auto ii = cfg.debias ? debiased_auxiliary_contrastive(scores, *ctx, AuxSide::item_item, cfg)
                         : auxiliary_contrastive(scores, AuxSide::item_item, cfg);
    out.ii_value = ii.value;
    out.value += cfg.lambda_i * ii.value;
    out.grad.ii += cfg.lambda_i * ii.grad.ii;
    out.diagnostics += ii.diagnostics;
  }
  return out;
}

}  // namespace hdccf
