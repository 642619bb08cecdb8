#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "hdccf/dataset.h"
#include "hdccf/sampler.h"

namespace hdccf {

/// Lower bound applied to a debiased negative score.
///   paper:    |N-| e^{1/tau}
///   robinson: |N-| e^{-1/tau}
///   off:      no clamp
enum class ClampMode { paper, robinson, off };

enum class LossFamily { hdccf, bpr };

struct LossConfig {
  double temperature = 0.1;
  double lambda_u = 0.5;
  double lambda_i = 0.5;
  double omega_u = 0.1;  // false-negative probability for sampled users
  double omega_i = 0.1;  // ... and for sampled items
  bool debias = true;
  ClampMode clamp = ClampMode::paper;
  LossFamily family = LossFamily::hdccf;

  void validate() const;
};

/// Relevance scores of one batch, laid out like the batch slot tables: each
/// block has one column per anchor, rows [0, n_pos) for positive neighbours and
/// [n_pos, n_pos + n_neg) for negatives.
struct BatchScores {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  Eigen::VectorXd anchor;  // f(u_k, i_k)
  Eigen::MatrixXd items;   // f(u_k, item)
  Eigen::MatrixXd users;   // f(user, i_k)
  Eigen::MatrixXd uu;      // p_{u_k} . p_user
  Eigen::MatrixXd ii;      // q_{i_k} . q_item

  static BatchScores zeros(std::size_t m, std::size_t n_pos, std::size_t n_neg);
  std::size_t size() const { return static_cast<std::size_t>(anchor.size()); }
  BatchScores& operator+=(const BatchScores& other);
  BatchScores& operator*=(double factor);
};

using FlagMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using CountMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Membership information the debiased losses need, per negative slot
/// (n_neg x M). The free counts test (u', user) rather than (u_k, u'); the
/// anchor-based reading may have been intended but is not what is used.
struct DebiasContext {
  FlagMatrix item_observed;         // (u_k, item) in D
  FlagMatrix user_observed;         // (user, i_k) in D
  FlagMatrix uu_anchor_neighboured;  // (u_k, user) in D^{u-u}
  FlagMatrix ii_anchor_neighboured;  // (i_k, item) in D^{i-i}
  CountMatrix uu_free_count;        // sum over u' in N_i- of 1[(u', user) not in D^{u-u}]
  CountMatrix ii_free_count;        // mirror for items

  /// Nothing observed and nothing neighboured.
  static DebiasContext unobserved(std::size_t m, std::size_t n_neg);
};

/// Fills a context from the training set. Neighbourhood tables are only
/// computed when `with_auxiliary` is set.
DebiasContext build_debias_context(const Batch& batch, const InteractionDataset& train, bool with_auxiliary);

struct LossDiagnostics {
  std::size_t clamped = 0;       // negative scores replaced by the floor
  std::size_t degenerate = 0;    // every negative observed
  std::size_t dropped_terms = 0; // auxiliary negatives with a zero weight denominator

  LossDiagnostics& operator+=(const LossDiagnostics& other);
};

struct LossOutput {
  double value = 0.0;
  BatchScores grad;                 // dL / d score, same layout as the input
  Eigen::VectorXd recog_anchor;     // probability mass of the positive itself
  Eigen::MatrixXd recog_items;      // P(u, i-), n_neg x M
  Eigen::MatrixXd recog_users;      // P(u-, i), n_neg x M
  LossDiagnostics diagnostics;
  double ui_value = 0.0;
  double uu_value = 0.0;
  double ii_value = 0.0;
};

/// Result of one debiased negative score, in units of e^{-shift}.
struct DebiasedScore {
  double value = 0.0;
  double pi0 = 0.0;  // weight of every unobserved negative (observed ones get 0)
  double pi1 = 0.0;  // weight of every positive
  bool clamped = false;
  bool degenerate = false;
};

double clamp_floor(ClampMode mode, std::size_t n_neg, double temperature);
double log_clamp_floor(ClampMode mode, std::size_t n_neg, double temperature);

/// sum_{N-} pi0 e^{f/tau} - sum_{N+ and anchor partner} pi1 e^{f/tau}, clamped.
/// `positive_scores` must already include the anchor's own partner. With
/// Q = |N-|:
///   pi0 = Q 1[unobserved] / (omega- * #unobserved),  pi1 = Q omega+ / (omega- |positives|)
DebiasedScore debiased_negative_score(std::span<const double> negative_scores,
                                      std::span<const std::uint8_t> negative_observed,
                                      std::span<const double> positive_scores, double omega_plus,
                                      double temperature, ClampMode clamp, double shift = 0.0);

enum class AuxSide { user_user, item_item };

LossOutput ui_contrastive(const BatchScores& scores, const LossConfig& cfg);
LossOutput debiased_ui_contrastive(const BatchScores& scores, const DebiasContext& ctx, const LossConfig& cfg);
LossOutput auxiliary_contrastive(const BatchScores& scores, AuxSide side, const LossConfig& cfg);
LossOutput debiased_auxiliary_contrastive(const BatchScores& scores, const DebiasContext& ctx, AuxSide side,
                                          const LossConfig& cfg);
LossOutput bpr_loss(const BatchScores& scores);

/// L = L_ui + lambda_u L_uu + lambda_i L_ii (debiased terms when cfg.debias),
/// or the BPR loss for family = bpr. `ctx` may be null when not debiasing.
LossOutput total_loss(const BatchScores& scores, const DebiasContext* ctx, const LossConfig& cfg);

}  // namespace hdccf
