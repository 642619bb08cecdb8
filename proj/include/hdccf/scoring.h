#pragma once

#include <vector>

#include <Eigen/Dense>

#include "hdccf/loss.h"
#include "hdccf/model.h"
#include "hdccf/sampler.h"

namespace hdccf {

/// Modulation vectors computed by the forward pass, d x (M * rows): column
/// k * rows + r of item_side is m(u_k, item row r), of user_side
/// m(user row r, i_k).
struct ScoreCache {
  Eigen::MatrixXd item_side;
  Eigen::MatrixXd user_side;
};

/// Every score a batch needs, batched per anchor so that the modulation
/// network runs as matrix products.
BatchScores score_batch(const ModelParams& params, const Batch& batch, bool modulated, std::size_t threads = 1,
                        ScoreCache* cache = nullptr);

/// Accumulates sum over all scores of grad * d score / d theta into `out`.
/// `cache` must come from score_batch on the same params and batch, or be null.
void backprop_batch(const ModelParams& params, const Batch& batch, const BatchScores& grad, bool modulated,
                    GradientBuffer& out, std::size_t threads = 1, const ScoreCache* cache = nullptr);

}  // namespace hdccf

namespace hdccf {

/// Scores one user against every item. The item side of the modulation input
/// is projected once at construction.
class ItemScorer {
 public:
  ItemScorer(const ModelParams& params, bool modulated);

  /// f(user, i) for all items i.
  Eigen::VectorXd scores(Index user) const;

 private:
  const ModelParams* params_;
  bool modulated_;
  Eigen::MatrixXd item_factor_t_;  // d x n_items
  Eigen::MatrixXd item_emb_t_;     // d x n_items
  Eigen::MatrixXd item_pre_;       // W_item^T e_i for every item
};

}  // namespace hdccf
