#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hdccf/dataset.h"

namespace hdccf {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// All trainable tables of the modulated similarity model.
///
///   f(u, i) = (m_ui * p_u) . (m_ui * q_i)
///   m_ui    = sigmoid(W^T [e_i ; e_u ; e_i * e_u] + b)
///
/// `mod_weights` is 3d x d: rows [0, d) act on e_i, rows [d, 2d) on e_u and
/// rows [2d, 3d) on the Hadamard product.
struct ModelParams {
  std::size_t dim = 0;
  RowMatrix user_emb;     // n_users x d
  RowMatrix item_emb;     // n_items x d
  RowMatrix user_factor;  // n_users x d
  RowMatrix item_factor;  // n_items x d
  RowMatrix mod_weights;  // 3d x d
  Vector mod_bias;        // d

  std::size_t n_users() const { return static_cast<std::size_t>(user_emb.rows()); }
  std::size_t n_items() const { return static_cast<std::size_t>(item_emb.rows()); }

  auto item_block() const { return mod_weights.topRows(static_cast<Eigen::Index>(dim)); }
  auto user_block() const { return mod_weights.middleRows(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)); }
  auto product_block() const { return mod_weights.bottomRows(static_cast<Eigen::Index>(dim)); }

  bool all_finite() const;
  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

/// Row-sparse gradient table: rows never written stay exactly zero and the
/// touched list records which rows an optimizer step has to visit.
class SparseRowGrad {
 public:
  SparseRowGrad() = default;
  SparseRowGrad(std::size_t rows, std::size_t cols);

  /// Mutable row; marks it touched.
  Eigen::Map<Eigen::RowVectorXd> row(Index r);
  Eigen::Map<const Eigen::RowVectorXd> row(Index r) const;

  bool touched(Index r) const { return touched_flag_[r] != 0; }
  const std::vector<Index>& touched_rows() const { return touched_; }
  std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }

  void clear();
  void add(const SparseRowGrad& other);

 private:
  RowMatrix values_;
  std::vector<char> touched_flag_;
  std::vector<Index> touched_;
};

struct GradientBuffer {
  GradientBuffer() = default;
  GradientBuffer(std::size_t n_users, std::size_t n_items, std::size_t dim);
  explicit GradientBuffer(const ModelParams& like)
      : GradientBuffer(like.n_users(), like.n_items(), like.dim) {}

  SparseRowGrad user_emb;
  SparseRowGrad item_emb;
  SparseRowGrad user_factor;
  SparseRowGrad item_factor;
  RowMatrix mod_weights;
  Vector mod_bias;
  bool mod_touched = false;

  void clear();
  void add(const GradientBuffer& other);
};

/// Gaussian(0, 0.01) initialization of every table, deterministic in `seed`.
ModelParams init_params(std::size_t n_users, std::size_t n_items, std::size_t dim, std::uint64_t seed);

double sigmoid(double x);

/// m_ui, strictly inside (0, 1)^d.
Vector modulation(Index user, Index item, const ModelParams& params);

/// Modulated or plain dot-product relevance score.
double similarity(Index user, Index item, const ModelParams& params, bool modulated);

/// p_a . p_b; used by the user-user auxiliary loss.
double user_similarity(Index a, Index b, const ModelParams& params);
/// q_a . q_b; used by the item-item auxiliary loss.
double item_similarity(Index a, Index b, const ModelParams& params);

/// Accumulates upstream * d similarity(user, item) / d theta into `grads`.
void similarity_backward(Index user, Index item, const ModelParams& params, double upstream, bool modulated,
                         GradientBuffer& grads);
void user_similarity_backward(Index a, Index b, const ModelParams& params, double upstream, GradientBuffer& grads);
void item_similarity_backward(Index a, Index b, const ModelParams& params, double upstream, GradientBuffer& grads);

}  // namespace hdccf
