#include "hdccf/model.h"

#include <cmath>
#include <random>

#include "hdccf/error.h"

namespace hdccf {

namespace {

constexpr double kInitStddev = 0.01;

void fill_gaussian(RowMatrix& m, std::normal_distribution<double>& dist, std::mt19937_64& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
  }
}

Vector modulation_input(Index user, Index item, const ModelParams& params) {
  const auto d = static_cast<Eigen::Index>(params.dim);
  Vector x(3 * d);
  auto eu = params.user_factor.row(user);
  auto ei = params.item_factor.row(item);
  x.segment(0, d) = ei.transpose();
  x.segment(d, d) = eu.transpose();
  x.segment(2 * d, d) = ei.cwiseProduct(eu).transpose();
  return x;
}

}  // namespace

bool ModelParams::all_finite() const {
  return user_emb.allFinite() && item_emb.allFinite() && user_factor.allFinite() && item_factor.allFinite() &&
         mod_weights.allFinite() && mod_bias.allFinite();
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  return a.dim == b.dim && a.user_emb == b.user_emb && a.item_emb == b.item_emb &&
         a.user_factor == b.user_factor && a.item_factor == b.item_factor && a.mod_weights == b.mod_weights &&
         a.mod_bias == b.mod_bias;
}

SparseRowGrad::SparseRowGrad(std::size_t rows, std::size_t cols)
    : values_(RowMatrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols))),
      touched_flag_(rows, 0) {}

Eigen::Map<Eigen::RowVectorXd> SparseRowGrad::row(Index r) {
  if (!touched_flag_[r]) {
    touched_flag_[r] = 1;
    touched_.push_back(r);
  }
  return {values_.row(r).data(), values_.cols()};
}

Eigen::Map<const Eigen::RowVectorXd> SparseRowGrad::row(Index r) const {
  return {values_.row(r).data(), values_.cols()};
}

void SparseRowGrad::clear() {
  for (auto r : touched_) {
    values_.row(r).setZero();
    touched_flag_[r] = 0;
  }
  touched_.clear();
}

void SparseRowGrad::add(const SparseRowGrad& other) {
  for (auto r : other.touched_) row(r) += other.row(r);
}

GradientBuffer::GradientBuffer(std::size_t n_users, std::size_t n_items, std::size_t dim)
    : user_emb(n_users, dim),
      item_emb(n_items, dim),
      user_factor(n_users, dim),
      item_factor(n_items, dim),
      mod_weights(RowMatrix::Zero(static_cast<Eigen::Index>(3 * dim), static_cast<Eigen::Index>(dim))),
      mod_bias(Vector::Zero(static_cast<Eigen::Index>(dim))) {}

void GradientBuffer::clear() {
  user_emb.clear();
  item_emb.clear();
  user_factor.clear();
  item_factor.clear();
  if (mod_touched) {
    mod_weights.setZero();
    mod_bias.setZero();
  }
  mod_touched = false;
}

void GradientBuffer::add(const GradientBuffer& other) {
  user_emb.add(other.user_emb);
  item_emb.add(other.item_emb);
  user_factor.add(other.user_factor);
  item_factor.add(other.item_factor);
  if (other.mod_touched) {
    mod_weights += other.mod_weights;
    mod_bias += other.mod_bias;
    mod_touched = true;
  }
}

ModelParams init_params(std::size_t n_users, std::size_t n_items, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("embedding dimension must be at least 1");
  const auto d = static_cast<Eigen::Index>(dim);
  ModelParams params;
  params.dim = dim;
  params.user_emb.resize(static_cast<Eigen::Index>(n_users), d);
  params.item_emb.resize(static_cast<Eigen::Index>(n_items), d);
  params.user_factor.resize(static_cast<Eigen::Index>(n_users), d);
  params.item_factor.resize(static_cast<Eigen::Index>(n_items), d);
  params.mod_weights.resize(3 * d, d);
  params.mod_bias.resize(d);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, kInitStddev);
  fill_gaussian(params.user_emb, dist, rng);
  fill_gaussian(params.item_emb, dist, rng);
  fill_gaussian(params.user_factor, dist, rng);
  fill_gaussian(params.item_factor, dist, rng);
  fill_gaussian(params.mod_weights, dist, rng);
  for (Eigen::Index k = 0; k < d; ++k) params.mod_bias(k) = dist(rng);
  return params;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

Vector modulation(Index user, Index item, const ModelParams& params) {
  Vector pre = params.mod_weights.transpose() * modulation_input(user, item, params) + params.mod_bias;
  return pre.unaryExpr([](double v) { return sigmoid(v); });
}

double similarity(Index user, Index item, const ModelParams& params, bool modulated) {
  auto p = params.user_emb.row(user);
  auto q = params.item_emb.row(item);
  if (!modulated) return p.dot(q);
  Vector m = modulation(user, item, params);
  return (m.array().square() * p.transpose().array() * q.transpose().array()).sum();
}

double user_similarity(Index a, Index b, const ModelParams& params) {
  return params.user_emb.row(a).dot(params.user_emb.row(b));
}

double item_similarity(Index a, Index b, const ModelParams& params) {
  return params.item_emb.row(a).dot(params.item_emb.row(b));
}

void similarity_backward(Index user, Index item, const ModelParams& params, double upstream, bool modulated,
                         GradientBuffer& grads) {
  if (upstream == 0.0) return;
  auto p = params.user_emb.row(user);
  auto q = params.item_emb.row(item);
  if (!modulated) {
    grads.user_emb.row(user) += upstream * q;
    grads.item_emb.row(item) += upstream * p;
    return;
  }
  const auto d = static_cast<Eigen::Index>(params.dim);
  Vector x = modulation_input(user, item, params);
  Vector pre = params.mod_weights.transpose() * x + params.mod_bias;
  Eigen::ArrayXd m = pre.unaryExpr([](double v) { return sigmoid(v); }).array();
  Eigen::ArrayXd msq = m.square();

  grads.user_emb.row(user) += upstream * (msq * q.transpose().array()).matrix().transpose();
  grads.item_emb.row(item) += upstream * (msq * p.transpose().array()).matrix().transpose();

  // d f / d pre = 2 m^2 (1 - m) p q
  Vector delta = (upstream * 2.0 * msq * (1.0 - m) * p.transpose().array() * q.transpose().array()).matrix();
  grads.mod_bias += delta;
  grads.mod_weights.noalias() += x * delta.transpose();
  grads.mod_touched = true;

  Vector dx = params.mod_weights * delta;
  auto eu = params.user_factor.row(user);
  auto ei = params.item_factor.row(item);
  grads.item_factor.row(item) += dx.segment(0, d).transpose() + eu.cwiseProduct(dx.segment(2 * d, d).transpose());
  grads.user_factor.row(user) += dx.segment(d, d).transpose() + ei.cwiseProduct(dx.segment(2 * d, d).transpose());
}

void user_similarity_backward(Index a, Index b, const ModelParams& params, double upstream, GradientBuffer& grads) {
  if (upstream == 0.0) return;
  Eigen::RowVectorXd pa = params.user_emb.row(a);
  Eigen::RowVectorXd pb = params.user_emb.row(b);
  grads.user_emb.row(a) += upstream * pb;
  grads.user_emb.row(b) += upstream * pa;
}

void item_similarity_backward(Index a, Index b, const ModelParams& params, double upstream, GradientBuffer& grads) {
  if (upstream == 0.0) return;
  Eigen::RowVectorXd qa = params.item_emb.row(a);
  Eigen::RowVectorXd qb = params.item_emb.row(b);
  grads.item_emb.row(a) += upstream * qb;
  grads.item_emb.row(b) += upstream * qa;
}

}  // namespace hdccf
