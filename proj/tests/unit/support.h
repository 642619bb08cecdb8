#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "hdccf/model.h"

namespace hdccf::testing {

/// Parameters with entries uniform in [-scale, scale]; gradients are O(1)
/// which keeps finite differences well conditioned.
inline ModelParams random_params(std::size_t n_users, std::size_t n_items, std::size_t d, std::mt19937_64& rng,
                                 double scale = 1.0) {
  ModelParams p = init_params(n_users, n_items, d, rng());
  std::uniform_real_distribution<double> u(-scale, scale);
  auto fill = [&](auto& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  };
  fill(p.user_emb);
  fill(p.item_emb);
  fill(p.user_factor);
  fill(p.item_factor);
  fill(p.mod_weights);
  fill(p.mod_bias);
  return p;
}

inline std::vector<double*> coords(ModelParams& p) {
  std::vector<double*> out;
  auto add = [&](auto& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) out.push_back(m.data() + k);
  };
  add(p.user_emb);
  add(p.item_emb);
  add(p.user_factor);
  add(p.item_factor);
  add(p.mod_weights);
  add(p.mod_bias);
  return out;
}

inline std::vector<double> flatten(const GradientBuffer& g) {
  std::vector<double> out;
  auto add_sparse = [&](const SparseRowGrad& s, std::size_t cols) {
    for (std::size_t r = 0; r < s.rows(); ++r) {
      auto row = s.row(static_cast<Index>(r));
      for (std::size_t c = 0; c < cols; ++c) out.push_back(row(static_cast<Eigen::Index>(c)));
    }
  };
  const auto d = static_cast<std::size_t>(g.mod_bias.size());
  add_sparse(g.user_emb, d);
  add_sparse(g.item_emb, d);
  add_sparse(g.user_factor, d);
  add_sparse(g.item_factor, d);
  for (Eigen::Index k = 0; k < g.mod_weights.size(); ++k) out.push_back(g.mod_weights.data()[k]);
  for (Eigen::Index k = 0; k < g.mod_bias.size(); ++k) out.push_back(g.mod_bias(k));
  return out;
}

/// Central differences of f over every parameter coordinate.
template <class F>
std::vector<double> numeric_grad(ModelParams& p, F f, double h = 1e-5) {
  std::vector<double> out;
  for (double* x : coords(p)) {
    const double keep = *x;
    *x = keep + h;
    const double up = f(p);
    *x = keep - h;
    const double down = f(p);
    *x = keep;
    out.push_back((up - down) / (2.0 * h));
  }
  return out;
}

/// Relative error with an absolute floor for coordinates whose true
/// derivative is (near) zero. Central differences at h = 1e-5 on values of
/// order 10 carry roundoff near 1e-10, well under the floor.
inline double rel_err(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& n, double floor = 1e-5) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, rel_err(a[k], n[k], floor));
  return worst;
}

}  // namespace hdccf::testing
