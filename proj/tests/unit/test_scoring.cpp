#include <random>

#include "doctest.h"
#include "hdccf/loss.h"
#include "hdccf/scoring.h"
#include "support.h"

using namespace hdccf;
using hdccf::testing::flatten;
using hdccf::testing::max_rel_err;
using hdccf::testing::numeric_grad;
using hdccf::testing::random_params;

namespace {

InteractionDataset toy() {
  std::vector<Interaction> xs;
  const std::vector<std::vector<Index>> items = {{0, 1, 2}, {1, 3, 4, 5}, {0, 2, 6}, {4, 5, 6, 7}, {1, 2, 3, 7, 0}, {6, 7, 3}};
  for (Index u = 0; u < items.size(); ++u) {
    for (auto i : items[u]) xs.push_back({u, i, 0.0});
  }
  return InteractionDataset(6, 8, xs);
}

Batch toy_batch(std::uint64_t seed, std::size_t m, std::size_t p, SamplerMode mode = SamplerMode::in_batch) {
  static const InteractionDataset ds = toy();
  SamplerConfig cfg;
  cfg.batch_size = m;
  cfg.pos_neighbors = p;
  cfg.mode = mode;
  cfg.neg_count = 3;
  cfg.seed = seed;
  return BatchSampler(ds, cfg).next();
}

}  // namespace

TEST_CASE("batched scores equal the per-pair functions") {
  std::mt19937_64 rng(1);
  for (bool modulated : {true, false}) {
    for (auto mode : {SamplerMode::in_batch, SamplerMode::explicit_uniform}) {
      auto p = random_params(6, 8, 5, rng);
      auto b = toy_batch(rng(), 4, 2, mode);
      auto s = score_batch(p, b, modulated);
      for (std::size_t k = 0; k < b.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(k);
        const auto [u, i] = b.pairs[k];
        CHECK(s.anchor(col) == similarity(u, i, p, modulated));
        for (std::size_t r = 0; r < b.rows(); ++r) {
          const auto row = static_cast<Eigen::Index>(r);
          CHECK(s.items(row, col) == doctest::Approx(similarity(u, b.item_at(r, k), p, modulated)).epsilon(1e-12));
          CHECK(s.users(row, col) == doctest::Approx(similarity(b.user_at(r, k), i, p, modulated)).epsilon(1e-12));
          CHECK(s.uu(row, col) == doctest::Approx(user_similarity(u, b.user_at(r, k), p)).epsilon(1e-12));
          CHECK(s.ii(row, col) == doctest::Approx(item_similarity(i, b.item_at(r, k), p)).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("end-to-end parameter gradients match central differences") {
  std::mt19937_64 rng(2);
  const auto ds = toy();
  int instances = 0;
  for (std::size_t d : {1, 4, 16}) {
    for (int rep = 0; rep < 4; ++rep, ++instances) {
      auto p = random_params(6, 8, d, rng, 0.7);
      auto b = toy_batch(rng(), 3, 2);
      const bool modulated = rep != 3;
      LossConfig cfg;
      cfg.temperature = 0.8;
      cfg.clamp = ClampMode::off;
      cfg.omega_u = cfg.omega_i = 0.05;
      cfg.debias = rep % 2 == 0;
      auto ctx = build_debias_context(b, ds, true);
      auto loss_of = [&](const ModelParams& q) {
        return total_loss(score_batch(q, b, modulated), cfg.debias ? &ctx : nullptr, cfg).value;
      };
      ScoreCache cache;
      auto scores = score_batch(p, b, modulated, 1, &cache);
      auto out = total_loss(scores, cfg.debias ? &ctx : nullptr, cfg);
      GradientBuffer g(p);
      backprop_batch(p, b, out.grad, modulated, g, 1, &cache);
      CHECK(max_rel_err(flatten(g), numeric_grad(p, loss_of)) < 1e-4);
    }
  }
  CHECK(instances == 12);
}

TEST_CASE("worker count does not change gradients beyond rounding") {
  std::mt19937_64 rng(3);
  auto p = random_params(6, 8, 8, rng);
  auto b = toy_batch(5, 6, 2);
  LossConfig cfg;
  cfg.debias = false;
  auto out = total_loss(score_batch(p, b, true), nullptr, cfg);
  GradientBuffer one(p), three(p), again(p), uncached(p);
  ScoreCache cache;
  auto s3 = score_batch(p, b, true, 3, &cache);
  CHECK(s3.items.isApprox(score_batch(p, b, true).items, 1e-12));
  CHECK(s3.items == score_batch(p, b, true, 3).items);
  backprop_batch(p, b, out.grad, true, one, 1);
  backprop_batch(p, b, out.grad, true, three, 3, &cache);
  backprop_batch(p, b, out.grad, true, again, 3, &cache);
  auto a = flatten(one);
  auto c = flatten(three);
  CHECK(flatten(again) == c);
  CHECK(max_rel_err(a, c, 1e-9) < 1e-10);
}

TEST_CASE("untouched rows keep an exactly zero gradient") {
  std::mt19937_64 rng(4);
  auto p = random_params(6, 8, 4, rng);
  auto b = assemble_in_batch({{0, 0}, {1, 1}}, {{1}, {3}}, {{4}, {1}});
  LossConfig cfg;
  cfg.debias = false;
  auto out = total_loss(score_batch(p, b, true), nullptr, cfg);
  GradientBuffer g(p);
  backprop_batch(p, b, out.grad, true, g);
  for (Index u : {2, 3, 5}) CHECK_FALSE(g.user_emb.touched(u));
  for (Index i : {2, 4, 5, 6, 7}) CHECK_FALSE(g.item_emb.touched(i));
  CHECK(g.item_emb.row(5).isZero(0.0));
}

TEST_CASE("debias context agrees with direct membership checks") {
  const auto ds = toy();
  auto b = toy_batch(9, 5, 2);
  auto ctx = build_debias_context(b, ds, true);
  for (std::size_t k = 0; k < b.size(); ++k) {
    const auto [u, i] = b.pairs[k];
    const auto col = static_cast<Eigen::Index>(k);
    for (std::size_t j = 0; j < b.n_neg; ++j) {
      const auto row = static_cast<Eigen::Index>(j);
      const Index item = b.item_at(b.n_pos + j, k);
      const Index user = b.user_at(b.n_pos + j, k);
      CHECK(ctx.item_observed(row, col) == (ds.contains(u, item) ? 1 : 0));
      CHECK(ctx.user_observed(row, col) == (ds.contains(user, i) ? 1 : 0));
      CHECK(ctx.uu_anchor_neighboured(row, col) == (ds.users_neighboured(u, user) ? 1 : 0));
      CHECK(ctx.ii_anchor_neighboured(row, col) == (ds.items_neighboured(i, item) ? 1 : 0));
      int free_users = 0, free_items = 0;
      for (std::size_t jj = 0; jj < b.n_neg; ++jj) {
        free_users += ds.users_neighboured(b.user_at(b.n_pos + jj, k), user) ? 0 : 1;
        free_items += ds.items_neighboured(b.item_at(b.n_pos + jj, k), item) ? 0 : 1;
      }
      CHECK(ctx.uu_free_count(row, col) == free_users);
      CHECK(ctx.ii_free_count(row, col) == free_items);
    }
  }
}
