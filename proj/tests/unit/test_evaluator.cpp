#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "hdccf/error.h"
#include "hdccf/evaluator.h"
#include "hdccf/scoring.h"
#include "hdccf/synthetic.h"
#include "support.h"

using namespace hdccf;

namespace {

// Position (1-based) of `target` after sorting candidates by descending
// score, ties by ascending index.
std::size_t sorted_position(const Eigen::VectorXd& scores, Index target, std::vector<Index> candidates) {
  std::sort(candidates.begin(), candidates.end(), [&](Index a, Index b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;
  });
  for (std::size_t p = 0; p < candidates.size(); ++p) {
    if (candidates[p] == target) return p + 1;
  }
  return 0;
}

SplitDataset small_split(std::uint64_t seed) { return leave_one_out_split(random_dataset(40, 30, 0.2, 4, seed)); }

}  // namespace

TEST_CASE("metric examples") {
  auto r = report_from_ranks({1, 2, 11}, {1, 10}, CandidateMode::full);
  CHECK(r.hr_at(1) == doctest::Approx(1.0 / 3.0));
  CHECK(r.hr_at(10) == doctest::Approx(2.0 / 3.0));
  CHECK(r.ndcg_at(1) == doctest::Approx(1.0 / 3.0));
  CHECK(r.ndcg_at(10) == doctest::Approx((1.0 + 1.0 / std::log2(3.0)) / 3.0));
  CHECK_THROWS_AS(r.hr_at(5), ConfigError);
  auto single = report_from_ranks({3}, {2, 3}, CandidateMode::full);
  CHECK(single.hr_at(2) == 0.0);
  CHECK(single.ndcg_at(3) == doctest::Approx(0.5));
}

TEST_CASE("rank and metrics equal a sort-and-scan reference on random rankings") {
  std::mt19937_64 rng(17);
  std::vector<std::size_t> ranks;
  std::vector<std::size_t> positions;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_items = 1 + rng() % 200;
    Eigen::VectorXd scores(static_cast<Eigen::Index>(n_items));
    // coarse integer scores produce plenty of ties
    for (std::size_t i = 0; i < n_items; ++i) scores(static_cast<Eigen::Index>(i)) = static_cast<double>(rng() % 7);
    std::vector<Index> candidates;
    for (Index i = 0; i < n_items; ++i) {
      if (rng() % 4 != 0) candidates.push_back(i);
    }
    const auto target = static_cast<Index>(rng() % n_items);
    if (std::find(candidates.begin(), candidates.end(), target) == candidates.end()) candidates.push_back(target);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    const std::size_t pos = sorted_position(scores, target, candidates);
    REQUIRE(pos > 0);
    CHECK(rank_of(scores, target, candidates) == pos);
    ranks.push_back(rank_of(scores, target, candidates));
    positions.push_back(pos);
  }
  const std::vector<std::size_t> ks = {1, 5, 10, 50};
  auto r = report_from_ranks(ranks, ks, CandidateMode::full);
  for (std::size_t k = 0; k < ks.size(); ++k) {
    double hits = 0.0;
    double gain = 0.0;
    for (auto p : positions) {
      if (p <= ks[k]) {
        hits += 1.0;
        gain += 1.0 / std::log2(static_cast<double>(p) + 1.0);
      }
    }
    CHECK(r.hr[k] == hits / 1000.0);
    CHECK(r.ndcg[k] == gain / 1000.0);
  }
}

TEST_CASE("rank_of rejects a target outside the candidates") {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(3);
  std::vector<Index> c = {0, 1};
  CHECK_THROWS_AS(rank_of(s, 2, c), ConfigError);
}

TEST_CASE("full ranking excludes train items only") {
  auto split = small_split(3);
  std::mt19937_64 rng(5);
  auto params = testing::random_params(split.train.n_users(), split.train.n_items(), 8, rng);
  for (bool modulated : {false, true}) {
    for (auto target : {EvalTarget::validation, EvalTarget::test}) {
      EvalOptions opts;
      opts.keep_ranks = true;
      opts.target = target;
      auto r = evaluate(params, modulated, split, opts);
      ItemScorer scorer(params, modulated);
      const auto& held = target == EvalTarget::validation ? split.validation : split.test;
      for (Index u = 0; u < split.train.n_users(); ++u) {
        std::vector<Index> candidates;
        for (Index i = 0; i < split.train.n_items(); ++i) {
          if (!split.train.contains(u, i)) candidates.push_back(i);
        }
        CHECK(r.ranks[u] == sorted_position(scorer.scores(u), held[u].item, candidates));
      }
    }
  }
}

TEST_CASE("scorer agrees with the per-pair similarity") {
  auto split = small_split(4);
  std::mt19937_64 rng(6);
  auto params = testing::random_params(split.train.n_users(), split.train.n_items(), 8, rng, 0.5);
  for (bool modulated : {false, true}) {
    ItemScorer scorer(params, modulated);
    for (Index u = 0; u < split.train.n_users(); u += 7) {
      auto s = scorer.scores(u);
      for (Index i = 0; i < split.train.n_items(); ++i) {
        CHECK(s(i) == doctest::Approx(similarity(u, i, params, modulated)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("a perfect scorer ranks the held-out item first") {
  auto split = small_split(7);
  const std::size_t d = split.train.n_items();
  ModelParams params = init_params(split.train.n_users(), split.train.n_items(), d, 1);
  params.user_emb.setZero();
  params.item_emb.setIdentity();
  for (Index u = 0; u < split.train.n_users(); ++u) params.user_emb(u, split.validation[u].item) = 1.0;
  EvalOptions opts;
  auto r = evaluate(params, false, split, opts);
  CHECK(r.hr_at(10) == 1.0);
  CHECK(r.ndcg_at(10) == 1.0);
}

TEST_CASE("sampled candidates are reproducible and exclude interacted items") {
  auto split = small_split(8);
  std::mt19937_64 rng(9);
  auto params = testing::random_params(split.train.n_users(), split.train.n_items(), 4, rng);
  EvalOptions opts;
  opts.mode = CandidateMode::sampled;
  opts.sampled_count = 10;
  opts.keep_ranks = true;
  auto a = evaluate(params, true, split, opts);
  auto b = evaluate(params, true, split, opts);
  CHECK(a.ranks == b.ranks);
  CHECK(a.mode == CandidateMode::sampled);
  for (auto rank : a.ranks) CHECK(rank <= 11);
  // with more samples than unobserved items every unobserved item is used
  opts.sampled_count = 1000;
  auto all = evaluate(params, true, split, opts);
  ItemScorer scorer(params, true);
  for (Index u = 0; u < split.train.n_users(); ++u) {
    std::vector<Index> candidates;
    for (Index i = 0; i < split.train.n_items(); ++i) {
      if (!split.interacted(u, i) || i == split.validation[u].item) candidates.push_back(i);
    }
    CHECK(all.ranks[u] == sorted_position(scorer.scores(u), split.validation[u].item, candidates));
  }
}

TEST_CASE("evaluation does not depend on the thread count") {
  auto split = small_split(10);
  std::mt19937_64 rng(11);
  auto params = testing::random_params(split.train.n_users(), split.train.n_items(), 4, rng);
  for (auto mode : {CandidateMode::full, CandidateMode::sampled}) {
    EvalOptions opts;
    opts.mode = mode;
    opts.keep_ranks = true;
    auto a = evaluate(params, true, split, opts);
    opts.threads = 4;
    auto b = evaluate(params, true, split, opts);
    CHECK(a.ranks == b.ranks);
    CHECK(a.ndcg == b.ndcg);
  }
}

TEST_CASE("recommend returns the evaluator's ordering") {
  auto split = small_split(12);
  std::mt19937_64 rng(13);
  auto params = testing::random_params(split.train.n_users(), split.train.n_items(), 4, rng);
  ItemScorer scorer(params, true);
  for (Index u = 0; u < split.train.n_users(); u += 5) {
    auto recs = recommend(params, true, split.train, u, 10);
    CHECK(recs.size() == 10);
    CHECK(std::set<Index>(recs.begin(), recs.end()).size() == 10);
    std::vector<Index> candidates;
    for (Index i = 0; i < split.train.n_items(); ++i) {
      if (!split.train.contains(u, i)) candidates.push_back(i);
    }
    auto s = scorer.scores(u);
    for (std::size_t p = 0; p < recs.size(); ++p) {
      CHECK_FALSE(split.train.contains(u, recs[p]));
      CHECK(sorted_position(s, recs[p], candidates) == p + 1);
    }
  }
  auto everything = recommend(params, true, split.train, 0, 1000);
  CHECK(everything.size() == split.train.n_items() - split.train.items_of(0).size());
  CHECK_THROWS_AS(recommend(params, true, split.train, 1000, 5), ConfigError);
}

TEST_CASE("dimension mismatch is reported") {
  auto split = small_split(14);
  auto params = init_params(split.train.n_users() + 1, split.train.n_items(), 4, 1);
  CHECK_THROWS_AS(evaluate(params, true, split, {}), ConfigError);
}

TEST_CASE("score histogram conserves counts and spans [0, 100]") {
  auto split = small_split(15);
  std::mt19937_64 rng(16);
  auto params = testing::random_params(split.train.n_users(), split.train.n_items(), 4, rng);
  auto h = score_distribution(params, true, split, 20, 0, 1);
  CHECK(h.positive_total() == split.train.size());
  CHECK(h.negative_total() == split.train.size());
  CHECK(h.edges.front() == 0.0);
  CHECK(h.edges.back() == 100.0);
  CHECK(h.edges.size() == 21);
  CHECK(h.raw_min < h.raw_max);
  CHECK(h.positive.front() + h.negative.front() >= 1);
  CHECK(h.positive.back() + h.negative.back() >= 1);
  auto again = score_distribution(params, true, split, 20, 0, 1);
  CHECK(again.positive == h.positive);
  CHECK(again.negative == h.negative);
  auto sampled = score_distribution(params, true, split, 20, 50, 1);
  CHECK(sampled.positive_total() == 50);
  CHECK(sampled.negative_total() == 50);
}

TEST_CASE("constant scores land in one bin") {
  auto split = small_split(17);
  auto params = init_params(split.train.n_users(), split.train.n_items(), 4, 1);
  params.user_emb.setZero();
  auto h = score_distribution(params, true, split, 10, 0, 1);
  CHECK(h.positive.front() == split.train.size());
  CHECK(h.negative.front() == split.train.size());
  CHECK(overlap_mass(h) == doctest::Approx(1.0));
}

TEST_CASE("overlap mass examples") {
  ScoreHistogram h;
  h.edges = {0, 50, 100};
  h.positive = {0, 4};
  h.negative = {3, 0};
  CHECK(overlap_mass(h) == 0.0);
  h.negative = {1, 3};
  CHECK(overlap_mass(h) == doctest::Approx(0.75));
  h.negative = {0, 8};
  CHECK(overlap_mass(h) == doctest::Approx(1.0));
}

TEST_CASE("CSV layouts") {
  auto r = report_from_ranks({1, 4}, {1, 10}, CandidateMode::sampled);
  std::ostringstream out;
  write_eval_csv(r, out);
  CHECK(out.str() ==
        "metric,k,value,candidate_mode\nhr,1,0.5,sampled\nndcg,1,0.5,sampled\nhr,10,1,sampled\n"
        "ndcg,10,0.71533827903669656,sampled\n");
  ScoreHistogram h;
  h.edges = {0, 50, 100};
  h.positive = {1, 2};
  h.negative = {3, 4};
  std::ostringstream hist;
  write_histogram_csv(h, hist);
  CHECK(hist.str() == "bin_lo,bin_hi,positive,negative\n0,50,1,3\n50,100,2,4\n");
}
