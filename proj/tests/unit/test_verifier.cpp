#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "hdccf/error.h"
#include "hdccf/synthetic.h"
#include "hdccf/verifier.h"

using namespace hdccf;

namespace {

InteractionDataset full_two_by_two() {
  return InteractionDataset(2, 2, {{0, 0, 1}, {0, 1, 2}, {1, 0, 3}, {1, 1, 4}});
}

// Exact conditioned expectation of n_{item}^{u-i} by enumerating every target,
// every (M-1)-subset of the remaining pairs and every positive draw (P = 1).
double enumerated_item_count(const InteractionDataset& ds, std::size_t m, Index item) {
  const auto& xs = ds.interactions();
  const std::size_t n = xs.size();
  double total = 0.0;
  double weight = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    if (ds.contains(xs[t].user, item)) continue;
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != t) others.push_back(j);
    }
    // subsets of size m - 1 via bitmask
    for (std::uint32_t mask = 0; mask < (1u << others.size()); ++mask) {
      if (static_cast<std::size_t>(__builtin_popcount(mask)) != m - 1) continue;
      double expected = 0.0;
      for (std::size_t b = 0; b < others.size(); ++b) {
        if (!(mask & (1u << b))) continue;
        auto items = ds.items_of(xs[others[b]].user);
        for (Index i : items) expected += i == item ? 1.0 / static_cast<double>(items.size()) : 0.0;
      }
      total += expected;
      weight += 1.0;
    }
  }
  return total / weight;
}

}  // namespace

TEST_CASE("whole-dataset batches on a full 2x2 grid expect two appearances") {
  auto ds = full_two_by_two();
  for (Index i = 0; i < 2; ++i) CHECK(expected_item_appearances(ds, ds.size(), 1, i) == 2.0);
  for (Index u = 0; u < 2; ++u) CHECK(expected_user_appearances(ds, ds.size(), 1, u) == 2.0);
}

TEST_CASE("the conditioned expectation matches exhaustive enumeration") {
  InteractionDataset ds(3, 4, {{0, 0, 1}, {0, 1, 2}, {1, 1, 3}, {1, 2, 4}, {2, 0, 5}, {2, 3, 6}, {1, 3, 7}});
  for (std::size_t m : {2, 3, 5}) {
    for (Index i = 0; i < ds.n_items(); ++i) {
      CAPTURE(m);
      CAPTURE(i);
      CHECK(enumerated_item_count(ds, m, i) == doctest::Approx(expected_item_appearances(ds, m, 1, i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("an item nobody interacted with is never a negative") {
  auto base = random_dataset(12, 8, 0.4, 2, 3);
  // pad with one extra item index that has no interactions
  InteractionDataset ds(12, 9, base.interactions());
  CHECK(expected_item_appearances(ds, 4, 2, 8) == 0.0);
  FrequencyOptions opts;
  opts.batch_size = 4;
  opts.trials = frequency_trials_needed(ds, 4, 2, 0.05) + 100;
  opts.tolerance = 0.05;
  auto report = verify_frequency_expectations(ds, opts);
  bool seen = false;
  for (const auto& r : report.rows) {
    if (r.target == "ui_item:8") {
      seen = true;
      CHECK(r.empirical == 0.0);
      CHECK(r.pass);
    }
  }
  CHECK(seen);
}

TEST_CASE("frequency expectations hold on a random dataset") {
  auto ds = random_dataset(30, 20, 0.3, 3, 11);
  FrequencyOptions opts;
  opts.batch_size = 6;
  opts.pos_neighbors = 2;
  opts.tolerance = 0.05;
  opts.trials = frequency_trials_needed(ds, 6, 2, opts.tolerance);
  auto report = verify_frequency_expectations(ds, opts);
  CHECK(report.rows.size() == 2 * (ds.n_items() + ds.n_users()));
  for (const auto& r : report.rows) {
    CAPTURE(r.target);
    CHECK(r.pass);
  }
  // the item-item count reuses the user-item negative slots
  std::map<std::string, double> by_target;
  for (const auto& r : report.rows) by_target[r.target] = r.empirical;
  for (Index i = 0; i < ds.n_items(); ++i) {
    CHECK(by_target["ii_item:" + std::to_string(i)] == by_target["ui_item:" + std::to_string(i)]);
  }
}

TEST_CASE("too few trials are refused with an estimate") {
  auto ds = random_dataset(30, 20, 0.3, 3, 11);
  FrequencyOptions opts;
  opts.batch_size = 6;
  opts.trials = 100;
  try {
    verify_frequency_expectations(ds, opts);
    FAIL("expected a refusal");
  } catch (const ConfigError& e) {
    std::string what = e.what();
    CHECK(what.find("trials are needed") != std::string::npos);
    CHECK(what.find(std::to_string(frequency_trials_needed(ds, 6, 2, 0.02))) != std::string::npos);
  }
}

TEST_CASE("frequency results do not depend on the thread count") {
  auto ds = random_dataset(15, 10, 0.4, 2, 5);
  FrequencyOptions opts;
  opts.batch_size = 4;
  opts.tolerance = 0.2;
  opts.trials = frequency_trials_needed(ds, 4, 2, 0.2) + 64;
  auto a = verify_frequency_expectations(ds, opts);
  opts.threads = 3;
  auto b = verify_frequency_expectations(ds, opts);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) CHECK(a.rows[k].empirical == b.rows[k].empirical);
}

TEST_CASE("worlds satisfy the mixture decomposition exactly") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    WorldOptions w;
    w.seed = seed;
    w.latent_fraction = 0.1 * static_cast<double>(seed);
    auto world = make_world(w);
    CHECK(decomposition_mismatches(world) == 0);
    for (Index i = 0; i < world.observed.n_items(); ++i) {
      auto pool = world.unobserved_users(i);
      auto latent = world.latent_users(i);
      CHECK(latent.size() < std::max<std::size_t>(pool.size(), 1));
      if (pool.size() >= 2) CHECK(!latent.empty());
    }
    for (Index u = 0; u < world.observed.n_users(); ++u) {
      auto pool = world.unobserved_items(u);
      CHECK(world.latent_items(u).size() < std::max<std::size_t>(pool.size(), 1));
    }
  }
}

TEST_CASE("without latent positives the debiased and biased scores coincide") {
  WorldOptions w;
  w.latent_fraction = 0.0;
  auto world = make_world(w);
  DebiasOptions opts;
  opts.trials = 20000;
  opts.tolerance = 0.03;
  auto report = verify_debias_unbiasedness(world, opts);
  REQUIRE(report.rows.size() == report.baseline.size());
  for (std::size_t k = 0; k < report.rows.size(); ++k) {
    CAPTURE(report.rows[k].target);
    CHECK(report.rows[k].empirical == report.baseline[k].empirical);
    CHECK(report.rows[k].pass);
  }
}

TEST_CASE("biased excess equals omega Q (e^{2/tau} - 1) when negatives score zero") {
  WorldOptions w;
  w.negative_score_spread = 0.0;
  w.latent_score = 2.0;
  auto world = make_world(w);
  DebiasOptions opts;
  opts.trials = 40000;
  opts.tolerance = 0.02;
  auto report = verify_debias_unbiasedness(world, opts);
  const double q = static_cast<double>(opts.n_neg);
  std::size_t k = 0;
  for (Index i = 0; i < world.observed.n_items(); ++i) {
    auto pool = world.unobserved_users(i);
    if (pool.empty()) continue;
    const double omega = static_cast<double>(world.latent_users(i).size()) / static_cast<double>(pool.size());
    const auto& row = report.rows[k];
    const auto& base = report.baseline[k];
    ++k;
    CAPTURE(row.target);
    CHECK(row.theoretical == doctest::Approx(q).epsilon(1e-12));
    CHECK(row.pass);
    const double excess = omega * q * (std::exp(2.0) - 1.0);
    CHECK(std::abs(base.empirical - (q + excess)) <= 4.0 * base.std_error + 1e-12);
  }
}

TEST_CASE("debiased score is unbiased in the 10x10 world while the biased one is not") {
  WorldOptions w;
  auto world = make_world(w);
  DebiasOptions opts;
  opts.n_neg = 64;
  opts.n_pos = 4;
  opts.trials = 100000;
  opts.temperature = 1.0;
  opts.tolerance = 0.01;
  auto report = verify_debias_unbiasedness(world, opts);
  CHECK(report.all_pass());
  CHECK(report.max_rel_dev() <= 0.01);
  CHECK(report.min_baseline_rel_dev() > 0.05);
}

TEST_CASE("debias suite refuses too few trials") {
  auto world = make_world({});
  DebiasOptions opts;
  opts.trials = 500;
  CHECK_THROWS_AS(verify_debias_unbiasedness(world, opts), ConfigError);
}

TEST_CASE("debias results do not depend on the thread count") {
  auto world = make_world({});
  DebiasOptions opts;
  opts.trials = 30000;
  opts.tolerance = 0.03;
  auto a = verify_debias_unbiasedness(world, opts);
  opts.threads = 4;
  auto b = verify_debias_unbiasedness(world, opts);
  for (std::size_t k = 0; k < a.rows.size(); ++k) CHECK(a.rows[k].empirical == b.rows[k].empirical);
}

TEST_CASE("error shrinks like one over root trials") {
  auto world = make_world({});
  DebiasOptions opts;
  const double slope = convergence_slope(world, opts, {256, 1024, 4096}, 10);
  CHECK(slope == doctest::Approx(-0.5).epsilon(0.2));
  CHECK(std::abs(slope + 0.5) <= 0.1);
}

TEST_CASE("report CSV layout") {
  VerificationReport r;
  r.suite = "x";
  r.tolerance = 0.1;
  r.rows.push_back(make_row("a", 1.05, 1.0, 0.01, 10, 0.1));
  r.baseline.push_back(make_row("a", 2.0, 1.0, 0.01, 10, 0.1));
  std::ostringstream out;
  write_report_csv(r, out);
  CHECK(out.str() == "target,empirical,theoretical,rel_dev,pass\na,1.05,1,0.050000000000000044,1\nbaseline:a,2,1,1,0\n");
  CHECK(r.all_pass());
  CHECK(make_row("z", 0.0, 0.0, 0.0, 1, 0.0).pass);
}
