#include "hdccf/verifier.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include <boost/rational.hpp>

#include "hdccf/error.h"
#include "hdccf/loss.h"
#include "hdccf/parallel.h"
#include "hdccf/random.h"
#include "hdccf/sampler.h"

namespace hdccf {

namespace {

// Trials are split into this many independently seeded blocks, so results do
// not depend on the thread count.
constexpr std::size_t kBlocks = 64;

std::size_t block_begin(std::size_t trials, std::size_t b) { return trials * b / kBlocks; }

struct Moments {
  double sum = 0.0;
  double sumsq = 0.0;
  std::size_t n = 0;

  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  }
  Moments& operator+=(const Moments& o) {
    sum += o.sum;
    sumsq += o.sumsq;
    n += o.n;
    return *this;
  }
  double mean() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
  double std_error() const {
    if (n < 2) return 0.0;
    const double nn = static_cast<double>(n);
    const double var = std::max(0.0, (sumsq - sum * sum / nn) / (nn - 1.0));
    return std::sqrt(var / nn);
  }
};

// --- frequency suite -------------------------------------------------------

enum FreqKind { ui_item = 0, ui_user = 1, ii_item = 2, uu_user = 3 };
constexpr const char* kFreqNames[] = {"ui_item", "ui_user", "ii_item", "uu_user"};

struct FreqAccum {
  std::vector<Moments> by_kind[4];

  FreqAccum(std::size_t n_users, std::size_t n_items) {
    by_kind[ui_item].resize(n_items);
    by_kind[ii_item].resize(n_items);
    by_kind[ui_user].resize(n_users);
    by_kind[uu_user].resize(n_users);
  }
  FreqAccum& operator+=(const FreqAccum& o) {
    for (int k = 0; k < 4; ++k) {
      for (std::size_t e = 0; e < by_kind[k].size(); ++e) by_kind[k][e] += o.by_kind[k][e];
    }
    return *this;
  }
};

// Per-target statistics of one anchor's contribution X ~ Binomial(P, p) where
// p = 1 / degree of the anchor's side when the entity is adjacent.
struct FreqPrediction {
  double mean = 0.0;
  double variance = 0.0;
  double measurable = 0.0;  // probability that a trial counts for this entity
};

FreqPrediction predict_item(const InteractionDataset& ds, std::size_t m, std::size_t p, Index item) {
  const double n = static_cast<double>(ds.size());
  const double pp = static_cast<double>(p);
  double ex2 = 0.0;
  double covered = 0.0;
  for (Index u : ds.users_of(item)) {
    const double deg = static_cast<double>(ds.items_of(u).size());
    const double q = 1.0 / deg;
    ex2 += deg * (pp * q * (1.0 - q) + pp * pp * q * q) / n;
    covered += deg / n;
  }
  const double ex = pp * static_cast<double>(ds.users_of(item).size()) / n;
  return {expected_item_appearances(ds, m, p, item), static_cast<double>(m - 1) * (ex2 - ex * ex), 1.0 - covered};
}

FreqPrediction predict_user(const InteractionDataset& ds, std::size_t m, std::size_t p, Index user) {
  const double n = static_cast<double>(ds.size());
  const double pp = static_cast<double>(p);
  double ex2 = 0.0;
  double covered = 0.0;
  for (Index i : ds.items_of(user)) {
    const double deg = static_cast<double>(ds.users_of(i).size());
    const double q = 1.0 / deg;
    ex2 += deg * (pp * q * (1.0 - q) + pp * pp * q * q) / n;
    covered += deg / n;
  }
  const double ex = pp * static_cast<double>(ds.items_of(user).size()) / n;
  return {expected_user_appearances(ds, m, p, user), static_cast<double>(m - 1) * (ex2 - ex * ex), 1.0 - covered};
}

double trials_for(const FreqPrediction& pred, double tolerance) {
  if (pred.mean <= 0.0 || pred.measurable <= 0.0) return 0.0;
  const double half_width = tolerance * pred.mean / 3.0;
  return pred.variance / (pred.measurable * half_width * half_width);
}

void check_frequency_inputs(const InteractionDataset& ds, std::size_t m, std::size_t p, double tolerance) {
  if (ds.size() < 2) throw ConfigError("frequency verification needs at least two interactions");
  if (m < 2 || m > ds.size()) throw ConfigError("batch size must lie in [2, |D|]");
  if (p == 0) throw ConfigError("pos_neighbors must be at least 1");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
}

// --- debias suite ----------------------------------------------------------

// One anchor of the debias suite: which entity is fixed and the pools the
// negatives and positives are drawn from.
struct DebiasTarget {
  std::string name;
  std::vector<double> pool_exp;    // e^{f/tau} over U'_i (or I'_u)
  std::vector<double> latent_exp;  // e^{f/tau} over the latent part
  std::vector<double> pool_scores;
  std::vector<double> latent_scores;
  double omega_plus = 0.0;
  double target = 0.0;
};

std::vector<DebiasTarget> debias_targets(const SyntheticWorld& w, const DebiasOptions& opts) {
  const double tau = opts.temperature;
  std::vector<DebiasTarget> out;
  auto build = [&](std::string name, const std::vector<Index>& pool, const std::vector<Index>& latent, auto score,
                   double target) {
    if (pool.empty()) return;
    DebiasTarget t;
    t.name = std::move(name);
    for (Index e : pool) {
      t.pool_scores.push_back(score(e));
      t.pool_exp.push_back(std::exp(score(e) / tau));
    }
    for (Index e : latent) {
      t.latent_scores.push_back(score(e));
      t.latent_exp.push_back(std::exp(score(e) / tau));
    }
    t.omega_plus = static_cast<double>(latent.size()) / static_cast<double>(pool.size());
    t.target = target;
    out.push_back(std::move(t));
  };
  for (Index i = 0; i < w.observed.n_items(); ++i) {
    build("user_side:item" + std::to_string(i), w.unobserved_users(i), w.latent_users(i),
          [&](Index u) { return w.scores(u, i); }, enumerated_user_side_target(w, i, opts.n_neg, tau));
  }
  for (Index u = 0; u < w.observed.n_users(); ++u) {
    build("item_side:user" + std::to_string(u), w.unobserved_items(u), w.latent_items(u),
          [&](Index i) { return w.scores(u, i); }, enumerated_item_side_target(w, u, opts.n_neg, tau));
  }
  return out;
}

// Exact per-trial variance of the debiased score.
double debiased_variance(const DebiasTarget& t, const DebiasOptions& opts) {
  auto var_of = [](const std::vector<double>& xs, double scale) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    double s2 = 0.0;
    for (double x : xs) {
      s += scale * x;
      s2 += scale * x * scale * x;
    }
    const double n = static_cast<double>(xs.size());
    return s2 / n - (s / n) * (s / n);
  };
  const double q = static_cast<double>(opts.n_neg);
  const double omega_minus = 1.0 - t.omega_plus;
  const double pi0 = 1.0 / omega_minus;
  const double pi1 = t.latent_exp.empty() ? 0.0 : q * t.omega_plus / (omega_minus * static_cast<double>(opts.n_pos));
  return q * var_of(t.pool_exp, pi0) + static_cast<double>(opts.n_pos) * var_of(t.latent_exp, pi1);
}

struct DebiasMoments {
  Moments debiased;
  Moments biased;
};

// Runs `trials` trials for every target, in kBlocks seeded blocks.
std::vector<DebiasMoments> run_debias(const std::vector<DebiasTarget>& targets, const DebiasOptions& opts,
                                      std::size_t trials, std::uint64_t seed) {
  const std::size_t units = targets.size() * kBlocks;
  std::vector<DebiasMoments> per_unit(units);
  parallel_chunks(units, opts.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> neg(opts.n_neg);
    std::vector<std::uint8_t> observed(opts.n_neg, 0);
    std::vector<double> pos;
    for (std::size_t unit = begin; unit < end; ++unit) {
      const auto& t = targets[unit / kBlocks];
      const std::size_t b = unit % kBlocks;
      std::mt19937_64 rng(derive_seed(seed, unit));
      std::uniform_int_distribution<std::size_t> pick_neg(0, t.pool_scores.size() - 1);
      const bool has_latent = !t.latent_scores.empty();
      std::uniform_int_distribution<std::size_t> pick_pos(0, has_latent ? t.latent_scores.size() - 1 : 0);
      pos.assign(has_latent ? opts.n_pos : 0, 0.0);
      auto& acc = per_unit[unit];
      for (std::size_t k = block_begin(trials, b); k < block_begin(trials, b + 1); ++k) {
        double biased = 0.0;
        for (auto& s : neg) {
          const std::size_t j = pick_neg(rng);
          s = t.pool_scores[j];
          biased += t.pool_exp[j];
        }
        for (auto& s : pos) s = t.latent_scores[pick_pos(rng)];
        auto r = debiased_negative_score(neg, observed, pos, t.omega_plus, opts.temperature, ClampMode::off);
        acc.debiased.add(r.value);
        acc.biased.add(biased);
      }
    }
  });
  std::vector<DebiasMoments> out(targets.size());
  for (std::size_t unit = 0; unit < units; ++unit) {
    out[unit / kBlocks].debiased += per_unit[unit].debiased;
    out[unit / kBlocks].biased += per_unit[unit].biased;
  }
  return out;
}

void check_debias_options(const DebiasOptions& opts) {
  if (opts.n_neg == 0) throw ConfigError("n_neg must be at least 1");
  if (opts.n_pos == 0) throw ConfigError("n_pos must be at least 1");
  if (!(opts.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(opts.tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (opts.trials < 2) throw ConfigError("at least two trials are needed");
}

double enumerated_target(const std::vector<Index>& pool, const std::vector<Index>& latent, auto score, std::size_t n_neg,
                         double temperature) {
  double sum = 0.0;
  std::size_t count = 0;
  for (Index e : pool) {
    if (std::binary_search(latent.begin(), latent.end(), e)) continue;
    sum += std::exp(score(e) / temperature);
    ++count;
  }
  if (count == 0) throw ConfigError("no true negatives to enumerate");
  return static_cast<double>(n_neg) * sum / static_cast<double>(count);
}

}  // namespace

bool VerificationReport::all_pass() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.pass; });
}

double VerificationReport::max_rel_dev() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.rel_dev);
  return m;
}

double VerificationReport::min_baseline_rel_dev() const {
  if (baseline.empty()) return 0.0;
  double m = baseline.front().rel_dev;
  for (const auto& r : baseline) m = std::min(m, r.rel_dev);
  return m;
}

VerificationRow make_row(std::string target, double empirical, double theoretical, double std_error,
                         std::size_t samples, double tolerance) {
  VerificationRow row;
  row.target = std::move(target);
  row.empirical = empirical;
  row.theoretical = theoretical;
  row.abs_dev = std::abs(empirical - theoretical);
  row.rel_dev = theoretical != 0.0 ? row.abs_dev / std::abs(theoretical) : row.abs_dev;
  row.std_error = std_error;
  row.samples = samples;
  row.pass = row.rel_dev <= tolerance;
  return row;
}

void print_report(const VerificationReport& report, std::ostream& out) {
  auto section = [&](const std::vector<VerificationRow>& rows) {
    out << std::left << std::setw(24) << "target" << std::right << std::setw(14) << "empirical" << std::setw(14)
        << "theoretical" << std::setw(11) << "rel_dev" << std::setw(11) << "std_err" << std::setw(10) << "samples"
        << "  pass\n";
    for (const auto& r : rows) {
      out << std::left << std::setw(24) << r.target << std::right << std::setprecision(6) << std::setw(14)
          << r.empirical << std::setw(14) << r.theoretical << std::setw(11) << r.rel_dev << std::setw(11)
          << r.std_error << std::setw(10) << r.samples << "  " << (r.pass ? "yes" : "NO") << "\n";
    }
  };
  out << "suite " << report.suite << " (tolerance " << report.tolerance << ")\n";
  section(report.rows);
  if (!report.baseline.empty()) {
    out << "baseline, not part of the verdict\n";
    section(report.baseline);
  }
  std::size_t passed = 0;
  for (const auto& r : report.rows) passed += r.pass ? 1 : 0;
  out << passed << "/" << report.rows.size() << " targets within tolerance, max rel_dev " << report.max_rel_dev()
      << "\n";
}

void write_report_csv(const VerificationReport& report, std::ostream& out) {
  out << "target,empirical,theoretical,rel_dev,pass\n";
  out << std::setprecision(17);
  for (const auto& r : report.rows) {
    out << r.target << "," << r.empirical << "," << r.theoretical << "," << r.rel_dev << "," << (r.pass ? 1 : 0)
        << "\n";
  }
  for (const auto& r : report.baseline) {
    out << "baseline:" << r.target << "," << r.empirical << "," << r.theoretical << "," << r.rel_dev << ","
        << (r.pass ? 1 : 0) << "\n";
  }
}

double expected_item_appearances(const InteractionDataset& ds, std::size_t m, std::size_t p, Index item) {
  return static_cast<double>(m - 1) / static_cast<double>(ds.size() - 1) * static_cast<double>(p) *
         static_cast<double>(ds.users_of(item).size());
}

double expected_user_appearances(const InteractionDataset& ds, std::size_t m, std::size_t p, Index user) {
  return static_cast<double>(m - 1) / static_cast<double>(ds.size() - 1) * static_cast<double>(p) *
         static_cast<double>(ds.items_of(user).size());
}

std::size_t frequency_trials_needed(const InteractionDataset& ds, std::size_t m, std::size_t p, double tolerance) {
  check_frequency_inputs(ds, m, p, tolerance);
  double need = 0.0;
  for (Index i = 0; i < ds.n_items(); ++i) need = std::max(need, trials_for(predict_item(ds, m, p, i), tolerance));
  for (Index u = 0; u < ds.n_users(); ++u) need = std::max(need, trials_for(predict_user(ds, m, p, u), tolerance));
  return static_cast<std::size_t>(std::ceil(need));
}

VerificationReport verify_frequency_expectations(const InteractionDataset& ds, const FrequencyOptions& opts) {
  const std::size_t m = opts.batch_size;
  const std::size_t p = opts.pos_neighbors;
  const std::size_t need = frequency_trials_needed(ds, m, p, opts.tolerance);
  if (opts.trials < need) {
    throw ConfigError("trials=" + std::to_string(opts.trials) + " too small for tolerance " +
                      std::to_string(opts.tolerance) + ": about " + std::to_string(need) + " trials are needed");
  }
  const std::uint64_t base = derive_seed(opts.seed, stream::verifier);
  std::vector<FreqAccum> per_block(kBlocks, FreqAccum(ds.n_users(), ds.n_items()));
  parallel_chunks(kBlocks, opts.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> item_count(ds.n_items());
    std::vector<double> user_count(ds.n_users());
    std::vector<double> ii_count(ds.n_items());
    std::vector<double> uu_count(ds.n_users());
    for (std::size_t b = begin; b < end; ++b) {
      SamplerConfig cfg;
      cfg.batch_size = m;
      cfg.pos_neighbors = p;
      cfg.mode = SamplerMode::in_batch;
      cfg.pair_draw = PairDraw::without_replacement;
      cfg.seed = derive_seed(base, b);
      BatchSampler sampler(ds, cfg);
      std::uniform_int_distribution<std::size_t> pick_target(0, m - 1);
      auto& acc = per_block[b];
      for (std::size_t k = block_begin(opts.trials, b); k < block_begin(opts.trials, b + 1); ++k) {
        Batch batch = sampler.next();
        const std::size_t target = pick_target(sampler.rng());
        const auto [u, i] = batch.pairs[target];
        auto counts = negative_appearance_counts(batch, target);
        std::fill(item_count.begin(), item_count.end(), 0.0);
        std::fill(user_count.begin(), user_count.end(), 0.0);
        std::fill(ii_count.begin(), ii_count.end(), 0.0);
        std::fill(uu_count.begin(), uu_count.end(), 0.0);
        for (const auto& c : counts.ui_items) item_count[c.entity] = c.count;
        for (const auto& c : counts.ui_users) user_count[c.entity] = c.count;
        for (const auto& c : counts.ii_items) ii_count[c.entity] = c.count;
        for (const auto& c : counts.uu_users) uu_count[c.entity] = c.count;
        for (Index e = 0; e < ds.n_items(); ++e) {
          if (ds.contains(u, e)) continue;
          acc.by_kind[ui_item][e].add(item_count[e]);
          acc.by_kind[ii_item][e].add(ii_count[e]);
        }
        for (Index e = 0; e < ds.n_users(); ++e) {
          if (ds.contains(e, i)) continue;
          acc.by_kind[ui_user][e].add(user_count[e]);
          acc.by_kind[uu_user][e].add(uu_count[e]);
        }
      }
    }
  });
  FreqAccum total(ds.n_users(), ds.n_items());
  for (const auto& b : per_block) total += b;

  VerificationReport report;
  report.suite = "frequency";
  report.tolerance = opts.tolerance;
  for (int kind : {ui_item, ui_user, ii_item, uu_user}) {
    const bool items = kind == ui_item || kind == ii_item;
    const auto& stats = total.by_kind[kind];
    for (Index e = 0; e < stats.size(); ++e) {
      // entities adjacent to every possible target are never measurable
      if (stats[e].n == 0) continue;
      const double theory = items ? expected_item_appearances(ds, m, p, e) : expected_user_appearances(ds, m, p, e);
      report.rows.push_back(make_row(std::string(kFreqNames[kind]) + ":" + std::to_string(e), stats[e].mean(), theory,
                                     stats[e].std_error(), stats[e].n, opts.tolerance));
    }
  }
  return report;
}

std::vector<Index> SyntheticWorld::unobserved_users(Index item) const {
  std::vector<Index> out;
  for (Index u = 0; u < observed.n_users(); ++u) {
    if (!observed.contains(u, item)) out.push_back(u);
  }
  return out;
}

std::vector<Index> SyntheticWorld::latent_users(Index item) const {
  std::vector<Index> out;
  for (Index u = 0; u < observed.n_users(); ++u) {
    if (is_latent(u, item)) out.push_back(u);
  }
  return out;
}

std::vector<Index> SyntheticWorld::unobserved_items(Index user) const {
  std::vector<Index> out;
  for (Index i = 0; i < observed.n_items(); ++i) {
    if (!observed.contains(user, i)) out.push_back(i);
  }
  return out;
}

std::vector<Index> SyntheticWorld::latent_items(Index user) const {
  std::vector<Index> out;
  for (Index i = 0; i < observed.n_items(); ++i) {
    if (is_latent(user, i)) out.push_back(i);
  }
  return out;
}

SyntheticWorld make_world(const WorldOptions& opts) {
  if (opts.n_users < 2 || opts.n_items < 2) throw ConfigError("a world needs at least two users and two items");
  if (!(opts.latent_fraction >= 0.0 && opts.latent_fraction < 1.0)) {
    throw ConfigError("latent_fraction must lie in [0, 1)");
  }
  std::mt19937_64 rng(opts.seed);
  std::bernoulli_distribution coin(opts.density);
  std::vector<Interaction> xs;
  for (Index u = 0; u < opts.n_users; ++u) {
    for (Index i = 0; i < opts.n_items; ++i) {
      if (coin(rng)) xs.push_back({u, i, static_cast<double>(xs.size())});
    }
  }
  SyntheticWorld w;
  w.observed = InteractionDataset(opts.n_users, opts.n_items, std::move(xs));
  w.latent.assign(opts.n_users * opts.n_items, 0);

  for (Index i = 0; i < opts.n_items; ++i) {
    auto pool = w.unobserved_users(i);
    if (pool.size() < 2 || opts.latent_fraction == 0.0) continue;
    auto n_latent = static_cast<std::size_t>(std::lround(opts.latent_fraction * static_cast<double>(pool.size())));
    n_latent = std::clamp<std::size_t>(n_latent, 1, pool.size() - 1);
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t k = 0; k < n_latent; ++k) w.latent[pool[k] * opts.n_items + i] = 1;
  }
  // every user keeps at least one true negative item as well
  for (Index u = 0; u < opts.n_users; ++u) {
    auto pool = w.unobserved_items(u);
    if (!pool.empty() && w.latent_items(u).size() == pool.size()) w.latent[u * opts.n_items + pool.front()] = 0;
  }

  std::uniform_real_distribution<double> spread(-opts.negative_score_spread, opts.negative_score_spread);
  w.scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(opts.n_users), static_cast<Eigen::Index>(opts.n_items));
  for (Index u = 0; u < opts.n_users; ++u) {
    for (Index i = 0; i < opts.n_items; ++i) {
      if (w.observed.contains(u, i)) continue;
      w.scores(u, i) = w.is_latent(u, i) ? opts.latent_score : spread(rng);
    }
  }
  return w;
}

double enumerated_user_side_target(const SyntheticWorld& world, Index item, std::size_t n_neg, double temperature) {
  return enumerated_target(world.unobserved_users(item), world.latent_users(item),
                           [&](Index u) { return world.scores(u, item); }, n_neg, temperature);
}

double enumerated_item_side_target(const SyntheticWorld& world, Index user, std::size_t n_neg, double temperature) {
  return enumerated_target(world.unobserved_items(user), world.latent_items(user),
                           [&](Index i) { return world.scores(user, i); }, n_neg, temperature);
}

VerificationReport verify_debias_unbiasedness(const SyntheticWorld& world, const DebiasOptions& opts) {
  check_debias_options(opts);
  auto targets = debias_targets(world, opts);
  if (targets.empty()) throw ConfigError("the world has no unobserved pairs to verify against");
  double need = 0.0;
  for (const auto& t : targets) {
    const double half_width = opts.tolerance * t.target / 3.0;
    need = std::max(need, debiased_variance(t, opts) / (half_width * half_width));
  }
  if (static_cast<double>(opts.trials) < need) {
    throw ConfigError("trials=" + std::to_string(opts.trials) + " too small for tolerance " +
                      std::to_string(opts.tolerance) + ": about " +
                      std::to_string(static_cast<std::size_t>(std::ceil(need))) + " trials are needed");
  }
  auto moments = run_debias(targets, opts, opts.trials, derive_seed(opts.seed, stream::verifier));
  VerificationReport report;
  report.suite = "debias";
  report.tolerance = opts.tolerance;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto& m = moments[k];
    report.rows.push_back(make_row(targets[k].name, m.debiased.mean(), targets[k].target, m.debiased.std_error(),
                                   m.debiased.n, opts.tolerance));
    report.baseline.push_back(make_row(targets[k].name, m.biased.mean(), targets[k].target, m.biased.std_error(),
                                       m.biased.n, opts.tolerance));
  }
  return report;
}

double convergence_slope(const SyntheticWorld& world, const DebiasOptions& opts, const std::vector<std::size_t>& sizes,
                         std::size_t replicates) {
  check_debias_options(opts);
  if (sizes.size() < 2) throw ConfigError("a slope needs at least two trial sizes");
  if (replicates == 0) throw ConfigError("replicates must be at least 1");
  auto targets = debias_targets(world, opts);
  const std::uint64_t base = derive_seed(opts.seed, stream::verifier);
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    if (sizes[s] < kBlocks) throw ConfigError("trial sizes must be at least " + std::to_string(kBlocks));
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < replicates; ++r) {
      auto moments = run_debias(targets, opts, sizes[s], derive_seed(base, s * replicates + r + 1));
      for (std::size_t k = 0; k < targets.size(); ++k) {
        const double rel = (moments[k].debiased.mean() - targets[k].target) / targets[k].target;
        sq += rel * rel;
        ++n;
      }
    }
    xs.push_back(std::log(static_cast<double>(sizes[s])));
    ys.push_back(0.5 * std::log(sq / static_cast<double>(n)));
  }
  // least-squares slope
  const double nx = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k] / nx;
    my += ys[k] / nx;
  }
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  return sxy / sxx;
}

std::size_t decomposition_mismatches(const SyntheticWorld& world) {
  using Q = boost::rational<long long>;
  std::size_t mismatches = 0;
  auto check = [&](const std::vector<Index>& pool, const std::vector<Index>& latent, std::size_t universe) {
    if (pool.empty()) return;
    const auto n_pool = static_cast<long long>(pool.size());
    const auto n_latent = static_cast<long long>(latent.size());
    const Q omega_plus(n_latent, n_pool);
    const Q omega_minus = Q(1) - omega_plus;
    for (Index e = 0; e < universe; ++e) {
      const bool in_pool = std::binary_search(pool.begin(), pool.end(), e);
      const bool in_latent = std::binary_search(latent.begin(), latent.end(), e);
      const Q p = in_pool ? Q(1, n_pool) : Q(0);
      const Q p_plus = in_latent ? Q(1, n_latent) : Q(0);
      const Q p_minus_built = in_pool && !in_latent ? Q(1, n_pool - n_latent) : Q(0);
      const Q p_minus = (p - omega_plus * p_plus) / omega_minus;
      if (p_minus != p_minus_built) ++mismatches;
      if (omega_plus * p_plus + omega_minus * p_minus_built != p) ++mismatches;
    }
  };
  for (Index i = 0; i < world.observed.n_items(); ++i) {
    check(world.unobserved_users(i), world.latent_users(i), world.observed.n_users());
  }
  for (Index u = 0; u < world.observed.n_users(); ++u) {
    check(world.unobserved_items(u), world.latent_items(u), world.observed.n_items());
  }
  return mismatches;
}

}  // namespace hdccf
