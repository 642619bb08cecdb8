#include "hdccf/evaluator.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>

#include "hdccf/error.h"
#include "hdccf/parallel.h"
#include "hdccf/random.h"
#include "hdccf/scoring.h"

namespace hdccf {

namespace {

void check_dims(const ModelParams& params, const InteractionDataset& train) {
  if (params.n_users() != train.n_users() || params.n_items() != train.n_items()) {
    throw ConfigError("model dimensions (" + std::to_string(params.n_users()) + " users, " +
                      std::to_string(params.n_items()) + " items) do not match the dataset (" +
                      std::to_string(train.n_users()) + ", " + std::to_string(train.n_items()) + ")");
  }
}

std::vector<Index> candidates_for(const SplitDataset& split, Index user, Index held_out, const EvalOptions& opts) {
  const auto& train = split.train;
  std::vector<Index> out;
  if (opts.mode == CandidateMode::full) {
    auto seen = train.items_of(user);
    out.reserve(train.n_items() - seen.size());
    std::size_t s = 0;
    for (Index i = 0; i < train.n_items(); ++i) {
      while (s < seen.size() && seen[s] < i) ++s;
      if (s < seen.size() && seen[s] == i) continue;
      out.push_back(i);
    }
    return out;
  }
  out.push_back(held_out);
  // per-user stream so results do not depend on the worker split
  std::mt19937_64 rng(derive_seed(derive_seed(opts.seed, stream::evaluation), user));
  std::size_t available = 0;
  for (Index i = 0; i < train.n_items(); ++i) available += split.interacted(user, i) ? 0 : 1;
  const std::size_t want = std::min(opts.sampled_count, available);
  std::vector<char> taken(train.n_items(), 0);
  std::uniform_int_distribution<Index> pick(0, static_cast<Index>(train.n_items() - 1));
  while (out.size() < want + 1) {
    Index i = pick(rng);
    if (taken[i] || split.interacted(user, i)) continue;
    taken[i] = 1;
    out.push_back(i);
  }
  return out;
}

}  // namespace

std::string to_string(CandidateMode mode) { return mode == CandidateMode::full ? "full" : "sampled"; }

double EvalReport::hr_at(std::size_t k) const {
  auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw ConfigError("HR@" + std::to_string(k) + " was not computed");
  return hr[static_cast<std::size_t>(it - ks.begin())];
}

double EvalReport::ndcg_at(std::size_t k) const {
  auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw ConfigError("NDCG@" + std::to_string(k) + " was not computed");
  return ndcg[static_cast<std::size_t>(it - ks.begin())];
}

std::size_t rank_of(const Eigen::VectorXd& scores, Index target, std::span<const Index> candidates) {
  const double st = scores(target);
  std::size_t ahead = 0;
  bool found = false;
  for (Index c : candidates) {
    if (c == target) {
      found = true;
      continue;
    }
    ahead += ranks_before(scores(c), c, st, target) ? 1 : 0;
  }
  if (!found) throw ConfigError("held-out item is not among the candidates");
  return ahead + 1;
}

EvalReport report_from_ranks(const std::vector<std::size_t>& ranks, const std::vector<std::size_t>& ks,
                             CandidateMode mode) {
  EvalReport r;
  r.ks = ks;
  r.mode = mode;
  r.n_users = ranks.size();
  r.hr.assign(ks.size(), 0.0);
  r.ndcg.assign(ks.size(), 0.0);
  for (std::size_t k = 0; k < ks.size(); ++k) {
    double hits = 0.0;
    double gain = 0.0;
    for (auto rank : ranks) {
      if (rank <= ks[k]) {
        hits += 1.0;
        gain += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
      }
    }
    if (!ranks.empty()) {
      r.hr[k] = hits / static_cast<double>(ranks.size());
      r.ndcg[k] = gain / static_cast<double>(ranks.size());
    }
  }
  return r;
}

EvalReport evaluate(const ModelParams& params, bool modulated, const SplitDataset& split, const EvalOptions& opts) {
  check_dims(params, split.train);
  if (opts.ks.empty()) throw ConfigError("at least one cutoff K is required");
  for (auto k : opts.ks) {
    if (k == 0) throw ConfigError("cutoffs must be positive");
  }
  const auto& held = opts.target == EvalTarget::validation ? split.validation : split.test;
  const std::size_t n = held.size();
  std::vector<std::size_t> ranks(n, 0);
  ItemScorer scorer(params, modulated);
  parallel_chunks(n, opts.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u) {
      const auto user = static_cast<Index>(u);
      const Index item = held[u].item;
      auto scores = scorer.scores(user);
      auto candidates = candidates_for(split, user, item, opts);
      ranks[u] = rank_of(scores, item, candidates);
    }
  });
  auto report = report_from_ranks(ranks, opts.ks, opts.mode);
  if (opts.keep_ranks) report.ranks = std::move(ranks);
  return report;
}

std::vector<Index> recommend(const ModelParams& params, bool modulated, const InteractionDataset& train, Index user,
                             std::size_t k) {
  check_dims(params, train);
  if (user >= train.n_users()) throw ConfigError("user index out of range");
  auto scores = ItemScorer(params, modulated).scores(user);
  std::vector<Index> candidates;
  for (Index i = 0; i < train.n_items(); ++i) {
    if (!train.contains(user, i)) candidates.push_back(i);
  }
  const std::size_t take = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                    [&](Index a, Index b) { return ranks_before(scores(a), a, scores(b), b); });
  candidates.resize(take);
  return candidates;
}

std::size_t ScoreHistogram::positive_total() const { return std::accumulate(positive.begin(), positive.end(), std::size_t{0}); }
std::size_t ScoreHistogram::negative_total() const { return std::accumulate(negative.begin(), negative.end(), std::size_t{0}); }

namespace {

double histogram_mean(const std::vector<double>& edges, const std::vector<std::size_t>& counts) {
  double total = 0.0;
  double weighted = 0.0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    total += static_cast<double>(counts[b]);
    weighted += static_cast<double>(counts[b]) * 0.5 * (edges[b] + edges[b + 1]);
  }
  return total > 0.0 ? weighted / total : 0.0;
}

}  // namespace

double ScoreHistogram::positive_mean() const { return histogram_mean(edges, positive); }
double ScoreHistogram::negative_mean() const { return histogram_mean(edges, negative); }

ScoreHistogram score_distribution(const ModelParams& params, bool modulated, const SplitDataset& split,
                                  std::size_t bins, std::size_t samples, std::uint64_t seed) {
  const auto& train = split.train;
  check_dims(params, train);
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (train.empty()) throw DataError("no training pairs to score");
  std::mt19937_64 rng(derive_seed(seed, stream::score_dump));

  std::vector<std::pair<Index, Index>> pos;
  const auto& xs = train.interactions();
  if (samples == 0 || samples >= xs.size()) {
    for (const auto& x : xs) pos.emplace_back(x.user, x.item);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
    for (std::size_t s = 0; s < samples; ++s) {
      const auto& x = xs[pick(rng)];
      pos.emplace_back(x.user, x.item);
    }
  }
  std::vector<std::pair<Index, Index>> neg;
  std::uniform_int_distribution<Index> pick_user(0, static_cast<Index>(train.n_users() - 1));
  std::uniform_int_distribution<Index> pick_item(0, static_cast<Index>(train.n_items() - 1));
  std::size_t attempts = 0;
  while (neg.size() < pos.size()) {
    if (++attempts > 1000 * (pos.size() + 10)) throw DataError("too few unobserved pairs to sample negatives");
    Index u = pick_user(rng);
    Index i = pick_item(rng);
    if (!split.interacted(u, i)) neg.emplace_back(u, i);
  }

  auto score = [&](const std::vector<std::pair<Index, Index>>& pairs) {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (auto [u, i] : pairs) out.push_back(similarity(u, i, params, modulated));
    return out;
  };
  auto ps = score(pos);
  auto ns = score(neg);

  ScoreHistogram h;
  h.raw_min = std::min(*std::min_element(ps.begin(), ps.end()), *std::min_element(ns.begin(), ns.end()));
  h.raw_max = std::max(*std::max_element(ps.begin(), ps.end()), *std::max_element(ns.begin(), ns.end()));
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = 100.0 * static_cast<double>(b) / static_cast<double>(bins);
  h.positive.assign(bins, 0);
  h.negative.assign(bins, 0);
  const double span = h.raw_max - h.raw_min;
  auto bin_of = [&](double s) {
    double x = span > 0.0 ? 100.0 * (s - h.raw_min) / span : 0.0;
    auto b = static_cast<std::size_t>(x / 100.0 * static_cast<double>(bins));
    return std::min(b, bins - 1);
  };
  for (double s : ps) ++h.positive[bin_of(s)];
  for (double s : ns) ++h.negative[bin_of(s)];
  return h;
}

double overlap_mass(const ScoreHistogram& h) {
  const double np = static_cast<double>(h.positive_total());
  const double nn = static_cast<double>(h.negative_total());
  if (np == 0.0 || nn == 0.0) return 0.0;
  double shared = 0.0;
  for (std::size_t b = 0; b < h.positive.size(); ++b) {
    shared += std::min(static_cast<double>(h.positive[b]) / np, static_cast<double>(h.negative[b]) / nn);
  }
  return shared;
}

void write_eval_csv(const EvalReport& report, std::ostream& out) {
  out << "metric,k,value,candidate_mode\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < report.ks.size(); ++k) {
    out << "hr," << report.ks[k] << ',' << report.hr[k] << ',' << to_string(report.mode) << '\n';
    out << "ndcg," << report.ks[k] << ',' << report.ndcg[k] << ',' << to_string(report.mode) << '\n';
  }
}

void write_histogram_csv(const ScoreHistogram& h, std::ostream& out) {
  out << "bin_lo,bin_hi,positive,negative\n";
  out << std::setprecision(17);
  for (std::size_t b = 0; b < h.positive.size(); ++b) {
    out << h.edges[b] << ',' << h.edges[b + 1] << ',' << h.positive[b] << ',' << h.negative[b] << '\n';
  }
}

}  // namespace hdccf
