#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hdccf/dataset.h"
#include "hdccf/model.h"

namespace hdccf {

enum class CandidateMode { full, sampled };
enum class EvalTarget { validation, test };

std::string to_string(CandidateMode mode);

struct EvalOptions {
  std::vector<std::size_t> ks = {10, 50};
  CandidateMode mode = CandidateMode::full;
  std::size_t sampled_count = 100;
  std::uint64_t seed = 42;
  EvalTarget target = EvalTarget::validation;
  std::size_t threads = 1;
  bool keep_ranks = false;
};

struct EvalReport {
  std::vector<std::size_t> ks;
  std::vector<double> hr;
  std::vector<double> ndcg;
  std::size_t n_users = 0;
  CandidateMode mode = CandidateMode::full;
  std::vector<std::size_t> ranks;  // per user, when requested

  double hr_at(std::size_t k) const;
  double ndcg_at(std::size_t k) const;
};

/// Candidate a is ranked ahead of b: higher score first, then lower index.
inline bool ranks_before(double score_a, Index a, double score_b, Index b) {
  return score_a > score_b || (score_a == score_b && a < b);
}

/// 1-based rank of `target` among `candidates` (which must contain it) under
/// ranks_before. `scores` is indexed by item.
std::size_t rank_of(const Eigen::VectorXd& scores, Index target, std::span<const Index> candidates);

/// Aggregates per-user 1-based ranks into HR@K and NDCG@K.
EvalReport report_from_ranks(const std::vector<std::size_t>& ranks, const std::vector<std::size_t>& ks,
                             CandidateMode mode);

EvalReport evaluate(const ModelParams& params, bool modulated, const SplitDataset& split, const EvalOptions& opts);

/// Top-k items for `user` excluding its train items, best first. Uses the
/// same ordering as evaluate.
std::vector<Index> recommend(const ModelParams& params, bool modulated, const InteractionDataset& train, Index user,
                             std::size_t k);

struct ScoreHistogram {
  std::vector<double> edges;  // bins + 1, spanning [0, 100]
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
  double raw_min = 0.0;
  double raw_max = 0.0;

  std::size_t positive_total() const;
  std::size_t negative_total() const;
  double positive_mean() const;  // from bin centres
  double negative_mean() const;
};

/// Histograms of positive (train) and sampled unobserved pair scores after
/// min-max normalization of their union to [0, 100]. `samples` = 0 uses every
/// train pair.
ScoreHistogram score_distribution(const ModelParams& params, bool modulated, const SplitDataset& split,
                                  std::size_t bins, std::size_t samples, std::uint64_t seed);

/// Shared mass of the two normalized histograms, sum_b min(pos_b, neg_b).
double overlap_mass(const ScoreHistogram& h);

void write_eval_csv(const EvalReport& report, std::ostream& out);
void write_histogram_csv(const ScoreHistogram& h, std::ostream& out);

}  // namespace hdccf
