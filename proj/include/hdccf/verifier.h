#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hdccf/dataset.h"

namespace hdccf {

struct VerificationRow {
  std::string target;
  double empirical = 0.0;
  double theoretical = 0.0;
  double abs_dev = 0.0;
  double rel_dev = 0.0;    // abs_dev / theoretical, or abs_dev when theoretical is 0
  double std_error = 0.0;  // of the empirical mean
  std::size_t samples = 0;
  bool pass = false;       // rel_dev <= tolerance
};

struct VerificationReport {
  std::string suite;
  double tolerance = 0.0;
  std::vector<VerificationRow> rows;
  /// Reference estimator measured against the same targets (debias suite:
  /// the biased negative score). Not part of the pass decision.
  std::vector<VerificationRow> baseline;

  bool all_pass() const;
  double max_rel_dev() const;
  double min_baseline_rel_dev() const;
};

VerificationRow make_row(std::string target, double empirical, double theoretical, double std_error,
                         std::size_t samples, double tolerance);

/// Table for humans: one line per row plus a summary line.
void print_report(const VerificationReport& report, std::ostream& out);
/// target,empirical,theoretical,rel_dev,pass; baseline rows carry a
/// "baseline:" prefix.
void write_report_csv(const VerificationReport& report, std::ostream& out);

/// (M - 1) / (|D| - 1) * P * |U_item|.
double expected_item_appearances(const InteractionDataset& ds, std::size_t m, std::size_t p, Index item);
/// (M - 1) / (|D| - 1) * P * |I_user|.
double expected_user_appearances(const InteractionDataset& ds, std::size_t m, std::size_t p, Index user);

struct FrequencyOptions {
  std::size_t batch_size = 8;
  std::size_t pos_neighbors = 2;
  std::size_t trials = 200000;
  double tolerance = 0.02;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
};

/// Draws `trials` in-batch mini-batches (uniform M-subsets of D), picks a
/// uniform target pair (u, i) in each and counts how often every item i'
/// appears among the negatives of u (u-i and i-i losses) and every user u'
/// among the negatives of i (u-i and u-u losses). An item is only counted on
/// trials where (u, i') is unobserved, a user only where (u', i) is. The mean
/// counts are compared to the expectations above.
///
/// Throws ConfigError when the predicted standard error of some target
/// exceeds tolerance / 3, quoting the number of trials that would suffice.
VerificationReport verify_frequency_expectations(const InteractionDataset& ds, const FrequencyOptions& opts);

/// Trials needed so that 3 standard errors fit in the tolerance for every
/// target of the frequency suite.
std::size_t frequency_trials_needed(const InteractionDataset& ds, std::size_t m, std::size_t p, double tolerance);

/// Observed data plus a set of unobserved pairs that are secretly positive,
/// and a fixed score for every (user, item).
struct SyntheticWorld {
  InteractionDataset observed;
  std::vector<std::uint8_t> latent;  // n_users x n_items, row-major
  Eigen::MatrixXd scores;            // f(u, i)

  bool is_latent(Index user, Index item) const { return latent[user * observed.n_items() + item] != 0; }
  /// U'_i: users with (u, i) unobserved.
  std::vector<Index> unobserved_users(Index item) const;
  std::vector<Index> latent_users(Index item) const;
  /// I'_u and its latent part.
  std::vector<Index> unobserved_items(Index user) const;
  std::vector<Index> latent_items(Index user) const;
};

struct WorldOptions {
  std::size_t n_users = 10;
  std::size_t n_items = 10;
  double density = 0.3;
  double latent_fraction = 0.3;  // of each item's unobserved users
  double latent_score = 1.5;
  double negative_score_spread = 1.0;  // true negatives get f ~ U(-spread, spread)
  std::uint64_t seed = 42;
};

/// Random observed grid; for every item, round(latent_fraction * |U'_i|)
/// unobserved users (at least one, leaving at least one true negative) become
/// latent positives. Latent positives score `latent_score`, observed pairs 0.
SyntheticWorld make_world(const WorldOptions& opts);

struct DebiasOptions {
  std::size_t n_neg = 64;
  std::size_t n_pos = 4;
  std::size_t trials = 100000;
  double temperature = 1.0;
  double tolerance = 0.01;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
};

/// Exact Q * E_{p_i^-}[e^{f / tau}] for the item-anchored negative score.
double enumerated_user_side_target(const SyntheticWorld& world, Index item, std::size_t n_neg, double temperature);
double enumerated_item_side_target(const SyntheticWorld& world, Index user, std::size_t n_neg, double temperature);

/// For every item i: negatives drawn i.i.d. from p_i (uniform over U'_i),
/// positives from p_i^+ (uniform over its latent users), the debiased
/// negative score (clamp off, true omega^+) averaged over trials and
/// compared to the enumerated target; mirrored for every user. The biased
/// score is reported against the same targets as the baseline.
VerificationReport verify_debias_unbiasedness(const SyntheticWorld& world, const DebiasOptions& opts);

/// Log-log slope of RMS relative error of the debiased mean against the
/// number of trials, over `replicates` independent runs per size.
double convergence_slope(const SyntheticWorld& world, const DebiasOptions& opts, const std::vector<std::size_t>& sizes,
                         std::size_t replicates);

/// Checks p_i = omega^+ p_i^+ + omega^- p_i^- pointwise in exact rational
/// arithmetic, with p_i^- recovered from the other three terms, for every
/// item and (mirrored) every user. Returns the number of mismatching points.
std::size_t decomposition_mismatches(const SyntheticWorld& world);

}  // namespace hdccf
