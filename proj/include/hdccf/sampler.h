#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hdccf/dataset.h"

namespace hdccf {

enum class SamplerMode { in_batch, explicit_uniform };

/// How the M observed pairs of a batch are drawn from D.
enum class PairDraw {
  with_replacement,     // i.i.d. uniform
  without_replacement,  // uniform M-subset per batch
  epoch_shuffle,        // walk a fresh permutation each epoch
};

struct SamplerConfig {
  std::size_t batch_size = 256;
  std::size_t pos_neighbors = 2;
  SamplerMode mode = SamplerMode::in_batch;
  std::size_t neg_count = 0;  // explicit_uniform only
  PairDraw pair_draw = PairDraw::with_replacement;
  std::uint64_t seed = 42;

  void validate() const;
};

struct UserItem {
  Index user = 0;
  Index item = 0;
  friend bool operator==(const UserItem&, const UserItem&) = default;
};

/// One mini-batch.
///
/// Entities live in two pools (items and users). Every anchor pair k owns a
/// column of slot indices into each pool: rows [0, n_pos) are its positive
/// neighbours N+ and rows [n_pos, n_pos + n_neg) its negatives N-. In in_batch
/// mode the pools are the concatenated positive neighbours and the negative
/// rows of anchor k enumerate every slot owned by the other anchors, which is
/// the multiset union of their N+.
struct Batch {
  std::vector<UserItem> pairs;
  std::vector<Index> pool_items;
  std::vector<Index> pool_users;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::vector<std::uint32_t> item_slots;  // (n_pos + n_neg) x M, column-major
  std::vector<std::uint32_t> user_slots;

  std::size_t size() const { return pairs.size(); }
  std::size_t rows() const { return n_pos + n_neg; }
  std::uint32_t item_slot(std::size_t row, std::size_t k) const { return item_slots[k * rows() + row]; }
  std::uint32_t user_slot(std::size_t row, std::size_t k) const { return user_slots[k * rows() + row]; }
  Index item_at(std::size_t row, std::size_t k) const { return pool_items[item_slot(row, k)]; }
  Index user_at(std::size_t row, std::size_t k) const { return pool_users[user_slot(row, k)]; }

  std::vector<Index> pos_items(std::size_t k) const;  // N_u+
  std::vector<Index> pos_users(std::size_t k) const;  // N_i+
  std::vector<Index> neg_items(std::size_t k) const;  // N_u-
  std::vector<Index> neg_users(std::size_t k) const;  // N_i-
};

/// Builds an in-batch batch from given pairs and positive neighbour lists
/// (each list of the same length P).
Batch assemble_in_batch(std::vector<UserItem> pairs, const std::vector<std::vector<Index>>& pos_items,
                        const std::vector<std::vector<Index>>& pos_users);

/// Stateful batch source over a training set. Owns its random stream.
class BatchSampler {
 public:
  BatchSampler(const InteractionDataset& train, SamplerConfig cfg);

  Batch next();
  const SamplerConfig& config() const { return cfg_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::vector<UserItem> draw_pairs();
  Index draw_negative_item(Index user);
  Index draw_negative_user(Index item);

  const InteractionDataset* train_;
  SamplerConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// One-shot batch using an external generator. epoch_shuffle is treated as
/// with_replacement since there is no epoch state to keep.
Batch sample_batch(const InteractionDataset& train, const SamplerConfig& cfg, std::mt19937_64& rng);

struct EntityCount {
  Index entity = 0;
  std::uint32_t count = 0;
  friend bool operator==(const EntityCount&, const EntityCount&) = default;
};

/// Appearance counts of negatives for the anchor at `target`: in the
/// user-item loss (n^{u-i}) and in the auxiliary losses (n^{i-i}, n^{u-u}).
/// Each list is sorted by entity.
struct AppearanceCounts {
  std::vector<EntityCount> ui_items;
  std::vector<EntityCount> ui_users;
  std::vector<EntityCount> ii_items;
  std::vector<EntityCount> uu_users;
};

AppearanceCounts negative_appearance_counts(const Batch& batch, std::size_t target);

}  // namespace hdccf
