#include "hdccf/sampler.h"

#include <algorithm>
#include <map>
#include <numeric>

#include "hdccf/error.h"

namespace hdccf {

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::vector<EntityCount> count_entities(std::vector<Index> entities) {
  std::sort(entities.begin(), entities.end());
  std::vector<EntityCount> counts;
  for (auto e : entities) {
    if (counts.empty() || counts.back().entity != e) {
      counts.push_back({e, 1});
    } else {
      ++counts.back().count;
    }
  }
  return counts;
}

}  // namespace

void SamplerConfig::validate() const {
  if (pos_neighbors == 0) throw ConfigError("pos_neighbors must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (mode == SamplerMode::in_batch && batch_size < 2) {
    throw ConfigError("in_batch sampling needs batch_size >= 2, otherwise the negative sets are empty");
  }
  if (mode == SamplerMode::explicit_uniform && neg_count == 0) {
    throw ConfigError("explicit_uniform sampling needs neg_count >= 1");
  }
}

std::vector<Index> Batch::pos_items(std::size_t k) const {
  std::vector<Index> out;
  for (std::size_t r = 0; r < n_pos; ++r) out.push_back(item_at(r, k));
  return out;
}

std::vector<Index> Batch::pos_users(std::size_t k) const {
  std::vector<Index> out;
  for (std::size_t r = 0; r < n_pos; ++r) out.push_back(user_at(r, k));
  return out;
}

std::vector<Index> Batch::neg_items(std::size_t k) const {
  std::vector<Index> out;
  for (std::size_t r = n_pos; r < rows(); ++r) out.push_back(item_at(r, k));
  return out;
}

std::vector<Index> Batch::neg_users(std::size_t k) const {
  std::vector<Index> out;
  for (std::size_t r = n_pos; r < rows(); ++r) out.push_back(user_at(r, k));
  return out;
}

Batch assemble_in_batch(std::vector<UserItem> pairs, const std::vector<std::vector<Index>>& pos_items,
                        const std::vector<std::vector<Index>>& pos_users) {
  const std::size_t m = pairs.size();
  if (m < 2) throw ConfigError("in_batch assembly needs at least two pairs");
  if (pos_items.size() != m || pos_users.size() != m) {
    throw ConfigError("positive neighbour lists must match the number of pairs");
  }
  const std::size_t p = pos_items.front().size();
  Batch batch;
  batch.pairs = std::move(pairs);
  batch.n_pos = p;
  batch.n_neg = p * (m - 1);
  for (std::size_t k = 0; k < m; ++k) {
    if (pos_items[k].size() != p || pos_users[k].size() != p) {
      throw ConfigError("every pair needs the same number of positive neighbours");
    }
    batch.pool_items.insert(batch.pool_items.end(), pos_items[k].begin(), pos_items[k].end());
    batch.pool_users.insert(batch.pool_users.end(), pos_users[k].begin(), pos_users[k].end());
  }
  batch.item_slots.reserve(m * batch.rows());
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t r = 0; r < p; ++r) batch.item_slots.push_back(static_cast<std::uint32_t>(k * p + r));
    for (std::size_t other = 0; other < m; ++other) {
      if (other == k) continue;
      for (std::size_t r = 0; r < p; ++r) batch.item_slots.push_back(static_cast<std::uint32_t>(other * p + r));
    }
  }
  // both pools have the same layout
  batch.user_slots = batch.item_slots;
  return batch;
}

BatchSampler::BatchSampler(const InteractionDataset& train, SamplerConfig cfg)
    : train_(&train), cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  if (train.empty()) throw DataError("cannot sample from an empty training set");
  if (cfg_.pair_draw == PairDraw::without_replacement && cfg_.batch_size > train.size()) {
    throw ConfigError("batch_size exceeds the number of training pairs for without-replacement draws");
  }
  order_.resize(train.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  cursor_ = order_.size();
}

std::vector<UserItem> BatchSampler::draw_pairs() {
  const auto& xs = train_->interactions();
  std::vector<UserItem> pairs;
  pairs.reserve(cfg_.batch_size);
  switch (cfg_.pair_draw) {
    case PairDraw::with_replacement:
      for (std::size_t k = 0; k < cfg_.batch_size; ++k) {
        const auto& x = xs[uniform_index(rng_, xs.size())];
        pairs.push_back({x.user, x.item});
      }
      break;
    case PairDraw::without_replacement:
      // partial Fisher-Yates; any permutation left behind is a valid start
      for (std::size_t k = 0; k < cfg_.batch_size; ++k) {
        std::size_t j = k + uniform_index(rng_, order_.size() - k);
        std::swap(order_[k], order_[j]);
        const auto& x = xs[order_[k]];
        pairs.push_back({x.user, x.item});
      }
      break;
    case PairDraw::epoch_shuffle:
      for (std::size_t k = 0; k < cfg_.batch_size; ++k) {
        if (cursor_ == order_.size()) {
          std::shuffle(order_.begin(), order_.end(), rng_);
          cursor_ = 0;
        }
        const auto& x = xs[order_[cursor_++]];
        pairs.push_back({x.user, x.item});
      }
      break;
  }
  return pairs;
}

Index BatchSampler::draw_negative_item(Index user) {
  if (train_->items_of(user).size() >= train_->n_items()) {
    throw SamplingError("user index " + std::to_string(user) + " has no unobserved items to sample");
  }
  while (true) {
    auto item = static_cast<Index>(uniform_index(rng_, train_->n_items()));
    if (!train_->contains(user, item)) return item;
  }
}

Index BatchSampler::draw_negative_user(Index item) {
  if (train_->users_of(item).size() >= train_->n_users()) {
    throw SamplingError("item index " + std::to_string(item) + " has no unobserved users to sample");
  }
  while (true) {
    auto user = static_cast<Index>(uniform_index(rng_, train_->n_users()));
    if (!train_->contains(user, item)) return user;
  }
}

Batch BatchSampler::next() {
  auto pairs = draw_pairs();
  const std::size_t m = pairs.size();
  const std::size_t p = cfg_.pos_neighbors;
  std::vector<std::vector<Index>> pos_items(m, std::vector<Index>(p));
  std::vector<std::vector<Index>> pos_users(m, std::vector<Index>(p));
  for (std::size_t k = 0; k < m; ++k) {
    auto items = train_->items_of(pairs[k].user);
    auto users = train_->users_of(pairs[k].item);
    for (std::size_t r = 0; r < p; ++r) pos_items[k][r] = items[uniform_index(rng_, items.size())];
    for (std::size_t r = 0; r < p; ++r) pos_users[k][r] = users[uniform_index(rng_, users.size())];
  }
  if (cfg_.mode == SamplerMode::in_batch) return assemble_in_batch(std::move(pairs), pos_items, pos_users);

  const std::size_t s = cfg_.neg_count;
  Batch batch;
  batch.n_pos = p;
  batch.n_neg = s;
  for (std::size_t k = 0; k < m; ++k) {
    batch.pool_items.insert(batch.pool_items.end(), pos_items[k].begin(), pos_items[k].end());
    batch.pool_users.insert(batch.pool_users.end(), pos_users[k].begin(), pos_users[k].end());
  }
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t r = 0; r < s; ++r) batch.pool_items.push_back(draw_negative_item(pairs[k].user));
    for (std::size_t r = 0; r < s; ++r) batch.pool_users.push_back(draw_negative_user(pairs[k].item));
  }
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t r = 0; r < p; ++r) batch.item_slots.push_back(static_cast<std::uint32_t>(k * p + r));
    for (std::size_t r = 0; r < s; ++r) batch.item_slots.push_back(static_cast<std::uint32_t>(m * p + k * s + r));
  }
  batch.user_slots = batch.item_slots;
  batch.pairs = std::move(pairs);
  return batch;
}

Batch sample_batch(const InteractionDataset& train, const SamplerConfig& cfg, std::mt19937_64& rng) {
  SamplerConfig local = cfg;
  if (local.pair_draw == PairDraw::epoch_shuffle) local.pair_draw = PairDraw::with_replacement;
  BatchSampler sampler(train, local);
  std::swap(sampler.rng(), rng);
  Batch batch = sampler.next();
  std::swap(sampler.rng(), rng);
  return batch;
}

AppearanceCounts negative_appearance_counts(const Batch& batch, std::size_t target) {
  if (target >= batch.size()) throw ConfigError("target pair index out of range");
  AppearanceCounts counts;
  counts.ui_items = count_entities(batch.neg_items(target));
  counts.ui_users = count_entities(batch.neg_users(target));
  // The auxiliary losses reuse N_u- / N_i- of the user-item loss as their
  // negative slots; count them through the slot tables directly.
  std::vector<Index> ii;
  std::vector<Index> uu;
  for (std::size_t r = batch.n_pos; r < batch.rows(); ++r) {
    ii.push_back(batch.pool_items[batch.item_slot(r, target)]);
    uu.push_back(batch.pool_users[batch.user_slot(r, target)]);
  }
  counts.ii_items = count_entities(std::move(ii));
  counts.uu_users = count_entities(std::move(uu));
  return counts;
}

}  // namespace hdccf
