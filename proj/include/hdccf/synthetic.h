#pragma once

#include <cstdint>

#include "hdccf/dataset.h"

namespace hdccf {

/// Bernoulli(density) interactions over an n_users x n_items grid, topped up
/// with random pairs until every user and item has at least `min_degree`
/// interactions. Timestamps are a random permutation, so the leave-one-out
/// held-out items are random too.
InteractionDataset random_dataset(std::size_t n_users, std::size_t n_items, double density, std::size_t min_degree,
                                  std::uint64_t seed);

/// Two disjoint communities: users [0, 10) interact with every item in
/// [0, 8), users [10, 20) with every item in [8, 15). Timestamps are shuffled
/// per user with `seed`.
InteractionDataset block_dataset(std::uint64_t seed);

}  // namespace hdccf
