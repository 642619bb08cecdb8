#include "hdccf/synthetic.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "hdccf/error.h"

namespace hdccf {

namespace {

std::vector<Interaction> with_shuffled_times(std::vector<Interaction> xs, std::mt19937_64& rng) {
  std::vector<double> times(xs.size());
  std::iota(times.begin(), times.end(), 1.0);
  std::shuffle(times.begin(), times.end(), rng);
  for (std::size_t k = 0; k < xs.size(); ++k) xs[k].timestamp = times[k];
  return xs;
}

}  // namespace

InteractionDataset random_dataset(std::size_t n_users, std::size_t n_items, double density, std::size_t min_degree,
                                  std::uint64_t seed) {
  if (n_users == 0 || n_items == 0) throw ConfigError("synthetic dataset needs at least one user and one item");
  if (!(density >= 0.0 && density <= 1.0)) throw ConfigError("density must lie in [0, 1]");
  if (min_degree > n_users || min_degree > n_items) throw ConfigError("min_degree exceeds the grid size");

  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(density);
  std::vector<std::uint8_t> grid(n_users * n_items, 0);
  for (auto& cell : grid) cell = coin(rng) ? 1 : 0;

  std::vector<std::size_t> user_deg(n_users, 0);
  std::vector<std::size_t> item_deg(n_items, 0);
  for (std::size_t u = 0; u < n_users; ++u) {
    for (std::size_t i = 0; i < n_items; ++i) {
      user_deg[u] += grid[u * n_items + i];
      item_deg[i] += grid[u * n_items + i];
    }
  }
  std::uniform_int_distribution<std::size_t> pick_item(0, n_items - 1);
  std::uniform_int_distribution<std::size_t> pick_user(0, n_users - 1);
  for (std::size_t u = 0; u < n_users; ++u) {
    while (user_deg[u] < min_degree) {
      std::size_t i = pick_item(rng);
      if (grid[u * n_items + i]) continue;
      grid[u * n_items + i] = 1;
      ++user_deg[u];
      ++item_deg[i];
    }
  }
  for (std::size_t i = 0; i < n_items; ++i) {
    while (item_deg[i] < min_degree) {
      std::size_t u = pick_user(rng);
      if (grid[u * n_items + i]) continue;
      grid[u * n_items + i] = 1;
      ++user_deg[u];
      ++item_deg[i];
    }
  }

  std::vector<Interaction> xs;
  for (std::size_t u = 0; u < n_users; ++u) {
    for (std::size_t i = 0; i < n_items; ++i) {
      if (grid[u * n_items + i]) xs.push_back({static_cast<Index>(u), static_cast<Index>(i), 0.0});
    }
  }
  return InteractionDataset(n_users, n_items, with_shuffled_times(std::move(xs), rng));
}

InteractionDataset block_dataset(std::uint64_t seed) {
  constexpr Index kUsers = 20;
  constexpr Index kItems = 15;
  constexpr Index kSplitUser = 10;
  constexpr Index kSplitItem = 8;
  std::vector<Interaction> xs;
  for (Index u = 0; u < kUsers; ++u) {
    const Index lo = u < kSplitUser ? 0 : kSplitItem;
    const Index hi = u < kSplitUser ? kSplitItem : kItems;
    for (Index i = lo; i < hi; ++i) xs.push_back({u, i, 0.0});
  }
  std::mt19937_64 rng(seed);
  return InteractionDataset(kUsers, kItems, with_shuffled_times(std::move(xs), rng));
}

}  // namespace hdccf
