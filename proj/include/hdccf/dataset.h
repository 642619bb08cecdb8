#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace hdccf {

using Index = std::uint32_t;

struct Interaction {
  Index user = 0;
  Index item = 0;
  double timestamp = 0.0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Bidirectional raw-ID <-> dense-index map.
class IdMap {
 public:
  IdMap() = default;
  explicit IdMap(std::vector<std::string> raw_ids);

  std::size_t size() const noexcept { return raw_.size(); }
  const std::string& raw(Index index) const { return raw_.at(index); }
  std::optional<Index> find(const std::string& raw) const;
  const std::vector<std::string>& raw_ids() const noexcept { return raw_; }

 private:
  std::vector<std::string> raw_;
  std::unordered_map<std::string, Index> index_;
};

/// Immutable implicit-feedback dataset: the observed pair set D together with
/// both adjacency views (items of a user, users of an item).
///
/// Adjacency lists are sorted ascending, which makes membership a binary
/// search and neighbourhood tests a merge-style intersection.
class InteractionDataset {
 public:
  InteractionDataset() = default;

  /// Builds adjacency from `interactions`. Duplicate (user, item) pairs are
  /// collapsed keeping the earliest timestamp. Indices must be dense.
  InteractionDataset(std::size_t n_users, std::size_t n_items, std::vector<Interaction> interactions,
                     IdMap user_ids = {}, IdMap item_ids = {});

  std::size_t n_users() const noexcept { return n_users_; }
  std::size_t n_items() const noexcept { return n_items_; }
  std::size_t size() const noexcept { return interactions_.size(); }
  bool empty() const noexcept { return interactions_.empty(); }

  const std::vector<Interaction>& interactions() const noexcept { return interactions_; }
  std::span<const Index> items_of(Index user) const;
  std::span<const Index> users_of(Index item) const;

  /// Membership in the observed set D.
  bool contains(Index user, Index item) const;

  /// Two distinct users are neighboured when they share at least one item.
  bool users_neighboured(Index a, Index b) const;
  /// Two distinct items are neighboured when they share at least one user.
  bool items_neighboured(Index a, Index b) const;

  const IdMap& user_ids() const noexcept { return user_ids_; }
  const IdMap& item_ids() const noexcept { return item_ids_; }

 private:
  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  std::vector<Interaction> interactions_;
  std::vector<std::size_t> user_offsets_;
  std::vector<Index> user_items_;
  std::vector<std::size_t> item_offsets_;
  std::vector<Index> item_users_;
  IdMap user_ids_;
  IdMap item_ids_;
};

/// Leave-one-out split: per user, the latest interaction is the test item and
/// the second latest the validation item.
struct SplitDataset {
  InteractionDataset train;
  std::vector<Interaction> validation;  // indexed by user
  std::vector<Interaction> test;        // indexed by user

  /// True when (user, item) is in train, validation or test.
  bool interacted(Index user, Index item) const;
};

/// Parses interaction lines (user, item, [rating], timestamp), applies
/// iterated k-core filtering and dense re-indexing. `source` names the input
/// in error messages.
InteractionDataset parse_interactions(std::istream& in, std::size_t k_core,
                                      const std::string& source = "<stream>");
InteractionDataset load_interactions(const std::filesystem::path& path, std::size_t k_core);

SplitDataset leave_one_out_split(const InteractionDataset& dataset);

/// Writes index_map.tsv, splits.tsv and manifest.json into `dir`.
void write_prepared(const SplitDataset& split, const std::filesystem::path& dir,
                    const std::string& source, std::size_t k_core);
SplitDataset read_prepared(const std::filesystem::path& dir);

}  // namespace hdccf
