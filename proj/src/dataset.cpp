#include "hdccf/dataset.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "hdccf/error.h"

namespace hdccf {

namespace {

struct RawRecord {
  std::string user;
  std::string item;
  double timestamp;
};

bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\r')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string trim(std::string_view text) {
  auto begin = text.find_first_not_of(" \r\t");
  if (begin == std::string_view::npos) return {};
  auto end = text.find_last_not_of(" \r\t");
  return std::string(text.substr(begin, end - begin + 1));
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> fields;
  if (delim == ' ') {
    std::size_t pos = 0;
    while (pos < line.size()) {
      auto begin = line.find_first_not_of(" \r", pos);
      if (begin == std::string_view::npos) break;
      auto end = line.find_first_of(" \r", begin);
      if (end == std::string_view::npos) end = line.size();
      fields.push_back(line.substr(begin, end - begin));
      pos = end;
    }
    return fields;
  }
  std::size_t pos = 0;
  while (true) {
    auto next = line.find(delim, pos);
    if (next == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return fields;
}

char detect_delimiter(std::string_view line) {
  if (line.find('\t') != std::string_view::npos) return '\t';
  if (line.find(',') != std::string_view::npos) return ',';
  return ' ';
}

// Numeric IDs sort by value, anything else lexicographically.
std::vector<std::string> ordered_ids(std::vector<std::string> ids) {
  bool numeric = std::all_of(ids.begin(), ids.end(), [](const std::string& id) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(id.data(), id.data() + id.size(), v);
    return ec == std::errc() && ptr == id.data() + id.size();
  });
  if (numeric) {
    std::sort(ids.begin(), ids.end(),
              [](const std::string& a, const std::string& b) {
                auto x = std::stoll(a);
                auto y = std::stoll(b);
                return x != y ? x < y : a < b;
              });
  } else {
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

std::string format_double(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

// Merge-style intersection test with early exit on the first shared element.
bool sorted_intersect(std::span<const Index> a, std::span<const Index> b) {
  std::size_t x = 0;
  std::size_t y = 0;
  while (x < a.size() && y < b.size()) {
    if (a[x] == b[y]) return true;
    if (a[x] < b[y]) {
      ++x;
    } else {
      ++y;
    }
  }
  return false;
}

}  // namespace

IdMap::IdMap(std::vector<std::string> raw_ids) : raw_(std::move(raw_ids)) {
  index_.reserve(raw_.size());
  for (std::size_t i = 0; i < raw_.size(); ++i) {
    if (!index_.emplace(raw_[i], static_cast<Index>(i)).second) {
      throw DataError("duplicate raw id '" + raw_[i] + "' in id map");
    }
  }
}

std::optional<Index> IdMap::find(const std::string& raw) const {
  auto it = index_.find(raw);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

InteractionDataset::InteractionDataset(std::size_t n_users, std::size_t n_items,
                                       std::vector<Interaction> interactions, IdMap user_ids,
                                       IdMap item_ids)
    : n_users_(n_users), n_items_(n_items), user_ids_(std::move(user_ids)), item_ids_(std::move(item_ids)) {
  for (const auto& x : interactions) {
    if (x.user >= n_users || x.item >= n_items) {
      throw DataError("interaction index out of range: (" + std::to_string(x.user) + ", " +
                      std::to_string(x.item) + ")");
    }
  }
  std::sort(interactions.begin(), interactions.end(), [](const Interaction& a, const Interaction& b) {
    if (a.user != b.user) return a.user < b.user;
    if (a.item != b.item) return a.item < b.item;
    return a.timestamp < b.timestamp;
  });
  // collapse duplicates; the earliest timestamp sorts first
  auto last = std::unique(interactions.begin(), interactions.end(), [](const Interaction& a, const Interaction& b) {
    return a.user == b.user && a.item == b.item;
  });
  interactions.erase(last, interactions.end());
  interactions_ = std::move(interactions);

  user_offsets_.assign(n_users_ + 1, 0);
  item_offsets_.assign(n_items_ + 1, 0);
  for (const auto& x : interactions_) {
    ++user_offsets_[x.user + 1];
    ++item_offsets_[x.item + 1];
  }
  std::partial_sum(user_offsets_.begin(), user_offsets_.end(), user_offsets_.begin());
  std::partial_sum(item_offsets_.begin(), item_offsets_.end(), item_offsets_.begin());
  user_items_.resize(interactions_.size());
  item_users_.resize(interactions_.size());
  std::vector<std::size_t> user_fill(user_offsets_.begin(), user_offsets_.end() - 1);
  std::vector<std::size_t> item_fill(item_offsets_.begin(), item_offsets_.end() - 1);
  // interactions_ is sorted by (user, item) so both lists come out sorted
  for (const auto& x : interactions_) {
    user_items_[user_fill[x.user]++] = x.item;
    item_users_[item_fill[x.item]++] = x.user;
  }
}

std::span<const Index> InteractionDataset::items_of(Index user) const {
  return {user_items_.data() + user_offsets_.at(user), user_offsets_.at(user + 1) - user_offsets_[user]};
}

std::span<const Index> InteractionDataset::users_of(Index item) const {
  return {item_users_.data() + item_offsets_.at(item), item_offsets_.at(item + 1) - item_offsets_[item]};
}

bool InteractionDataset::contains(Index user, Index item) const {
  if (user >= n_users_ || item >= n_items_) return false;
  auto items = items_of(user);
  return std::binary_search(items.begin(), items.end(), item);
}

bool InteractionDataset::users_neighboured(Index a, Index b) const {
  if (a == b) return false;
  return sorted_intersect(items_of(a), items_of(b));
}

bool InteractionDataset::items_neighboured(Index a, Index b) const {
  if (a == b) return false;
  return sorted_intersect(users_of(a), users_of(b));
}

bool SplitDataset::interacted(Index user, Index item) const {
  if (train.contains(user, item)) return true;
  if (user < validation.size() && validation[user].item == item) return true;
  if (user < test.size() && test[user].item == item) return true;
  return false;
}

InteractionDataset parse_interactions(std::istream& in, std::size_t k_core, const std::string& source) {
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  char delim = 0;
  bool first_data_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (trim(view).empty() || view.front() == '#') continue;
    if (delim == 0) delim = detect_delimiter(view);
    auto fields = split_fields(view, delim);
    if (fields.size() < 3) {
      throw ParseError(source, line_no, "expected user, item, [rating,] timestamp; got " +
                                            std::to_string(fields.size()) + " field(s)");
    }
    std::string_view ts_field = fields.size() == 3 ? fields[2] : fields[3];
    double timestamp = 0.0;
    if (!parse_double(ts_field, timestamp)) {
      if (first_data_line) {
        first_data_line = false;  // header
        continue;
      }
      throw ParseError(source, line_no, "timestamp '" + std::string(ts_field) + "' is not numeric");
    }
    first_data_line = false;
    auto user = trim(fields[0]);
    auto item = trim(fields[1]);
    if (user.empty() || item.empty()) throw ParseError(source, line_no, "empty user or item id");
    records.push_back({std::move(user), std::move(item), timestamp});
  }

  // Temporary ids in order of first appearance.
  std::unordered_map<std::string, Index> user_tmp;
  std::unordered_map<std::string, Index> item_tmp;
  std::vector<std::string> user_raw;
  std::vector<std::string> item_raw;
  std::map<std::pair<Index, Index>, double> pairs;
  for (const auto& r : records) {
    auto [uit, unew] = user_tmp.emplace(r.user, static_cast<Index>(user_raw.size()));
    if (unew) user_raw.push_back(r.user);
    auto [iit, inew] = item_tmp.emplace(r.item, static_cast<Index>(item_raw.size()));
    if (inew) item_raw.push_back(r.item);
    auto key = std::make_pair(uit->second, iit->second);
    auto [pit, pnew] = pairs.emplace(key, r.timestamp);
    if (!pnew) pit->second = std::min(pit->second, r.timestamp);
  }

  // Iterated k-core: drop users/items below k until nothing changes.
  std::vector<std::size_t> user_deg(user_raw.size());
  std::vector<std::size_t> item_deg(item_raw.size());
  while (true) {
    std::fill(user_deg.begin(), user_deg.end(), 0);
    std::fill(item_deg.begin(), item_deg.end(), 0);
    for (const auto& [key, ts] : pairs) {
      ++user_deg[key.first];
      ++item_deg[key.second];
    }
    std::size_t removed = std::erase_if(pairs, [&](const auto& entry) {
      return user_deg[entry.first.first] < k_core || item_deg[entry.first.second] < k_core;
    });
    if (removed == 0) break;
  }
  if (pairs.empty()) {
    throw DataError(source + ": dataset is empty after k-core filtering (k=" + std::to_string(k_core) + ")");
  }

  std::vector<std::string> kept_users;
  std::vector<std::string> kept_items;
  for (std::size_t u = 0; u < user_raw.size(); ++u) {
    if (user_deg[u] > 0) kept_users.push_back(user_raw[u]);
  }
  for (std::size_t i = 0; i < item_raw.size(); ++i) {
    if (item_deg[i] > 0) kept_items.push_back(item_raw[i]);
  }
  IdMap user_ids(ordered_ids(std::move(kept_users)));
  IdMap item_ids(ordered_ids(std::move(kept_items)));

  std::vector<Interaction> interactions;
  interactions.reserve(pairs.size());
  for (const auto& [key, ts] : pairs) {
    interactions.push_back({*user_ids.find(user_raw[key.first]), *item_ids.find(item_raw[key.second]), ts});
  }
  auto n_users = user_ids.size();
  auto n_items = item_ids.size();
  return InteractionDataset(n_users, n_items, std::move(interactions), std::move(user_ids), std::move(item_ids));
}

InteractionDataset load_interactions(const std::filesystem::path& path, std::size_t k_core) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction file " + path.string());
  return parse_interactions(in, k_core, path.string());
}

SplitDataset leave_one_out_split(const InteractionDataset& dataset) {
  std::vector<std::vector<Interaction>> per_user(dataset.n_users());
  for (const auto& x : dataset.interactions()) per_user[x.user].push_back(x);

  SplitDataset split;
  split.validation.resize(dataset.n_users());
  split.test.resize(dataset.n_users());
  std::vector<Interaction> train;
  train.reserve(dataset.size());
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    auto& xs = per_user[u];
    if (xs.size() < 3) {
      std::string name = dataset.user_ids().size() > u ? dataset.user_ids().raw(static_cast<Index>(u))
                                                       : std::to_string(u);
      throw DataError("user '" + name + "' has " + std::to_string(xs.size()) +
                      " interaction(s); leave-one-out needs at least 3");
    }
    std::sort(xs.begin(), xs.end(), [](const Interaction& a, const Interaction& b) {
      if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
      return a.item < b.item;
    });
    split.test[u] = xs.back();
    split.validation[u] = xs[xs.size() - 2];
    train.insert(train.end(), xs.begin(), xs.end() - 2);
  }
  split.train = InteractionDataset(dataset.n_users(), dataset.n_items(), std::move(train), dataset.user_ids(),
                                   dataset.item_ids());
  return split;
}

void write_prepared(const SplitDataset& split, const std::filesystem::path& dir, const std::string& source,
                    std::size_t k_core) {
  std::filesystem::create_directories(dir);
  const auto& train = split.train;
  {
    std::ofstream out(dir / "index_map.tsv");
    if (!out) throw DataError("cannot write " + (dir / "index_map.tsv").string());
    out << "kind\traw_id\tindex\n";
    for (std::size_t u = 0; u < train.user_ids().size(); ++u) {
      out << "user\t" << train.user_ids().raw(static_cast<Index>(u)) << '\t' << u << '\n';
    }
    for (std::size_t i = 0; i < train.item_ids().size(); ++i) {
      out << "item\t" << train.item_ids().raw(static_cast<Index>(i)) << '\t' << i << '\n';
    }
  }
  {
    std::ofstream out(dir / "splits.tsv");
    if (!out) throw DataError("cannot write " + (dir / "splits.tsv").string());
    out << "role\tuser\titem\ttimestamp\n";
    for (const auto& x : train.interactions()) {
      out << "train\t" << x.user << '\t' << x.item << '\t' << format_double(x.timestamp) << '\n';
    }
    for (const auto& x : split.validation) {
      out << "validation\t" << x.user << '\t' << x.item << '\t' << format_double(x.timestamp) << '\n';
    }
    for (const auto& x : split.test) {
      out << "test\t" << x.user << '\t' << x.item << '\t' << format_double(x.timestamp) << '\n';
    }
  }
  nlohmann::json manifest = {
      {"format", "hdccf-prepared"},
      {"version", 1},
      {"source", source},
      {"k_core", k_core},
      {"n_users", train.n_users()},
      {"n_items", train.n_items()},
      {"n_train", train.size()},
      {"n_validation", split.validation.size()},
      {"n_test", split.test.size()},
      {"files", {{"index_map", "index_map.tsv"}, {"splits", "splits.tsv"}}},
  };
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

SplitDataset read_prepared(const std::filesystem::path& dir) {
  auto manifest_path = dir / "manifest.json";
  std::ifstream manifest_in(manifest_path);
  if (!manifest_in) throw DataError("prepared dataset not found: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "hdccf-prepared" || manifest.value("version", 0) != 1) {
    throw FormatError(manifest_path.string() + ": unsupported manifest format");
  }
  std::size_t n_users = manifest.at("n_users");
  std::size_t n_items = manifest.at("n_items");

  std::vector<std::string> user_raw(n_users);
  std::vector<std::string> item_raw(n_items);
  {
    auto path = dir / "index_map.tsv";
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::getline(in, line);
    ++line_no;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto fields = split_fields(line, '\t');
      std::size_t index = 0;
      if (fields.size() != 3 ||
          std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), index).ec != std::errc()) {
        throw ParseError(path.string(), line_no, "malformed index map line");
      }
      auto& table = fields[0] == "user" ? user_raw : item_raw;
      if ((fields[0] != "user" && fields[0] != "item") || index >= table.size()) {
        throw ParseError(path.string(), line_no, "index map entry out of range");
      }
      table[index] = std::string(fields[1]);
    }
  }

  SplitDataset split;
  split.validation.resize(n_users);
  split.test.resize(n_users);
  std::vector<char> has_val(n_users, 0);
  std::vector<char> has_test(n_users, 0);
  std::vector<Interaction> train;
  {
    auto path = dir / "splits.tsv";
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 1;
    std::getline(in, line);
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto fields = split_fields(line, '\t');
      Interaction x;
      if (fields.size() != 4 ||
          std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), x.user).ec != std::errc() ||
          std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), x.item).ec != std::errc() ||
          !parse_double(fields[3], x.timestamp)) {
        throw ParseError(path.string(), line_no, "malformed split line");
      }
      if (x.user >= n_users || x.item >= n_items) throw ParseError(path.string(), line_no, "index out of range");
      if (fields[0] == "train") {
        train.push_back(x);
      } else if (fields[0] == "validation") {
        split.validation[x.user] = x;
        has_val[x.user] = 1;
      } else if (fields[0] == "test") {
        split.test[x.user] = x;
        has_test[x.user] = 1;
      } else {
        throw ParseError(path.string(), line_no, "unknown role '" + std::string(fields[0]) + "'");
      }
    }
  }
  for (std::size_t u = 0; u < n_users; ++u) {
    if (!has_val[u] || !has_test[u]) {
      throw FormatError("prepared split is missing held-out items for user index " + std::to_string(u));
    }
  }
  split.train = InteractionDataset(n_users, n_items, std::move(train), IdMap(std::move(user_raw)),
                                   IdMap(std::move(item_raw)));
  return split;
}

}  // namespace hdccf
