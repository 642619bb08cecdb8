#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "hdccf/dataset.h"
#include "hdccf/error.h"

using namespace hdccf;

namespace {

InteractionDataset parse(const std::string& text, std::size_t k) {
  std::istringstream in(text);
  return parse_interactions(in, k, "test");
}

std::size_t degree_sum_users(const InteractionDataset& ds) {
  std::size_t s = 0;
  for (Index u = 0; u < ds.n_users(); ++u) s += ds.items_of(u).size();
  return s;
}

std::size_t degree_sum_items(const InteractionDataset& ds) {
  std::size_t s = 0;
  for (Index i = 0; i < ds.n_items(); ++i) s += ds.users_of(i).size();
  return s;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hdccf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("four interactions survive a 2-core") {
  auto ds = parse("a,x,1\na,y,2\nb,x,3\nb,y,4\n", 2);
  CHECK(ds.n_users() == 2);
  CHECK(ds.n_items() == 2);
  CHECK(ds.size() == 4);
}

TEST_CASE("singleton user and item are removed by a 2-core") {
  auto ds = parse("a,x,1\na,y,2\nb,x,3\nb,y,4\nc,z,5\n", 2);
  CHECK(ds.n_users() == 2);
  CHECK(ds.n_items() == 2);
  CHECK(ds.size() == 4);
  CHECK_FALSE(ds.user_ids().find("c").has_value());
  CHECK_FALSE(ds.item_ids().find("z").has_value());
}

TEST_CASE("k-core removal iterates to a fixpoint") {
  // removing item z drops c below 2, which then drops w below 2
  auto ds = parse("a,x,1\na,y,2\nb,x,3\nb,y,4\nc,w,5\nc,z,6\nd,w,7\n", 2);
  CHECK(ds.n_users() == 2);
  CHECK(ds.n_items() == 2);
}

TEST_CASE("rating column is ignored and tab delimiter detected") {
  auto ds = parse("user\titem\trating\tts\n1\t10\t5\t100\n1\t11\t3\t101\n2\t10\t4\t102\n", 1);
  CHECK(ds.n_users() == 2);
  CHECK(ds.n_items() == 2);
  CHECK(ds.size() == 3);
  REQUIRE(ds.user_ids().find("2").has_value());
  CHECK(*ds.user_ids().find("2") == 1);
}

TEST_CASE("duplicates collapse keeping the earliest timestamp") {
  auto ds = parse("a,x,9\na,x,3\na,y,4\n", 1);
  CHECK(ds.size() == 2);
  for (const auto& x : ds.interactions()) {
    if (ds.item_ids().raw(x.item) == "x") CHECK(x.timestamp == 3.0);
  }
}

TEST_CASE("malformed line reports its line number") {
  try {
    parse("a,x,1\na,y,2\nbroken\n", 1);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse("a,x,1\na,y,notatime\n", 1), ParseError);
}

TEST_CASE("empty after k-core is an explicit error") {
  try {
    parse("a,x,1\nb,y,2\n", 2);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("empty after k-core") != std::string::npos);
  }
}

TEST_CASE("membership, adjacency and degree identities") {
  auto ds = parse("a,x,1\na,y,2\nb,x,3\nc,z,4\nc,y,5\n", 1);
  CHECK(degree_sum_users(ds) == ds.size());
  CHECK(degree_sum_items(ds) == ds.size());
  for (const auto& x : ds.interactions()) CHECK(ds.contains(x.user, x.item));
  std::size_t members = 0;
  for (Index u = 0; u < ds.n_users(); ++u) {
    for (Index i = 0; i < ds.n_items(); ++i) members += ds.contains(u, i) ? 1 : 0;
  }
  CHECK(members == ds.size());
  for (Index u = 0; u < ds.n_users(); ++u) {
    auto items = ds.items_of(u);
    CHECK(std::is_sorted(items.begin(), items.end()));
  }
}

TEST_CASE("neighbourhood needs a shared partner and distinct entities") {
  auto ds = parse("a,x,1\na,y,2\nb,x,3\nc,z,4\n", 1);
  const Index a = *ds.user_ids().find("a");
  const Index b = *ds.user_ids().find("b");
  const Index c = *ds.user_ids().find("c");
  CHECK(ds.users_neighboured(a, b));
  CHECK(ds.users_neighboured(b, a));
  CHECK_FALSE(ds.users_neighboured(a, c));
  CHECK_FALSE(ds.users_neighboured(a, a));
  const Index x = *ds.item_ids().find("x");
  const Index y = *ds.item_ids().find("y");
  const Index z = *ds.item_ids().find("z");
  CHECK(ds.items_neighboured(x, y));
  CHECK_FALSE(ds.items_neighboured(x, z));
}

TEST_CASE("leave-one-out takes the two latest interactions") {
  auto ds = parse("u,x,1\nu,y,2\nu,z,3\n", 1);
  auto split = leave_one_out_split(ds);
  const Index u = *ds.user_ids().find("u");
  CHECK(split.train.items_of(u).size() == 1);
  CHECK(ds.item_ids().raw(split.train.items_of(u)[0]) == "x");
  CHECK(ds.item_ids().raw(split.validation[u].item) == "y");
  CHECK(ds.item_ids().raw(split.test[u].item) == "z");
  CHECK_FALSE(split.train.contains(u, split.test[u].item));
  CHECK(split.interacted(u, split.test[u].item));
}

TEST_CASE("timestamp ties are broken by item index") {
  auto ds = parse("u,x,5\nu,y,5\nu,z,5\n", 1);
  auto split = leave_one_out_split(ds);
  const Index u = *ds.user_ids().find("u");
  Index largest = std::max({*ds.item_ids().find("x"), *ds.item_ids().find("y"), *ds.item_ids().find("z")});
  CHECK(split.test[u].item == largest);
}

TEST_CASE("split rejects a user with fewer than three interactions") {
  auto ds = parse("u,x,1\nu,y,2\nu,z,3\nshort,x,4\nshort,y,5\n", 1);
  try {
    leave_one_out_split(ds);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("short") != std::string::npos);
  }
}

TEST_CASE("prepared directory round-trips") {
  auto ds = parse("a,x,1\na,y,2\na,z,3\nb,x,1\nb,z,2\nb,y,3\nb,w,4\n", 1);
  auto split = leave_one_out_split(ds);
  auto dir = temp_dir("prepared");
  write_prepared(split, dir, "mem", 1);
  auto back = read_prepared(dir);
  CHECK(back.train.interactions() == split.train.interactions());
  CHECK(back.validation == split.validation);
  CHECK(back.test == split.test);
  CHECK(back.train.user_ids().raw_ids() == split.train.user_ids().raw_ids());
  CHECK(back.train.item_ids().raw_ids() == split.train.item_ids().raw_ids());

  // same input, byte-identical index map
  auto dir2 = temp_dir("prepared2");
  write_prepared(leave_one_out_split(parse("a,x,1\na,y,2\na,z,3\nb,x,1\nb,z,2\nb,y,3\nb,w,4\n", 1)), dir2, "mem", 1);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(dir / "index_map.tsv") == slurp(dir2 / "index_map.tsv"));
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("missing prepared directory is a data error") {
  CHECK_THROWS_AS(read_prepared("/nonexistent/hdccf"), DataError);
}

#ifdef HDCCF_ML100K_PATH
TEST_CASE("ML-100K 5-core matches a brute-force filter") {
  const std::filesystem::path path = HDCCF_ML100K_PATH;
  if (!std::filesystem::exists(path)) {
    MESSAGE("ML-100K not found at " << path << "; run tools/fetch_ml100k.sh");
    return;
  }
  // reference: string-keyed maps, remove every violator each sweep
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::set<std::pair<std::string, std::string>> pairs;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string u, i;
    fields >> u >> i;
    if (!u.empty()) pairs.insert({u, i});
  }
  while (true) {
    std::map<std::string, int> du, di;
    for (const auto& [u, i] : pairs) {
      ++du[u];
      ++di[i];
    }
    std::size_t before = pairs.size();
    std::erase_if(pairs, [&](const auto& p) { return du[p.first] < 5 || di[p.second] < 5; });
    if (pairs.size() == before) break;
  }

  auto ds = load_interactions(path, 5);
  CHECK(ds.size() == pairs.size());
  auto split = leave_one_out_split(ds);
  CHECK(split.validation.size() == ds.n_users());
  CHECK(split.test.size() == ds.n_users());
  CHECK(split.train.size() == ds.size() - 2 * ds.n_users());
}
#endif
