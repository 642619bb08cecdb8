#include "hdccf/config.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "hdccf/error.h"

namespace hdccf {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <class E>
E to_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> names) {
  std::string allowed;
  for (const auto& [name, value] : names) {
    if (v == name) return value;
    allowed += allowed.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(key + ": expected one of " + allowed + ", got '" + v + "'");
}

template <class E>
std::string enum_name(E value, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [name, v] : names) {
    if (v == value) return name;
  }
  return "?";
}

const std::initializer_list<std::pair<const char*, SamplerMode>> kSamplerModes = {
    {"in_batch", SamplerMode::in_batch}, {"explicit_uniform", SamplerMode::explicit_uniform}};
const std::initializer_list<std::pair<const char*, PairDraw>> kPairDraws = {
    {"with_replacement", PairDraw::with_replacement},
    {"without_replacement", PairDraw::without_replacement},
    {"epoch_shuffle", PairDraw::epoch_shuffle}};
const std::initializer_list<std::pair<const char*, ClampMode>> kClampModes = {
    {"paper", ClampMode::paper}, {"robinson", ClampMode::robinson}, {"off", ClampMode::off}};
const std::initializer_list<std::pair<const char*, LossFamily>> kFamilies = {{"hdccf", LossFamily::hdccf},
                                                                             {"bpr", LossFamily::bpr}};
const std::initializer_list<std::pair<const char*, CandidateMode>> kCandidateModes = {
    {"full", CandidateMode::full}, {"sampled", CandidateMode::sampled}};

struct Key {
  std::function<void(Settings&, const std::string&)> set;
  std::function<std::string(const Settings&)> get;
};

std::string real_text(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

const std::map<std::string, Key>& key_table() {
  static const std::map<std::string, Key> table = [] {
    std::map<std::string, Key> t;
    auto count = [&](const char* name, auto member) {
      t[name] = {[=](Settings& s, const std::string& v) { member(s) = to_count(name, v); },
                 [=](const Settings& s) { return std::to_string(member(s)); }};
    };
    auto real = [&](const char* name, auto member) {
      t[name] = {[=](Settings& s, const std::string& v) { member(s) = to_real(name, v); },
                 [=](const Settings& s) { return real_text(member(s)); }};
    };
    auto flag = [&](const char* name, auto member) {
      t[name] = {[=](Settings& s, const std::string& v) { member(s) = to_bool(name, v); },
                 [=](const Settings& s) { return std::string(member(s) ? "true" : "false"); }};
    };
    auto choice = [&](const char* name, auto member, auto names) {
      t[name] = {[=](Settings& s, const std::string& v) { member(s) = to_enum(name, v, names); },
                 [=](const Settings& s) { return enum_name(member(s), names); }};
    };

    count("dim", [](auto& s) -> auto& { return s.train.dim; });
    flag("modulated", [](auto& s) -> auto& { return s.train.modulated; });
    count("epochs", [](auto& s) -> auto& { return s.train.epochs; });
    real("learning_rate", [](auto& s) -> auto& { return s.train.learning_rate; });
    real("beta1", [](auto& s) -> auto& { return s.train.beta1; });
    real("beta2", [](auto& s) -> auto& { return s.train.beta2; });
    real("epsilon", [](auto& s) -> auto& { return s.train.epsilon; });
    real("weight_decay", [](auto& s) -> auto& { return s.train.weight_decay; });
    count("early_stop_patience", [](auto& s) -> auto& { return s.train.patience; });
    count("eval_every", [](auto& s) -> auto& { return s.train.eval_every; });
    count("threads", [](auto& s) -> auto& { return s.train.threads; });
    t["seed"] = {[](Settings& s, const std::string& v) { s.train.seed = to_u64("seed", v); },
                 [](const Settings& s) { return std::to_string(s.train.seed); }};

    count("batch_size", [](auto& s) -> auto& { return s.train.sampler.batch_size; });
    count("pos_neighbors", [](auto& s) -> auto& { return s.train.sampler.pos_neighbors; });
    choice("sampler_mode", [](auto& s) -> auto& { return s.train.sampler.mode; }, kSamplerModes);
    count("neg_count", [](auto& s) -> auto& { return s.train.sampler.neg_count; });
    choice("pair_draw", [](auto& s) -> auto& { return s.train.sampler.pair_draw; }, kPairDraws);

    real("temperature", [](auto& s) -> auto& { return s.train.loss.temperature; });
    real("lambda_u", [](auto& s) -> auto& { return s.train.loss.lambda_u; });
    real("lambda_i", [](auto& s) -> auto& { return s.train.loss.lambda_i; });
    real("omega_u", [](auto& s) -> auto& { return s.train.loss.omega_u; });
    real("omega_i", [](auto& s) -> auto& { return s.train.loss.omega_i; });
    flag("debias", [](auto& s) -> auto& { return s.train.loss.debias; });
    choice("clamp_mode", [](auto& s) -> auto& { return s.train.loss.clamp; }, kClampModes);
    choice("loss_family", [](auto& s) -> auto& { return s.train.loss.family; }, kFamilies);

    count("k_core", [](auto& s) -> auto& { return s.k_core; });
    t["ks"] = {[](Settings& s, const std::string& v) { s.ks = parse_ks(v); },
               [](const Settings& s) {
                 std::string out;
                 for (auto k : s.ks) out += (out.empty() ? "" : ",") + std::to_string(k);
                 return out;
               }};
    choice("candidate_mode", [](auto& s) -> auto& { return s.candidate_mode; }, kCandidateModes);
    count("sampled_count", [](auto& s) -> auto& { return s.sampled_count; });
    return t;
  }();
  return table;
}

}  // namespace

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    std::size_t k = to_count("ks", part);
    if (k == 0) throw ConfigError("ks: cutoffs must be positive");
    ks.push_back(k);
  }
  if (ks.empty()) throw ConfigError("ks: at least one cutoff is required");
  return ks;
}

KeyValues parse_config(std::istream& in, const std::string& source) {
  KeyValues out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(n) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!is_config_key(key)) throw ConfigError(source + ":" + std::to_string(n) + ": unknown key '" + key + "'");
    if (value.empty()) throw ConfigError(source + ":" + std::to_string(n) + ": empty value for '" + key + "'");
    if (!out.emplace(key, value).second) {
      throw ConfigError(source + ":" + std::to_string(n) + ": key '" + key + "' set twice");
    }
  }
  return out;
}

KeyValues read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config file not found: " + path.string());
  return parse_config(in, path.string());
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : key_table()) k.push_back(name);
    return k;
  }();
  return keys;
}

bool is_config_key(const std::string& key) { return key_table().count(key) != 0; }

void apply_config(const KeyValues& values, Settings& settings) {
  for (const auto& [key, value] : values) {
    auto it = key_table().find(key);
    if (it == key_table().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(settings, value);
  }
}

void write_config(const Settings& settings, std::ostream& out) {
  for (const auto& [name, key] : key_table()) out << name << " = " << key.get(settings) << '\n';
}

}  // namespace hdccf
