#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hdccf/evaluator.h"
#include "hdccf/trainer.h"

namespace hdccf {

/// Everything a run can be configured with. TrainConfig carries the model,
/// sampler, loss and optimizer settings; the rest belongs to data
/// preparation and evaluation.
struct Settings {
  TrainConfig train;
  std::size_t k_core = 5;
  std::vector<std::size_t> ks = {10, 50};
  CandidateMode candidate_mode = CandidateMode::full;
  std::size_t sampled_count = 100;
};

using KeyValues = std::map<std::string, std::string>;

/// `key = value` lines; blank lines and text after '#' are ignored. Unknown
/// or repeated keys are errors.
KeyValues parse_config(std::istream& in, const std::string& source = "<config>");
KeyValues read_config(const std::filesystem::path& path);

/// Sorted list of accepted keys.
const std::vector<std::string>& config_keys();
bool is_config_key(const std::string& key);

/// Applies every entry in order; throws ConfigError naming the key on an
/// unknown key or an unparsable value. Does not validate the result.
void apply_config(const KeyValues& values, Settings& settings);

/// key = value lines for every key, in config_keys() order.
void write_config(const Settings& settings, std::ostream& out);

std::vector<std::size_t> parse_ks(const std::string& text);

}  // namespace hdccf
