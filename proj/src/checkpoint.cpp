#include "hdccf/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hdccf/error.h"
#include "json.hpp"

namespace hdccf {

namespace {

constexpr const char* kFormat = "hdccf-checkpoint";

void put_doubles(std::ostream& out, const double* data, std::size_t n) {
  std::vector<unsigned char> buf(n * 8);
  for (std::size_t k = 0; k < n; ++k) {
    auto bits = std::bit_cast<std::uint64_t>(data[k]);
    for (int b = 0; b < 8; ++b) buf[k * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void get_doubles(const std::vector<unsigned char>& bytes, std::size_t& offset, double* data, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[offset + k * 8 + b]) << (8 * b);
    data[k] = std::bit_cast<double>(bits);
  }
  offset += n * 8;
}

}  // namespace

void save_checkpoint(const ModelParams& params, std::uint64_t seed, bool modulated, const std::filesystem::path& path) {
  nlohmann::json header = {{"format", kFormat},         {"version", kCheckpointVersion},
                           {"n_users", params.n_users()}, {"n_items", params.n_items()},
                           {"dim", params.dim},         {"seed", seed},
                           {"modulated", modulated}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << header.dump() << '\n';
  put_doubles(out, params.user_emb.data(), static_cast<std::size_t>(params.user_emb.size()));
  put_doubles(out, params.item_emb.data(), static_cast<std::size_t>(params.item_emb.size()));
  put_doubles(out, params.user_factor.data(), static_cast<std::size_t>(params.user_factor.size()));
  put_doubles(out, params.item_factor.data(), static_cast<std::size_t>(params.item_factor.size()));
  put_doubles(out, params.mod_weights.data(), static_cast<std::size_t>(params.mod_weights.size()));
  put_doubles(out, params.mod_bias.data(), static_cast<std::size_t>(params.mod_bias.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint not found: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": unreadable checkpoint header (" + e.what() + ")");
  }
  if (!header.is_object() || header.value("format", "") != kFormat) {
    throw FormatError(path.string() + ": not a checkpoint file");
  }
  if (header.value("version", -1) != kCheckpointVersion) {
    throw FormatError(path.string() + ": checkpoint version " + header.value("version", nlohmann::json()).dump() +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  std::size_t n_users = 0, n_items = 0, dim = 0;
  Checkpoint ck;
  try {
    n_users = header.at("n_users").get<std::size_t>();
    n_items = header.at("n_items").get<std::size_t>();
    dim = header.at("dim").get<std::size_t>();
    ck.seed = header.at("seed").get<std::uint64_t>();
    ck.modulated = header.at("modulated").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": incomplete checkpoint header (" + e.what() + ")");
  }
  if (dim == 0) throw FormatError(path.string() + ": checkpoint dimension is zero");

  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t doubles = 2 * (n_users + n_items) * dim + 3 * dim * dim + dim;
  if (bytes.size() != doubles * 8) {
    throw FormatError(path.string() + ": header promises " + std::to_string(doubles * 8) + " bytes of parameters, file has " +
                      std::to_string(bytes.size()));
  }
  auto& p = ck.params;
  const auto d = static_cast<Eigen::Index>(dim);
  p.dim = dim;
  p.user_emb.resize(static_cast<Eigen::Index>(n_users), d);
  p.item_emb.resize(static_cast<Eigen::Index>(n_items), d);
  p.user_factor.resize(static_cast<Eigen::Index>(n_users), d);
  p.item_factor.resize(static_cast<Eigen::Index>(n_items), d);
  p.mod_weights.resize(3 * d, d);
  p.mod_bias.resize(d);
  std::size_t offset = 0;
  get_doubles(bytes, offset, p.user_emb.data(), static_cast<std::size_t>(p.user_emb.size()));
  get_doubles(bytes, offset, p.item_emb.data(), static_cast<std::size_t>(p.item_emb.size()));
  get_doubles(bytes, offset, p.user_factor.data(), static_cast<std::size_t>(p.user_factor.size()));
  get_doubles(bytes, offset, p.item_factor.data(), static_cast<std::size_t>(p.item_factor.size()));
  get_doubles(bytes, offset, p.mod_weights.data(), static_cast<std::size_t>(p.mod_weights.size()));
  get_doubles(bytes, offset, p.mod_bias.data(), static_cast<std::size_t>(p.mod_bias.size()));
  return ck;
}

}  // namespace hdccf
