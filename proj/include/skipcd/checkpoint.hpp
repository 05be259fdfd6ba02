#pragma once

// Checkpoint layout: a directory holding
//   config.json  - ModelConfig fields (snake_case) plus "format_version"
//   weights.bin  - raw little-endian float32, tensors concatenated in the order
//                  token_embedding; per layer: attn_norm, q, k, v, o, ffn_norm,
//                  gate, up, down; final_norm; output_head (untied only)

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "skipcd/config.hpp"
#include "skipcd/error.hpp"
#include "skipcd/weights.hpp"

namespace skipcd {

inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["n_layers"] = c.n_layers;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["d_ff"] = c.d_ff;
  j["vocab_size"] = c.vocab_size;
  j["max_seq_len"] = c.max_seq_len;
  j["rope_theta"] = c.rope_theta;
  j["norm_eps"] = c.norm_eps;
  j["tied_embeddings"] = c.tied_embeddings;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    if (!j.contains("format_version")) throw FormatError("config.json: missing format_version");
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw FormatError("config.json: unknown format version " + std::to_string(version));
    ModelConfig c;
    c.n_layers = j.at("n_layers").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.rope_theta = j.value("rope_theta", 10000.0);
    c.norm_eps = j.value("norm_eps", 1e-5);
    c.tied_embeddings = j.value("tied_embeddings", false);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config.json: ") + e.what());
  }
}

namespace detail {

inline void put_le_f32(std::string& out, float x) {
  auto u = std::bit_cast<std::uint32_t>(x);
  char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
               static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
  out.append(b, 4);
}

inline float get_le_f32(const unsigned char* p) {
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                    (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(u);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed for " + p.string());
}

}  // namespace detail

inline std::string serialize_weights(const ModelConfig& cfg, const WeightSet& w) {
  std::string blob;
  blob.reserve(total_parameters(cfg) * 4);
  for_each_tensor(cfg, w, [&](const std::string&, const std::vector<float>& t, std::size_t) {
    for (float x : t) detail::put_le_f32(blob, x);
  });
  return blob;
}

inline WeightSet deserialize_weights(const ModelConfig& cfg, const std::string& blob) {
  const std::size_t expected = total_parameters(cfg) * 4;
  if (blob.size() != expected)
    throw ShapeError("weights.bin: " + std::to_string(blob.size()) + " bytes, config requires " +
                     std::to_string(expected));
  WeightSet w;
  w.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
  for_each_tensor(cfg, w, [&](const std::string&, std::vector<float>& t, std::size_t n) {
    t.resize(n);
    for (auto& x : t) {
      x = detail::get_le_f32(p);
      p += 4;
    }
  });
  validate_weights(cfg, w);
  return w;
}

// Validates before touching the filesystem.
inline void save_model(const ModelConfig& cfg, const WeightSet& w, const std::filesystem::path& dir) {
  validate_weights(cfg, w);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  detail::write_file(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  detail::write_file(dir / "weights.bin", serialize_weights(cfg, w));
}

inline std::pair<ModelConfig, WeightSet> load_model(const std::filesystem::path& dir) {
  const auto cfg_path = dir / "config.json";
  const auto bin_path = dir / "weights.bin";
  if (!std::filesystem::exists(cfg_path)) throw Error("missing " + cfg_path.string());
  if (!std::filesystem::exists(bin_path)) throw Error("missing " + bin_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(cfg_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("config.json: ") + e.what());
  }
  ModelConfig cfg = config_from_json(j);
  WeightSet w = deserialize_weights(cfg, detail::read_file(bin_path));
  return {cfg, std::move(w)};
}

}  // namespace skipcd
