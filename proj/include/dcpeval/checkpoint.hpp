// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "dcpeval/encoder.hpp"
#include "dcpeval/error.hpp"
#include "dcpeval/io.hpp"

namespace dcpeval {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  std::size_t epoch = 0;
  double val_loss = 0.0;
  double val_metric = 0.0;
  std::string vocab_file = "vocab.json";
};

struct Checkpoint {
  Model<float> model;
  CheckpointMeta meta;
};

/// Writes `dir/manifest.json` and `dir/weights.bin` (concatenated little-endian
/// float32 tensors in manifest order).
inline void save_checkpoint(const fs::path& dir, const Model<float>& model, const CheckpointMeta& meta) {
  std::string weights;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : model.tensors()) {
    tensors.push_back({{"name", t.name},
                       {"dtype", "f32"},
                       {"shape", {t.value.rows(), t.value.cols()}},
                       {"offset", weights.size()}});
    for (Eigen::Index i = 0; i < t.value.size(); ++i) put_u32(weights, std::bit_cast<std::uint32_t>(t.value.data()[i]));
  }
  nlohmann::json manifest = {
      {"format", "dcpeval-checkpoint"},
      {"format_version", kCheckpointFormatVersion},
      {"head_kind", std::string(to_string(model.config().head))},
      {"config", model.config().to_json()},
      {"tensors", tensors},
      {"vocab", meta.vocab_file},
      {"training", {{"epoch", meta.epoch}, {"val_loss", meta.val_loss}, {"val_metric", meta.val_metric}}},
  };
  fs::create_directories(dir);
  write_file_atomic(dir / "weights.bin", weights);
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

/// Loads and validates a checkpoint directory. When `expected_vocab_size` is
/// given, a checkpoint built for another vocabulary is rejected.
inline Checkpoint load_checkpoint(const fs::path& dir, std::optional<std::size_t> expected_vocab_size = std::nullopt) {
  const std::string where = dir.string();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(where + ": malformed manifest: " + e.what());
  }
  try {
    if (manifest.value("format", "") != "dcpeval-checkpoint") throw CheckpointError(where + ": not a dcpeval checkpoint");
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw CheckpointError(where + ": unknown format version " + std::to_string(version));
    }
    const EncoderConfig cfg = EncoderConfig::from_json(manifest.at("config"));
    if (manifest.contains("head_kind") && head_from_string(manifest.at("head_kind").get<std::string>()) != cfg.head) {
      throw CheckpointError(where + ": head_kind disagrees with config");
    }
    if (expected_vocab_size && *expected_vocab_size != cfg.vocab_size) {
      throw CheckpointError(where + ": config mismatch: checkpoint vocab_size " + std::to_string(cfg.vocab_size) +
                            ", expected " + std::to_string(*expected_vocab_size));
    }
    Checkpoint ck{Model<float>(cfg), {}};
    const std::string weights = read_file(dir / "weights.bin");

    std::map<std::string, const nlohmann::json*> index;
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      if (!index.emplace(name, &entry).second) throw CheckpointError(where + ": tensor '" + name + "' listed twice");
    }
    std::size_t expected_bytes = 0;
    for (auto& t : ck.model.tensors()) {
      auto it = index.find(t.name);
      if (it == index.end()) throw CheckpointError(where + ": missing tensor '" + t.name + "'");
      const auto& entry = *it->second;
      if (entry.value("dtype", "") != "f32") throw CheckpointError(where + ": tensor '" + t.name + "' is not f32");
      const auto& shape = entry.at("shape");
      if (!shape.is_array() || shape.size() != 2 || shape[0].get<std::int64_t>() != t.value.rows() ||
          shape[1].get<std::int64_t>() != t.value.cols()) {
        throw CheckpointError(where + ": tensor '" + t.name + "' has shape " + shape.dump() + ", config expects [" +
                              std::to_string(t.value.rows()) + "," + std::to_string(t.value.cols()) + "]");
      }
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto bytes = static_cast<std::size_t>(t.value.size()) * 4;
      if (offset + bytes > weights.size()) throw CheckpointError(where + ": weights.bin truncated at tensor '" + t.name + "'");
      ByteReader rd(std::string_view(weights).substr(offset, bytes), where);
      for (Eigen::Index i = 0; i < t.value.size(); ++i) {
        t.value.data()[i] = std::bit_cast<float>(static_cast<std::uint32_t>(rd.get(4)));
      }
      expected_bytes += bytes;
      index.erase(it);
    }
    if (!index.empty()) throw CheckpointError(where + ": unexpected tensor '" + index.begin()->first + "'");
    if (weights.size() != expected_bytes) throw CheckpointError(where + ": weights.bin size does not match manifest");

    const auto& tr = manifest.at("training");
    ck.meta.epoch = tr.at("epoch").get<std::size_t>();
    ck.meta.val_loss = tr.at("val_loss").get<double>();
    ck.meta.val_metric = tr.at("val_metric").get<double>();
    ck.meta.vocab_file = manifest.value("vocab", "vocab.json");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(where + ": malformed manifest: " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(where + ": invalid config: " + e.what());
  }
}

}  // namespace dcpeval
