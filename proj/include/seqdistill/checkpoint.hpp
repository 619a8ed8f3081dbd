// Copyright 2026 The seqdistill Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <string>

#include "seqdistill/common.hpp"
#include "seqdistill/model.hpp"

namespace seqdistill {

// Checkpoint layout (all integers and floats little-endian):
//   bytes 0-7   magic "SQDCKPT1"
//   u32         format version (1)
//   u32         architecture (0 causal, 1 masked)
//   u32 x 5     hidden_dim, num_layers, num_heads, max_len, num_items
//   f64 x 2     dropout, mask_prob
//   u64         training seed
//   u32 + bytes run-manifest digest (hex string)
//   u64         parameter count
//   f64 x N     parameters
struct Checkpoint {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::string manifest_digest;
  std::vector<double> params;
};

inline void save_checkpoint(const std::string& path, const TransformerModel& model,
                            std::uint64_t seed, const std::string& manifest_digest) {
  const auto& cfg = model.config();
  std::string out;
  out += "SQDCKPT1";
  put_u32(out, 1);
  put_u32(out, cfg.architecture == Architecture::causal ? 0u : 1u);
  put_u32(out, static_cast<std::uint32_t>(cfg.hidden_dim));
  put_u32(out, static_cast<std::uint32_t>(cfg.num_layers));
  put_u32(out, static_cast<std::uint32_t>(cfg.num_heads));
  put_u32(out, static_cast<std::uint32_t>(cfg.max_len));
  put_u32(out, static_cast<std::uint32_t>(cfg.num_items));
  put_f64(out, cfg.dropout);
  put_f64(out, cfg.mask_prob);
  put_u64(out, seed);
  put_u32(out, static_cast<std::uint32_t>(manifest_digest.size()));
  out += manifest_digest;
  put_u64(out, model.num_params());
  for (double p : model.params()) put_f64(out, p);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArtifactError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArtifactError("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ByteReader r(data);
  if (r.bytes(8) != "SQDCKPT1") throw ArtifactError("bad checkpoint magic: " + path);
  const std::uint32_t version = r.u32();
  if (version != 1) throw ArtifactError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.config.architecture = r.u32() == 0 ? Architecture::causal : Architecture::masked;
  ckpt.config.hidden_dim = static_cast<int>(r.u32());
  ckpt.config.num_layers = static_cast<int>(r.u32());
  ckpt.config.num_heads = static_cast<int>(r.u32());
  ckpt.config.max_len = static_cast<int>(r.u32());
  ckpt.config.num_items = static_cast<int>(r.u32());
  ckpt.config.dropout = r.f64();
  ckpt.config.mask_prob = r.f64();
  ckpt.seed = r.u64();
  ckpt.manifest_digest = r.bytes(r.u32());
  const std::uint64_t n = r.u64();
  ckpt.params.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) ckpt.params[i] = r.f64();
  if (!r.done()) throw ArtifactError("checkpoint has trailing bytes: " + path);
  return ckpt;
}

inline TransformerModel model_from_checkpoint(const Checkpoint& ckpt) {
  TransformerModel model(ckpt.config);
  if (model.num_params() != ckpt.params.size())
    throw ArtifactError("checkpoint parameter count does not match its config");
  model.params() = ckpt.params;
  return model;
}

}  // namespace seqdistill
