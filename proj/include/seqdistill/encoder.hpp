// Copyright 2026 The seqdistill Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "seqdistill/common.hpp"
#include "seqdistill/digest.hpp"
#include "seqdistill/profile.hpp"
#include "seqdistill/rng.hpp"

namespace seqdistill {

// Handle onto a text encoder with a fixed output dimensionality.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::string encoder_id() const = 0;
  virtual int output_dim() const = 0;
  // Encodes one text; throws ServiceError on failure.
  virtual Vector encode(const std::string& text) = 0;
};

// Digest-seeded pseudo-random unit vector; a pure function of the text, so
// duplicate texts encode to identical rows and runs reproduce bit-exactly.
class MockTextEncoder : public TextEncoder {
 public:
  explicit MockTextEncoder(int output_dim = 1024) : dim_(output_dim) {
    if (dim_ < 1) throw ConfigError("encoder output_dim must be positive");
  }

  std::string encoder_id() const override { return "mock-encoder-v1"; }
  int output_dim() const override { return dim_; }

  Vector encode(const std::string& text) override {
    Rng rng(digest_seed(text));
    Vector v(dim_);
    for (int i = 0; i < dim_; ++i) v[i] = rng.normal();
    const double norm = v.norm();
    return norm > 0 ? Vector(v / norm) : v;
  }

 private:
  int dim_;
};

struct EncodeResult {
  Matrix embeddings;                      // one row per successfully encoded profile
  std::vector<std::string> user_ids;      // row order
  std::vector<std::string> failed_users;  // recorded skips
  std::vector<std::string> failure_reasons;
};

// Encodes profiles in input order. A per-row encoder failure is recorded
// and the row skipped; every emitted row is checked finite.
inline EncodeResult encode_profiles(const std::vector<UserProfile>& profiles, TextEncoder& encoder) {
  if (profiles.empty()) throw DataError("encode_profiles requires at least one profile");
  std::vector<Vector> rows;
  EncodeResult out;
  for (const auto& p : profiles) {
    try {
      Vector v = encoder.encode(p.text);
      if (v.size() != encoder.output_dim()) throw ServiceError("encoder returned wrong dimension");
      if (!v.allFinite()) throw ServiceError("encoder returned non-finite values");
      rows.push_back(std::move(v));
      out.user_ids.push_back(p.user_id);
    } catch (const std::exception& e) {
      out.failed_users.push_back(p.user_id);
      out.failure_reasons.push_back(e.what());
    }
  }
  out.embeddings.resize(static_cast<Eigen::Index>(rows.size()), encoder.output_dim());
  for (std::size_t i = 0; i < rows.size(); ++i) out.embeddings.row(static_cast<Eigen::Index>(i)) = rows[i];
  return out;
}

}  // namespace seqdistill
