// Copyright 2026 The seqdistill Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqdistill/common.hpp"
#include "seqdistill/digest.hpp"

namespace seqdistill {

struct ProfileTarget {
  std::string user_id;
  Vector vector;
  bool frozen = true;
};

// Frozen per-user distillation targets.
//
// On disk:
//   <base>.bin    "SQDTGT1\0" magic, u32 rows, u32 dim, then rows*dim
//                 little-endian float32 values in row-major order.
//   <base>.idx    one line per row: user_id <TAB> row_number.
//   <base>.digest hex SHA-256 over the .bin and .idx bytes.
//
// Targets are written once and never mutated; the digest is how training
// runs prove the store stayed frozen.
class TargetStore {
 public:
  TargetStore() = default;

  TargetStore(std::vector<std::string> user_ids, Matrix vectors)
      : user_ids_(std::move(user_ids)), vectors_(std::move(vectors)) {
    if (static_cast<Eigen::Index>(user_ids_.size()) != vectors_.rows())
      throw DataError("target store: one user id per row required");
    if (!vectors_.allFinite()) throw DataError("target store: non-finite target vector");
    for (std::size_t i = 0; i < user_ids_.size(); ++i) {
      if (!row_of_.emplace(user_ids_[i], i).second)
        throw DataError("target store: duplicate user id " + user_ids_[i]);
    }
  }

  int dim() const { return static_cast<int>(vectors_.cols()); }
  std::size_t size() const { return user_ids_.size(); }
  const std::vector<std::string>& user_ids() const { return user_ids_; }

  bool contains(const std::string& user_id) const { return row_of_.count(user_id) != 0; }

  std::optional<Vector> lookup(const std::string& user_id) const {
    auto it = row_of_.find(user_id);
    if (it == row_of_.end()) return std::nullopt;
    return Vector(vectors_.row(static_cast<Eigen::Index>(it->second)).transpose());
  }

  ProfileTarget target(const std::string& user_id) const {
    auto v = lookup(user_id);
    if (!v) throw DataError("no target for user " + user_id);
    return ProfileTarget{user_id, std::move(*v), true};
  }

  void save(const std::string& base_path) const {
    std::string bin;
    bin.reserve(16 + user_ids_.size() * static_cast<std::size_t>(vectors_.cols()) * 4);
    bin += "SQDTGT1";
    bin.push_back('\0');
    put_u32(bin, static_cast<std::uint32_t>(vectors_.rows()));
    put_u32(bin, static_cast<std::uint32_t>(vectors_.cols()));
    for (Eigen::Index r = 0; r < vectors_.rows(); ++r)
      for (Eigen::Index c = 0; c < vectors_.cols(); ++c)
        put_f32(bin, static_cast<float>(vectors_(r, c)));

    std::string idx;
    for (std::size_t i = 0; i < user_ids_.size(); ++i)
      idx += user_ids_[i] + "\t" + std::to_string(i) + "\n";

    write_file(base_path + ".bin", bin);
    write_file(base_path + ".idx", idx);
    Sha256 h;
    h.update(bin);
    h.update(idx);
    write_file(base_path + ".digest", to_hex(h.finish()) + "\n");
  }

  static TargetStore load(const std::string& base_path) {
    const std::string bin = read_file(base_path + ".bin");
    ByteReader reader(bin);
    if (reader.bytes(8) != std::string("SQDTGT1\0", 8))
      throw ArtifactError("target store has wrong magic: " + base_path + ".bin");
    const std::uint32_t rows = reader.u32();
    const std::uint32_t dim = reader.u32();
    Matrix vectors(rows, dim);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < dim; ++c) vectors(r, c) = static_cast<double>(reader.f32());
    if (!reader.done()) throw ArtifactError("target store has trailing bytes: " + base_path + ".bin");

    std::vector<std::string> ids(rows);
    {
      std::ifstream in(base_path + ".idx");
      if (!in) throw ArtifactError("missing target index: " + base_path + ".idx");
      std::string line;
      std::size_t seen = 0;
      while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split(line, '\t');
        if (fields.size() != 2) throw ArtifactError("bad target index line: " + line);
        const auto row = static_cast<std::size_t>(std::stoul(fields[1]));
        if (row >= rows) throw ArtifactError("target index row out of range: " + line);
        ids[row] = fields[0];
        ++seen;
      }
      if (seen != rows) throw ArtifactError("target index row count mismatch");
    }
    return TargetStore(std::move(ids), std::move(vectors));
  }

  // Digest over the persisted bytes; used by the frozen-target invariant.
  static std::string stored_digest(const std::string& base_path) {
    const std::string bin = read_file(base_path + ".bin");
    const std::string idx = read_file(base_path + ".idx");
    Sha256 h;
    h.update(bin);
    h.update(idx);
    return to_hex(h.finish());
  }

  static std::string recorded_digest(const std::string& base_path) {
    return trim(read_file(base_path + ".digest"));
  }

 private:
  static void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot write " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
  }

  static std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
  }

  std::vector<std::string> user_ids_;
  Matrix vectors_;
  std::unordered_map<std::string, std::size_t> row_of_;
};

}  // namespace seqdistill
