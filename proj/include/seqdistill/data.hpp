// Copyright 2026 The seqdistill Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "seqdistill/common.hpp"

namespace seqdistill {

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
  std::optional<double> rating;
};

struct ItemMeta {
  // Named free-text fields (title, categories, description, genres, ...).
  // Absent fields are simply missing from the map.
  std::map<std::string, std::string> fields;
};

// Item universe with a dense index. Index 0 is reserved for padding; real
// items occupy 1..num_items. Indices are assigned by sorted item_id so the
// mapping is a pure function of the filtered records.
class Catalog {
 public:
  Catalog() = default;

  static Catalog build(const std::vector<InteractionRecord>& records,
                       const std::unordered_map<std::string, ItemMeta>& meta) {
    Catalog c;
    std::unordered_set<std::string> users;
    std::vector<std::string> ids;
    {
      std::unordered_set<std::string> seen;
      for (const auto& r : records) {
        users.insert(r.user_id);
        if (seen.insert(r.item_id).second) ids.push_back(r.item_id);
      }
    }
    std::sort(ids.begin(), ids.end());
    c.index_to_id_.reserve(ids.size() + 1);
    c.index_to_id_.push_back("");  // padding slot
    for (const auto& id : ids) {
      c.id_to_index_.emplace(id, static_cast<int>(c.index_to_id_.size()));
      c.index_to_id_.push_back(id);
      auto it = meta.find(id);
      c.items_.emplace(id, it != meta.end() ? it->second : ItemMeta{});
    }
    c.num_users_ = static_cast<int>(users.size());
    return c;
  }

  int num_items() const { return static_cast<int>(index_to_id_.size()) - 1; }
  int num_users() const { return num_users_; }

  int index_of(const std::string& item_id) const {
    auto it = id_to_index_.find(item_id);
    if (it == id_to_index_.end()) throw DataError("unknown item id: " + item_id);
    return it->second;
  }

  const std::string& id_of(int index) const {
    if (index < 1 || index > num_items()) throw DataError("item index out of range");
    return index_to_id_[static_cast<std::size_t>(index)];
  }

  bool has_meta(int index) const {
    return items_.count(id_of(index)) != 0;
  }

  const ItemMeta& meta_of(int index) const {
    auto it = items_.find(id_of(index));
    if (it == items_.end()) throw DataError("no metadata for item " + id_of(index));
    return it->second;
  }

  void set_meta(const std::string& item_id, ItemMeta m) { items_[item_id] = std::move(m); }

 private:
  std::unordered_map<std::string, int> id_to_index_;
  std::vector<std::string> index_to_id_;
  std::unordered_map<std::string, ItemMeta> items_;
  int num_users_ = 0;
};

struct SplitDataset {
  std::vector<InteractionRecord> train;
  std::vector<InteractionRecord> test;
  std::int64_t threshold = 0;  // train: ts < threshold, test: ts >= threshold
};

struct UserSequence {
  std::string user_id;
  std::vector<int> items;               // dense indices, oldest -> newest
  std::vector<std::int64_t> timestamps; // parallel to items
};

struct DatasetStats {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_interactions = 0;
  double avg_length = 0.0;
  double density = 0.0;
};

// Iterated removal until every surviving user and item has at least k
// interactions. Single passes do not guarantee the property, so this loops
// to the fixpoint; relative record order is preserved.
inline std::vector<InteractionRecord> k_core_filter(std::vector<InteractionRecord> records, int k) {
  if (k < 1) throw DataError("k_core_filter requires k >= 1");
  bool changed = true;
  while (changed && !records.empty()) {
    std::unordered_map<std::string, int> user_count, item_count;
    for (const auto& r : records) {
      ++user_count[r.user_id];
      ++item_count[r.item_id];
    }
    std::vector<InteractionRecord> kept;
    kept.reserve(records.size());
    for (auto& r : records) {
      if (user_count[r.user_id] >= k && item_count[r.item_id] >= k) kept.push_back(std::move(r));
    }
    changed = kept.size() != records.size();
    records = std::move(kept);
  }
  return records;
}

// Global temporal split: the threshold is the train_fraction-quantile of all
// timestamps; records strictly before it train, the rest test. Ties at the
// threshold land in test.
inline SplitDataset temporal_split(const std::vector<InteractionRecord>& records,
                                   double train_fraction = 0.8) {
  if (records.empty()) throw DataError("temporal_split requires records");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DataError("train_fraction must lie in (0, 1)");

  std::vector<std::int64_t> ts;
  ts.reserve(records.size());
  for (const auto& r : records) ts.push_back(r.timestamp);
  std::sort(ts.begin(), ts.end());

  const auto cut = static_cast<std::size_t>(train_fraction * static_cast<double>(ts.size()));
  const std::int64_t threshold = ts[std::min(cut, ts.size() - 1)];

  SplitDataset out;
  out.threshold = threshold;
  for (const auto& r : records) {
    (r.timestamp < threshold ? out.train : out.test).push_back(r);
  }
  if (out.train.empty() || out.test.empty())
    throw DataError("temporal_split: timestamps admit no valid threshold (unsplittable)");
  return out;
}

// Per-user chronological sequences from the train split, truncated to the
// most recent max_len interactions. Ties within a user are kept in input
// order (stable sort).
inline std::vector<UserSequence> build_sequences(const SplitDataset& split, const Catalog& catalog,
                                                 int max_len) {
  if (split.train.empty()) throw DataError("build_sequences requires a non-empty train split");
  if (max_len < 1) throw DataError("max_len must be positive");

  std::unordered_map<std::string, std::vector<std::size_t>> by_user;
  std::vector<std::string> order;  // first-appearance order, for determinism
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    auto [it, inserted] = by_user.try_emplace(split.train[i].user_id);
    if (inserted) order.push_back(split.train[i].user_id);
    it->second.push_back(i);
  }
  std::sort(order.begin(), order.end());

  std::vector<UserSequence> out;
  out.reserve(order.size());
  for (const auto& user : order) {
    auto& idxs = by_user[user];
    std::stable_sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
      return split.train[a].timestamp < split.train[b].timestamp;
    });
    const std::size_t m = idxs.size();
    const std::size_t start = m > static_cast<std::size_t>(max_len) ? m - static_cast<std::size_t>(max_len) : 0;
    UserSequence seq;
    seq.user_id = user;
    for (std::size_t j = start; j < m; ++j) {
      const auto& r = split.train[idxs[j]];
      seq.items.push_back(catalog.index_of(r.item_id));
      seq.timestamps.push_back(r.timestamp);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

inline DatasetStats dataset_stats(const std::vector<InteractionRecord>& records) {
  if (records.empty()) throw DataError("dataset_stats requires records");
  std::unordered_set<std::string> users, items;
  for (const auto& r : records) {
    users.insert(r.user_id);
    items.insert(r.item_id);
  }
  DatasetStats s;
  s.num_users = users.size();
  s.num_items = items.size();
  s.num_interactions = records.size();
  s.avg_length = static_cast<double>(s.num_interactions) / static_cast<double>(s.num_users);
  s.density = static_cast<double>(s.num_interactions) /
              (static_cast<double>(s.num_users) * static_cast<double>(s.num_items));
  return s;
}

// ---- file formats ----

struct ColumnMapping {
  std::string user = "user_id";
  std::string item = "item_id";
  std::string timestamp = "timestamp";
  std::string rating;  // empty: no rating column
};

struct LoadReport {
  std::vector<InteractionRecord> records;
  std::vector<std::string> malformed;  // "line N: why"
  std::size_t total_lines = 0;
};

// Delimiter-separated interactions with a header row. Malformed rows are
// collected with their line numbers rather than aborting the load.
inline LoadReport load_interactions(const std::string& path, const ColumnMapping& cols,
                                    char delim = '\t') {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open interactions file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("interactions file is empty: " + path);
  const auto header = split(trim(line), delim);
  auto col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int uc = col(cols.user), ic = col(cols.item), tc = col(cols.timestamp);
  const int rc = cols.rating.empty() ? -1 : col(cols.rating);
  if (uc < 0) throw ConfigError("interactions file missing column '" + cols.user + "'");
  if (ic < 0) throw ConfigError("interactions file missing column '" + cols.item + "'");
  if (tc < 0) throw ConfigError("interactions file missing column '" + cols.timestamp + "'");
  if (!cols.rating.empty() && rc < 0)
    throw ConfigError("interactions file missing column '" + cols.rating + "'");

  LoadReport report;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    ++report.total_lines;
    if (trim(line).empty()) continue;
    const auto fields = split(line, delim);
    const int maxcol = std::max({uc, ic, tc, rc});
    if (static_cast<int>(fields.size()) <= maxcol) {
      report.malformed.push_back("line " + std::to_string(lineno) + ": expected at least " +
                                 std::to_string(maxcol + 1) + " columns, got " +
                                 std::to_string(fields.size()));
      continue;
    }
    InteractionRecord r;
    r.user_id = trim(fields[static_cast<std::size_t>(uc)]);
    r.item_id = trim(fields[static_cast<std::size_t>(ic)]);
    if (r.user_id.empty() || r.item_id.empty()) {
      report.malformed.push_back("line " + std::to_string(lineno) + ": empty user or item id");
      continue;
    }
    try {
      r.timestamp = std::stoll(trim(fields[static_cast<std::size_t>(tc)]));
    } catch (const std::exception&) {
      report.malformed.push_back("line " + std::to_string(lineno) + ": bad timestamp '" +
                                 fields[static_cast<std::size_t>(tc)] + "'");
      continue;
    }
    if (r.timestamp < 0) {
      report.malformed.push_back("line " + std::to_string(lineno) + ": negative timestamp");
      continue;
    }
    if (rc >= 0) {
      const std::string raw = trim(fields[static_cast<std::size_t>(rc)]);
      if (!raw.empty()) {
        try {
          r.rating = std::stod(raw);
        } catch (const std::exception&) {
          report.malformed.push_back("line " + std::to_string(lineno) + ": bad rating '" + raw + "'");
          continue;
        }
      }
    }
    report.records.push_back(std::move(r));
  }
  return report;
}

// Item metadata: header row names the text columns; first column is the key.
inline std::unordered_map<std::string, ItemMeta> load_item_meta(const std::string& path,
                                                                const std::string& id_column,
                                                                char delim = '\t') {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open item metadata file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("item metadata file is empty: " + path);
  const auto header = split(trim(line), delim);
  int idc = -1;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == id_column) idc = static_cast<int>(i);
  if (idc < 0) throw ConfigError("item metadata missing column '" + id_column + "'");

  std::unordered_map<std::string, ItemMeta> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split(line, delim);
    if (static_cast<int>(fields.size()) <= idc) continue;
    ItemMeta meta;
    for (std::size_t i = 0; i < fields.size() && i < header.size(); ++i) {
      if (static_cast<int>(i) == idc) continue;
      const std::string value = trim(fields[i]);
      if (!value.empty()) meta.fields[header[i]] = value;
    }
    out[trim(fields[static_cast<std::size_t>(idc)])] = std::move(meta);
  }
  return out;
}

inline void save_interactions(const std::string& path, const std::vector<InteractionRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArtifactError("cannot write " + path);
  out << "user_id\titem_id\ttimestamp\trating\n";
  for (const auto& r : records) {
    out << r.user_id << '\t' << r.item_id << '\t' << r.timestamp << '\t'
        << (r.rating ? format_exact(*r.rating) : "") << '\n';
  }
}

// One user per line: user_id, comma-separated item indices, comma-separated
// timestamps.
inline void save_sequences(const std::string& path, const std::vector<UserSequence>& seqs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArtifactError("cannot write " + path);
  for (const auto& s : seqs) {
    out << s.user_id << '\t';
    for (std::size_t i = 0; i < s.items.size(); ++i) out << (i ? "," : "") << s.items[i];
    out << '\t';
    for (std::size_t i = 0; i < s.timestamps.size(); ++i) out << (i ? "," : "") << s.timestamps[i];
    out << '\n';
  }
}

inline std::vector<UserSequence> load_sequences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("cannot open sequences file: " + path);
  std::vector<UserSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3) throw ArtifactError("sequences file line " + std::to_string(lineno) + ": expected 3 fields");
    UserSequence s;
    s.user_id = fields[0];
    for (const auto& tok : split(fields[1], ',')) s.items.push_back(std::stoi(tok));
    for (const auto& tok : split(fields[2], ',')) s.timestamps.push_back(std::stoll(tok));
    if (s.items.size() != s.timestamps.size())
      throw ArtifactError("sequences file line " + std::to_string(lineno) + ": item/timestamp length mismatch");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace seqdistill
