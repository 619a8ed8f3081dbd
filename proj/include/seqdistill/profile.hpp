// Copyright 2026 The seqdistill Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "seqdistill/common.hpp"
#include "seqdistill/digest.hpp"
#include "seqdistill/rng.hpp"

namespace seqdistill {

struct UserProfile {
  std::string user_id;
  std::string text;
  std::string prompt_hash;
  std::string generator_id;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string generator_id() const = 0;
  // Returns the completion text; throws ServiceError on failure.
  virtual std::string complete(const std::string& prompt) = 0;
};

// Deterministic stand-in for the real endpoint: emits a five-section profile
// whose wording is seeded by the prompt digest. Identical prompts give
// identical profiles on every machine.
class MockLlmClient : public LlmClient {
 public:
  std::string generator_id() const override { return "mock-llm-v1"; }

  std::string complete(const std::string& prompt) override {
    static const char* focus[] = {"niche",      "mainstream", "recent",   "classic",
                                  "varied",     "specialized", "seasonal", "premium"};
    static const char* tone[] = {"enthusiastic", "selective", "exploratory", "habitual",
                                 "critical",     "loyal",     "curious",     "pragmatic"};
    const std::string digest = sha256_hex(prompt);
    Rng rng(digest_seed(prompt));
    std::string out;
    out += "1. This user shows a " + std::string(focus[rng.index(8)]) +
           " interaction pattern that has shifted over time (profile " + digest.substr(0, 8) + ").\n";
    out += "2. They return repeatedly to a core group of items while sampling " +
           std::string(focus[rng.index(8)]) + " alternatives once.\n";
    out += "3. Key preferences cluster around " + std::string(focus[rng.index(8)]) +
           " picks consumed in a " + std::string(tone[rng.index(8)]) + " way.\n";
    out += "4. Favored items differ from the rest mainly in being " + std::string(focus[rng.index(8)]) +
           ".\n";
    out += "5. Overall, a " + std::string(tone[rng.index(8)]) +
           " user who would appreciate recommendations aligned with the patterns above.\n";
    return out;
  }
};

// Line-delimited JSON cache of generated profiles, keyed by user id.
// A cached entry is reused only when both the prompt hash and the generator
// id still match. Appends are serialized; this is the single synchronization
// point for concurrent generation.
class ProfileCache {
 public:
  explicit ProfileCache(std::string path) : path_(std::move(path)) { load(); }

  std::optional<UserProfile> lookup(const std::string& user_id, const std::string& prompt_hash,
                                    const std::string& generator_id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(user_id);
    if (it == entries_.end()) return std::nullopt;
    if (it->second.prompt_hash != prompt_hash || it->second.generator_id != generator_id)
      return std::nullopt;
    return it->second;
  }

  void store(const UserProfile& profile) {
    std::lock_guard<std::mutex> lock(mutex_);
    entries_[profile.user_id] = profile;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw ArtifactError("cannot append to profile cache: " + path_);
    nlohmann::json j{{"user_id", profile.user_id},
                     {"prompt_hash", profile.prompt_hash},
                     {"generator_id", profile.generator_id},
                     {"text", profile.text}};
    out << j.dump() << '\n';
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
  }

 private:
  void load() {
    std::ifstream in(path_);
    if (!in) return;  // fresh cache
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) continue;  // tolerate a torn final line from a killed run
      UserProfile p;
      p.user_id = j.value("user_id", "");
      p.prompt_hash = j.value("prompt_hash", "");
      p.generator_id = j.value("generator_id", "");
      p.text = j.value("text", "");
      if (!p.user_id.empty() && !p.text.empty()) entries_[p.user_id] = std::move(p);
    }
  }

  std::string path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, UserProfile> entries_;
};

struct PromptRequest {
  std::string user_id;
  std::string prompt;
};

struct GenerationOptions {
  int parallelism = 4;
  int max_retries = 3;
  int backoff_ms = 100;  // doubled per retry
};

struct GenerationResult {
  std::vector<UserProfile> profiles;           // input order, failures omitted
  std::vector<std::string> failed_users;       // recorded, never aborts the batch
  std::vector<std::string> failure_reasons;    // parallel to failed_users
  std::size_t client_calls = 0;
  std::size_t cache_hits = 0;
};

// Generates or retrieves one profile per prompt. Cached entries cost no
// client call, so rerunning after a partial failure only issues the missing
// requests. Per-user failures are recorded and skipped.
inline GenerationResult generate_profiles(const std::vector<PromptRequest>& prompts,
                                          LlmClient& client, ProfileCache& cache,
                                          const GenerationOptions& opts = {}) {
  GenerationResult result;
  const std::string gen_id = client.generator_id();

  struct Slot {
    std::optional<UserProfile> profile;
    std::string error;
    bool from_cache = false;
  };
  std::vector<Slot> slots(prompts.size());
  std::vector<std::size_t> pending;

  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const std::string hash = sha256_hex(prompts[i].prompt);
    if (auto hit = cache.lookup(prompts[i].user_id, hash, gen_id)) {
      slots[i].profile = std::move(*hit);
      slots[i].from_cache = true;
    } else {
      pending.push_back(i);
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> calls{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t slot_idx = next.fetch_add(1);
      if (slot_idx >= pending.size()) return;
      const std::size_t i = pending[slot_idx];
      const auto& req = prompts[i];
      std::string error;
      for (int attempt = 0; attempt <= opts.max_retries; ++attempt) {
        if (attempt > 0) {
          std::this_thread::sleep_for(std::chrono::milliseconds(opts.backoff_ms << (attempt - 1)));
        }
        try {
          calls.fetch_add(1);
          std::string text = client.complete(req.prompt);
          if (trim(text).empty()) throw ServiceError("empty completion");
          UserProfile p;
          p.user_id = req.user_id;
          p.text = std::move(text);
          p.prompt_hash = sha256_hex(req.prompt);
          p.generator_id = gen_id;
          cache.store(p);
          slots[i].profile = std::move(p);
          error.clear();
          break;
        } catch (const std::exception& e) {
          error = e.what();
        }
      }
      if (!slots[i].profile) slots[i].error = error.empty() ? "generation failed" : error;
    }
  };

  const int workers = std::max(1, std::min<int>(opts.parallelism, static_cast<int>(pending.size())));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  result.client_calls = calls.load();
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (slots[i].profile) {
      if (slots[i].from_cache) ++result.cache_hits;
      result.profiles.push_back(std::move(*slots[i].profile));
    } else {
      result.failed_users.push_back(prompts[i].user_id);
      result.failure_reasons.push_back(slots[i].error);
    }
  }
  return result;
}

}  // namespace seqdistill
