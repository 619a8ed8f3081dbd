// Copyright 2026 The seqdistill Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seqdistill/common.hpp"
#include "seqdistill/data.hpp"
#include "seqdistill/digest.hpp"

namespace seqdistill {

// Five-part instruction scaffold for profile generation. Block wording is
// fixed at construction; "{rating_threshold}" inside a block is substituted
// at render time.
class PromptTemplate {
 public:
  PromptTemplate(std::string domain_name, std::vector<std::string> instruction_blocks,
                 std::vector<std::string> metadata_fields, std::optional<double> rating_threshold)
      : domain_name_(std::move(domain_name)),
        blocks_(std::move(instruction_blocks)),
        metadata_fields_(std::move(metadata_fields)),
        rating_threshold_(rating_threshold) {
    if (blocks_.size() != 5) throw ConfigError("prompt template requires exactly 5 instruction blocks");
    for (const auto& b : blocks_)
      if (trim(b).empty()) throw ConfigError("prompt template instruction blocks must be non-empty");
  }

  // Default wording; blocks 3-4 fall back to interaction frequency when the
  // dataset carries no ratings.
  static PromptTemplate standard(std::string domain_name, std::vector<std::string> metadata_fields,
                                 std::optional<double> rating_threshold) {
    std::vector<std::string> blocks;
    blocks.push_back("Review the interaction history above and describe how this user's interests in " +
                     domain_name + " have developed over time.");
    blocks.push_back("Analyze which kinds of items the user returns to repeatedly and which appear only once.");
    blocks.push_back("Identify the user's key preferences and the recurring patterns across the listed items.");
    if (rating_threshold) {
      blocks.push_back(
          "Distinguish the items the user rated at or above {rating_threshold} from those rated below it, "
          "and state what separates the two groups.");
    } else {
      blocks.push_back(
          "Distinguish the items the user interacted with frequently from those they rarely engaged with, "
          "and state what separates the two groups.");
    }
    blocks.push_back(
        "Synthesize an overall characterization of this user, including what they would likely "
        "appreciate in future recommendations.");
    return PromptTemplate(std::move(domain_name), std::move(blocks), std::move(metadata_fields),
                          rating_threshold);
  }

  const std::string& domain_name() const { return domain_name_; }
  const std::vector<std::string>& instruction_blocks() const { return blocks_; }
  const std::vector<std::string>& metadata_fields() const { return metadata_fields_; }
  std::optional<double> rating_threshold() const { return rating_threshold_; }

 private:
  std::string domain_name_;
  std::vector<std::string> blocks_;
  std::vector<std::string> metadata_fields_;
  std::optional<double> rating_threshold_;
};

// One text block per interaction, chronological, restricted to the
// template's metadata fields. Missing fields are omitted entirely.
inline std::string aggregate_metadata(const UserSequence& sequence, const Catalog& catalog,
                                      const PromptTemplate& tmpl) {
  if (sequence.items.empty()) throw DataError("aggregate_metadata: empty sequence");
  std::string doc;
  for (std::size_t i = 0; i < sequence.items.size(); ++i) {
    const int idx = sequence.items[i];
    if (!catalog.has_meta(idx))
      throw DataError("aggregate_metadata: no catalog entry for item index " + std::to_string(idx));
    const ItemMeta& meta = catalog.meta_of(idx);
    std::string block = std::to_string(i + 1) + ".";
    bool any = false;
    for (const auto& field : tmpl.metadata_fields()) {
      auto it = meta.fields.find(field);
      if (it == meta.fields.end()) continue;
      block += any ? " | " : " ";
      block += field + ": " + it->second;
      any = true;
    }
    if (!any) block += " item: " + catalog.id_of(idx);
    doc += block + "\n";
  }
  return doc;
}

// Header + interaction document + the five numbered instruction blocks.
// Byte-deterministic: identical inputs give identical bytes on every
// platform, so the prompt digest is a stable cache key.
inline std::string render_prompt(const std::string& document, const PromptTemplate& tmpl) {
  if (trim(document).empty()) throw DataError("render_prompt: empty document");
  std::string prompt = "You are building a user profile for a " + tmpl.domain_name() +
                       " recommendation service.\n"
                       "Below is the user's interaction history, oldest first:\n\n";
  prompt += document;
  prompt += "\nInstructions:\n";
  for (std::size_t i = 0; i < tmpl.instruction_blocks().size(); ++i) {
    std::string block = tmpl.instruction_blocks()[i];
    const std::string placeholder = "{rating_threshold}";
    const auto pos = block.find(placeholder);
    if (pos != std::string::npos) {
      if (!tmpl.rating_threshold())
        throw ConfigError("instruction block references {rating_threshold} but the template has none");
      block.replace(pos, placeholder.size(), format_double(*tmpl.rating_threshold(), 1));
    }
    prompt += std::to_string(i + 1) + ". " + block + "\n";
  }
  prompt += "\nWrite one numbered paragraph per instruction.\n";
  return prompt;
}

inline std::string prompt_hash(const std::string& prompt) { return sha256_hex(prompt); }

}  // namespace seqdistill
