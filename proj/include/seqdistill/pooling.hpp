// Copyright 2026 The seqdistill Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "seqdistill/common.hpp"

namespace seqdistill {

enum class PoolingStrategy { mean, exp };

inline PoolingStrategy pooling_from_string(const std::string& s) {
  if (s == "mean") return PoolingStrategy::mean;
  if (s == "exp") return PoolingStrategy::exp;
  throw ConfigError("unknown pooling strategy: " + s);
}

inline std::string to_string(PoolingStrategy s) {
  return s == PoolingStrategy::mean ? "mean" : "exp";
}

struct PoolingConfig {
  PoolingStrategy strategy = PoolingStrategy::mean;
  double gamma = 0.0;  // recency emphasis, exp strategy only
};

struct PooledState {
  Vector vector;
};

// Position weights over the unmasked rows. Positions are renumbered
// t = 1..m over unmasked rows in order, so padding never shifts the
// weighting; weights are a softmax of gamma*t and sum to one.
inline std::vector<double> pooling_weights(const std::vector<bool>& mask, const PoolingConfig& cfg) {
  std::size_t m = 0;
  for (bool b : mask)
    if (b) ++m;
  if (m == 0) throw DataError("pooling requires at least one unmasked position");

  std::vector<double> weights(mask.size(), 0.0);
  if (cfg.strategy == PoolingStrategy::mean) {
    for (std::size_t p = 0; p < mask.size(); ++p)
      if (mask[p]) weights[p] = 1.0 / static_cast<double>(m);
    return weights;
  }

  if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma))
    throw ConfigError("exp pooling requires finite gamma >= 0");
  // softmax over gamma*t, t = 1..m; shift by the max exponent for stability
  const double max_exp = cfg.gamma * static_cast<double>(m);
  double denom = 0.0;
  std::size_t t = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    ++t;
    weights[p] = std::exp(cfg.gamma * static_cast<double>(t) - max_exp);
    denom += weights[p];
  }
  for (double& w : weights) w /= denom;
  return weights;
}

// states: positions x d; mask marks the real rows.
inline PooledState pool_states(const Matrix& states, const std::vector<bool>& mask,
                               const PoolingConfig& cfg) {
  if (static_cast<std::size_t>(states.rows()) != mask.size())
    throw DataError("pooling mask length must match state rows");
  const auto weights = pooling_weights(mask, cfg);
  Vector out = Vector::Zero(states.cols());
  for (Eigen::Index p = 0; p < states.rows(); ++p) {
    const double w = weights[static_cast<std::size_t>(p)];
    if (w != 0.0) out += w * states.row(p).transpose();
  }
  return PooledState{std::move(out)};
}

inline PooledState mean_pool(const Matrix& states, const std::vector<bool>& mask) {
  return pool_states(states, mask, PoolingConfig{PoolingStrategy::mean, 0.0});
}

inline PooledState exp_pool(const Matrix& states, const std::vector<bool>& mask, double gamma) {
  return pool_states(states, mask, PoolingConfig{PoolingStrategy::exp, gamma});
}

}  // namespace seqdistill
