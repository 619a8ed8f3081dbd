// Copyright 2026 The seqdistill Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "seqdistill/common.hpp"
#include "seqdistill/rng.hpp"

namespace seqdistill {

enum class ProjectionMethod { identity, pca, umap };

inline ProjectionMethod projection_method_from_string(const std::string& s) {
  if (s == "identity") return ProjectionMethod::identity;
  if (s == "pca") return ProjectionMethod::pca;
  if (s == "umap") return ProjectionMethod::umap;
  throw ConfigError("unknown projection method: " + s);
}

inline std::string to_string(ProjectionMethod m) {
  switch (m) {
    case ProjectionMethod::identity: return "identity";
    case ProjectionMethod::pca: return "pca";
    case ProjectionMethod::umap: return "umap";
  }
  return "?";
}

struct UmapParams {
  int neighbors = 15;
  double min_dist = 0.1;
  double spread = 1.0;
  std::string metric = "cosine";  // or "euclidean"
  int epochs = 500;
  int negative_samples = 5;
  double learning_rate = 1.0;
};

namespace detail {

// Least-squares fit of 1/(1 + a x^(2b)) to the target membership curve
// (1 below min_dist, exponential decay above). Gauss-Newton with damping.
inline void fit_curve_params(double min_dist, double spread, double& a, double& b) {
  constexpr int kGrid = 300;
  std::vector<double> xs(kGrid), ys(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    const double x = 3.0 * spread * (i + 1) / kGrid;
    xs[static_cast<std::size_t>(i)] = x;
    ys[static_cast<std::size_t>(i)] = x < min_dist ? 1.0 : std::exp(-(x - min_dist) / spread);
  }
  a = 1.0;
  b = 1.0;
  for (int iter = 0; iter < 200; ++iter) {
    double jaa = 0, jab = 0, jbb = 0, ga = 0, gb = 0;
    for (int i = 0; i < kGrid; ++i) {
      const double x = xs[static_cast<std::size_t>(i)];
      const double xb = std::pow(x, 2.0 * b);
      const double denom = 1.0 + a * xb;
      const double f = 1.0 / denom;
      const double r = f - ys[static_cast<std::size_t>(i)];
      const double dfda = -xb / (denom * denom);
      const double dfdb = -2.0 * a * xb * std::log(x) / (denom * denom);
      jaa += dfda * dfda;
      jab += dfda * dfdb;
      jbb += dfdb * dfdb;
      ga += dfda * r;
      gb += dfdb * r;
    }
    const double damp = 1e-6;
    const double det = (jaa + damp) * (jbb + damp) - jab * jab;
    if (std::abs(det) < 1e-18) break;
    const double da = (-ga * (jbb + damp) + gb * jab) / det;
    const double db = (-gb * (jaa + damp) + ga * jab) / det;
    a += da;
    b += db;
    a = std::max(a, 1e-3);
    b = std::clamp(b, 1e-3, 2.0);
    if (std::abs(da) + std::abs(db) < 1e-12) break;
  }
}

struct KnnGraph {
  // indices/dists: n x k, self excluded.
  std::vector<std::vector<int>> indices;
  std::vector<std::vector<double>> dists;
};

inline double row_distance(const Matrix& x, Eigen::Index i, Eigen::Index j, bool cosine) {
  if (cosine) return 1.0 - x.row(i).dot(x.row(j));  // rows pre-normalized
  return (x.row(i) - x.row(j)).norm();
}

inline KnnGraph brute_force_knn(const Matrix& x, int k, bool cosine) {
  const Eigen::Index n = x.rows();
  KnnGraph g;
  g.indices.resize(static_cast<std::size_t>(n));
  g.dists.resize(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> cand;
  for (Eigen::Index i = 0; i < n; ++i) {
    cand.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      cand.emplace_back(row_distance(x, i, j, cosine), static_cast<int>(j));
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    auto& idx = g.indices[static_cast<std::size_t>(i)];
    auto& dst = g.dists[static_cast<std::size_t>(i)];
    for (int t = 0; t < k; ++t) {
      idx.push_back(cand[static_cast<std::size_t>(t)].second);
      dst.push_back(cand[static_cast<std::size_t>(t)].first);
    }
  }
  return g;
}

}  // namespace detail

// Dimensionality reduction from encoder space into the recommender's hidden
// space. `identity` passes vectors through, `pca` is the deterministic
// fallback, `umap` is the default and preserves local neighborhoods.
class ProjectionModel {
 public:
  ProjectionMethod method() const { return method_; }
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  std::uint64_t seed() const { return seed_; }

  // Applies the fitted transformation; deterministic given fitted state.
  Matrix apply(const Matrix& x) const {
    if (x.cols() != input_dim_)
      throw DataError("projection expects dimension " + std::to_string(input_dim_) + ", got " +
                      std::to_string(x.cols()));
    switch (method_) {
      case ProjectionMethod::identity:
        return x;
      case ProjectionMethod::pca:
        return (x.rowwise() - mean_.transpose()) * components_;
      case ProjectionMethod::umap:
        return umap_transform(x);
    }
    throw DataError("unreachable");
  }

  static ProjectionModel fit_identity(int dim) {
    ProjectionModel m;
    m.method_ = ProjectionMethod::identity;
    m.input_dim_ = dim;
    m.output_dim_ = dim;
    return m;
  }

  static ProjectionModel fit_pca(const Matrix& x, int d) {
    validate_fit(x, d);
    ProjectionModel m;
    m.method_ = ProjectionMethod::pca;
    m.input_dim_ = static_cast<int>(x.cols());
    m.output_dim_ = d;
    m.mean_ = x.colwise().mean().transpose();
    const Matrix centered = x.rowwise() - m.mean_.transpose();
    const Matrix cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    if (solver.info() != Eigen::Success) throw DataError("pca eigendecomposition failed");
    // Eigenvalues ascend; take the top d columns, sign-fixed so the largest
    // loading is positive (stable across solver implementations).
    m.components_.resize(x.cols(), d);
    for (int c = 0; c < d; ++c) {
      Vector comp = solver.eigenvectors().col(x.cols() - 1 - c);
      Eigen::Index argmax = 0;
      comp.cwiseAbs().maxCoeff(&argmax);
      if (comp[argmax] < 0) comp = -comp;
      m.components_.col(c) = comp;
    }
    return m;
  }

  static ProjectionModel fit_umap(const Matrix& x, int d, std::uint64_t seed, UmapParams params = {}) {
    validate_fit(x, d);
    if (x.rows() < 4) throw DataError("umap requires at least 4 rows");
    ProjectionModel m;
    m.method_ = ProjectionMethod::umap;
    m.input_dim_ = static_cast<int>(x.cols());
    m.output_dim_ = d;
    m.seed_ = seed;
    m.umap_params_ = params;
    m.cosine_ = params.metric == "cosine";
    if (!m.cosine_ && params.metric != "euclidean")
      throw ConfigError("umap metric must be cosine or euclidean");

    const Eigen::Index n = x.rows();
    const int k = std::min(params.neighbors, static_cast<int>(n) - 1);

    // Keep the (normalized) training inputs for out-of-sample transform.
    m.train_inputs_ = x;
    if (m.cosine_) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = m.train_inputs_.row(i).norm();
        if (norm > 0) m.train_inputs_.row(i) /= norm;
      }
    }

    const auto knn = detail::brute_force_knn(m.train_inputs_, k, m.cosine_);

    // Per-point kernel calibration: rho is the nearest positive distance,
    // sigma solves sum_j exp(-(d_ij - rho_i)/sigma_i) = log2(k).
    std::vector<double> rho(static_cast<std::size_t>(n), 0.0);
    std::vector<double> sigma(static_cast<std::size_t>(n), 1.0);
    const double target = std::log2(static_cast<double>(k));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& dists = knn.dists[static_cast<std::size_t>(i)];
      double r = 0.0;
      for (double dv : dists) {
        if (dv > 0) {
          r = dv;
          break;
        }
      }
      rho[static_cast<std::size_t>(i)] = r;
      double lo = 1e-8, hi = 1e4;
      for (int it = 0; it < 64; ++it) {
        const double mid = 0.5 * (lo + hi);
        double sum = 0.0;
        for (double dv : dists) sum += std::exp(-std::max(0.0, dv - r) / mid);
        if (sum > target) hi = mid; else lo = mid;
      }
      sigma[static_cast<std::size_t>(i)] = 0.5 * (lo + hi);
    }

    // Symmetrized fuzzy graph: w = w1 + w2 - w1*w2 over directed edges.
    struct Edge { int a, b; double w; };
    std::vector<Edge> edges;
    {
      std::vector<std::vector<std::pair<int, double>>> directed(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int t = 0; t < k; ++t) {
          const int j = knn.indices[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
          const double dv = knn.dists[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
          const double w = std::exp(-std::max(0.0, dv - rho[static_cast<std::size_t>(i)]) /
                                    sigma[static_cast<std::size_t>(i)]);
          directed[static_cast<std::size_t>(i)].emplace_back(j, w);
        }
      }
      auto directed_weight = [&](int i, int j) {
        for (const auto& [jj, w] : directed[static_cast<std::size_t>(i)])
          if (jj == j) return w;
        return 0.0;
      };
      for (int i = 0; i < static_cast<int>(n); ++i) {
        for (const auto& [j, w1] : directed[static_cast<std::size_t>(i)]) {
          if (j < i && directed_weight(j, i) > 0) continue;  // already emitted from the other side
          const double w2 = directed_weight(j, i);
          edges.push_back({i, j, w1 + w2 - w1 * w2});
        }
      }
    }

    double a, b;
    detail::fit_curve_params(params.min_dist, params.spread, a, b);
    m.curve_a_ = a;
    m.curve_b_ = b;

    // Deterministic PCA init scaled into a 10-unit box.
    m.embedding_ = fit_pca(x, d).apply(x);
    const double extent = m.embedding_.cwiseAbs().maxCoeff();
    if (extent > 0) m.embedding_ *= 10.0 / extent;

    // Edge sampling schedule: high-weight edges move every epoch, low-weight
    // edges proportionally less often.
    double w_max = 0.0;
    for (const auto& e : edges) w_max = std::max(w_max, e.w);
    std::vector<double> next_sample(edges.size());
    std::vector<double> every(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      every[e] = edges[e].w > 0 ? w_max / edges[e].w : std::numeric_limits<double>::infinity();
      next_sample[e] = every[e];
    }

    Rng rng(seed);
    auto clip4 = [](double v) { return std::clamp(v, -4.0, 4.0); };
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
      const double alpha = params.learning_rate * (1.0 - static_cast<double>(epoch) / params.epochs);
      for (std::size_t e = 0; e < edges.size(); ++e) {
        if (next_sample[e] > epoch + 1) continue;
        next_sample[e] += every[e];
        const int i = edges[e].a, j = edges[e].b;
        {
          const double dist2 = (m.embedding_.row(i) - m.embedding_.row(j)).squaredNorm();
          double coeff = 0.0;
          if (dist2 > 0) {
            coeff = (-2.0 * a * b * std::pow(dist2, b - 1.0)) / (1.0 + a * std::pow(dist2, b));
          }
          for (int c = 0; c < d; ++c) {
            const double g = clip4(coeff * (m.embedding_(i, c) - m.embedding_(j, c)));
            m.embedding_(i, c) += alpha * g;
            m.embedding_(j, c) -= alpha * g;
          }
        }
        for (int neg = 0; neg < params.negative_samples; ++neg) {
          const int t = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
          if (t == i) continue;
          const double dist2 = (m.embedding_.row(i) - m.embedding_.row(t)).squaredNorm();
          double coeff;
          if (dist2 > 0) {
            coeff = (2.0 * b) / ((0.001 + dist2) * (1.0 + a * std::pow(dist2, b)));
          } else {
            coeff = 0.0;
          }
          for (int c = 0; c < d; ++c) {
            const double raw = coeff > 0 ? clip4(coeff * (m.embedding_(i, c) - m.embedding_(t, c))) : 4.0;
            m.embedding_(i, c) += alpha * raw;
          }
        }
      }
    }
    return m;
  }

  // Fitted low-dimensional coordinates of the training rows (umap only).
  const Matrix& fitted_embedding() const {
    if (method_ != ProjectionMethod::umap) throw DataError("fitted_embedding is umap-only");
    return embedding_;
  }

 private:
  static void validate_fit(const Matrix& x, int d) {
    if (d < 1) throw ConfigError("projection output dimension must be positive");
    if (d >= x.cols())
      throw DataError("projection output dimension " + std::to_string(d) +
                      " must be below input dimension " + std::to_string(x.cols()));
    if (x.rows() <= d)
      throw DataError("projection fit needs more rows than output dimensions (got " +
                      std::to_string(x.rows()) + " rows for d=" + std::to_string(d) + ")");
    if (!x.allFinite()) throw DataError("projection fit input contains non-finite values");
  }

  // Out-of-sample mapping for umap: inverse-distance weighted average of the
  // nearest training rows' fitted coordinates. In-sample rows are dominated
  // by their own zero-distance term.
  Matrix umap_transform(const Matrix& x) const {
    const int k = std::min(umap_params_.neighbors, static_cast<int>(train_inputs_.rows()));
    Matrix q = x;
    if (cosine_) {
      for (Eigen::Index i = 0; i < q.rows(); ++i) {
        const double norm = q.row(i).norm();
        if (norm > 0) q.row(i) /= norm;
      }
    }
    Matrix out(x.rows(), output_dim_);
    std::vector<std::pair<double, int>> cand(static_cast<std::size_t>(train_inputs_.rows()));
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      for (Eigen::Index j = 0; j < train_inputs_.rows(); ++j) {
        const double dist = cosine_ ? 1.0 - q.row(i).dot(train_inputs_.row(j))
                                    : (q.row(i) - train_inputs_.row(j)).norm();
        cand[static_cast<std::size_t>(j)] = {dist, static_cast<int>(j)};
      }
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
      double total = 0.0;
      Vector acc = Vector::Zero(output_dim_);
      for (int t = 0; t < k; ++t) {
        const double w = 1.0 / (1e-8 + std::max(0.0, cand[static_cast<std::size_t>(t)].first));
        acc += w * embedding_.row(cand[static_cast<std::size_t>(t)].second).transpose();
        total += w;
      }
      out.row(i) = (acc / total).transpose();
    }
    return out;
  }

  ProjectionMethod method_ = ProjectionMethod::identity;
  int input_dim_ = 0;
  int output_dim_ = 0;
  std::uint64_t seed_ = 0;
  // pca state
  Vector mean_;
  Matrix components_;
  // umap state
  UmapParams umap_params_;
  bool cosine_ = true;
  double curve_a_ = 1.0;
  double curve_b_ = 1.0;
  Matrix train_inputs_;
  Matrix embedding_;
};

// Fits the requested method; `d` must equal the recommender hidden size.
inline ProjectionModel fit_projection(const Matrix& embeddings, int d, ProjectionMethod method,
                                      std::uint64_t seed, const UmapParams& params = {}) {
  switch (method) {
    case ProjectionMethod::identity:
      if (d != embeddings.cols())
        throw DataError("identity projection requires input_dim == output_dim");
      return ProjectionModel::fit_identity(d);
    case ProjectionMethod::pca:
      return ProjectionModel::fit_pca(embeddings, d);
    case ProjectionMethod::umap:
      return ProjectionModel::fit_umap(embeddings, d, seed, params);
  }
  throw ConfigError("unknown projection method");
}

inline Matrix project(const ProjectionModel& model, const Matrix& embeddings) {
  return model.apply(embeddings);
}

}  // namespace seqdistill
