// Copyright 2026 The seqdistill Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "seqdistill/common.hpp"
#include "seqdistill/data.hpp"
#include "seqdistill/rng.hpp"

namespace seqdistill {

enum class Architecture { causal, masked };

inline Architecture architecture_from_string(const std::string& s) {
  if (s == "causal") return Architecture::causal;
  if (s == "masked") return Architecture::masked;
  throw ConfigError("unknown architecture: " + s);
}

inline std::string to_string(Architecture a) {
  return a == Architecture::causal ? "causal" : "masked";
}

struct ModelConfig {
  Architecture architecture = Architecture::causal;
  int hidden_dim = 64;
  int num_layers = 2;
  int num_heads = 2;
  double dropout = 0.2;
  int max_len = 50;
  int num_items = 0;       // M; dense item indices are 1..M, 0 pads
  double mask_prob = 0.2;  // masked variant: training-time mask rate

  // Padding is id 0; the masked variant appends one mask token after the
  // item range.
  int vocab_size() const {
    return num_items + 1 + (architecture == Architecture::masked ? 1 : 0);
  }
  int mask_token() const {
    if (architecture != Architecture::masked) throw ConfigError("mask token is masked-variant only");
    return num_items + 1;
  }

  void validate() const {
    if (hidden_dim < 1 || num_layers < 1 || num_heads < 1 || max_len < 1)
      throw ConfigError("model dimensions must be positive");
    if (hidden_dim % num_heads != 0) throw ConfigError("hidden_dim must be divisible by num_heads");
    if (num_items < 1) throw ConfigError("model needs at least one item");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(mask_prob > 0.0 && mask_prob <= 1.0) && architecture == Architecture::masked)
      throw ConfigError("mask_prob must lie in (0, 1]");
  }
};

// A padded batch. Sequences are right-padded with id 0; `real[b][p]` marks
// genuine positions. Every row must contain at least one real position.
struct Batch {
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ids;  // B x L
  std::vector<std::vector<bool>> real;
  std::vector<int> lengths;

  int size() const { return static_cast<int>(ids.rows()); }
  int positions() const { return static_cast<int>(ids.cols()); }
};

inline Batch make_batch(const std::vector<const UserSequence*>& seqs, const ModelConfig& cfg) {
  const int L = cfg.max_len;
  Batch b;
  b.ids.setZero(static_cast<Eigen::Index>(seqs.size()), L);
  b.real.assign(seqs.size(), std::vector<bool>(static_cast<std::size_t>(L), false));
  b.lengths.resize(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = *seqs[i];
    if (s.items.empty()) throw DataError("batch row " + std::to_string(i) + " would be all padding");
    if (static_cast<int>(s.items.size()) > L)
      throw DataError("sequence longer than max_len for user " + s.user_id);
    for (std::size_t p = 0; p < s.items.size(); ++p) {
      const int id = s.items[p];
      if (id < 1 || id > cfg.num_items)
        throw DataError("item index " + std::to_string(id) + " out of range for user " + s.user_id);
      b.ids(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = id;
      b.real[i][p] = true;
    }
    b.lengths[i] = static_cast<int>(s.items.size());
  }
  return b;
}

// Per-layer states for a forward pass, stacked (B*L) x d per layer, with the
// real-position mask alongside.
struct LayerHiddenStates {
  std::vector<Matrix> states;  // index k-1 holds the output of block k
  std::vector<std::vector<bool>> mask;
  int batch = 0;
  int positions = 0;

  // View of layer k (1-based) for batch row b: L x d.
  Eigen::Block<const Matrix> layer_row(int k, int b) const {
    const auto& s = states.at(static_cast<std::size_t>(k - 1));
    return s.middleRows(static_cast<Eigen::Index>(b) * positions, positions);
  }
};

struct ForwardResult {
  Matrix logits;  // (B*L) x V
  LayerHiddenStates hidden;
};

namespace detail {

struct LnCache {
  Matrix x_hat;     // normalized input
  Vector inv_std;   // per row
};

struct LayerCache {
  Matrix x_in;
  LnCache ln1;
  Matrix a_in;
  Matrix q, k, v;
  std::vector<Matrix> attn_p;  // (b * heads + h) -> L x L attention weights
  Matrix attn_concat;
  Matrix attn_drop;
  Matrix x_mid;
  LnCache ln2;
  Matrix f_in;
  Matrix f_pre;
  Matrix f_mid;
  Matrix ffn_drop;
};

struct ForwardCache {
  Matrix x0;        // embedding sum, pre dropout
  Matrix emb_drop;  // dropout multipliers at the embedding site
  std::vector<LayerCache> layers;
  LnCache lnf;
  Matrix xf;
};

}  // namespace detail

// Transformer sequential recommender with two attention variants: causal
// (next-item, left-to-right) and masked (bidirectional with a mask token).
// Pre-norm blocks, learned positional embeddings, untied output head.
// Parameters live in one flat array so the optimizer, gradient clipping and
// checkpointing all see a single contiguous view.
class TransformerModel {
 public:
  explicit TransformerModel(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    layout();
    params_.assign(total_params_, 0.0);
    grads_.assign(total_params_, 0.0);
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& grads() { return grads_; }
  std::size_t num_params() const { return total_params_; }

  void zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

  void init_params(std::uint64_t seed) {
    Rng rng(seed);
    for (double& p : params_) p = rng.normal(0.0, 0.02);
    // layer-norm gains start at one, all biases and the pad embedding at zero
    for (int l = 0; l < cfg_.num_layers; ++l) {
      view(off_.ln1_g[l], 1, d()).setOnes();
      view(off_.ln1_b[l], 1, d()).setZero();
      view(off_.ln2_g[l], 1, d()).setOnes();
      view(off_.ln2_b[l], 1, d()).setZero();
      view(off_.bq[l], 1, d()).setZero();
      view(off_.bk[l], 1, d()).setZero();
      view(off_.bv[l], 1, d()).setZero();
      view(off_.bo[l], 1, d()).setZero();
      view(off_.b1[l], 1, 4 * d()).setZero();
      view(off_.b2[l], 1, d()).setZero();
    }
    view(off_.lnf_g, 1, d()).setOnes();
    view(off_.lnf_b, 1, d()).setZero();
    view(off_.bout, 1, vocab()).setZero();
    view(off_.item_emb, vocab(), d()).row(0).setZero();
  }

  // Inference-mode forward: no dropout, no cache. Deterministic given
  // weights.
  ForwardResult forward(const Batch& batch) const {
    detail::ForwardCache cache;
    Rng unused(0);
    return run_forward(batch, /*training=*/false, unused, cache);
  }

  ForwardResult forward_train(const Batch& batch, Rng& dropout_rng, detail::ForwardCache& cache) {
    return run_forward(batch, /*training=*/true, dropout_rng, cache);
  }

  // Accumulates parameter gradients. `dlogits` is the loss gradient at the
  // output head; `extra_state_grads` adds gradient mass directly at a given
  // block's output (how the pooled distillation path enters).
  void backward(const Batch& batch, const detail::ForwardCache& cache, const Matrix& dlogits,
                const std::vector<std::pair<int, Matrix>>& extra_state_grads = {}) {
    const int B = batch.size(), L = batch.positions();
    const int dh = d() / cfg_.num_heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    auto w_out = view(off_.w_out, d(), vocab());
    Matrix dxf = dlogits * w_out.transpose();
    grad_view(off_.w_out, d(), vocab()).noalias() += cache.xf.transpose() * dlogits;
    grad_view(off_.bout, 1, vocab()).noalias() += dlogits.colwise().sum();

    Matrix dx = ln_backward(cache.lnf, dxf, off_.lnf_g, off_.lnf_b);

    for (int l = cfg_.num_layers - 1; l >= 0; --l) {
      const auto& lc = cache.layers[static_cast<std::size_t>(l)];
      for (const auto& [layer_k, g] : extra_state_grads) {
        if (layer_k == l + 1) dx += g;
      }

      // feed-forward sublayer
      Matrix dffn = dx.cwiseProduct(lc.ffn_drop);
      auto w2 = view(off_.w2[l], 4 * d(), d());
      Matrix df_mid = dffn * w2.transpose();
      grad_view(off_.w2[l], 4 * d(), d()).noalias() += lc.f_mid.transpose() * dffn;
      grad_view(off_.b2[l], 1, d()).noalias() += dffn.colwise().sum();
      Matrix df_pre = df_mid.cwiseProduct((lc.f_pre.array() > 0.0).cast<double>().matrix());
      auto w1 = view(off_.w1[l], d(), 4 * d());
      Matrix df_in = df_pre * w1.transpose();
      grad_view(off_.w1[l], d(), 4 * d()).noalias() += lc.f_in.transpose() * df_pre;
      grad_view(off_.b1[l], 1, 4 * d()).noalias() += df_pre.colwise().sum();
      dx += ln_backward(lc.ln2, df_in, off_.ln2_g[l], off_.ln2_b[l]);

      // attention sublayer
      Matrix dattn_proj = dx.cwiseProduct(lc.attn_drop);
      auto wo = view(off_.wo[l], d(), d());
      Matrix dconcat = dattn_proj * wo.transpose();
      grad_view(off_.wo[l], d(), d()).noalias() += lc.attn_concat.transpose() * dattn_proj;
      grad_view(off_.bo[l], 1, d()).noalias() += dattn_proj.colwise().sum();

      Matrix dq = Matrix::Zero(static_cast<Eigen::Index>(B) * L, d());
      Matrix dk = Matrix::Zero(static_cast<Eigen::Index>(B) * L, d());
      Matrix dv = Matrix::Zero(static_cast<Eigen::Index>(B) * L, d());
      for (int b = 0; b < B; ++b) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(b) * L;
        for (int h = 0; h < cfg_.num_heads; ++h) {
          const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
          const Matrix& p = lc.attn_p[static_cast<std::size_t>(b) * cfg_.num_heads +
                                      static_cast<std::size_t>(h)];
          auto d_ctx = dconcat.block(r0, c0, L, dh);
          auto q_b = lc.q.block(r0, c0, L, dh);
          auto k_b = lc.k.block(r0, c0, L, dh);
          auto v_b = lc.v.block(r0, c0, L, dh);
          Matrix dp = d_ctx * v_b.transpose();
          dv.block(r0, c0, L, dh).noalias() += p.transpose() * d_ctx;
          Matrix tmp = p.cwiseProduct(dp);
          Vector row_sums = tmp.rowwise().sum();
          Matrix ds = tmp - (p.array().colwise() * row_sums.array()).matrix();
          dq.block(r0, c0, L, dh).noalias() += ds * k_b * inv_sqrt_dh;
          dk.block(r0, c0, L, dh).noalias() += ds.transpose() * q_b * inv_sqrt_dh;
        }
      }

      auto wq = view(off_.wq[l], d(), d());
      auto wk = view(off_.wk[l], d(), d());
      auto wv = view(off_.wv[l], d(), d());
      Matrix da = dq * wq.transpose() + dk * wk.transpose() + dv * wv.transpose();
      grad_view(off_.wq[l], d(), d()).noalias() += lc.a_in.transpose() * dq;
      grad_view(off_.wk[l], d(), d()).noalias() += lc.a_in.transpose() * dk;
      grad_view(off_.wv[l], d(), d()).noalias() += lc.a_in.transpose() * dv;
      grad_view(off_.bq[l], 1, d()).noalias() += dq.colwise().sum();
      grad_view(off_.bk[l], 1, d()).noalias() += dk.colwise().sum();
      grad_view(off_.bv[l], 1, d()).noalias() += dv.colwise().sum();
      dx += ln_backward(lc.ln1, da, off_.ln1_g[l], off_.ln1_b[l]);
    }

    Matrix demb = dx.cwiseProduct(cache.emb_drop);
    auto item_g = grad_view(off_.item_emb, vocab(), d());
    auto pos_g = grad_view(off_.pos_emb, cfg_.max_len, d());
    for (int b = 0; b < B; ++b) {
      for (int p = 0; p < L; ++p) {
        if (!batch.real[static_cast<std::size_t>(b)][static_cast<std::size_t>(p)]) continue;
        const Eigen::Index row = static_cast<Eigen::Index>(b) * L + p;
        item_g.row(batch.ids(b, p)) += demb.row(row);
        pos_g.row(p) += demb.row(row);
      }
    }
  }

  // Full-catalog scores from the final real position of one sequence.
  Vector score_next(const UserSequence& seq) const {
    if (seq.items.empty()) throw DataError("cannot score an empty sequence");
    UserSequence input = seq;
    int score_pos;
    if (cfg_.architecture == Architecture::masked) {
      // append the mask token and read the prediction there
      if (static_cast<int>(input.items.size()) >= cfg_.max_len) {
        input.items.erase(input.items.begin(),
                          input.items.begin() + (static_cast<int>(input.items.size()) - cfg_.max_len + 1));
        input.timestamps.erase(input.timestamps.begin(),
                               input.timestamps.begin() +
                                   (static_cast<std::ptrdiff_t>(input.timestamps.size()) -
                                    (cfg_.max_len - 1)));
      }
      score_pos = static_cast<int>(input.items.size());
    } else {
      if (static_cast<int>(input.items.size()) > cfg_.max_len) {
        input.items.erase(input.items.begin(),
                          input.items.begin() + (static_cast<int>(input.items.size()) - cfg_.max_len));
        input.timestamps.erase(input.timestamps.begin(),
                               input.timestamps.begin() +
                                   (static_cast<std::ptrdiff_t>(input.timestamps.size()) - cfg_.max_len));
      }
      score_pos = static_cast<int>(input.items.size()) - 1;
    }

    Batch batch = make_batch({&input}, cfg_);
    if (cfg_.architecture == Architecture::masked) {
      batch.ids(0, score_pos) = cfg_.mask_token();
      batch.real[0][static_cast<std::size_t>(score_pos)] = true;
      batch.lengths[0] = score_pos + 1;
    }
    const ForwardResult fr = forward(batch);
    return fr.logits.row(score_pos).transpose();
  }

  // ---- direct parameter views (used by tests and rigged models) ----
  Eigen::Map<Matrix> item_embeddings() { return view(off_.item_emb, vocab(), d()); }
  Eigen::Map<Matrix> output_weight() { return view(off_.w_out, d(), vocab()); }
  Eigen::Map<Matrix> output_bias() { return view(off_.bout, 1, vocab()); }

  int d() const { return cfg_.hidden_dim; }
  int vocab() const { return cfg_.vocab_size(); }

 private:
  struct Offsets {
    std::size_t item_emb = 0, pos_emb = 0;
    std::vector<std::size_t> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    std::vector<std::size_t> ln2_g, ln2_b, w1, b1, w2, b2;
    std::size_t lnf_g = 0, lnf_b = 0, w_out = 0, bout = 0;
  };

  void layout() {
    std::size_t cursor = 0;
    auto take = [&](std::size_t n) {
      const std::size_t at = cursor;
      cursor += n;
      return at;
    };
    const auto dd = static_cast<std::size_t>(d());
    off_.item_emb = take(static_cast<std::size_t>(vocab()) * dd);
    off_.pos_emb = take(static_cast<std::size_t>(cfg_.max_len) * dd);
    for (int l = 0; l < cfg_.num_layers; ++l) {
      off_.ln1_g.push_back(take(dd));
      off_.ln1_b.push_back(take(dd));
      off_.wq.push_back(take(dd * dd));
      off_.bq.push_back(take(dd));
      off_.wk.push_back(take(dd * dd));
      off_.bk.push_back(take(dd));
      off_.wv.push_back(take(dd * dd));
      off_.bv.push_back(take(dd));
      off_.wo.push_back(take(dd * dd));
      off_.bo.push_back(take(dd));
      off_.ln2_g.push_back(take(dd));
      off_.ln2_b.push_back(take(dd));
      off_.w1.push_back(take(dd * 4 * dd));
      off_.b1.push_back(take(4 * dd));
      off_.w2.push_back(take(4 * dd * dd));
      off_.b2.push_back(take(dd));
    }
    off_.lnf_g = take(dd);
    off_.lnf_b = take(dd);
    off_.w_out = take(dd * static_cast<std::size_t>(vocab()));
    off_.bout = take(static_cast<std::size_t>(vocab()));
    total_params_ = cursor;
  }

  Eigen::Map<Matrix> view(std::size_t offset, int rows, int cols) {
    return Eigen::Map<Matrix>(params_.data() + offset, rows, cols);
  }
  Eigen::Map<const Matrix> view(std::size_t offset, int rows, int cols) const {
    return Eigen::Map<const Matrix>(params_.data() + offset, rows, cols);
  }
  Eigen::Map<Matrix> grad_view(std::size_t offset, int rows, int cols) {
    return Eigen::Map<Matrix>(grads_.data() + offset, rows, cols);
  }

  static constexpr double kLnEps = 1e-5;

  Matrix ln_forward(const Matrix& x, std::size_t g_off, std::size_t b_off,
                    detail::LnCache& cache) const {
    const auto g = view(g_off, 1, d());
    const auto b = view(b_off, 1, d());
    cache.x_hat.resize(x.rows(), x.cols());
    cache.inv_std.resize(x.rows());
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double mean = x.row(r).mean();
      const double var = (x.row(r).array() - mean).square().mean();
      const double inv_std = 1.0 / std::sqrt(var + kLnEps);
      cache.inv_std[r] = inv_std;
      cache.x_hat.row(r) = (x.row(r).array() - mean) * inv_std;
      out.row(r) = cache.x_hat.row(r).cwiseProduct(g.row(0)) + b.row(0);
    }
    return out;
  }

  Matrix ln_backward(const detail::LnCache& cache, const Matrix& dy, std::size_t g_off,
                     std::size_t b_off) {
    const auto g = view(g_off, 1, d());
    grad_view(g_off, 1, d()).noalias() += dy.cwiseProduct(cache.x_hat).colwise().sum();
    grad_view(b_off, 1, d()).noalias() += dy.colwise().sum();
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const Eigen::RowVectorXd dyg = dy.row(r).cwiseProduct(g.row(0));
      const double m1 = dyg.mean();
      const double m2 = dyg.cwiseProduct(cache.x_hat.row(r)).mean();
      dx.row(r) = cache.inv_std[r] * (dyg.array() - m1 - cache.x_hat.row(r).array() * m2);
    }
    return dx;
  }

  Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, bool training, Rng& rng) const {
    if (!training || cfg_.dropout == 0.0) return Matrix::Ones(rows, cols);
    Matrix mask(rows, cols);
    const double keep = 1.0 - cfg_.dropout;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        mask(r, c) = rng.uniform01() < keep ? 1.0 / keep : 0.0;
    return mask;
  }

  ForwardResult run_forward(const Batch& batch, bool training, Rng& dropout_rng,
                            detail::ForwardCache& cache) const {
    const int B = batch.size(), L = batch.positions();
    if (B == 0) throw DataError("empty batch");
    if (L > cfg_.max_len) throw DataError("batch positions exceed max_len");
    const int dh = d() / cfg_.num_heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool causal = cfg_.architecture == Architecture::causal;

    for (int b = 0; b < B; ++b) {
      bool any = false;
      for (int p = 0; p < L; ++p) {
        const bool real = batch.real[static_cast<std::size_t>(b)][static_cast<std::size_t>(p)];
        const int id = batch.ids(b, p);
        if (real) {
          any = true;
          if (id < 1 || id >= vocab()) throw DataError("item index out of range in batch");
        } else if (id != 0) {
          throw DataError("padding position carries a non-zero id");
        }
      }
      if (!any) throw DataError("batch row " + std::to_string(b) + " is all padding");
    }

    const auto item_emb = view(off_.item_emb, vocab(), d());
    const auto pos_emb = view(off_.pos_emb, cfg_.max_len, d());

    Matrix x(static_cast<Eigen::Index>(B) * L, d());
    for (int b = 0; b < B; ++b)
      for (int p = 0; p < L; ++p)
        x.row(static_cast<Eigen::Index>(b) * L + p) = item_emb.row(batch.ids(b, p)) + pos_emb.row(p);
    cache.x0 = x;
    cache.emb_drop = dropout_mask(x.rows(), x.cols(), training, dropout_rng);
    x = x.cwiseProduct(cache.emb_drop);

    cache.layers.assign(static_cast<std::size_t>(cfg_.num_layers), detail::LayerCache{});
    LayerHiddenStates hidden;
    hidden.batch = B;
    hidden.positions = L;
    hidden.mask = batch.real;

    for (int l = 0; l < cfg_.num_layers; ++l) {
      auto& lc = cache.layers[static_cast<std::size_t>(l)];
      lc.x_in = x;
      lc.a_in = ln_forward(x, off_.ln1_g[l], off_.ln1_b[l], lc.ln1);

      const auto wq = view(off_.wq[l], d(), d());
      const auto wk = view(off_.wk[l], d(), d());
      const auto wv = view(off_.wv[l], d(), d());
      lc.q = lc.a_in * wq;
      lc.q.rowwise() += view(off_.bq[l], 1, d()).row(0);
      lc.k = lc.a_in * wk;
      lc.k.rowwise() += view(off_.bk[l], 1, d()).row(0);
      lc.v = lc.a_in * wv;
      lc.v.rowwise() += view(off_.bv[l], 1, d()).row(0);

      lc.attn_concat.resize(static_cast<Eigen::Index>(B) * L, d());
      lc.attn_p.assign(static_cast<std::size_t>(B) * cfg_.num_heads, Matrix());
      for (int b = 0; b < B; ++b) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(b) * L;
        for (int h = 0; h < cfg_.num_heads; ++h) {
          const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
          auto q_b = lc.q.block(r0, c0, L, dh);
          auto k_b = lc.k.block(r0, c0, L, dh);
          auto v_b = lc.v.block(r0, c0, L, dh);
          Matrix scores = q_b * k_b.transpose() * inv_sqrt_dh;
          for (int i = 0; i < L; ++i) {
            for (int j = 0; j < L; ++j) {
              const bool key_ok = batch.real[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)] &&
                                  (!causal || j <= i);
              if (!key_ok) scores(i, j) = -1e30;
            }
          }
          Matrix p(L, L);
          for (int i = 0; i < L; ++i) {
            const double row_max = scores.row(i).maxCoeff();
            p.row(i) = (scores.row(i).array() - row_max).exp();
            p.row(i) /= p.row(i).sum();
          }
          lc.attn_p[static_cast<std::size_t>(b) * cfg_.num_heads + static_cast<std::size_t>(h)] = p;
          lc.attn_concat.block(r0, c0, L, dh).noalias() = p * v_b;
        }
      }

      Matrix attn_proj = lc.attn_concat * view(off_.wo[l], d(), d());
      attn_proj.rowwise() += view(off_.bo[l], 1, d()).row(0);
      lc.attn_drop = dropout_mask(attn_proj.rows(), attn_proj.cols(), training, dropout_rng);
      lc.x_mid = x + attn_proj.cwiseProduct(lc.attn_drop);

      lc.f_in = ln_forward(lc.x_mid, off_.ln2_g[l], off_.ln2_b[l], lc.ln2);
      lc.f_pre = lc.f_in * view(off_.w1[l], d(), 4 * d());
      lc.f_pre.rowwise() += view(off_.b1[l], 1, 4 * d()).row(0);
      lc.f_mid = lc.f_pre.cwiseMax(0.0);
      Matrix ffn_out = lc.f_mid * view(off_.w2[l], 4 * d(), d());
      ffn_out.rowwise() += view(off_.b2[l], 1, d()).row(0);
      lc.ffn_drop = dropout_mask(ffn_out.rows(), ffn_out.cols(), training, dropout_rng);
      x = lc.x_mid + ffn_out.cwiseProduct(lc.ffn_drop);

      hidden.states.push_back(x);
    }

    cache.xf = ln_forward(x, off_.lnf_g, off_.lnf_b, cache.lnf);
    ForwardResult out;
    out.logits = cache.xf * view(off_.w_out, d(), vocab());
    out.logits.rowwise() += view(off_.bout, 1, vocab()).row(0);
    out.hidden = std::move(hidden);
    if (!out.logits.allFinite()) throw DataError("forward produced non-finite logits");
    return out;
  }

  ModelConfig cfg_;
  Offsets off_;
  std::size_t total_params_ = 0;
  std::vector<double> params_;
  std::vector<double> grads_;
};

// Full-catalog ranking for one user. Scores come from the final-position
// logits; padding, the mask token and the user's training history are
// excluded. Ties break toward the lower item index.
inline std::vector<int> rank_items(const TransformerModel& model, const UserSequence& seq,
                                   const std::unordered_set<int>& exclude = {}) {
  const int M = model.config().num_items;
  if (M < 1) throw DataError("rank_items requires a non-empty catalog");
  const Vector scores = model.score_next(seq);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(M));
  for (int item = 1; item <= M; ++item)
    if (!exclude.count(item)) order.push_back(item);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double sa = scores[a], sb = scores[b];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return order;
}

}  // namespace seqdistill
