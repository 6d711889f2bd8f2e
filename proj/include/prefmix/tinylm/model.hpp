#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "prefmix/core/error.hpp"
#include "prefmix/core/random.hpp"
#include "prefmix/tinylm/vocabulary.hpp"

namespace prefmix::tinylm {

/// Shape of the single-head causal transformer:
/// token+position embedding -> one attention head (residual) ->
/// tanh MLP (residual) -> affine projection to vocabulary logits.
struct Architecture {
  int vocab_size = 0;
  int d_model = 24;
  int d_ff = 48;
  int context = 40;

  bool operator==(const Architecture&) const = default;
};

/// Offsets of each tensor inside the flat parameter vector. All matrices are
/// row-major with shape (in, out) so that y = x W.
struct ParamLayout {
  std::size_t tok_emb, pos_emb, wq, wk, wv, wo, w1, b1, w2, b2, wout, bout, total;

  explicit ParamLayout(const Architecture& a) {
    const auto V = static_cast<std::size_t>(a.vocab_size);
    const auto d = static_cast<std::size_t>(a.d_model);
    const auto f = static_cast<std::size_t>(a.d_ff);
    const auto W = static_cast<std::size_t>(a.context);
    std::size_t off = 0;
    auto take = [&off](std::size_t n) {
      const std::size_t at = off;
      off += n;
      return at;
    };
    tok_emb = take(V * d);
    pos_emb = take(W * d);
    wq = take(d * d);
    wk = take(d * d);
    wv = take(d * d);
    wo = take(d * d);
    w1 = take(d * f);
    b1 = take(f);
    w2 = take(f * d);
    b2 = take(d);
    wout = take(d * V);
    bout = take(V);
    total = off;
  }
};

inline constexpr std::size_t max_param_count = 100'000;

/// A tiny autoregressive LM. Plays the trainable policy (frozen = false) as
/// well as the reference and generator roles (frozen = true).
class PolicyModel {
 public:
  PolicyModel() = default;

  PolicyModel(Architecture arch, Vocabulary vocab, std::vector<double> params, bool frozen = false)
      : arch_(arch), vocab_(std::move(vocab)), params_(std::move(params)), frozen_(frozen) {
    validate();
  }

  /// All-zero parameters: a constant-logit (uniform) model.
  static PolicyModel zeros(Architecture arch, Vocabulary vocab) {
    arch.vocab_size = static_cast<int>(vocab.size());
    ParamLayout layout(arch);
    return PolicyModel(arch, std::move(vocab), std::vector<double>(layout.total, 0.0));
  }

  static PolicyModel random_init(Architecture arch, Vocabulary vocab, std::uint64_t seed) {
    PolicyModel m = zeros(arch, std::move(vocab));
    arch = m.arch();
    Rng rng(seed);
    const ParamLayout L = m.layout();
    const auto d = static_cast<double>(arch.d_model);
    const auto f = static_cast<double>(arch.d_ff);
    auto fill = [&](std::size_t off, std::size_t n, double scale) {
      for (std::size_t i = 0; i < n; ++i) m.params_[off + i] = scale * rng.normal();
    };
    const auto V = static_cast<std::size_t>(arch.vocab_size);
    const auto dd = static_cast<std::size_t>(arch.d_model);
    const auto ff = static_cast<std::size_t>(arch.d_ff);
    fill(L.tok_emb, V * dd, 0.5);
    fill(L.pos_emb, static_cast<std::size_t>(arch.context) * dd, 0.5);
    for (std::size_t off : {L.wq, L.wk, L.wv, L.wo}) fill(off, dd * dd, 1.0 / std::sqrt(d));
    fill(L.w1, dd * ff, 1.0 / std::sqrt(d));
    fill(L.w2, ff * dd, 0.5 / std::sqrt(f));
    fill(L.wout, dd * V, 0.5 / std::sqrt(d));
    return m;
  }

  const Architecture& arch() const { return arch_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParamLayout layout() const { return ParamLayout(arch_); }
  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params() { return params_; }
  std::size_t param_count() const { return params_.size(); }
  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }

  PolicyModel frozen_copy() const {
    PolicyModel m = *this;
    m.frozen_ = true;
    return m;
  }

  bool operator==(const PolicyModel& o) const {
    return arch_ == o.arch_ && vocab_ == o.vocab_ && params_ == o.params_ && frozen_ == o.frozen_;
  }

 private:
  void validate() const {
    require(arch_.vocab_size == static_cast<int>(vocab_.size()), Errc::invalid_argument,
            "architecture vocab_size does not match vocabulary");
    require(arch_.d_model > 0 && arch_.d_ff > 0 && arch_.context > 2, Errc::invalid_argument,
            "non-positive architecture dimension");
    require(params_.size() == ParamLayout(arch_).total, Errc::invalid_argument, "parameter vector length mismatch");
    require(params_.size() <= max_param_count, Errc::invalid_argument,
            "parameter count " + std::to_string(params_.size()) + " exceeds 1e5");
  }

  Architecture arch_{};
  Vocabulary vocab_;
  std::vector<double> params_;
  bool frozen_ = false;
};

/// Per-position intermediate values kept for backpropagation.
struct Activations {
  std::size_t T = 0;
  std::vector<TokenId> tokens;
  std::vector<double> h0, q, k, v, att, o, h1, u, g, h2, logits;
};

namespace detail {

// y[T x n] (+)= x[T x m] * W[m x n]
inline void matmul(const double* x, const double* W, double* y, std::size_t T, std::size_t m, std::size_t n,
                   bool accumulate = false) {
  for (std::size_t t = 0; t < T; ++t) {
    double* yr = y + t * n;
    if (!accumulate) std::fill(yr, yr + n, 0.0);
    const double* xr = x + t * m;
    for (std::size_t i = 0; i < m; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      const double* wr = W + i * n;
      for (std::size_t j = 0; j < n; ++j) yr[j] += xi * wr[j];
    }
  }
}

// dW[m x n] += x^T[m x T] * dy[T x n]
inline void matmul_tn_acc(const double* x, const double* dy, double* dW, std::size_t T, std::size_t m,
                          std::size_t n) {
  for (std::size_t t = 0; t < T; ++t) {
    const double* xr = x + t * m;
    const double* dr = dy + t * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      double* wr = dW + i * n;
      for (std::size_t j = 0; j < n; ++j) wr[j] += xi * dr[j];
    }
  }
}

// dx[T x m] (+)= dy[T x n] * W^T[n x m]
inline void matmul_nt(const double* dy, const double* W, double* dx, std::size_t T, std::size_t m, std::size_t n,
                      bool accumulate) {
  for (std::size_t t = 0; t < T; ++t) {
    const double* dr = dy + t * n;
    double* xr = dx + t * m;
    for (std::size_t i = 0; i < m; ++i) {
      const double* wr = W + i * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += dr[j] * wr[j];
      xr[i] = accumulate ? xr[i] + s : s;
    }
  }
}

}  // namespace detail

inline void check_tokens(const PolicyModel& m, std::span<const TokenId> tokens) {
  require(tokens.size() <= static_cast<std::size_t>(m.arch().context), Errc::sequence_too_long,
          "sequence of length " + std::to_string(tokens.size()) + " exceeds context window " +
              std::to_string(m.arch().context));
  for (TokenId t : tokens)
    require(t >= 0 && t < m.arch().vocab_size, Errc::token_out_of_range, "token id " + std::to_string(t));
}

/// Full forward pass. Logits are produced for rows [logits_from, T).
inline void forward(const PolicyModel& m, std::span<const TokenId> tokens, Activations& a,
                    std::size_t logits_from = 0) {
  check_tokens(m, tokens);
  const auto& A = m.arch();
  const ParamLayout L = m.layout();
  const double* P = m.params().data();
  const auto T = tokens.size();
  const auto d = static_cast<std::size_t>(A.d_model);
  const auto f = static_cast<std::size_t>(A.d_ff);
  const auto V = static_cast<std::size_t>(A.vocab_size);

  a.T = T;
  a.tokens.assign(tokens.begin(), tokens.end());
  a.h0.assign(T * d, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double* e = P + L.tok_emb + static_cast<std::size_t>(tokens[t]) * d;
    const double* p = P + L.pos_emb + t * d;
    for (std::size_t i = 0; i < d; ++i) a.h0[t * d + i] = e[i] + p[i];
  }

  a.q.resize(T * d);
  a.k.resize(T * d);
  a.v.resize(T * d);
  detail::matmul(a.h0.data(), P + L.wq, a.q.data(), T, d, d);
  detail::matmul(a.h0.data(), P + L.wk, a.k.data(), T, d, d);
  detail::matmul(a.h0.data(), P + L.wv, a.v.data(), T, d, d);

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  a.att.assign(T * T, 0.0);
  a.o.assign(T * d, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double* row = a.att.data() + t * T;
    double mx = -1e300;
    for (std::size_t s = 0; s <= t; ++s) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += a.q[t * d + i] * a.k[s * d + i];
      row[s] = dot * scale;
      mx = std::max(mx, row[s]);
    }
    double z = 0.0;
    for (std::size_t s = 0; s <= t; ++s) {
      row[s] = std::exp(row[s] - mx);
      z += row[s];
    }
    for (std::size_t s = 0; s <= t; ++s) {
      row[s] /= z;
      for (std::size_t i = 0; i < d; ++i) a.o[t * d + i] += row[s] * a.v[s * d + i];
    }
  }

  a.h1 = a.h0;
  detail::matmul(a.o.data(), P + L.wo, a.h1.data(), T, d, d, true);

  a.u.resize(T * f);
  detail::matmul(a.h1.data(), P + L.w1, a.u.data(), T, d, f);
  a.g.resize(T * f);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < f; ++j) {
      a.u[t * f + j] += P[L.b1 + j];
      a.g[t * f + j] = std::tanh(a.u[t * f + j]);
    }

  a.h2 = a.h1;
  detail::matmul(a.g.data(), P + L.w2, a.h2.data(), T, f, d, true);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < d; ++i) a.h2[t * d + i] += P[L.b2 + i];

  a.logits.assign(T * V, 0.0);
  if (logits_from < T) {
    const std::size_t rows = T - logits_from;
    detail::matmul(a.h2.data() + logits_from * d, P + L.wout, a.logits.data() + logits_from * V, rows, d, V);
    for (std::size_t t = logits_from; t < T; ++t)
      for (std::size_t j = 0; j < V; ++j) a.logits[t * V + j] += P[L.bout + j];
  }
}

/// Backpropagates dLoss/dlogits (T x V, zero rows allowed) and accumulates
/// dLoss/dparams into `grad`.
inline void backward(const PolicyModel& m, const Activations& a, std::span<const double> dlogits,
                     std::span<double> grad) {
  const auto& A = m.arch();
  const ParamLayout L = m.layout();
  const double* P = m.params().data();
  double* G = grad.data();
  const auto T = a.T;
  const auto d = static_cast<std::size_t>(A.d_model);
  const auto f = static_cast<std::size_t>(A.d_ff);
  const auto V = static_cast<std::size_t>(A.vocab_size);

  // output projection
  detail::matmul_tn_acc(a.h2.data(), dlogits.data(), G + L.wout, T, d, V);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < V; ++j) G[L.bout + j] += dlogits[t * V + j];
  std::vector<double> dh2(T * d);
  detail::matmul_nt(dlogits.data(), P + L.wout, dh2.data(), T, d, V, false);

  // MLP
  detail::matmul_tn_acc(a.g.data(), dh2.data(), G + L.w2, T, f, d);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < d; ++i) G[L.b2 + i] += dh2[t * d + i];
  std::vector<double> du(T * f);
  detail::matmul_nt(dh2.data(), P + L.w2, du.data(), T, f, d, false);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < f; ++j) {
      const double gv = a.g[t * f + j];
      du[t * f + j] *= 1.0 - gv * gv;
      G[L.b1 + j] += du[t * f + j];
    }
  detail::matmul_tn_acc(a.h1.data(), du.data(), G + L.w1, T, d, f);
  std::vector<double> dh1 = dh2;
  detail::matmul_nt(du.data(), P + L.w1, dh1.data(), T, d, f, true);

  // attention
  detail::matmul_tn_acc(a.o.data(), dh1.data(), G + L.wo, T, d, d);
  std::vector<double> dout(T * d);
  detail::matmul_nt(dh1.data(), P + L.wo, dout.data(), T, d, d, false);

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> dq(T * d, 0.0), dk(T * d, 0.0), dv(T * d, 0.0), datt(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double* row = a.att.data() + t * T;
    double weighted = 0.0;
    for (std::size_t s = 0; s <= t; ++s) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        dot += dout[t * d + i] * a.v[s * d + i];
        dv[s * d + i] += row[s] * dout[t * d + i];
      }
      datt[s] = dot;
      weighted += row[s] * dot;
    }
    for (std::size_t s = 0; s <= t; ++s) {
      const double ds = row[s] * (datt[s] - weighted) * scale;
      if (ds == 0.0) continue;
      for (std::size_t i = 0; i < d; ++i) {
        dq[t * d + i] += ds * a.k[s * d + i];
        dk[s * d + i] += ds * a.q[t * d + i];
      }
    }
  }
  detail::matmul_tn_acc(a.h0.data(), dq.data(), G + L.wq, T, d, d);
  detail::matmul_tn_acc(a.h0.data(), dk.data(), G + L.wk, T, d, d);
  detail::matmul_tn_acc(a.h0.data(), dv.data(), G + L.wv, T, d, d);
  std::vector<double> dh0 = dh1;
  detail::matmul_nt(dq.data(), P + L.wq, dh0.data(), T, d, d, true);
  detail::matmul_nt(dk.data(), P + L.wk, dh0.data(), T, d, d, true);
  detail::matmul_nt(dv.data(), P + L.wv, dh0.data(), T, d, d, true);

  // embeddings
  for (std::size_t t = 0; t < T; ++t) {
    double* e = G + L.tok_emb + static_cast<std::size_t>(a.tokens[t]) * d;
    double* p = G + L.pos_emb + t * d;
    for (std::size_t i = 0; i < d; ++i) {
      e[i] += dh0[t * d + i];
      p[i] += dh0[t * d + i];
    }
  }
}

/// Numerically stable log-softmax of one logit row.
inline std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -1e300;
  for (double z : logits) mx = std::max(mx, z);
  double s = 0.0;
  for (double z : logits) s += std::exp(z - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

}  // namespace prefmix::tinylm
