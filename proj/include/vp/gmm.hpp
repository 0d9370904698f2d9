// Copyright 2026 The voiceprivacy Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "vp/error.hpp"
#include "vp/features.hpp"
#include "vp/ioutil.hpp"
#include "vp/matrix.hpp"
#include "vp/rng.hpp"

namespace vp {

/// Diagonal-covariance Gaussian mixture.
struct Gmm {
  std::vector<double> weights;  // K, nonnegative, sums to 1
  Matrix means;                 // K x D
  Matrix variances;             // K x D, floored above 0
  std::string fingerprint;

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.cols(); }
};

struct EmConfig {
  enum class Init { kmeans, random_responsibility };

  int components = 64;
  int max_iters = 50;
  double tol = 1e-5;       // relative log-likelihood improvement threshold
  double var_floor = 1e-4; // relative to the global per-dim variance
  std::uint64_t seed = 0;
  Init init = Init::kmeans;
};

struct EmResult {
  Gmm model;
  std::vector<double> trace;  // mean per-frame log-likelihood per EM pass
};

namespace detail {

constexpr double kMinVariance = 1e-10;
constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

struct GmmScorer {
  const Gmm* model;
  std::vector<double> log_const;  // log w_k - 0.5 * sum_d log(2*pi*var)

  explicit GmmScorer(const Gmm& g) : model(&g), log_const(g.components()) {
    for (std::size_t k = 0; k < g.components(); ++k) {
      double c = g.weights[k] > 0.0 ? std::log(g.weights[k])
                                    : -std::numeric_limits<double>::infinity();
      const double* var = g.variances.row(k);
      for (std::size_t d = 0; d < g.dim(); ++d) c -= 0.5 * (kLog2Pi + std::log(var[d]));
      log_const[k] = c;
    }
  }

  /// Per-component joint log densities log(w_k N(x|k)) into `out`;
  /// returns the frame log-likelihood (log-sum-exp over components).
  double frame(const double* x, std::vector<double>& out) const {
    const Gmm& g = *model;
    const std::size_t K = g.components(), D = g.dim();
    out.resize(K);
    double maxv = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      const double* mu = g.means.row(k);
      const double* var = g.variances.row(k);
      double quad = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double dev = x[d] - mu[d];
        quad += dev * dev / var[d];
      }
      out[k] = log_const[k] - 0.5 * quad;
      maxv = std::max(maxv, out[k]);
    }
    if (!std::isfinite(maxv)) return maxv;
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(out[k] - maxv);
    return maxv + std::log(s);
  }
};

struct GmmStats {
  std::vector<double> n;  // soft counts per component
  Matrix sum;             // K x D
  Matrix sumsq;           // K x D

  GmmStats(std::size_t K, std::size_t D) : n(K, 0.0), sum(K, D, 0.0), sumsq(K, D, 0.0) {}
};

/// One accumulation pass: returns mean per-frame log-likelihood and fills
/// sufficient statistics.
inline double accumulate(const Gmm& g, const Matrix& x, GmmStats& stats) {
  const std::size_t N = x.rows(), K = g.components(), D = g.dim();
  GmmScorer scorer(g);
  std::vector<double> logp(K);
  double total = 0.0;
  for (std::size_t f = 0; f < N; ++f) {
    const double* row = x.row(f);
    const double ll = scorer.frame(row, logp);
    total += ll;
    for (std::size_t k = 0; k < K; ++k) {
      const double gamma = std::exp(logp[k] - ll);
      if (gamma <= 0.0) continue;
      stats.n[k] += gamma;
      double* s = stats.sum.row(k);
      double* sq = stats.sumsq.row(k);
      for (std::size_t d = 0; d < D; ++d) {
        s[d] += gamma * row[d];
        sq[d] += gamma * row[d] * row[d];
      }
    }
  }
  return total / static_cast<double>(N);
}

inline std::vector<double> per_dim_variance(const Matrix& x) {
  const std::size_t N = x.rows(), D = x.cols();
  std::vector<double> mean(D, 0.0), var(D, 0.0);
  for (std::size_t f = 0; f < N; ++f) {
    const double* row = x.row(f);
    for (std::size_t d = 0; d < D; ++d) mean[d] += row[d];
  }
  for (double& m : mean) m /= static_cast<double>(N);
  for (std::size_t f = 0; f < N; ++f) {
    const double* row = x.row(f);
    for (std::size_t d = 0; d < D; ++d) {
      const double dev = row[d] - mean[d];
      var[d] += dev * dev;
    }
  }
  for (double& v : var) v /= static_cast<double>(N);
  return var;
}

inline Gmm kmeans_init(const Matrix& x, const EmConfig& cfg,
                       const std::vector<double>& global_var,
                       const std::vector<double>& floor) {
  const std::size_t N = x.rows(), D = x.cols();
  const std::size_t K = static_cast<std::size_t>(cfg.components);
  CounterRng rng(cfg.seed);

  // seeded Fisher-Yates; first K indices become the initial centroids
  std::vector<std::size_t> idx(N);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = N - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.next_below(i + 1)]);
  }

  Matrix centroids(K, D);
  for (std::size_t k = 0; k < K; ++k) {
    const double* row = x.row(idx[k]);
    std::copy(row, row + D, centroids.row(k));
  }

  std::vector<std::size_t> assign(N, 0);
  for (int iter = 0; iter < 10; ++iter) {
    for (std::size_t f = 0; f < N; ++f) {
      const double* row = x.row(f);
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_k = 0;
      for (std::size_t k = 0; k < K; ++k) {
        const double* c = centroids.row(k);
        double dist = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
          const double dev = row[d] - c[d];
          dist += dev * dev;
        }
        if (dist < best) {  // ties keep the lowest component index
          best = dist;
          best_k = k;
        }
      }
      assign[f] = best_k;
    }
    Matrix sums(K, D, 0.0);
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t f = 0; f < N; ++f) {
      const double* row = x.row(f);
      double* s = sums.row(assign[f]);
      for (std::size_t d = 0; d < D; ++d) s[d] += row[d];
      ++counts[assign[f]];
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (counts[k] == 0) continue;  // empty cluster keeps its centroid
      double* c = centroids.row(k);
      const double* s = sums.row(k);
      for (std::size_t d = 0; d < D; ++d) c[d] = s[d] / static_cast<double>(counts[k]);
    }
  }

  Gmm g;
  g.means = centroids;
  g.variances = Matrix(K, D);
  g.weights.assign(K, 0.0);
  std::vector<std::size_t> counts(K, 0);
  Matrix sumsq(K, D, 0.0);
  Matrix sums(K, D, 0.0);
  for (std::size_t f = 0; f < N; ++f) {
    const double* row = x.row(f);
    double* sq = sumsq.row(assign[f]);
    double* s = sums.row(assign[f]);
    for (std::size_t d = 0; d < D; ++d) {
      sq[d] += row[d] * row[d];
      s[d] += row[d];
    }
    ++counts[assign[f]];
  }
  double weight_total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double c = static_cast<double>(std::max<std::size_t>(counts[k], 1));
    g.weights[k] = c;
    weight_total += c;
    double* var = g.variances.row(k);
    if (counts[k] >= 2) {
      const double* sq = sumsq.row(k);
      const double* s = sums.row(k);
      for (std::size_t d = 0; d < D; ++d) {
        const double mu = s[d] / static_cast<double>(counts[k]);
        var[d] = std::max(sq[d] / static_cast<double>(counts[k]) - mu * mu, floor[d]);
      }
    } else {
      for (std::size_t d = 0; d < D; ++d) var[d] = std::max(global_var[d], floor[d]);
    }
  }
  for (double& w : g.weights) w /= weight_total;
  return g;
}

inline Gmm random_responsibility_init(const Matrix& x, const EmConfig& cfg,
                                      const std::vector<double>& floor) {
  const std::size_t N = x.rows(), D = x.cols();
  const std::size_t K = static_cast<std::size_t>(cfg.components);
  CounterRng rng(cfg.seed);

  GmmStats stats(K, D);
  std::vector<double> gamma(K);
  for (std::size_t f = 0; f < N; ++f) {
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      gamma[k] = 0.05 + rng.next_double();
      total += gamma[k];
    }
    const double* row = x.row(f);
    for (std::size_t k = 0; k < K; ++k) {
      const double gk = gamma[k] / total;
      stats.n[k] += gk;
      double* s = stats.sum.row(k);
      double* sq = stats.sumsq.row(k);
      for (std::size_t d = 0; d < D; ++d) {
        s[d] += gk * row[d];
        sq[d] += gk * row[d] * row[d];
      }
    }
  }

  Gmm g;
  g.weights.assign(K, 0.0);
  g.means = Matrix(K, D);
  g.variances = Matrix(K, D);
  for (std::size_t k = 0; k < K; ++k) {
    g.weights[k] = stats.n[k] / static_cast<double>(N);
    double* mu = g.means.row(k);
    double* var = g.variances.row(k);
    const double* s = stats.sum.row(k);
    const double* sq = stats.sumsq.row(k);
    for (std::size_t d = 0; d < D; ++d) {
      mu[d] = s[d] / stats.n[k];
      var[d] = std::max(sq[d] / stats.n[k] - mu[d] * mu[d], floor[d]);
    }
  }
  return g;
}

inline void m_step(Gmm& g, const GmmStats& stats, std::size_t N,
                   const std::vector<double>& floor) {
  const std::size_t K = g.components(), D = g.dim();
  for (std::size_t k = 0; k < K; ++k) {
    g.weights[k] = stats.n[k] / static_cast<double>(N);
    if (stats.n[k] < 1e-10) continue;  // starved component keeps parameters
    double* mu = g.means.row(k);
    double* var = g.variances.row(k);
    const double* s = stats.sum.row(k);
    const double* sq = stats.sumsq.row(k);
    for (std::size_t d = 0; d < D; ++d) {
      mu[d] = s[d] / stats.n[k];
      var[d] = std::max(sq[d] / stats.n[k] - mu[d] * mu[d], floor[d]);
    }
  }
}

}  // namespace detail

/// Per-frame posterior component probabilities (rows sum to 1).
inline Matrix responsibilities(const Gmm& g, const FeatureMatrix& features) {
  const std::size_t N = features.num_frames(), K = g.components();
  detail::GmmScorer scorer(g);
  Matrix out(N, K);
  std::vector<double> logp(K);
  for (std::size_t f = 0; f < N; ++f) {
    const double ll = scorer.frame(features.vectors.row(f), logp);
    for (std::size_t k = 0; k < K; ++k) out(f, k) = std::exp(logp[k] - ll);
  }
  return out;
}

/// EM training of a diagonal GMM. Deterministic given cfg.seed; the returned
/// trace holds the mean per-frame log-likelihood of each visited model and is
/// non-decreasing (up to variance-flooring slack).
inline EmResult fit_em(const FeatureMatrix& features, const EmConfig& cfg) {
  if (cfg.components < 1 || cfg.max_iters < 1 || cfg.tol <= 0.0 || cfg.var_floor <= 0.0) {
    throw Error(ErrorCode::ConfigInvalid, "bad EM config");
  }
  const Matrix& x = features.vectors;
  const std::size_t N = x.rows(), D = x.cols();
  if (N < static_cast<std::size_t>(cfg.components)) {
    throw Error(ErrorCode::TooFewFrames,
                std::to_string(N) + " frames for " + std::to_string(cfg.components) +
                    " components");
  }

  const std::vector<double> global_var = detail::per_dim_variance(x);
  std::vector<double> floor(D);
  for (std::size_t d = 0; d < D; ++d) {
    floor[d] = std::max(cfg.var_floor * global_var[d], detail::kMinVariance);
  }

  Gmm g = cfg.init == EmConfig::Init::kmeans
              ? detail::kmeans_init(x, cfg, global_var, floor)
              : detail::random_responsibility_init(x, cfg, floor);
  g.fingerprint = features.meta;

  EmResult result;
  detail::GmmStats stats(g.components(), D);
  double ll = detail::accumulate(g, x, stats);
  result.trace.push_back(ll);

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    detail::m_step(g, stats, N, floor);
    detail::GmmStats next_stats(g.components(), D);
    const double next_ll = detail::accumulate(g, x, next_stats);
    result.trace.push_back(next_ll);
    if (next_ll - ll < cfg.tol * std::abs(ll)) break;
    ll = next_ll;
    stats = std::move(next_stats);
  }

  result.model = std::move(g);
  return result;
}

/// Mean per-frame log-likelihood of `features` under the model.
inline double log_likelihood(const Gmm& g, const FeatureMatrix& features) {
  if (g.fingerprint != features.meta) {
    throw Error(ErrorCode::FingerprintMismatch,
                "model '" + g.fingerprint + "' vs features '" + features.meta + "'");
  }
  if (features.num_frames() == 0) {
    throw Error(ErrorCode::ConfigInvalid, "cannot score an empty feature matrix");
  }
  if (features.dim() != g.dim()) {
    throw Error(ErrorCode::FingerprintMismatch, "feature dim mismatch");
  }
  detail::GmmScorer scorer(g);
  std::vector<double> logp(g.components());
  double total = 0.0;
  for (std::size_t f = 0; f < features.num_frames(); ++f) {
    total += scorer.frame(features.vectors.row(f), logp);
  }
  return total / static_cast<double>(features.num_frames());
}

/// Means-only MAP adaptation toward the data, relevance factor r:
/// mu'_k = alpha_k E_k[x] + (1-alpha_k) mu_k with alpha_k = n_k/(n_k+r).
/// Weights and variances are copied from the UBM.
inline Gmm map_adapt(const Gmm& ubm, const FeatureMatrix& features, double relevance) {
  if (relevance <= 0.0) throw Error(ErrorCode::ConfigInvalid, "relevance must be > 0");
  if (ubm.fingerprint != features.meta) {
    throw Error(ErrorCode::FingerprintMismatch,
                "model '" + ubm.fingerprint + "' vs features '" + features.meta + "'");
  }
  if (features.dim() != ubm.dim()) {
    throw Error(ErrorCode::FingerprintMismatch, "feature dim mismatch");
  }

  detail::GmmStats stats(ubm.components(), ubm.dim());
  detail::accumulate(ubm, features.vectors, stats);

  Gmm adapted = ubm;
  for (std::size_t k = 0; k < ubm.components(); ++k) {
    const double n_k = stats.n[k];
    if (n_k <= 0.0) continue;
    const double alpha = n_k / (n_k + relevance);
    double* mu = adapted.means.row(k);
    const double* s = stats.sum.row(k);
    for (std::size_t d = 0; d < ubm.dim(); ++d) {
      mu[d] = alpha * (s[d] / n_k) + (1.0 - alpha) * mu[d];
    }
  }
  return adapted;
}

// --- serialization (format VPGMM1) ---

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::ModelFormatInvalid, "matrix: expected array");
  const std::size_t rows = j.size();
  if (rows == 0) return {};
  const std::size_t cols = j[0].size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw Error(ErrorCode::ModelFormatInvalid, "ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace detail

inline nlohmann::json gmm_to_json(const Gmm& g) {
  return nlohmann::json{{"format", "VPGMM1"},
                        {"fingerprint", g.fingerprint},
                        {"weights", g.weights},
                        {"means", detail::matrix_to_json(g.means)},
                        {"variances", detail::matrix_to_json(g.variances)}};
}

inline Gmm gmm_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "VPGMM1") {
    throw Error(ErrorCode::ModelFormatInvalid, "expected VPGMM1 document");
  }
  Gmm g;
  g.fingerprint = j.at("fingerprint").get<std::string>();
  g.weights = j.at("weights").get<std::vector<double>>();
  g.means = detail::matrix_from_json(j.at("means"));
  g.variances = detail::matrix_from_json(j.at("variances"));
  if (g.means.rows() != g.weights.size() || g.variances.rows() != g.weights.size() ||
      g.means.cols() != g.variances.cols()) {
    throw Error(ErrorCode::ModelFormatInvalid, "inconsistent GMM shapes");
  }
  return g;
}

inline void save_gmm(const Gmm& g, const std::filesystem::path& path) {
  detail::write_json_file(gmm_to_json(g), path);
}

inline Gmm load_gmm(const std::filesystem::path& path) {
  return gmm_from_json(detail::read_json_file(path));
}

}  // namespace vp
