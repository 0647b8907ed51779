#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "depthbins/autograd.hpp"

namespace depthbins {

/// Valid metric depth interval [d_min, d_max].
struct DepthRange {
  double d_min = 1e-3;
  double d_max = 10.0;

  void validate() const {
    if (!(d_min >= 0.0 && d_min < d_max) || !std::isfinite(d_max)) {
      throw std::invalid_argument("DepthRange requires 0 <= d_min < d_max");
    }
  }
  double span() const { return d_max - d_min; }
  bool contains_open(double d) const { return std::isfinite(d) && d > d_min && d < d_max; }

  static DepthRange indoor() { return {1e-3, 10.0}; }
  static DepthRange outdoor() { return {1e-3, 80.0}; }
};

enum class UncertaintyKind { kStdDev, kNegMaxProb };

// ---------------------------------------------------------------------------
// Scalar kernels. Layouts: per-pixel features {pixels, C}; bin embeddings
// {N, C} (one row per bin); probabilities {pixels, N}.
// ---------------------------------------------------------------------------

template <class T>
void check_simplex(std::span<const T> b, double tol = 1e-4) {
  if (b.empty()) throw std::invalid_argument("bin lengths are empty");
  double s = 0;
  for (T v : b) {
    if (!(v >= T(0))) throw std::invalid_argument("bin lengths must be nonnegative");
    s += static_cast<double>(v);
  }
  if (std::abs(s - 1.0) > tol) throw std::invalid_argument("bin lengths must sum to 1");
}

/// Centre of bin i: d_min + span * (b_i / 2 + sum_{j<i} b_j).
template <class T>
std::vector<T> bins_to_centers(std::span<const T> b, const DepthRange& range) {
  range.validate();
  check_simplex(b);
  std::vector<T> c(b.size());
  const T lo = static_cast<T>(range.d_min);
  const T width = static_cast<T>(range.span());
  T cum = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    c[i] = lo + width * (b[i] / T(2) + cum);
    cum += b[i];
  }
  return c;
}

/// Vector-Jacobian product of bins_to_centers.
template <class T>
std::vector<T> bins_to_centers_backward(std::span<const T> grad_centers, const DepthRange& range) {
  const T width = static_cast<T>(range.span());
  std::vector<T> gb(grad_centers.size());
  T suffix = 0;  // sum of grad_centers[i] for i > j
  for (std::size_t j = grad_centers.size(); j-- > 0;) {
    gb[j] = width * (grad_centers[j] / T(2) + suffix);
    suffix += grad_centers[j];
  }
  return gb;
}

/// P = softmax_rows(features * embeddings^T / sqrt(C)).
template <class T>
void probability_volume(std::span<const T> features, std::span<const T> embeddings, int pixels, int channels,
                        int bins, std::span<T> prob) {
  if (features.size() != static_cast<std::size_t>(pixels) * channels ||
      embeddings.size() != static_cast<std::size_t>(bins) * channels ||
      prob.size() != static_cast<std::size_t>(pixels) * bins) {
    throw std::invalid_argument("probability_volume: channel or size mismatch");
  }
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const Mat> F(features.data(), pixels, channels);
  const Eigen::Map<const Mat> E(embeddings.data(), bins, channels);
  Eigen::Map<Mat> P(prob.data(), pixels, bins);
  P.noalias() = F * E.transpose();
  P *= T(1) / std::sqrt(static_cast<T>(channels));
  for (int p = 0; p < pixels; ++p) {
    auto row = P.row(p);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
}

template <class T>
void probability_volume_backward(std::span<const T> features, std::span<const T> embeddings, std::span<const T> prob,
                                 std::span<const T> grad_prob, int pixels, int channels, int bins,
                                 std::span<T> grad_features, std::span<T> grad_embeddings) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  const Eigen::Map<const Mat> F(features.data(), pixels, channels);
  const Eigen::Map<const Mat> E(embeddings.data(), bins, channels);
  const Eigen::Map<const Mat> P(prob.data(), pixels, bins);
  const Eigen::Map<const Mat> G(grad_prob.data(), pixels, bins);
  const Vec dots = (P.array() * G.array()).rowwise().sum();
  Mat dlogit = P.array() * (G.colwise() - dots).array();
  dlogit *= T(1) / std::sqrt(static_cast<T>(channels));
  Eigen::Map<Mat>(grad_features.data(), pixels, channels).noalias() += dlogit * E;
  Eigen::Map<Mat>(grad_embeddings.data(), bins, channels).noalias() += dlogit.transpose() * F;
}

/// d[p] = sum_i centers[i] * P[p, i].
template <class T>
void predict_depth(std::span<const T> prob, std::span<const T> centers, int pixels, std::span<T> depth) {
  const int bins = static_cast<int>(centers.size());
  if (prob.size() != static_cast<std::size_t>(pixels) * bins || depth.size() != static_cast<std::size_t>(pixels)) {
    throw std::invalid_argument("predict_depth: size mismatch");
  }
  for (int p = 0; p < pixels; ++p) {
    const T* P = prob.data() + static_cast<std::size_t>(p) * bins;
    T acc = 0;
    for (int i = 0; i < bins; ++i) acc += centers[i] * P[i];
    depth[p] = acc;
  }
}

template <class T>
void predict_depth_backward(std::span<const T> prob, std::span<const T> centers, std::span<const T> grad_depth,
                            int pixels, std::span<T> grad_prob, std::span<T> grad_centers) {
  const int bins = static_cast<int>(centers.size());
  for (int p = 0; p < pixels; ++p) {
    const T* P = prob.data() + static_cast<std::size_t>(p) * bins;
    T* gP = grad_prob.data() + static_cast<std::size_t>(p) * bins;
    const T g = grad_depth[p];
    for (int i = 0; i < bins; ++i) {
      gP[i] += g * centers[i];
      grad_centers[i] += g * P[i];
    }
  }
}

/// Per-pixel spread of the bin distribution around the predicted depth.
template <class T>
void uncertainty(std::span<const T> prob, std::span<const T> centers, std::span<const T> depth, int pixels,
                 std::span<T> out, UncertaintyKind kind = UncertaintyKind::kStdDev) {
  const int bins = static_cast<int>(centers.size());
  for (int p = 0; p < pixels; ++p) {
    const T* P = prob.data() + static_cast<std::size_t>(p) * bins;
    if (kind == UncertaintyKind::kNegMaxProb) {
      out[p] = -*std::max_element(P, P + bins);
      continue;
    }
    T acc = 0;
    for (int i = 0; i < bins; ++i) {
      const T r = centers[i] - depth[p];
      acc += P[i] * r * r;
    }
    out[p] = std::sqrt(std::max(acc, T(0)));
  }
}

// ---------------------------------------------------------------------------
// Graph wrappers used by the network.
// ---------------------------------------------------------------------------

/// b {N} -> centres {N}.
Var bins_to_centers(const Var& bin_lengths, const DepthRange& range);
/// f_p {h, w, C}, f_b {N, C} -> P {h*w, N}.
Var probability_volume(const Var& per_pixel, const Var& bin_embeddings);
/// P {h*w, N}, centres {N} -> depth {h, w, 1}.
Var predict_depth(const Var& prob, const Var& centers, int h, int w);

/// Inference-time bundle of everything the depth module produces for one
/// set of bins.
struct DepthOutput {
  Tensor prob;          ///< {h*w, N} at feature resolution
  std::vector<Scalar> centers;
  Tensor depth_lowres;  ///< {h, w, 1}
  Tensor depth;         ///< {H, W, 1}
  Tensor uncertainty;   ///< {H, W, 1}
};

/// Runs the full depth module on plain tensors (no gradients).
DepthOutput run_depth_module(const Tensor& per_pixel, const Tensor& bin_embeddings, std::span<const Scalar> bin_lengths,
                             const DepthRange& range, int out_h, int out_w,
                             UncertaintyKind kind = UncertaintyKind::kStdDev);

}  // namespace depthbins
