#pragma once

#include <cstdint>
#include <vector>

#include "depthbins/autograd.hpp"

// Differentiable building blocks. Matrices are {rows, cols}; feature maps are
// channels-last {h, w, c}.
namespace depthbins::ops {

Var add(const Var& a, const Var& b);
Var scale(const Var& x, Scalar s);
/// x {.., c} + bias {c}, broadcast over rows.
Var add_row_vector(const Var& x, const Var& bias);
Var reshape(const Var& x, std::vector<int> shape);

Var matmul(const Var& a, const Var& b);
/// a {m, k} times transpose of b {n, k}.
Var matmul_nt(const Var& a, const Var& b);
/// x {n, in} W {in, out} (+ bias {out}).
Var linear(const Var& x, const Var& weight, const Var& bias);

Var relu(const Var& x);
Var softmax_rows(const Var& x);

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Scalar eps = 1e-5f);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, Scalar eps = 1e-5f);

/// Weight layout {k*k*c_in, c_out}, rows ordered (ky, kx, c_in).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride, int padding);

/// Half-pixel-centre bilinear resampling of a {h, w, c} map.
Var resize_bilinear(const Var& x, int out_h, int out_w);

Var slice_rows(const Var& x, int begin, int end);
Var concat_rows(const std::vector<Var>& parts);

/// Sum of scalars with fixed coefficients.
Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights);

/// Multi-head scaled dot-product attention over already-projected inputs.
///
/// `blocked`, when non-empty, is an nq*nk row-major mask of key positions a
/// query may not attend to. Each query row must keep at least one key.
/// `weights_out`, when given, receives the softmax weights as {heads, nq, nk}.
Var attention(const Var& q, const Var& k, const Var& v, int heads,
              const std::vector<std::uint8_t>& blocked = {}, Tensor* weights_out = nullptr);

}  // namespace depthbins::ops
