#include "depthbins/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace depthbins::ops {
namespace {

Tensor& grad_of(const Var& v) { return v->grad_buffer(); }
bool needs(const Var& v) { return v && v->requires_grad; }

int rows_of(const Tensor& t) { return t.rows(); }

}  // namespace

Var add(const Var& a, const Var& b) {
  require_shape(a->value.size() == b->value.size(),
                "add: " + a->value.shape_string() + " vs " + b->value.shape_string());
  Tensor out = a->value;
  out.add_(b->value);
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    if (needs(a)) grad_of(a).add_(self.grad);
    if (needs(b)) grad_of(b).add_(self.grad);
  });
}

Var scale(const Var& x, Scalar s) {
  Tensor out = x->value;
  for (auto& v : out.storage()) v *= s;
  return make_result(std::move(out), {x}, [x, s](Node& self) {
    auto& g = grad_of(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_row_vector(const Var& x, const Var& bias) {
  const int c = x->value.cols();
  require_shape(static_cast<int>(bias->value.size()) == c, "add_row_vector: width mismatch");
  Tensor out = x->value;
  out.matrix().rowwise() += ConstMatrixMap(bias->value.data(), 1, c).row(0);
  return make_result(std::move(out), {x, bias}, [x, bias, c](Node& self) {
    if (needs(x)) grad_of(x).add_(self.grad);
    if (needs(bias)) {
      MatrixMap(grad_of(bias).data(), 1, c) += self.grad.matrix().colwise().sum();
    }
  });
}

Var reshape(const Var& x, std::vector<int> shape) {
  Tensor out = x->value.reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [x](Node& self) {
    auto& g = grad_of(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var matmul(const Var& a, const Var& b) {
  const auto& A = a->value;
  const auto& B = b->value;
  require_shape(A.cols() == B.rows(), "matmul: " + A.shape_string() + " x " + B.shape_string());
  Tensor out({A.rows(), B.cols()});
  out.matrix().noalias() = A.matrix() * B.matrix();
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    if (needs(a)) grad_of(a).matrix().noalias() += self.grad.matrix() * b->value.matrix().transpose();
    if (needs(b)) grad_of(b).matrix().noalias() += a->value.matrix().transpose() * self.grad.matrix();
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const auto& A = a->value;
  const auto& B = b->value;
  require_shape(A.cols() == B.cols(), "matmul_nt: " + A.shape_string() + " x " + B.shape_string() + "^T");
  Tensor out({A.rows(), B.rows()});
  out.matrix().noalias() = A.matrix() * B.matrix().transpose();
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    if (needs(a)) grad_of(a).matrix().noalias() += self.grad.matrix() * b->value.matrix();
    if (needs(b)) grad_of(b).matrix().noalias() += self.grad.matrix().transpose() * a->value.matrix();
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  Var y = matmul(x, weight);
  return bias ? add_row_vector(y, bias) : y;
}

Var relu(const Var& x) {
  Tensor out = x->value;
  for (auto& v : out.storage()) v = v > 0 ? v : 0;
  return make_result(std::move(out), {x}, [x](Node& self) {
    auto& g = grad_of(x);
    const auto& y = self.value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] > 0) g[i] += self.grad[i];
    }
  });
}

Var softmax_rows(const Var& x) {
  Tensor out = x->value;
  const int r = out.rows();
  const int c = out.cols();
  for (int i = 0; i < r; ++i) {
    Scalar* row = out.data() + static_cast<std::size_t>(i) * c;
    const Scalar m = *std::max_element(row, row + c);
    Scalar s = 0;
    for (int j = 0; j < c; ++j) s += (row[j] = std::exp(row[j] - m));
    const Scalar inv = 1.0f / s;
    for (int j = 0; j < c; ++j) row[j] *= inv;
  }
  return make_result(std::move(out), {x}, [x, r, c](Node& self) {
    auto& g = grad_of(x);
    for (int i = 0; i < r; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * c;
      Scalar dot = 0;
      for (int j = 0; j < c; ++j) dot += self.grad[off + j] * self.value[off + j];
      for (int j = 0; j < c; ++j) g[off + j] += self.value[off + j] * (self.grad[off + j] - dot);
    }
  });
}

namespace {

// Shared normalisation kernel: rows of `count` consecutive groups. Statistics
// are taken over (pixels x channels-in-group).
struct NormCache {
  Tensor xhat;
  std::vector<Scalar> inv_std;
};

Var normalize_grouped(const Var& x, const Var& gamma, const Var& beta, int pixels, int channels,
                      int groups, bool per_row, Scalar eps) {
  require_shape(channels % groups == 0, "normalization: channels not divisible by groups");
  require_shape(static_cast<int>(gamma->value.size()) == channels &&
                    static_cast<int>(beta->value.size()) == channels,
                "normalization: affine size mismatch");
  const int cg = channels / groups;
  // per_row: each row is its own set of groups (layer norm); otherwise the
  // statistics pool over all pixels (group norm).
  const int sets = per_row ? pixels : 1;
  const int set_rows = per_row ? 1 : pixels;
  auto cache = std::make_shared<NormCache>();
  cache->xhat = Tensor(x->value.shape());
  cache->inv_std.resize(static_cast<std::size_t>(sets) * groups);
  Tensor out(x->value.shape());
  const Scalar* in = x->value.data();
  const Scalar* ga = gamma->value.data();
  const Scalar* be = beta->value.data();
  const double n = static_cast<double>(set_rows) * cg;
  for (int s = 0; s < sets; ++s) {
    for (int g = 0; g < groups; ++g) {
      double sum = 0, sq = 0;
      for (int r = 0; r < set_rows; ++r) {
        const Scalar* p = in + (static_cast<std::size_t>(s * set_rows + r) * channels) + g * cg;
        for (int j = 0; j < cg; ++j) {
          sum += p[j];
          sq += static_cast<double>(p[j]) * p[j];
        }
      }
      const double mean = sum / n;
      const double var = std::max(0.0, sq / n - mean * mean);
      const Scalar inv = static_cast<Scalar>(1.0 / std::sqrt(var + eps));
      cache->inv_std[static_cast<std::size_t>(s) * groups + g] = inv;
      for (int r = 0; r < set_rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(s * set_rows + r) * channels + g * cg;
        for (int j = 0; j < cg; ++j) {
          const Scalar xh = (in[base + j] - static_cast<Scalar>(mean)) * inv;
          cache->xhat[base + j] = xh;
          out[base + j] = xh * ga[g * cg + j] + be[g * cg + j];
        }
      }
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, cache, channels, groups, cg, sets, set_rows](Node& self) {
    const Scalar* ga = gamma->value.data();
    const Tensor& xhat = cache->xhat;
    if (needs(gamma) || needs(beta)) {
      Tensor& gg = grad_of(gamma);
      Tensor& gb = grad_of(beta);
      const int rows = static_cast<int>(xhat.size() / channels);
      const ConstMatrixMap dy(self.grad.data(), rows, channels);
      const ConstMatrixMap xh(xhat.data(), rows, channels);
      MatrixMap(gg.data(), 1, channels) += dy.cwiseProduct(xh).colwise().sum();
      MatrixMap(gb.data(), 1, channels) += dy.colwise().sum();
    }
    if (!needs(x)) return;
    Tensor& gx = grad_of(x);
    const double n = static_cast<double>(set_rows) * cg;
    std::vector<double> mean_d(groups), mean_dx(groups);
    for (int s = 0; s < sets; ++s) {
      std::fill(mean_d.begin(), mean_d.end(), 0.0);
      std::fill(mean_dx.begin(), mean_dx.end(), 0.0);
      for (int r = 0; r < set_rows; ++r) {
        const std::size_t row = static_cast<std::size_t>(s * set_rows + r) * channels;
        for (int g = 0; g < groups; ++g) {
          float sd = 0, sdx = 0;
          for (int j = g * cg; j < (g + 1) * cg; ++j) {
            const float d = self.grad[row + j] * ga[j];
            sd += d;
            sdx += d * xhat[row + j];
          }
          mean_d[g] += sd;
          mean_dx[g] += sdx;
        }
      }
      for (int g = 0; g < groups; ++g) {
        mean_d[g] /= n;
        mean_dx[g] /= n;
      }
      const Scalar* inv = cache->inv_std.data() + static_cast<std::size_t>(s) * groups;
      for (int r = 0; r < set_rows; ++r) {
        const std::size_t row = static_cast<std::size_t>(s * set_rows + r) * channels;
        for (int g = 0; g < groups; ++g) {
          const Scalar md = static_cast<Scalar>(mean_d[g]), mdx = static_cast<Scalar>(mean_dx[g]);
          for (int j = g * cg; j < (g + 1) * cg; ++j) {
            const Scalar d = self.grad[row + j] * ga[j];
            gx[row + j] += inv[g] * (d - md - xhat[row + j] * mdx);
          }
        }
      }
    }
  });
}

}  // namespace

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Scalar eps) {
  return normalize_grouped(x, gamma, beta, x->value.rows(), x->value.cols(), 1, true, eps);
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, Scalar eps) {
  require_shape(x->value.rank() == 3, "group_norm expects {h, w, c}");
  return normalize_grouped(x, gamma, beta, x->value.dim(0) * x->value.dim(1), x->value.dim(2), groups,
                           false, eps);
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride, int padding) {
  const Tensor& in = x->value;
  require_shape(in.rank() == 3, "conv2d expects {h, w, c}, got " + in.shape_string());
  const int h = in.dim(0), w = in.dim(1), cin = in.dim(2);
  const int patch = kernel * kernel * cin;
  require_shape(weight->value.rank() == 2 && weight->value.dim(0) == patch,
                "conv2d: weight " + weight->value.shape_string() + " does not match input " + in.shape_string());
  const int cout = weight->value.dim(1);
  const int oh = (h + 2 * padding - kernel) / stride + 1;
  const int ow = (w + 2 * padding - kernel) / stride + 1;
  require_shape(oh > 0 && ow > 0, "conv2d: empty output");

  const bool pointwise = kernel == 1 && stride == 1 && padding == 0;
  auto cols = std::make_shared<Tensor>();
  if (!pointwise) {
    *cols = Tensor({oh * ow, patch});
    Scalar* dst = cols->data();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - padding + ky;
          for (int kx = 0; kx < kernel; ++kx, dst += cin) {
            const int ix = ox * stride - padding + kx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
              std::fill(dst, dst + cin, 0.0f);
            } else {
              std::memcpy(dst, in.data() + (static_cast<std::size_t>(iy) * w + ix) * cin, sizeof(Scalar) * cin);
            }
          }
        }
      }
    }
  }
  const ConstMatrixMap colmat = pointwise ? ConstMatrixMap(in.data(), oh * ow, patch)
                                          : ConstMatrixMap(cols->data(), oh * ow, patch);
  Tensor out({oh, ow, cout});
  MatrixMap om(out.data(), oh * ow, cout);
  om.noalias() = colmat * weight->value.matrix();
  if (bias) om.rowwise() += ConstMatrixMap(bias->value.data(), 1, cout).row(0);

  return make_result(std::move(out), {x, weight, bias},
                     [x, weight, bias, cols, pointwise, h, w, cin, cout, oh, ow, kernel, stride, padding,
                      patch](Node& self) {
    const ConstMatrixMap dout(self.grad.data(), oh * ow, cout);
    const ConstMatrixMap colmat = pointwise ? ConstMatrixMap(x->value.data(), oh * ow, patch)
                                            : ConstMatrixMap(cols->data(), oh * ow, patch);
    if (needs(weight)) grad_of(weight).matrix().noalias() += colmat.transpose() * dout;
    if (needs(bias)) MatrixMap(grad_of(bias).data(), 1, cout) += dout.colwise().sum();
    if (!needs(x)) return;
    if (pointwise) {
      MatrixMap(grad_of(x).data(), oh * ow, cin).noalias() += dout * weight->value.matrix().transpose();
      return;
    }
    RowMatrix dcols = dout * weight->value.matrix().transpose();
    Scalar* gx = grad_of(x).data();
    const Scalar* src = dcols.data();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - padding + ky;
          for (int kx = 0; kx < kernel; ++kx, src += cin) {
            const int ix = ox * stride - padding + kx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            Scalar* d = gx + (static_cast<std::size_t>(iy) * w + ix) * cin;
            for (int c = 0; c < cin; ++c) d[c] += src[c];
          }
        }
      }
    }
  });
}

namespace {

struct AxisTaps {
  std::vector<int> lo, hi;
  std::vector<Scalar> w_hi;
};

AxisTaps axis_taps(int in, int out) {
  AxisTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.w_hi.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const int hi = std::min(lo + 1, in - 1);
    t.lo[o] = lo;
    t.hi[o] = hi;
    t.w_hi[o] = static_cast<Scalar>(src - lo);
  }
  return t;
}

}  // namespace

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  const Tensor& in = x->value;
  require_shape(in.rank() == 3, "resize_bilinear expects {h, w, c}");
  const int h = in.dim(0), w = in.dim(1), c = in.dim(2);
  auto ty = std::make_shared<AxisTaps>(axis_taps(h, out_h));
  auto tx = std::make_shared<AxisTaps>(axis_taps(w, out_w));
  Tensor out({out_h, out_w, c});
  for (int oy = 0; oy < out_h; ++oy) {
    const Scalar wy1 = ty->w_hi[oy], wy0 = 1 - wy1;
    const Scalar* r0 = in.data() + static_cast<std::size_t>(ty->lo[oy]) * w * c;
    const Scalar* r1 = in.data() + static_cast<std::size_t>(ty->hi[oy]) * w * c;
    for (int ox = 0; ox < out_w; ++ox) {
      const Scalar wx1 = tx->w_hi[ox], wx0 = 1 - wx1;
      const int x0 = tx->lo[ox] * c, x1 = tx->hi[ox] * c;
      Scalar* dst = out.data() + (static_cast<std::size_t>(oy) * out_w + ox) * c;
      for (int k = 0; k < c; ++k) {
        dst[k] = wy0 * (wx0 * r0[x0 + k] + wx1 * r0[x1 + k]) + wy1 * (wx0 * r1[x0 + k] + wx1 * r1[x1 + k]);
      }
    }
  }
  return make_result(std::move(out), {x}, [x, ty, tx, w, c, out_h, out_w](Node& self) {
    Scalar* g = grad_of(x).data();
    for (int oy = 0; oy < out_h; ++oy) {
      const Scalar wy1 = ty->w_hi[oy], wy0 = 1 - wy1;
      Scalar* r0 = g + static_cast<std::size_t>(ty->lo[oy]) * w * c;
      Scalar* r1 = g + static_cast<std::size_t>(ty->hi[oy]) * w * c;
      for (int ox = 0; ox < out_w; ++ox) {
        const Scalar wx1 = tx->w_hi[ox], wx0 = 1 - wx1;
        const int x0 = tx->lo[ox] * c, x1 = tx->hi[ox] * c;
        const Scalar* src = self.grad.data() + (static_cast<std::size_t>(oy) * out_w + ox) * c;
        for (int k = 0; k < c; ++k) {
          r0[x0 + k] += wy0 * wx0 * src[k];
          r0[x1 + k] += wy0 * wx1 * src[k];
          r1[x0 + k] += wy1 * wx0 * src[k];
          r1[x1 + k] += wy1 * wx1 * src[k];
        }
      }
    }
  });
}

Var slice_rows(const Var& x, int begin, int end) {
  const int r = rows_of(x->value);
  const int c = x->value.cols();
  require_shape(0 <= begin && begin < end && end <= r, "slice_rows: bad range");
  Tensor out({end - begin, c});
  std::copy(x->value.data() + static_cast<std::size_t>(begin) * c, x->value.data() + static_cast<std::size_t>(end) * c,
            out.data());
  return make_result(std::move(out), {x}, [x, begin, c](Node& self) {
    Scalar* g = grad_of(x).data() + static_cast<std::size_t>(begin) * c;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require_shape(!parts.empty(), "concat_rows: no inputs");
  const int c = parts.front()->value.cols();
  int total = 0;
  for (const auto& p : parts) {
    require_shape(p->value.cols() == c, "concat_rows: width mismatch");
    total += p->value.rows();
  }
  Tensor out({total, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data(), p->value.data() + p->value.size(), out.data() + off);
    off += p->value.size();
  }
  return make_result(std::move(out), parts, [parts](Node& self) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (needs(p)) {
        auto& g = grad_of(p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
      }
      off += p->value.size();
    }
  });
}

Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights) {
  require_shape(scalars.size() == weights.size() && !scalars.empty(), "weighted_sum: length mismatch");
  double total = 0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    require_shape(scalars[i]->value.size() == 1, "weighted_sum: non-scalar term");
    total += weights[i] * scalars[i]->value[0];
  }
  Tensor out({1}, static_cast<Scalar>(total));
  return make_result(std::move(out), scalars, [scalars, weights](Node& self) {
    for (std::size_t i = 0; i < scalars.size(); ++i) {
      if (needs(scalars[i])) grad_of(scalars[i])[0] += static_cast<Scalar>(weights[i]) * self.grad[0];
    }
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads, const std::vector<std::uint8_t>& blocked,
              Tensor* weights_out) {
  const int nq = q->value.rows(), nk = k->value.rows(), d = q->value.cols();
  require_shape(k->value.cols() == d && v->value.cols() == d && v->value.rows() == nk,
                "attention: dimension mismatch");
  require_shape(heads > 0 && d % heads == 0, "attention: width not divisible by heads");
  require_shape(blocked.empty() || blocked.size() == static_cast<std::size_t>(nq) * nk, "attention: mask size");
  const int dh = d / heads;
  const Scalar inv_scale = 1.0f / std::sqrt(static_cast<Scalar>(dh));

  auto probs = std::make_shared<std::vector<RowMatrix>>(heads);
  Tensor out({nq, d});
  MatrixMap om = out.matrix();
  const ConstMatrixMap Q = q->value.cmatrix(), K = k->value.cmatrix(), V = v->value.cmatrix();
  for (int hd = 0; hd < heads; ++hd) {
    RowMatrix s = (Q.middleCols(hd * dh, dh) * K.middleCols(hd * dh, dh).transpose()) * inv_scale;
    for (int i = 0; i < nq; ++i) {
      Scalar m = -std::numeric_limits<Scalar>::infinity();
      for (int j = 0; j < nk; ++j) {
        if (!blocked.empty() && blocked[static_cast<std::size_t>(i) * nk + j]) continue;
        m = std::max(m, s(i, j));
      }
      require_shape(std::isfinite(m), "attention: query row has no admissible key");
      Scalar sum = 0;
      for (int j = 0; j < nk; ++j) {
        const bool off = !blocked.empty() && blocked[static_cast<std::size_t>(i) * nk + j];
        s(i, j) = off ? 0.0f : std::exp(s(i, j) - m);
        sum += s(i, j);
      }
      s.row(i) /= sum;
    }
    om.middleCols(hd * dh, dh).noalias() = s * V.middleCols(hd * dh, dh);
    (*probs)[hd] = std::move(s);
  }
  if (weights_out) {
    *weights_out = Tensor({heads, nq, nk});
    for (int hd = 0; hd < heads; ++hd) {
      std::copy((*probs)[hd].data(), (*probs)[hd].data() + static_cast<std::size_t>(nq) * nk,
                weights_out->data() + static_cast<std::size_t>(hd) * nq * nk);
    }
  }
  return make_result(std::move(out), {q, k, v}, [q, k, v, probs, heads, dh, inv_scale](Node& self) {
    const ConstMatrixMap dO = self.grad.cmatrix();
    const ConstMatrixMap Q = q->value.cmatrix(), K = k->value.cmatrix(), V = v->value.cmatrix();
    for (int hd = 0; hd < heads; ++hd) {
      const RowMatrix& a = (*probs)[hd];
      const auto dOh = dO.middleCols(hd * dh, dh);
      if (needs(v)) grad_of(v).matrix().middleCols(hd * dh, dh).noalias() += a.transpose() * dOh;
      if (!needs(q) && !needs(k)) continue;
      RowMatrix da = dOh * V.middleCols(hd * dh, dh).transpose();
      // softmax backward, row-wise
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots = (da.array() * a.array()).rowwise().sum();
      RowMatrix ds = a.array() * (da.colwise() - dots).array();
      ds *= inv_scale;
      if (needs(q)) grad_of(q).matrix().middleCols(hd * dh, dh).noalias() += ds * K.middleCols(hd * dh, dh);
      if (needs(k)) grad_of(k).matrix().middleCols(hd * dh, dh).noalias() += ds.transpose() * Q.middleCols(hd * dh, dh);
    }
  });
}

}  // namespace depthbins::ops
