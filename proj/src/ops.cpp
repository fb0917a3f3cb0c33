/* Copyright 2026 The Omni-AD Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "omniad/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "omniad/errors.hpp"

namespace omniad::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using Strided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using Impl = std::shared_ptr<detail::TensorImpl>;
using Grad = Buffer;

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

// Gradient buffer of an input that takes part in differentiation, else null.
double* grad_of(const Impl& impl) {
  if (!impl || !impl->requires_grad) return nullptr;
  return impl->grad_buffer().data();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw DimensionError(std::string(op) + ": expected rank >= 1, got a scalar");
  return x.shape().back();
}

// Interprets x as (batch, h, w, C); rank 3 gives batch 1.
struct ImageDims {
  std::size_t batch, h, w, c;
};

ImageDims image_dims(const Tensor& x, const char* op) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  throw DimensionError(std::string(op) + ": expected [h,w,C] or [B,h,w,C], got " +
                       shape_string(x.shape()));
}

Shape image_shape(const Tensor& like, std::size_t h, std::size_t w, std::size_t c) {
  if (like.rank() == 3) return {h, w, c};
  return {like.dim(0), h, w, c};
}

// Interprets x as (batch, rows, D); rank 2 gives batch 1.
struct TokenDims {
  std::size_t batch, rows, d;
};

TokenDims token_dims(const Tensor& x, const char* op) {
  if (x.rank() == 2) return {1, x.dim(0), x.dim(1)};
  if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2)};
  throw DimensionError(std::string(op) + ": expected [N,D] or [B,N,D], got " +
                       shape_string(x.shape()));
}

}  // namespace

// ---- elementwise & reductions ------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record("add", out, [ai = a.impl(), bi = b.impl()](const Grad& g) {
      if (double* ga = grad_of(ai))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      if (double* gb = grad_of(bi))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record("sub", out, [ai = a.impl(), bi = b.impl()](const Grad& g) {
      if (double* ga = grad_of(ai))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      if (double* gb = grad_of(bi))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record("mul", out, [ai = a.impl(), bi = b.impl()](const Grad& g) {
      if (double* ga = grad_of(ai))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bi->data[i];
      if (double* gb = grad_of(bi))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ai->data[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  if (Tape* tape = recording_tape({&a})) {
    tape->record("scale", out, [ai = a.impl(), factor](const Grad& g) {
      if (double* ga = grad_of(ai))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
  if (Tape* tape = recording_tape({&x})) {
    tape->record("relu", out, [xi = x.impl()](const Grad& g) {
      if (double* gx = grad_of(xi))
        for (std::size_t i = 0; i < g.size(); ++i)
          if (xi->data[i] > 0.0) gx[i] += g[i];
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 0.5 * in[i] * (1.0 + std::erf(in[i] * kInvSqrt2));
  if (Tape* tape = recording_tape({&x})) {
    tape->record("gelu", out, [xi = x.impl()](const Grad& g) {
      double* gx = grad_of(xi);
      if (!gx) return;
      const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xi->data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        gx[i] += g[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (Tape* tape = recording_tape({&x})) {
    tape->record("sum", out, [xi = x.impl()](const Grad& g) {
      if (double* gx = grad_of(xi))
        for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g[0];
    });
  }
  return out;
}

Tensor sum_squares(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v * v;
  Tensor out = Tensor::scalar(acc);
  if (Tape* tape = recording_tape({&x})) {
    tape->record("sum_squares", out, [xi = x.impl()](const Grad& g) {
      if (double* gx = grad_of(xi))
        for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += 2.0 * xi->data[i] * g[0];
    });
  }
  return out;
}

// ---- shape -------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  Tensor out(std::move(shape), x.buffer());
  if (Tape* tape = recording_tape({&x})) {
    tape->record("reshape", out, [xi = x.impl()](const Grad& g) {
      if (double* gx = grad_of(xi))
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const std::size_t ca = last_dim(a, "concat_channels");
  const std::size_t cb = last_dim(b, "concat_channels");
  Shape lead_a(a.shape().begin(), a.shape().end() - 1);
  Shape lead_b(b.shape().begin(), b.shape().end() - 1);
  if (lead_a != lead_b) {
    throw DimensionError("concat_channels: leading extents differ " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
  const std::size_t rows = shape_numel(lead_a);
  Shape out_shape = lead_a;
  out_shape.push_back(ca + cb);
  Tensor out(out_shape);
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.begin() + r * ca, ca, o.begin() + r * (ca + cb));
    std::copy_n(y.begin() + r * cb, cb, o.begin() + r * (ca + cb) + ca);
  }
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record("concat_channels", out, [ai = a.impl(), bi = b.impl(), rows, ca, cb](const Grad& g) {
      if (double* ga = grad_of(ai))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += g[r * (ca + cb) + c];
      if (double* gb = grad_of(bi))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += g[r * (ca + cb) + ca + c];
    });
  }
  return out;
}

// ---- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  Tensor out({a.dim(0), b.dim(1)});
  MapMat(out.mutable_data().data(), m, n).noalias() =
      CMapMat(a.data().data(), m, k) * CMapMat(b.data().data(), k, n);
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record("matmul", out, [ai = a.impl(), bi = b.impl(), m, k, n](const Grad& g) {
      CMapMat dc(g.data(), m, n);
      if (double* ga = grad_of(ai))
        MapMat(ga, m, k).noalias() += dc * CMapMat(bi->data.data(), k, n).transpose();
      if (double* gb = grad_of(bi))
        MapMat(gb, k, n).noalias() += CMapMat(ai->data.data(), m, k).transpose() * dc;
    });
  }
  return out;
}

namespace {

Tensor linear_impl(const Tensor& x, const Tensor& weight, const Tensor& bias, const char* op) {
  const std::size_t din = last_dim(x, op);
  if (weight.rank() != 2 || weight.dim(0) != din) {
    throw DimensionError(std::string(op) + ": input " + shape_string(x.shape()) +
                         " has " + std::to_string(din) + " channels but weight is " +
                         shape_string(weight.shape()));
  }
  const std::size_t dout = weight.dim(1);
  if (bias.defined() && bias.numel() != dout) {
    throw DimensionError(std::string(op) + ": bias " + shape_string(bias.shape()) +
                         " does not match output width " + std::to_string(dout));
  }
  const auto rows = static_cast<Eigen::Index>(x.numel() / din);
  const auto di = static_cast<Eigen::Index>(din);
  const auto dn = static_cast<Eigen::Index>(dout);
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor out(out_shape);
  MapMat y(out.mutable_data().data(), rows, dn);
  y.noalias() = CMapMat(x.data().data(), rows, di) * CMapMat(weight.data().data(), di, dn);
  if (bias.defined()) {
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), dn);
  }
  if (Tape* tape = recording_tape({&x, &weight, &bias})) {
    tape->record(op, out,
                 [xi = x.impl(), wi = weight.impl(), bi = bias.impl(), rows, di, dn](const Grad& g) {
                   CMapMat dy(g.data(), rows, dn);
                   if (double* gx = grad_of(xi))
                     MapMat(gx, rows, di).noalias() += dy * CMapMat(wi->data.data(), di, dn).transpose();
                   if (double* gw = grad_of(wi))
                     MapMat(gw, di, dn).noalias() += CMapMat(xi->data.data(), rows, di).transpose() * dy;
                   if (double* gb = grad_of(bi)) {
                     for (Eigen::Index r = 0; r < rows; ++r)
                       for (Eigen::Index c = 0; c < dn; ++c) gb[c] += g[r * dn + c];
                   }
                 });
  }
  return out;
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return linear_impl(x, weight, bias, "linear");
}

Tensor pointwise_conv(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return linear_impl(x, weight, bias, "pointwise_conv");
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t n = last_dim(x, "softmax_rows");
  const std::size_t rows = x.numel() / n;
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = in.data() + r * n;
    double* dst = o.data() + r * n;
    double mx = src[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, src[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dst[j] = std::exp(src[j] - mx);
      total += dst[j];
    }
    for (std::size_t j = 0; j < n; ++j) dst[j] /= total;
  }
  if (Tape* tape = recording_tape({&x})) {
    tape->record("softmax_rows", out, [xi = x.impl(), oi = out.impl(), rows, n](const Grad& g) {
      double* gx = grad_of(xi);
      if (!gx) return;
      const double* p = oi->data.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * p[r * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += p[r * n + j] * (g[r * n + j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = last_dim(x, "layer_norm");
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: scale/shift of size " + std::to_string(gamma.numel()) + "/" +
                         std::to_string(beta.numel()) + " for width " + std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  Tensor out(x.shape());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  auto in = x.data();
  auto o = out.mutable_data();
  auto gm = gamma.data();
  auto bt = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = in.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += src[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (src[j] - mean) * inv_std[r];
      o[r * d + j] = xhat[r * d + j] * gm[j] + bt[j];
    }
  }
  if (Tape* tape = recording_tape({&x, &gamma, &beta})) {
    tape->record("layer_norm", out,
                 [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), xhat = std::move(xhat),
                  inv_std = std::move(inv_std), rows, d](const Grad& g) {
                   double* gx = grad_of(xi);
                   double* gg = grad_of(gi);
                   double* gb = grad_of(bi);
                   const double* gm = gi->data.data();
                   std::vector<double> dxhat(d);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double* dy = g.data() + r * d;
                     const double* xh = xhat.data() + r * d;
                     if (gg)
                       for (std::size_t j = 0; j < d; ++j) gg[j] += dy[j] * xh[j];
                     if (gb)
                       for (std::size_t j = 0; j < d; ++j) gb[j] += dy[j];
                     if (!gx) continue;
                     double mean_d = 0.0, mean_dx = 0.0;
                     for (std::size_t j = 0; j < d; ++j) {
                       dxhat[j] = dy[j] * gm[j];
                       mean_d += dxhat[j];
                       mean_dx += dxhat[j] * xh[j];
                     }
                     mean_d /= static_cast<double>(d);
                     mean_dx /= static_cast<double>(d);
                     for (std::size_t j = 0; j < d; ++j)
                       gx[r * d + j] += inv_std[r] * (dxhat[j] - mean_d - xh[j] * mean_dx);
                   }
                 });
  }
  return out;
}

// ---- attention ---------------------------------------------------------------

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                    std::size_t heads) {
  const TokenDims qd = token_dims(q, "attention(Q)");
  const TokenDims kd = token_dims(k, "attention(K)");
  const TokenDims vd = token_dims(v, "attention(V)");
  if (heads == 0 || qd.d % heads != 0) {
    throw ConfigError("attention: width " + std::to_string(qd.d) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (kd.d != qd.d || vd.d != qd.d || kd.rows != vd.rows || kd.batch != vd.batch) {
    throw DimensionError("attention: incompatible Q " + shape_string(q.shape()) + ", K " +
                         shape_string(k.shape()) + ", V " + shape_string(v.shape()));
  }
  const std::size_t batch = std::max(qd.batch, kd.batch);
  if ((qd.batch != 1 && qd.batch != batch) || (kd.batch != 1 && kd.batch != batch)) {
    throw DimensionError("attention: batch extents " + std::to_string(qd.batch) + " and " +
                         std::to_string(kd.batch) + " do not broadcast");
  }
  const auto nq = static_cast<Eigen::Index>(qd.rows);
  const auto ns = static_cast<Eigen::Index>(kd.rows);
  const auto d = static_cast<Eigen::Index>(qd.d);
  const auto dh = static_cast<Eigen::Index>(qd.d / heads);
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));

  const bool batched = q.rank() == 3 || k.rank() == 3;
  Tensor out(batched ? Shape{batch, qd.rows, qd.d} : Shape{qd.rows, qd.d});
  const bool keep = recording_tape({&q, &k, &v}) != nullptr;
  std::vector<RowMat> probs;
  if (keep) probs.reserve(batch * heads);

  RowMat scores(nq, ns);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* qb = q.data().data() + (qd.batch == 1 ? 0 : b) * qd.rows * qd.d;
    const double* kb = k.data().data() + (kd.batch == 1 ? 0 : b) * kd.rows * kd.d;
    const double* vb = v.data().data() + (kd.batch == 1 ? 0 : b) * kd.rows * kd.d;
    double* ob = out.mutable_data().data() + b * qd.rows * qd.d;
    for (std::size_t h = 0; h < heads; ++h) {
      const Eigen::Index off = static_cast<Eigen::Index>(h) * dh;
      CStrided qh(qb + off, nq, dh, Eigen::OuterStride<>(d));
      CStrided kh(kb + off, ns, dh, Eigen::OuterStride<>(d));
      CStrided vh(vb + off, ns, dh, Eigen::OuterStride<>(d));
      scores.noalias() = qh * kh.transpose();
      for (Eigen::Index i = 0; i < nq; ++i) {
        double* row = scores.data() + i * ns;
        double mx = row[0] * scale_factor;
        for (Eigen::Index j = 0; j < ns; ++j) {
          row[j] *= scale_factor;
          mx = std::max(mx, row[j]);
        }
        double total = 0.0;
        for (Eigen::Index j = 0; j < ns; ++j) {
          row[j] = std::exp(row[j] - mx);
          total += row[j];
        }
        for (Eigen::Index j = 0; j < ns; ++j) row[j] /= total;
      }
      Strided(ob + off, nq, dh, Eigen::OuterStride<>(d)).noalias() = scores * vh;
      if (keep) probs.push_back(scores);
    }
  }

  if (Tape* tape = recording_tape({&q, &k, &v})) {
    tape->record(
        "scaled_dot_product_attention", out,
        [qi = q.impl(), ki = k.impl(), vi = v.impl(), probs = std::move(probs), batch, heads,
         qbatch = qd.batch, kbatch = kd.batch, nq, ns, d, dh, scale_factor](const Grad& g) {
          double* gq = grad_of(qi);
          double* gk = grad_of(ki);
          double* gv = grad_of(vi);
          RowMat dp(nq, ns);
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t qoff = (qbatch == 1 ? 0 : b) * nq * d;
            const std::size_t koff = (kbatch == 1 ? 0 : b) * ns * d;
            const double* gob = g.data() + b * nq * d;
            for (std::size_t h = 0; h < heads; ++h) {
              const Eigen::Index off = static_cast<Eigen::Index>(h) * dh;
              const RowMat& p = probs[b * heads + h];
              CStrided dout(gob + off, nq, dh, Eigen::OuterStride<>(d));
              CStrided qh(qi->data.data() + qoff + off, nq, dh, Eigen::OuterStride<>(d));
              CStrided kh(ki->data.data() + koff + off, ns, dh, Eigen::OuterStride<>(d));
              CStrided vh(vi->data.data() + koff + off, ns, dh, Eigen::OuterStride<>(d));
              if (gv) Strided(gv + koff + off, ns, dh, Eigen::OuterStride<>(d)).noalias() += p.transpose() * dout;
              if (!gq && !gk) continue;
              dp.noalias() = dout * vh.transpose();
              for (Eigen::Index i = 0; i < nq; ++i) {
                double dot = 0.0;
                for (Eigen::Index j = 0; j < ns; ++j) dot += dp(i, j) * p(i, j);
                for (Eigen::Index j = 0; j < ns; ++j) dp(i, j) = p(i, j) * (dp(i, j) - dot) * scale_factor;
              }
              if (gq) Strided(gq + qoff + off, nq, dh, Eigen::OuterStride<>(d)).noalias() += dp * kh;
              if (gk) Strided(gk + koff + off, ns, dh, Eigen::OuterStride<>(d)).noalias() += dp.transpose() * qh;
            }
          }
        });
  }
  return out;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const MhaWeights& weights, std::size_t heads) {
  const std::size_t d = last_dim(q, "multi_head_attention");
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("multi_head_attention: width " + std::to_string(d) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  }
  const Tensor qp = linear(q, weights.wq);
  const Tensor kp = linear(k, weights.wk);
  const Tensor vp = linear(v, weights.wv);
  return linear(scaled_dot_product_attention(qp, kp, vp, heads), weights.wo);
}

// ---- convolution & resampling ------------------------------------------------

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel) {
  const ImageDims dims = image_dims(x, "depthwise_conv2d");
  if (kernel.rank() != 3 || kernel.dim(0) != kernel.dim(1)) {
    throw DimensionError("depthwise_conv2d: kernel must be [k,k,C], got " +
                         shape_string(kernel.shape()));
  }
  const std::size_t ks = kernel.dim(0);
  if (ks % 2 == 0) {
    throw ConfigError("depthwise_conv2d: kernel size must be odd, got " + std::to_string(ks));
  }
  if (kernel.dim(2) != dims.c) {
    throw DimensionError("depthwise_conv2d: kernel " + shape_string(kernel.shape()) +
                         " does not match input " + shape_string(x.shape()));
  }
  const auto pad = static_cast<std::ptrdiff_t>(ks / 2);
  const auto h = static_cast<std::ptrdiff_t>(dims.h);
  const auto w = static_cast<std::ptrdiff_t>(dims.w);
  const std::size_t c = dims.c;
  Tensor out(x.shape());
  const double* in = x.data().data();
  const double* kw = kernel.data().data();
  double* o = out.mutable_data().data();
  for (std::size_t b = 0; b < dims.batch; ++b) {
    const double* ib = in + b * dims.h * dims.w * c;
    double* obp = o + b * dims.h * dims.w * c;
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t xx = 0; xx < w; ++xx) {
        double* dst = obp + (y * w + xx) * c;
        for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(ks); ++ky) {
          const std::ptrdiff_t iy = y + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(ks); ++kx) {
            const std::ptrdiff_t ix = xx + kx - pad;
            if (ix < 0 || ix >= w) continue;
            const double* src = ib + (iy * w + ix) * c;
            const double* kk = kw + (ky * static_cast<std::ptrdiff_t>(ks) + kx) * c;
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch] * kk[ch];
          }
        }
      }
    }
  }
  if (Tape* tape = recording_tape({&x, &kernel})) {
    tape->record("depthwise_conv2d", out,
                 [xi = x.impl(), ki = kernel.impl(), dims, ks, pad](const Grad& g) {
                   double* gx = grad_of(xi);
                   double* gk = grad_of(ki);
                   const auto h = static_cast<std::ptrdiff_t>(dims.h);
                   const auto w = static_cast<std::ptrdiff_t>(dims.w);
                   const auto kss = static_cast<std::ptrdiff_t>(ks);
                   const std::size_t c = dims.c;
                   for (std::size_t b = 0; b < dims.batch; ++b) {
                     const std::size_t base = b * dims.h * dims.w * c;
                     for (std::ptrdiff_t y = 0; y < h; ++y) {
                       for (std::ptrdiff_t xx = 0; xx < w; ++xx) {
                         const double* dy = g.data() + base + (y * w + xx) * c;
                         for (std::ptrdiff_t ky = 0; ky < kss; ++ky) {
                           const std::ptrdiff_t iy = y + ky - pad;
                           if (iy < 0 || iy >= h) continue;
                           for (std::ptrdiff_t kx = 0; kx < kss; ++kx) {
                             const std::ptrdiff_t ix = xx + kx - pad;
                             if (ix < 0 || ix >= w) continue;
                             const std::size_t src = base + (iy * w + ix) * c;
                             const std::size_t kof = (ky * kss + kx) * c;
                             if (gx)
                               for (std::size_t ch = 0; ch < c; ++ch) gx[src + ch] += dy[ch] * ki->data[kof + ch];
                             if (gk)
                               for (std::size_t ch = 0; ch < c; ++ch) gk[kof + ch] += dy[ch] * xi->data[src + ch];
                           }
                         }
                       }
                     }
                   }
                 });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  const ImageDims dims = image_dims(x, "conv2d");
  if (weight.rank() != 4 || weight.dim(0) != weight.dim(1) || weight.dim(2) != dims.c) {
    throw DimensionError("conv2d: weight " + shape_string(weight.shape()) +
                         " incompatible with input " + shape_string(x.shape()));
  }
  const std::size_t ks = weight.dim(0);
  if (ks % 2 == 0) throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(ks));
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t cout = weight.dim(3);
  if (bias.defined() && bias.numel() != cout) {
    throw DimensionError("conv2d: bias " + shape_string(bias.shape()) + " for " +
                         std::to_string(cout) + " output channels");
  }
  const std::size_t pad = ks / 2;
  const std::size_t oh = (dims.h + 2 * pad - ks) / stride + 1;
  const std::size_t ow = (dims.w + 2 * pad - ks) / stride + 1;
  const std::size_t patch = ks * ks * dims.c;
  const std::size_t rows = dims.batch * oh * ow;

  // im2col with (ky, kx, cin) ordering to match the weight layout.
  auto cols = std::make_shared<Buffer>(rows * patch, 0.0);
  const double* in = x.data().data();
  for (std::size_t b = 0; b < dims.batch; ++b)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double* dst = cols->data() + ((b * oh + y) * ow + xx) * patch;
        for (std::size_t ky = 0; ky < ks; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(dims.h)) continue;
          for (std::size_t kx = 0; kx < ks; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(xx * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(dims.w)) continue;
            std::copy_n(in + ((b * dims.h + iy) * dims.w + ix) * dims.c, dims.c,
                        dst + (ky * ks + kx) * dims.c);
          }
        }
      }

  Tensor out(image_shape(x, oh, ow, cout));
  const auto er = static_cast<Eigen::Index>(rows);
  const auto ep = static_cast<Eigen::Index>(patch);
  const auto ec = static_cast<Eigen::Index>(cout);
  MapMat y(out.mutable_data().data(), er, ec);
  y.noalias() = CMapMat(cols->data(), er, ep) * CMapMat(weight.data().data(), ep, ec);
  if (bias.defined()) y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), ec);

  if (Tape* tape = recording_tape({&x, &weight, &bias})) {
    tape->record("conv2d", out,
                 [xi = x.impl(), wi = weight.impl(), bi = bias.impl(), cols, dims, ks, pad, stride,
                  oh, ow, er, ep, ec](const Grad& g) {
                   CMapMat dy(g.data(), er, ec);
                   if (double* gw = grad_of(wi))
                     MapMat(gw, ep, ec).noalias() += CMapMat(cols->data(), er, ep).transpose() * dy;
                   if (double* gb = grad_of(bi))
                     for (Eigen::Index r = 0; r < er; ++r)
                       for (Eigen::Index c = 0; c < ec; ++c) gb[c] += g[r * ec + c];
                   double* gx = grad_of(xi);
                   if (!gx) return;
                   RowMat dcols = dy * CMapMat(wi->data.data(), ep, ec).transpose();
                   const std::size_t patch = static_cast<std::size_t>(ep);
                   for (std::size_t b = 0; b < dims.batch; ++b)
                     for (std::size_t y = 0; y < oh; ++y)
                       for (std::size_t xx = 0; xx < ow; ++xx) {
                         const double* src = dcols.data() + ((b * oh + y) * ow + xx) * patch;
                         for (std::size_t ky = 0; ky < ks; ++ky) {
                           const auto iy = static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                           if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(dims.h)) continue;
                           for (std::size_t kx = 0; kx < ks; ++kx) {
                             const auto ix = static_cast<std::ptrdiff_t>(xx * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                             if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(dims.w)) continue;
                             double* dst = gx + ((b * dims.h + iy) * dims.w + ix) * dims.c;
                             const double* s = src + (ky * ks + kx) * dims.c;
                             for (std::size_t c = 0; c < dims.c; ++c) dst[c] += s[c];
                           }
                         }
                       }
                 });
  }
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps) {
  const std::size_t c = last_dim(x, "batch_norm");
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c) {
    throw DimensionError("batch_norm: parameter sizes do not match " + std::to_string(c) +
                         " channels");
  }
  const std::size_t rows = x.numel() / c;
  const double* in = x.data().data();
  std::vector<double> mean(c, 0.0), inv_std(c);
  if (training) {
    std::vector<double> var(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) mean[j] += in[r * c + j];
    for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        const double dv = in[r * c + j] - mean[j];
        var[j] += dv * dv;
      }
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t j = 0; j < c; ++j) {
      const double biased = var[j] / static_cast<double>(rows);
      const double unbiased = rows > 1 ? var[j] / static_cast<double>(rows - 1) : biased;
      inv_std[j] = 1.0 / std::sqrt(biased + eps);
      rm[j] = (1.0 - momentum) * rm[j] + momentum * mean[j];
      rv[j] = (1.0 - momentum) * rv[j] + momentum * unbiased;
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(running_var[j] + eps);
    }
  }
  Tensor out(x.shape());
  std::vector<double> xhat(x.numel());
  double* o = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t i = r * c + j;
      xhat[i] = (in[i] - mean[j]) * inv_std[j];
      o[i] = xhat[i] * gamma[j] + beta[j];
    }
  if (Tape* tape = recording_tape({&x, &gamma, &beta})) {
    tape->record("batch_norm", out,
                 [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), xhat = std::move(xhat),
                  inv_std = std::move(inv_std), rows, c, training](const Grad& g) {
                   double* gx = grad_of(xi);
                   double* gg = grad_of(gi);
                   double* gb = grad_of(bi);
                   std::vector<double> sum_d(c, 0.0), sum_dx(c, 0.0);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t j = 0; j < c; ++j) {
                       const std::size_t i = r * c + j;
                       if (gg) gg[j] += g[i] * xhat[i];
                       if (gb) gb[j] += g[i];
                       const double dxh = g[i] * gi->data[j];
                       sum_d[j] += dxh;
                       sum_dx[j] += dxh * xhat[i];
                     }
                   if (!gx) return;
                   const double n = static_cast<double>(rows);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t j = 0; j < c; ++j) {
                       const std::size_t i = r * c + j;
                       const double dxh = g[i] * gi->data[j];
                       if (training) {
                         gx[i] += inv_std[j] * (dxh - sum_d[j] / n - xhat[i] * sum_dx[j] / n);
                       } else {
                         gx[i] += inv_std[j] * dxh;
                       }
                     }
                 });
  }
  return out;
}

namespace {

struct AxisTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

AxisTaps axis_taps(std::size_t in, std::size_t out) {
  AxisTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    t.lo[i] = lo;
    t.hi[i] = std::min(lo + 1, in - 1);
    t.frac[i] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  const ImageDims dims = image_dims(x, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize: target extents must be >= 1");
  Tensor out(image_shape(x, out_h, out_w, dims.c));
  const bool identity = out_h == dims.h && out_w == dims.w;
  const AxisTaps ty = axis_taps(dims.h, out_h);
  const AxisTaps tx = axis_taps(dims.w, out_w);
  const std::size_t c = dims.c;
  if (identity) {
    std::copy(x.data().begin(), x.data().end(), out.mutable_data().begin());
  } else {
    const double* in = x.data().data();
    double* o = out.mutable_data().data();
    for (std::size_t b = 0; b < dims.batch; ++b) {
      const double* ib = in + b * dims.h * dims.w * c;
      double* obp = o + b * out_h * out_w * c;
      for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = ty.frac[y];
        const double* r0 = ib + ty.lo[y] * dims.w * c;
        const double* r1 = ib + ty.hi[y] * dims.w * c;
        for (std::size_t xx = 0; xx < out_w; ++xx) {
          const double fx = tx.frac[xx];
          const double* a = r0 + tx.lo[xx] * c;
          const double* bb = r0 + tx.hi[xx] * c;
          const double* cc = r1 + tx.lo[xx] * c;
          const double* dd = r1 + tx.hi[xx] * c;
          double* dst = obp + (y * out_w + xx) * c;
          for (std::size_t ch = 0; ch < c; ++ch) {
            dst[ch] = (1.0 - fy) * ((1.0 - fx) * a[ch] + fx * bb[ch]) +
                      fy * ((1.0 - fx) * cc[ch] + fx * dd[ch]);
          }
        }
      }
    }
  }
  if (Tape* tape = recording_tape({&x})) {
    tape->record("bilinear_resize", out,
                 [xi = x.impl(), dims, out_h, out_w, identity, ty, tx](const Grad& g) {
                   double* gx = grad_of(xi);
                   if (!gx) return;
                   if (identity) {
                     for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     return;
                   }
                   const std::size_t c = dims.c;
                   for (std::size_t b = 0; b < dims.batch; ++b) {
                     double* gb = gx + b * dims.h * dims.w * c;
                     const double* gob = g.data() + b * out_h * out_w * c;
                     for (std::size_t y = 0; y < out_h; ++y) {
                       const double fy = ty.frac[y];
                       double* r0 = gb + ty.lo[y] * dims.w * c;
                       double* r1 = gb + ty.hi[y] * dims.w * c;
                       for (std::size_t xx = 0; xx < out_w; ++xx) {
                         const double fx = tx.frac[xx];
                         const double* src = gob + (y * out_w + xx) * c;
                         double* a = r0 + tx.lo[xx] * c;
                         double* bb = r0 + tx.hi[xx] * c;
                         double* cc = r1 + tx.lo[xx] * c;
                         double* dd = r1 + tx.hi[xx] * c;
                         for (std::size_t ch = 0; ch < c; ++ch) {
                           a[ch] += (1.0 - fy) * (1.0 - fx) * src[ch];
                           bb[ch] += (1.0 - fy) * fx * src[ch];
                           cc[ch] += fy * (1.0 - fx) * src[ch];
                           dd[ch] += fy * fx * src[ch];
                         }
                       }
                     }
                   }
                 });
  }
  return out;
}

}  // namespace omniad::ops
