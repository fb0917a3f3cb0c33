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

#pragma once

#include <cstddef>

#include "omniad/tensor.hpp"

// Differentiable tensor operations. Every function records itself on the
// thread's active Tape when any input requires a gradient.
//
// Image-like tensors are channels-last: [h, w, C] or batched [B, h, w, C].
// Token tensors are [N, D] or batched [B, N, D].
namespace omniad::ops {

// ---- elementwise & reductions ------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& x);
// Exact (erf-based) GELU.
Tensor gelu(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor sum_squares(const Tensor& x);

// ---- shape -------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
// Concatenates along the last axis; all leading extents must agree.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// ---- linear algebra ----------------------------------------------------------

// C[i,j] = sum_p A[i,p] B[p,j] for A [m x k], B [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
// y = x W + b applied to every row of x's last axis. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});
// 1x1 convolution over channels-last input; same arithmetic as linear() but
// validates channel extents with a convolution-flavoured message.
Tensor pointwise_conv(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

// Row-wise softmax over the last axis, stabilised by per-row max subtraction.
Tensor softmax_rows(const Tensor& x);

// Per-token normalisation over the last axis with learnable scale and shift.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// ---- attention ---------------------------------------------------------------

// Already-projected multi-head attention core:
//   out[:, head] = softmax(Q_h K_h^T / sqrt(D_h)) V_h
// Q is [q, D] or [Bq, q, D]; K, V are [s, D] or [Bk, s, D]. A batch extent of 1
// broadcasts against the other operand.
Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                    std::size_t heads);

// Projection weights of one multi-head attention. Each matrix is [D x D];
// columns [i*D_h, (i+1)*D_h) of wq/wk/wv hold the per-head projection of head i.
struct MhaWeights {
  Tensor wq;
  Tensor wk;
  Tensor wv;
  Tensor wo;
};

// Concat(head_1..head_H) W^O with head_i = softmax(Q Wq_i (K Wk_i)^T / sqrt(D_h)) V Wv_i.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const MhaWeights& weights, std::size_t heads);

// ---- convolution & resampling ------------------------------------------------

// Per-channel k x k convolution, stride 1, zero "same" padding. kernel is [k, k, C].
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel);

// Dense k x k convolution with zero padding (k-1)/2. weight is [k, k, Cin, Cout].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride);

// Channel-wise batch normalisation over every leading position. In training
// mode batch statistics are used and the running buffers are updated in place
// (running = (1 - momentum) * running + momentum * batch; unbiased variance).
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

// Bilinear interpolation with half-pixel centres (align_corners = false).
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace omniad::ops
