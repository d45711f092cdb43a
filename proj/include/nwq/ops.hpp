#pragma once

// Differentiable operations over NCHW tensors.
//
// Every op validates shapes (DimensionError on mismatch), computes its output, checks
// it for non-finite values and records a backward rule on the tape when any input
// requires a gradient. Reductions run in a fixed order, so outputs are bit-identical
// across repeated calls within one build.

#include <cstddef>
#include <span>

#include "nwq/tensor.hpp"

namespace nwq {

inline constexpr double kDefaultLeakySlope = 0.01;

/// Cross-correlation of x[N,C,H,W] with w[K,C,kh,kw] plus b[K].
/// Output is [N,K,H',W'] with H' = (H + 2*padding - kh) / stride + 1.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::size_t padding, std::size_t stride = 1);

/// One kh x kw filter per channel: x[N,C,H,W], w[C,1,kh,kw], b[C]. Stride 1.
template <typename T>
Tensor<T> depthwise_conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& b, std::size_t padding);

/// 1x1 channel mixing: x[N,C,H,W], w[K,C,1,1], b[K] -> [N,K,H,W].
template <typename T>
Tensor<T> pointwise_conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& b);

/// 2x2 max pooling with stride 2. Ties resolve to the first element in row-major
/// window order, and the backward pass routes the gradient there only.
template <typename T>
Tensor<T> max_pool2(Tape<T>& tape, const Tensor<T>& x);

/// Bilinear x2 upsampling, half-pixel centres (align_corners = false), edge clamped.
template <typename T>
Tensor<T> bilinear_upsample2(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// max(x, slope*x); the derivative at 0 is `slope`.
template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& x, T slope = T(kDefaultLeakySlope));

/// max(x, 0); the derivative at 0 is 0.
template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x);

/// Logistic function, clamped to the open interval (0, 1).
template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x);

/// Sum of all elements as a [1] tensor.
template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& x);

/// Elementwise product of equally shaped tensors.
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// [N,C,H,W] -> [N,C,1,1] spatial mean.
template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& x);

/// [N,C,H,W] -> [N,2,H,W]: channel mean in slot 0, channel max in slot 1 (first max wins).
template <typename T>
Tensor<T> channel_avg_max(Tape<T>& tape, const Tensor<T>& x);

/// x[N,C,H,W] * s[N,C,1,1], broadcast over space.
template <typename T>
Tensor<T> scale_channels(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& s);

/// x[N,C,H,W] * s[N,1,H,W], broadcast over channels.
template <typename T>
Tensor<T> scale_spatial(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& s);

/// Gathers channels `index` of x[N,C,H,W] into [N,index.size(),H,W].
template <typename T>
Tensor<T> select_channels(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> index);

}  // namespace nwq
