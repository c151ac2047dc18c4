#pragma once

#include <vector>

#include "tmnet/tape.hpp"
#include "tmnet/tensor.hpp"

namespace tmnet {

// Elementwise suite. Binary ops accept equal shapes, or a per-channel vector
// [1,C,1,1] against [N,C,H,W] (only broadcast form supported). All record on
// the active tape when any input is differentiable.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double negative_slope = 0.1);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);

// Full reductions to a scalar [1]. Fixed pairwise summation tree, so results
// are bit-identical for any worker-thread count.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Channel stacking in argument order; gradient splits accordingly.
Tensor concat_channels(const std::vector<Tensor>& inputs);
// Inverse of concat_channels; sizes are per-piece channel counts.
std::vector<Tensor> split_channels(const Tensor& t, const std::vector<std::int64_t>& sizes);

// out(n,c,r*h+a,r*w+b) = in(n, c*r^2 + a*r + b, h, w); exact inverse below.
Tensor pixel_shuffle(const Tensor& t, int r);
Tensor pixel_unshuffle(const Tensor& t, int r);

// Half-pixel-center bilinear x2 upsampling with edge clamping.
Tensor bilinear_upsample_x2(const Tensor& t);

// Cross-correlation with zero padding. weight [Cout,Cin,kh,kw] with odd kh,kw;
// bias [Cout] or undefined. Differentiable w.r.t. input, weight and bias.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);

// Samples input at absolute pixel coordinates; coords [N,2,Ho,Wo] with
// channel 0 = x and channel 1 = y. Out-of-bounds taps read zero and receive
// no gradient. Differentiable w.r.t. input and coords.
Tensor bilinear_sample(const Tensor& input, const Tensor& coords);

namespace detail {
// Deterministic pairwise sum over a contiguous range (test hooks reuse it).
template <typename T>
double pairwise_sum(const T* p, std::int64_t n) {
    if (n <= 8) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(p[i]);
        return acc;
    }
    std::int64_t half = n / 2;
    return pairwise_sum(p, half) + pairwise_sum(p + half, n - half);
}
}  // namespace detail

}  // namespace tmnet
