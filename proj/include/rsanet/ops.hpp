#pragma once

#include <vector>

#include "rsanet/tensor.hpp"

namespace rsanet {

// Grouped 2-D convolution geometry. Cross-correlation convention (no kernel
// flip); weight layout [out_channels, in_channels/groups, kernel_h, kernel_w],
// bias [out_channels].
struct ConvSpec {
    int in_channels = 1;
    int out_channels = 1;
    int kernel_h = 1;
    int kernel_w = 1;
    int stride = 1;
    int padding = 0;
    int groups = 1;

    void validate() const;
    int out_h(int h) const { return (h + 2 * padding - kernel_h) / stride + 1; }
    int out_w(int w) const { return (w + 2 * padding - kernel_w) / stride + 1; }
};

// Forward kernels. All accumulate in f32 with a fixed, documented summand
// order (see ops.cpp), so results are bitwise-reproducible run to run.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec);
Tensor relu_forward(const Tensor& x);
Tensor avg_pool2d_forward(const Tensor& x, int kernel, int stride);
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);

// Channel interleave for the Siamese head: with k = C/groups, the output
// channel order is [A_0..A_{k-1}, B_0..B_{k-1}, A_k..A_{2k-1}, ...] so every
// group of the following group conv sees k channels from each branch.
Tensor interleave_forward(const Tensor& a, const Tensor& b, int groups);

// [N,C,H,W] -> [N, C*H*W]; row-major, so this is a pure reshape.
Tensor flatten2d_forward(const Tensor& x);

// Backward kernels accumulate (+=) into non-null gradient buffers, which the
// caller allocates with exactly the element count of the matching value.
void conv2d_backward(const Tensor& x, const Tensor& w, const ConvSpec& spec, const std::vector<float>& gout,
                     std::vector<float>* gx, std::vector<float>* gw, std::vector<float>* gb);
void relu_backward(const Tensor& x, const std::vector<float>& gout, std::vector<float>* gx);
void avg_pool2d_backward(const Tensor& x, int kernel, int stride, const std::vector<float>& gout,
                         std::vector<float>* gx);
void linear_backward(const Tensor& x, const Tensor& w, const std::vector<float>& gout,
                     std::vector<float>* gx, std::vector<float>* gw, std::vector<float>* gb);
void interleave_backward(const std::vector<float>& gout, const std::vector<int>& in_shape, int groups,
                         std::vector<float>* ga, std::vector<float>* gb);

}  // namespace rsanet
