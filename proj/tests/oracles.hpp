// Independent reference implementations used as test oracles. These must not
// share code with the library kernels they check; the accumulation order per
// output element (documented in src/ops.cpp) is the one shared contract.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rsanet/model.hpp"
#include "rsanet/ops.hpp"
#include "rsanet/prng.hpp"
#include "rsanet/tensor.hpp"

namespace oracles {

using rsanet::ConvSpec;
using rsanet::Tensor;

// Naive dense convolution: materializes the zero-padded input and slides the
// kernel over it. Groups must be 1.
inline Tensor conv2d_reference(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int OC = spec.out_channels, KH = spec.kernel_h, KW = spec.kernel_w;
    const int S = spec.stride, P = spec.padding;
    const int HP = H + 2 * P, WP = W + 2 * P;
    const int HO = (HP - KH) / S + 1, WO = (WP - KW) / S + 1;

    std::vector<float> padded(static_cast<size_t>(N) * C * HP * WP, 0.0f);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int ww = 0; ww < W; ++ww)
                    padded[((static_cast<size_t>(n) * C + c) * HP + h + P) * WP + ww + P] =
                        x.data[((static_cast<size_t>(n) * C + c) * H + h) * W + ww];

    Tensor out({N, OC, HO, WO});
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc)
            for (int oh = 0; oh < HO; ++oh)
                for (int ow = 0; ow < WO; ++ow) {
                    float acc = 0.0f;
                    for (int ic = 0; ic < C; ++ic)
                        for (int kh = 0; kh < KH; ++kh)
                            for (int kw = 0; kw < KW; ++kw) {
                                const float xv =
                                    padded[((static_cast<size_t>(n) * C + ic) * HP + oh * S + kh) * WP + ow * S +
                                           kw];
                                const float wv =
                                    w.data[((static_cast<size_t>(oc) * C + ic) * KH + kh) * KW + kw];
                                acc = std::fma(xv, wv, acc);
                            }
                    out.data[((static_cast<size_t>(n) * OC + oc) * HO + oh) * WO + ow] = acc + b.data[oc];
                }
    return out;
}

// Embeds grouped weights into the dense block-diagonal weight tensor.
inline Tensor block_diagonal_weights(const Tensor& w, const ConvSpec& spec) {
    const int G = spec.groups, OC = spec.out_channels, ICg = spec.in_channels / G, OCg = OC / G;
    const int KH = spec.kernel_h, KW = spec.kernel_w;
    Tensor dense({OC, spec.in_channels, KH, KW});
    for (int g = 0; g < G; ++g)
        for (int oc = 0; oc < OCg; ++oc)
            for (int ic = 0; ic < ICg; ++ic)
                for (int kh = 0; kh < KH; ++kh)
                    for (int kw = 0; kw < KW; ++kw)
                        dense.data[(((static_cast<size_t>(g * OCg + oc) * spec.in_channels) + g * ICg + ic) * KH +
                                    kh) *
                                       KW +
                                   kw] =
                            w.data[((static_cast<size_t>(g * OCg + oc) * ICg + ic) * KH + kh) * KW + kw];
    return dense;
}

// Mean-of-window pooling computed directly in double.
inline Tensor avg_pool_reference(const Tensor& x, int kernel, int stride) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int HO = (H - kernel) / stride + 1, WO = (W - kernel) / stride + 1;
    Tensor out({N, C, HO, WO});
    for (int nc = 0; nc < N * C; ++nc)
        for (int oh = 0; oh < HO; ++oh)
            for (int ow = 0; ow < WO; ++ow) {
                double acc = 0.0;
                for (int i = 0; i < kernel; ++i)
                    for (int j = 0; j < kernel; ++j)
                        acc += x.data[(static_cast<size_t>(nc) * H + oh * stride + i) * W + ow * stride + j];
                out.data[(static_cast<size_t>(nc) * HO + oh) * WO + ow] =
                    static_cast<float>(acc / (kernel * kernel));
            }
    return out;
}

// Brute-force Spearman: O(n^2) fractional ranks, then the direct Pearson
// formula. Deliberately a different algorithm from the library's sort-based
// ranking.
inline double brute_spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    const auto rank_of = [](const std::vector<double>& v, size_t i) {
        size_t less = 0, equal = 0;
        for (size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++less;
            if (v[j] == v[i]) ++equal;
        }
        return static_cast<double>(less) + 0.5 * static_cast<double>(equal - 1) + 1.0;
    };
    std::vector<double> ra(n), rb(n);
    for (size_t i = 0; i < n; ++i) {
        ra[i] = rank_of(a, i);
        rb[i] = rank_of(b, i);
    }
    double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
    for (size_t i = 0; i < n; ++i) {
        sa += ra[i];
        sb += rb[i];
        sab += ra[i] * rb[i];
        saa += ra[i] * ra[i];
        sbb += rb[i] * rb[i];
    }
    const double num = static_cast<double>(n) * sab - sa * sb;
    const double den = std::sqrt((static_cast<double>(n) * saa - sa * sa) * (static_cast<double>(n) * sbb - sb * sb));
    return num / den;
}

// Independent leave-one-out noise ceiling on raw matrices.
inline double noise_ceiling_reference(const std::vector<std::vector<std::vector<double>>>& subjects) {
    const size_t k = subjects.size();
    const size_t n = subjects.front().size();
    double total = 0.0;
    for (size_t s = 0; s < k; ++s) {
        std::vector<double> mine, others;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j) {
                mine.push_back(subjects[s][i][j]);
                double acc = 0.0;
                for (size_t t = 0; t < k; ++t)
                    if (t != s) acc += subjects[t][i][j];
                others.push_back(acc / static_cast<double>(k - 1));
            }
        total += brute_spearman(mine, others);
    }
    return total / static_cast<double>(k);
}

inline Tensor random_tensor(std::vector<int> shape, rsanet::Xoshiro256ss& rng, float lo = -1.0f,
                            float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Values on the 1/256 grid in [-1,1]; with dyadic steps small integer
// networks of adds/multiplies stay exact in f32.
inline Tensor random_dyadic_tensor(std::vector<int> shape, rsanet::Xoshiro256ss& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(static_cast<int>(rng.below(513)) - 256) / 256.0f;
    return t;
}

// ---------------------------------------------------------------------------
// Double-precision shadow forward. The finite-difference oracle evaluates
// these instead of the f32 kernels so the probe step can be far below the
// f32 noise floor.
// ---------------------------------------------------------------------------

struct DTensor {
    std::vector<int> shape;
    std::vector<double> data;

    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
};

inline DTensor to_d(const Tensor& t) {
    DTensor d{t.shape, {}};
    d.data.assign(t.data.begin(), t.data.end());
    return d;
}

inline DTensor conv2d_f64(const DTensor& x, const DTensor& w, const DTensor& b, const ConvSpec& spec) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int G = spec.groups, ICg = C / G, OC = spec.out_channels, OCg = OC / G;
    const int KH = spec.kernel_h, KW = spec.kernel_w, S = spec.stride, P = spec.padding;
    const int HO = spec.out_h(H), WO = spec.out_w(W);
    DTensor out{{N, OC, HO, WO}, std::vector<double>(static_cast<size_t>(N) * OC * HO * WO)};
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < G; ++g)
            for (int oc = 0; oc < OCg; ++oc)
                for (int oh = 0; oh < HO; ++oh)
                    for (int ow = 0; ow < WO; ++ow) {
                        double acc = 0.0;
                        for (int ic = 0; ic < ICg; ++ic)
                            for (int kh = 0; kh < KH; ++kh)
                                for (int kw = 0; kw < KW; ++kw) {
                                    const int ih = oh * S - P + kh;
                                    const int iw = ow * S - P + kw;
                                    if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                    acc += x.data[((static_cast<size_t>(n) * C + g * ICg + ic) * H + ih) * W + iw] *
                                           w.data[((static_cast<size_t>(g * OCg + oc) * ICg + ic) * KH + kh) * KW +
                                                  kw];
                                }
                        out.data[((static_cast<size_t>(n) * OC + g * OCg + oc) * HO + oh) * WO + ow] =
                            acc + b.data[static_cast<size_t>(g * OCg + oc)];
                    }
    return out;
}

inline DTensor relu_f64(const DTensor& x) {
    DTensor out = x;
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

inline DTensor avg_pool2d_f64(const DTensor& x, int kernel, int stride) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int HO = (H - kernel) / stride + 1, WO = (W - kernel) / stride + 1;
    DTensor out{{N, C, HO, WO}, std::vector<double>(static_cast<size_t>(N) * C * HO * WO)};
    for (int nc = 0; nc < N * C; ++nc)
        for (int oh = 0; oh < HO; ++oh)
            for (int ow = 0; ow < WO; ++ow) {
                double acc = 0.0;
                for (int i = 0; i < kernel; ++i)
                    for (int j = 0; j < kernel; ++j)
                        acc += x.data[(static_cast<size_t>(nc) * H + oh * stride + i) * W + ow * stride + j];
                out.data[(static_cast<size_t>(nc) * HO + oh) * WO + ow] = acc / (kernel * kernel);
            }
    return out;
}

inline DTensor linear_f64(const DTensor& x, const DTensor& w, const DTensor& b) {
    const int N = x.dim(0), F = x.dim(1), FO = w.dim(0);
    DTensor out{{N, FO}, std::vector<double>(static_cast<size_t>(N) * FO)};
    for (int n = 0; n < N; ++n)
        for (int fo = 0; fo < FO; ++fo) {
            double acc = 0.0;
            for (int f = 0; f < F; ++f)
                acc += x.data[static_cast<size_t>(n) * F + f] * w.data[static_cast<size_t>(fo) * F + f];
            out.data[static_cast<size_t>(n) * FO + fo] = acc + b.data[static_cast<size_t>(fo)];
        }
    return out;
}

inline DTensor interleave_f64(const DTensor& a, const DTensor& b, int groups) {
    const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    const int k = C / groups;
    const size_t plane = static_cast<size_t>(H) * W;
    DTensor out{{N, 2 * C, H, W}, std::vector<double>(static_cast<size_t>(N) * 2 * C * plane)};
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < groups; ++g)
            for (int c = 0; c < k; ++c)
                for (size_t p = 0; p < plane; ++p) {
                    out.data[(static_cast<size_t>(n) * 2 * C + g * 2 * k + c) * plane + p] =
                        a.data[(static_cast<size_t>(n) * C + g * k + c) * plane + p];
                    out.data[(static_cast<size_t>(n) * 2 * C + g * 2 * k + k + c) * plane + p] =
                        b.data[(static_cast<size_t>(n) * C + g * k + c) * plane + p];
                }
    return out;
}

inline DTensor flatten2d_f64(const DTensor& x) {
    DTensor out = x;
    out.shape = {x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)};
    return out;
}

inline double mse_f64(const DTensor& pred, const DTensor& target) {
    double acc = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.data.size());
}

// Full Siamese pair pipeline in double precision: shared body on both images,
// interleave, group-conv head, mean-squared error against the target. Params
// are passed by value-map so finite differences can perturb copies.
struct DParams {
    std::map<std::string, std::pair<DTensor, DTensor>> by_id;  // weight, bias
};

inline DParams to_dparams(const rsanet::Model& model) {
    DParams p;
    for (const auto& [id, pair] : model.params) {
        p.by_id[id] = {to_d(*pair.weight), to_d(*pair.bias)};
    }
    return p;
}

inline double siamese_mse_f64(const rsanet::ModelSpec& spec, const DParams& params, const DTensor& img_a,
                              const DTensor& img_b, const std::vector<double>& target) {
    const auto body = [&](const DTensor& img) {
        DTensor cur = img;
        for (size_t i = 0; i < spec.body.size(); ++i) {
            const auto& layer = spec.body[i];
            switch (layer.kind) {
                case rsanet::BodyLayer::Kind::Conv: {
                    const auto& p = params.by_id.at("body" + std::to_string(i));
                    cur = conv2d_f64(cur, p.first, p.second, layer.conv);
                    break;
                }
                case rsanet::BodyLayer::Kind::Relu:
                    cur = relu_f64(cur);
                    break;
                case rsanet::BodyLayer::Kind::AvgPool:
                    cur = avg_pool2d_f64(cur, layer.pool_kernel, layer.pool_stride);
                    break;
            }
        }
        return cur;
    };
    DTensor cur = interleave_f64(body(img_a), body(img_b), spec.interleave_groups);
    const auto& hc = params.by_id.at("head_conv");
    cur = relu_f64(conv2d_f64(cur, hc.first, hc.second, spec.head.conv));
    cur = avg_pool2d_f64(cur, spec.head.pool_kernel, spec.head.pool_stride);
    cur = flatten2d_f64(cur);
    const auto& hl = params.by_id.at("head_linear");
    cur = linear_f64(cur, hl.first, hl.second);
    DTensor target_t{{cur.dim(0), 1}, target};
    return mse_f64(cur, target_t);
}

// Central finite differences of a double-valued functional over f32 storage;
// the divisor is the realized f32 step, not the nominal one.
template <typename F>
std::vector<double> numeric_grad(const F& f, Tensor x, double eps) {
    std::vector<double> grad(x.data.size());
    for (size_t i = 0; i < x.data.size(); ++i) {
        const float orig = x.data[i];
        const float hi = static_cast<float>(static_cast<double>(orig) + eps);
        const float lo = static_cast<float>(static_cast<double>(orig) - eps);
        x.data[i] = hi;
        const double fp = f(x);
        x.data[i] = lo;
        const double fm = f(x);
        x.data[i] = orig;
        grad[i] = (fp - fm) / (static_cast<double>(hi) - static_cast<double>(lo));
    }
    return grad;
}

inline double rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

}  // namespace oracles
