// Layer primitive kernels.
//
// Determinism contract: every output element is produced by one self-contained
// accumulation chain with a fixed summand order, using one std::fma per tap.
// Orders, per element:
//   conv2d forward      (ic, kh, kw) ascending over valid taps, bias added last
//   conv2d grad-weight  (n, oh, ow) ascending
//   conv2d grad-input   (oc, kh, kw) ascending
//   conv2d grad-bias    (n, oh, ow) ascending
//   linear forward      f ascending, bias added last
//   linear grad-input   f_out ascending
//   linear grad-w/b     n ascending
//   avg_pool forward    (wh, ww) ascending, then * 1/(k*k)
// Vectorisation only ever runs across independent output elements, never
// inside a chain, so optimised builds match the scalar order bitwise.

#include "rsanet/ops.hpp"

#include <cmath>
#include <cstring>

namespace rsanet {

void ConvSpec::validate() const {
    if (in_channels < 1 || out_channels < 1 || kernel_h < 1 || kernel_w < 1 || stride < 1 || groups < 1 ||
        padding < 0) {
        throw ValueError("conv spec fields must be positive (padding >= 0)");
    }
    if (in_channels % groups != 0 || out_channels % groups != 0) {
        throw ShapeError("conv channels not divisible by groups: in=" + std::to_string(in_channels) +
                         " out=" + std::to_string(out_channels) + " groups=" + std::to_string(groups));
    }
}

namespace {

void check_4d(const Tensor& x, const char* what) {
    if (x.ndim() != 4) throw ShapeError(std::string(what) + " must be 4-D [N,C,H,W], got " + shape_str(x.shape));
}

void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec) {
    spec.validate();
    check_4d(x, "conv input");
    if (x.dim(1) != spec.in_channels) {
        throw ShapeError("conv input has " + std::to_string(x.dim(1)) + " channels, spec expects " +
                         std::to_string(spec.in_channels));
    }
    const std::vector<int> wshape = {spec.out_channels, spec.in_channels / spec.groups, spec.kernel_h,
                                     spec.kernel_w};
    if (w.shape != wshape) {
        throw ShapeError("conv weight shape " + shape_str(w.shape) + " does not match spec " + shape_str(wshape));
    }
    if (b.shape != std::vector<int>{spec.out_channels}) {
        throw ShapeError("conv bias shape " + shape_str(b.shape) + ", expected [" +
                         std::to_string(spec.out_channels) + "]");
    }
    if (x.dim(2) + 2 * spec.padding < spec.kernel_h || x.dim(3) + 2 * spec.padding < spec.kernel_w ||
        spec.out_h(x.dim(2)) < 1 || spec.out_w(x.dim(3)) < 1) {
        throw ShapeError("conv output dimension < 1 for input " + shape_str(x.shape));
    }
}

void check_buffer(const std::vector<float>* buf, size_t expected, const char* what) {
    if (buf && buf->size() != expected) {
        throw ShapeError(std::string(what) + " gradient buffer has " + std::to_string(buf->size()) +
                         " elements, expected " + std::to_string(expected));
    }
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec) {
    check_conv_args(x, w, b, spec);
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int G = spec.groups, ICg = C / G, OC = spec.out_channels, OCg = OC / G;
    const int KH = spec.kernel_h, KW = spec.kernel_w, S = spec.stride, P = spec.padding;
    const int HO = spec.out_h(H), WO = spec.out_w(W);
    const int K = ICg * KH * KW;

    // weights transposed to [g][kk][ocg]: the hot inner loop is then a
    // contiguous fma over output channels
    std::vector<float> wt(static_cast<size_t>(G) * K * OCg);
    for (int g = 0; g < G; ++g)
        for (int oc = 0; oc < OCg; ++oc)
            for (int kk = 0; kk < K; ++kk)
                wt[(static_cast<size_t>(g) * K + kk) * OCg + oc] = w.data[static_cast<size_t>(g * OCg + oc) * K + kk];

    Tensor out({N, OC, HO, WO});
    std::vector<float> acc(static_cast<size_t>(OCg));
    const float* xp = x.data.data();
    float* op = out.data.data();

    for (int n = 0; n < N; ++n) {
        for (int g = 0; g < G; ++g) {
            const float* wtg = wt.data() + static_cast<size_t>(g) * K * OCg;
            for (int oh = 0; oh < HO; ++oh) {
                for (int ow = 0; ow < WO; ++ow) {
                    std::fill(acc.begin(), acc.end(), 0.0f);
                    for (int ic = 0; ic < ICg; ++ic) {
                        const float* xc = xp + (static_cast<size_t>(n) * C + g * ICg + ic) * H * W;
                        for (int kh = 0; kh < KH; ++kh) {
                            const int ih = oh * S - P + kh;
                            if (ih < 0 || ih >= H) continue;
                            for (int kw = 0; kw < KW; ++kw) {
                                const int iw = ow * S - P + kw;
                                if (iw < 0 || iw >= W) continue;
                                const float xv = xc[ih * W + iw];
                                const float* wrow = wtg + (static_cast<size_t>(ic * KH + kh) * KW + kw) * OCg;
                                for (int oc = 0; oc < OCg; ++oc) acc[oc] = std::fma(xv, wrow[oc], acc[oc]);
                            }
                        }
                    }
                    float* obase = op + (static_cast<size_t>(n) * OC + g * OCg) * HO * WO + oh * WO + ow;
                    const float* bg = b.data.data() + g * OCg;
                    for (int oc = 0; oc < OCg; ++oc) obase[static_cast<size_t>(oc) * HO * WO] = acc[oc] + bg[oc];
                }
            }
        }
    }
    return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const ConvSpec& spec, const std::vector<float>& gout,
                     std::vector<float>* gx, std::vector<float>* gw, std::vector<float>* gb) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int G = spec.groups, ICg = C / G, OC = spec.out_channels, OCg = OC / G;
    const int KH = spec.kernel_h, KW = spec.kernel_w, S = spec.stride, P = spec.padding;
    const int HO = spec.out_h(H), WO = spec.out_w(W);
    const int K = ICg * KH * KW;
    if (gout.size() != static_cast<size_t>(N) * OC * HO * WO) throw ShapeError("conv grad-output size mismatch");
    check_buffer(gx, x.data.size(), "conv input");
    check_buffer(gw, w.data.size(), "conv weight");
    check_buffer(gb, static_cast<size_t>(OC), "conv bias");

    const float* gp = gout.data();
    const float* xp = x.data.data();

    if (gb) {
        float* gbp = gb->data();
        for (int oc = 0; oc < OC; ++oc) {
            float acc = 0.0f;
            for (int n = 0; n < N; ++n) {
                const float* row = gp + (static_cast<size_t>(n) * OC + oc) * HO * WO;
                for (int i = 0; i < HO * WO; ++i) acc += row[i];
            }
            gbp[oc] += acc;
        }
    }

    if (gw) {
        // accumulate in [kk][ocg] layout, inner fma contiguous over ocg;
        // per-element order is (n, oh, ow)
        std::vector<float> gwt(static_cast<size_t>(G) * K * OCg, 0.0f);
        std::vector<float> gtile(static_cast<size_t>(HO) * WO * OCg);
        for (int n = 0; n < N; ++n) {
            for (int g = 0; g < G; ++g) {
                for (int oc = 0; oc < OCg; ++oc) {
                    const float* row = gp + (static_cast<size_t>(n) * OC + g * OCg + oc) * HO * WO;
                    for (int i = 0; i < HO * WO; ++i) gtile[static_cast<size_t>(i) * OCg + oc] = row[i];
                }
                float* gwtg = gwt.data() + static_cast<size_t>(g) * K * OCg;
                for (int oh = 0; oh < HO; ++oh) {
                    for (int ow = 0; ow < WO; ++ow) {
                        const float* gvec = gtile.data() + (static_cast<size_t>(oh) * WO + ow) * OCg;
                        for (int ic = 0; ic < ICg; ++ic) {
                            const float* xc = xp + (static_cast<size_t>(n) * C + g * ICg + ic) * H * W;
                            for (int kh = 0; kh < KH; ++kh) {
                                const int ih = oh * S - P + kh;
                                if (ih < 0 || ih >= H) continue;
                                for (int kw = 0; kw < KW; ++kw) {
                                    const int iw = ow * S - P + kw;
                                    if (iw < 0 || iw >= W) continue;
                                    const float xv = xc[ih * W + iw];
                                    float* grow = gwtg + (static_cast<size_t>(ic * KH + kh) * KW + kw) * OCg;
                                    for (int oc = 0; oc < OCg; ++oc) grow[oc] = std::fma(xv, gvec[oc], grow[oc]);
                                }
                            }
                        }
                    }
                }
            }
        }
        float* gwp = gw->data();
        for (int g = 0; g < G; ++g)
            for (int oc = 0; oc < OCg; ++oc)
                for (int kk = 0; kk < K; ++kk)
                    gwp[static_cast<size_t>(g * OCg + oc) * K + kk] +=
                        gwt[(static_cast<size_t>(g) * K + kk) * OCg + oc];
    }

    if (gx) {
        // gather form per input cell; weights transposed to [g][oc*KH*KW][icg]
        std::vector<float> wt(static_cast<size_t>(G) * OCg * KH * KW * ICg);
        for (int g = 0; g < G; ++g)
            for (int oc = 0; oc < OCg; ++oc)
                for (int ic = 0; ic < ICg; ++ic)
                    for (int kh = 0; kh < KH; ++kh)
                        for (int kw = 0; kw < KW; ++kw)
                            wt[(((static_cast<size_t>(g) * OCg + oc) * KH + kh) * KW + kw) * ICg + ic] =
                                w.data[(static_cast<size_t>(g * OCg + oc) * ICg + ic) * KH * KW + kh * KW + kw];

        std::vector<float> acc(static_cast<size_t>(ICg));
        float* gxp = gx->data();
        for (int n = 0; n < N; ++n) {
            for (int g = 0; g < G; ++g) {
                const float* wtg = wt.data() + static_cast<size_t>(g) * OCg * KH * KW * ICg;
                for (int ih = 0; ih < H; ++ih) {
                    for (int iw = 0; iw < W; ++iw) {
                        std::fill(acc.begin(), acc.end(), 0.0f);
                        for (int oc = 0; oc < OCg; ++oc) {
                            const float* grow = gp + (static_cast<size_t>(n) * OC + g * OCg + oc) * HO * WO;
                            for (int kh = 0; kh < KH; ++kh) {
                                const int ohs = ih + P - kh;
                                if (ohs < 0 || ohs % S != 0) continue;
                                const int oh = ohs / S;
                                if (oh >= HO) continue;
                                for (int kw = 0; kw < KW; ++kw) {
                                    const int ows = iw + P - kw;
                                    if (ows < 0 || ows % S != 0) continue;
                                    const int ow = ows / S;
                                    if (ow >= WO) continue;
                                    const float gv = grow[oh * WO + ow];
                                    const float* wrow = wtg + ((static_cast<size_t>(oc) * KH + kh) * KW + kw) * ICg;
                                    for (int ic = 0; ic < ICg; ++ic) acc[ic] = std::fma(gv, wrow[ic], acc[ic]);
                                }
                            }
                        }
                        float* gxbase = gxp + (static_cast<size_t>(n) * C + g * ICg) * H * W + ih * W + iw;
                        for (int ic = 0; ic < ICg; ++ic) gxbase[static_cast<size_t>(ic) * H * W] += acc[ic];
                    }
                }
            }
        }
    }
}

Tensor relu_forward(const Tensor& x) {
    Tensor out(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] > 0.0f ? x.data[i] : 0.0f;
    return out;
}

void relu_backward(const Tensor& x, const std::vector<float>& gout, std::vector<float>* gx) {
    if (!gx) return;
    if (gout.size() != x.data.size()) throw ShapeError("relu grad-output size mismatch");
    check_buffer(gx, x.data.size(), "relu input");
    float* gxp = gx->data();
    // gradient at exactly 0 is 0
    for (size_t i = 0; i < x.data.size(); ++i)
        if (x.data[i] > 0.0f) gxp[i] += gout[i];
}

Tensor avg_pool2d_forward(const Tensor& x, int kernel, int stride) {
    check_4d(x, "avg_pool input");
    if (kernel < 1 || stride < 1) throw ValueError("avg_pool kernel and stride must be >= 1");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H < kernel || W < kernel) {
        throw ShapeError("avg_pool input " + shape_str(x.shape) + " smaller than kernel " + std::to_string(kernel));
    }
    // floor semantics: windows that would overrun are dropped
    const int HO = (H - kernel) / stride + 1;
    const int WO = (W - kernel) / stride + 1;
    const float inv = 1.0f / static_cast<float>(kernel * kernel);
    Tensor out({N, C, HO, WO});
    for (int nc = 0; nc < N * C; ++nc) {
        const float* xc = x.data.data() + static_cast<size_t>(nc) * H * W;
        float* oc = out.data.data() + static_cast<size_t>(nc) * HO * WO;
        for (int oh = 0; oh < HO; ++oh) {
            for (int ow = 0; ow < WO; ++ow) {
                float acc = 0.0f;
                for (int wh = 0; wh < kernel; ++wh)
                    for (int ww = 0; ww < kernel; ++ww) acc += xc[(oh * stride + wh) * W + ow * stride + ww];
                oc[oh * WO + ow] = acc * inv;
            }
        }
    }
    return out;
}

void avg_pool2d_backward(const Tensor& x, int kernel, int stride, const std::vector<float>& gout,
                         std::vector<float>* gx) {
    if (!gx) return;
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int HO = (H - kernel) / stride + 1;
    const int WO = (W - kernel) / stride + 1;
    if (gout.size() != static_cast<size_t>(N) * C * HO * WO) throw ShapeError("avg_pool grad-output size mismatch");
    check_buffer(gx, x.data.size(), "avg_pool input");
    const float inv = 1.0f / static_cast<float>(kernel * kernel);
    float* gxp = gx->data();
    for (int nc = 0; nc < N * C; ++nc) {
        const float* gc = gout.data() + static_cast<size_t>(nc) * HO * WO;
        float* gxc = gxp + static_cast<size_t>(nc) * H * W;
        for (int oh = 0; oh < HO; ++oh) {
            for (int ow = 0; ow < WO; ++ow) {
                const float gv = gc[oh * WO + ow] * inv;
                for (int wh = 0; wh < kernel; ++wh)
                    for (int ww = 0; ww < kernel; ++ww) gxc[(oh * stride + wh) * W + ow * stride + ww] += gv;
            }
        }
    }
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 2) throw ShapeError("linear input must be 2-D [N,F], got " + shape_str(x.shape));
    if (w.ndim() != 2) throw ShapeError("linear weight must be 2-D [F_out,F], got " + shape_str(w.shape));
    const int N = x.dim(0), F = x.dim(1), FO = w.dim(0);
    if (w.dim(1) != F) {
        throw ShapeError("linear weight expects " + std::to_string(w.dim(1)) + " features, input has " +
                         std::to_string(F));
    }
    if (b.shape != std::vector<int>{FO}) throw ShapeError("linear bias shape " + shape_str(b.shape));
    Tensor out({N, FO});
    for (int n = 0; n < N; ++n) {
        const float* xr = x.data.data() + static_cast<size_t>(n) * F;
        for (int fo = 0; fo < FO; ++fo) {
            const float* wr = w.data.data() + static_cast<size_t>(fo) * F;
            float acc = 0.0f;
            for (int f = 0; f < F; ++f) acc = std::fma(xr[f], wr[f], acc);
            out.data[static_cast<size_t>(n) * FO + fo] = acc + b.data[fo];
        }
    }
    return out;
}

void linear_backward(const Tensor& x, const Tensor& w, const std::vector<float>& gout,
                     std::vector<float>* gx, std::vector<float>* gw, std::vector<float>* gb) {
    const int N = x.dim(0), F = x.dim(1), FO = w.dim(0);
    if (gout.size() != static_cast<size_t>(N) * FO) throw ShapeError("linear grad-output size mismatch");
    check_buffer(gx, x.data.size(), "linear input");
    check_buffer(gw, w.data.size(), "linear weight");
    check_buffer(gb, static_cast<size_t>(FO), "linear bias");
    if (gx) {
        float* gxp = gx->data();
        for (int n = 0; n < N; ++n)
            for (int f = 0; f < F; ++f) {
                float acc = 0.0f;
                for (int fo = 0; fo < FO; ++fo)
                    acc = std::fma(gout[static_cast<size_t>(n) * FO + fo], w.data[static_cast<size_t>(fo) * F + f],
                                   acc);
                gxp[static_cast<size_t>(n) * F + f] += acc;
            }
    }
    if (gw) {
        float* gwp = gw->data();
        for (int fo = 0; fo < FO; ++fo)
            for (int f = 0; f < F; ++f) {
                float acc = 0.0f;
                for (int n = 0; n < N; ++n)
                    acc = std::fma(gout[static_cast<size_t>(n) * FO + fo], x.data[static_cast<size_t>(n) * F + f],
                                   acc);
                gwp[static_cast<size_t>(fo) * F + f] += acc;
            }
    }
    if (gb) {
        float* gbp = gb->data();
        for (int fo = 0; fo < FO; ++fo) {
            float acc = 0.0f;
            for (int n = 0; n < N; ++n) acc += gout[static_cast<size_t>(n) * FO + fo];
            gbp[fo] += acc;
        }
    }
}

Tensor interleave_forward(const Tensor& a, const Tensor& b, int groups) {
    check_4d(a, "interleave input A");
    check_4d(b, "interleave input B");
    if (a.shape != b.shape) {
        throw ShapeError("interleave inputs must match: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }
    const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    if (groups < 1 || C % groups != 0) {
        throw ShapeError("interleave: channels " + std::to_string(C) + " not divisible by groups " +
                         std::to_string(groups));
    }
    const int k = C / groups;
    const size_t plane = static_cast<size_t>(H) * W;
    Tensor out({N, 2 * C, H, W});
    for (int n = 0; n < N; ++n) {
        const float* ap = a.data.data() + static_cast<size_t>(n) * C * plane;
        const float* bp = b.data.data() + static_cast<size_t>(n) * C * plane;
        float* op = out.data.data() + static_cast<size_t>(n) * 2 * C * plane;
        for (int g = 0; g < groups; ++g) {
            std::memcpy(op + (static_cast<size_t>(g) * 2 * k) * plane, ap + static_cast<size_t>(g) * k * plane,
                        sizeof(float) * k * plane);
            std::memcpy(op + (static_cast<size_t>(g) * 2 * k + k) * plane, bp + static_cast<size_t>(g) * k * plane,
                        sizeof(float) * k * plane);
        }
    }
    return out;
}

void interleave_backward(const std::vector<float>& gout, const std::vector<int>& in_shape, int groups,
                         std::vector<float>* ga, std::vector<float>* gb) {
    const int N = in_shape[0], C = in_shape[1], H = in_shape[2], W = in_shape[3];
    const int k = C / groups;
    const size_t plane = static_cast<size_t>(H) * W;
    if (gout.size() != static_cast<size_t>(N) * 2 * C * plane) throw ShapeError("interleave grad size mismatch");
    for (int n = 0; n < N; ++n) {
        const float* gp = gout.data() + static_cast<size_t>(n) * 2 * C * plane;
        for (int g = 0; g < groups; ++g) {
            for (size_t i = 0; i < static_cast<size_t>(k) * plane; ++i) {
                if (ga) (*ga)[(static_cast<size_t>(n) * C + g * k) * plane + i] += gp[(static_cast<size_t>(g) * 2 * k) * plane + i];
                if (gb) (*gb)[(static_cast<size_t>(n) * C + g * k) * plane + i] += gp[(static_cast<size_t>(g) * 2 * k + k) * plane + i];
            }
        }
    }
}

Tensor flatten2d_forward(const Tensor& x) {
    check_4d(x, "flatten input");
    Tensor out = x;
    out.grad.clear();
    out.requires_grad = false;
    out.shape = {x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)};
    return out;
}

}  // namespace rsanet
