#include "rsanet/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace rsanet {

Tape::NodeId Tape::leaf(std::shared_ptr<Tensor> t) {
    if (!t) throw ValueError("tape leaf must not be null");
    shape_numel(t->shape);
    const bool needs = t->requires_grad;
    entries_.push_back({std::move(t), nullptr, needs, nullptr});
    return static_cast<NodeId>(entries_.size() - 1);
}

Tape::NodeId Tape::record(Tensor out, bool needs_grad, BackwardFn bwd, F64Fn f64) {
    entries_.push_back({std::make_shared<Tensor>(std::move(out)), std::move(bwd), needs_grad, std::move(f64)});
    return static_cast<NodeId>(entries_.size() - 1);
}

void Tape::backward(NodeId loss) {
    if (loss < 0 || loss >= size()) throw ValueError("backward: loss node out of range");
    Tensor& l = value(loss);
    if (l.numel() != 1) {
        throw ValueError("backward requires a scalar loss, got shape " + shape_str(l.shape));
    }
    for (auto& e : entries_) e.tensor->zero_grad();
    l.grad[0] = 1.0f;
    for (NodeId i = loss; i >= 0; --i) {
        const auto& e = entries_[static_cast<size_t>(i)];
        if (e.bwd && e.needs_grad) e.bwd(*this, i);
    }
}

double Tape::eval_f64(NodeId output, NodeId overridden_leaf, const std::vector<double>& leaf_values) const {
    if (output < 0 || output >= size()) throw ValueError("eval_f64: node out of range");
    if (value(output).numel() != 1) throw ValueError("eval_f64 expects a scalar output node");
    std::vector<std::vector<double>> values(static_cast<size_t>(output) + 1);
    for (NodeId i = 0; i <= output; ++i) {
        const auto& e = entries_[static_cast<size_t>(i)];
        if (!e.f64) {
            if (e.bwd) throw ValueError("eval_f64: recorded node lacks a double-precision forward");
            if (i == overridden_leaf) {
                if (leaf_values.size() != e.tensor->data.size()) {
                    throw ShapeError("eval_f64: override size mismatch");
                }
                values[static_cast<size_t>(i)] = leaf_values;
            } else {
                values[static_cast<size_t>(i)].assign(e.tensor->data.begin(), e.tensor->data.end());
            }
        } else {
            values[static_cast<size_t>(i)] = e.f64(*this, values);
        }
    }
    return values[static_cast<size_t>(output)][0];
}

Tape::NodeId conv2d(Tape& tape, Tape::NodeId x, Tape::NodeId w, Tape::NodeId b, const ConvSpec& spec) {
    Tensor out = conv2d_forward(tape.value(x), tape.value(w), tape.value(b), spec);
    const bool need_x = tape.needs_grad(x);
    const bool need_w = tape.needs_grad(w);
    const bool need_b = tape.needs_grad(b);
    return tape.record(
        std::move(out), need_x || need_w || need_b,
        [x, w, b, spec, need_x, need_w, need_b](Tape& t, Tape::NodeId self) {
            conv2d_backward(t.value(x), t.value(w), spec, t.value(self).grad,
                            need_x ? &t.value(x).grad : nullptr, need_w ? &t.value(w).grad : nullptr,
                            need_b ? &t.value(b).grad : nullptr);
        },
        [x, w, b, spec](const Tape& t, const std::vector<std::vector<double>>& vals) {
            const auto& xs = t.value(x).shape;
            const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
            const int G = spec.groups, ICg = C / G, OC = spec.out_channels, OCg = OC / G;
            const int KH = spec.kernel_h, KW = spec.kernel_w, S = spec.stride, P = spec.padding;
            const int HO = spec.out_h(H), WO = spec.out_w(W);
            const auto& xv = vals[static_cast<size_t>(x)];
            const auto& wv = vals[static_cast<size_t>(w)];
            const auto& bv = vals[static_cast<size_t>(b)];
            std::vector<double> out_v(static_cast<size_t>(N) * OC * HO * WO);
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
                                            acc += xv[((static_cast<size_t>(n) * C + g * ICg + ic) * H + ih) * W +
                                                      iw] *
                                                   wv[((static_cast<size_t>(g * OCg + oc) * ICg + ic) * KH + kh) *
                                                          KW +
                                                      kw];
                                        }
                                out_v[((static_cast<size_t>(n) * OC + g * OCg + oc) * HO + oh) * WO + ow] =
                                    acc + bv[static_cast<size_t>(g * OCg + oc)];
                            }
            return out_v;
        });
}

Tape::NodeId relu(Tape& tape, Tape::NodeId x) {
    Tensor out = relu_forward(tape.value(x));
    const bool need = tape.needs_grad(x);
    return tape.record(
        std::move(out), need,
        [x](Tape& t, Tape::NodeId self) { relu_backward(t.value(x), t.value(self).grad, &t.value(x).grad); },
        [x](const Tape&, const std::vector<std::vector<double>>& vals) {
            std::vector<double> out_v = vals[static_cast<size_t>(x)];
            for (auto& v : out_v) v = v > 0.0 ? v : 0.0;
            return out_v;
        });
}

Tape::NodeId avg_pool2d(Tape& tape, Tape::NodeId x, int kernel, int stride) {
    Tensor out = avg_pool2d_forward(tape.value(x), kernel, stride);
    const bool need = tape.needs_grad(x);
    return tape.record(
        std::move(out), need,
        [x, kernel, stride](Tape& t, Tape::NodeId self) {
            avg_pool2d_backward(t.value(x), kernel, stride, t.value(self).grad, &t.value(x).grad);
        },
        [x, kernel, stride](const Tape& t, const std::vector<std::vector<double>>& vals) {
            const auto& xs = t.value(x).shape;
            const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
            const int HO = (H - kernel) / stride + 1, WO = (W - kernel) / stride + 1;
            const auto& xv = vals[static_cast<size_t>(x)];
            std::vector<double> out_v(static_cast<size_t>(N) * C * HO * WO);
            for (int nc = 0; nc < N * C; ++nc)
                for (int oh = 0; oh < HO; ++oh)
                    for (int ow = 0; ow < WO; ++ow) {
                        double acc = 0.0;
                        for (int i = 0; i < kernel; ++i)
                            for (int j = 0; j < kernel; ++j)
                                acc += xv[(static_cast<size_t>(nc) * H + oh * stride + i) * W + ow * stride + j];
                        out_v[(static_cast<size_t>(nc) * HO + oh) * WO + ow] = acc / (kernel * kernel);
                    }
            return out_v;
        });
}

Tape::NodeId linear(Tape& tape, Tape::NodeId x, Tape::NodeId w, Tape::NodeId b) {
    Tensor out = linear_forward(tape.value(x), tape.value(w), tape.value(b));
    const bool need_x = tape.needs_grad(x);
    const bool need_w = tape.needs_grad(w);
    const bool need_b = tape.needs_grad(b);
    return tape.record(
        std::move(out), need_x || need_w || need_b,
        [x, w, b, need_x, need_w, need_b](Tape& t, Tape::NodeId self) {
            linear_backward(t.value(x), t.value(w), t.value(self).grad, need_x ? &t.value(x).grad : nullptr,
                            need_w ? &t.value(w).grad : nullptr, need_b ? &t.value(b).grad : nullptr);
        },
        [x, w, b](const Tape& t, const std::vector<std::vector<double>>& vals) {
            const int N = t.value(x).dim(0), F = t.value(x).dim(1);
            const int FO = t.value(w).dim(0);
            const auto& xv = vals[static_cast<size_t>(x)];
            const auto& wv = vals[static_cast<size_t>(w)];
            const auto& bv = vals[static_cast<size_t>(b)];
            std::vector<double> out_v(static_cast<size_t>(N) * FO);
            for (int n = 0; n < N; ++n)
                for (int fo = 0; fo < FO; ++fo) {
                    double acc = 0.0;
                    for (int f = 0; f < F; ++f)
                        acc += xv[static_cast<size_t>(n) * F + f] * wv[static_cast<size_t>(fo) * F + f];
                    out_v[static_cast<size_t>(n) * FO + fo] = acc + bv[static_cast<size_t>(fo)];
                }
            return out_v;
        });
}

Tape::NodeId interleave(Tape& tape, Tape::NodeId a, Tape::NodeId b, int groups) {
    Tensor out = interleave_forward(tape.value(a), tape.value(b), groups);
    const bool need_a = tape.needs_grad(a);
    const bool need_b = tape.needs_grad(b);
    return tape.record(
        std::move(out), need_a || need_b,
        [a, b, groups, need_a, need_b](Tape& t, Tape::NodeId self) {
            interleave_backward(t.value(self).grad, t.value(a).shape, groups, need_a ? &t.value(a).grad : nullptr,
                                need_b ? &t.value(b).grad : nullptr);
        },
        [a, b, groups](const Tape& t, const std::vector<std::vector<double>>& vals) {
            const auto& as = t.value(a).shape;
            const int N = as[0], C = as[1];
            const size_t plane = static_cast<size_t>(as[2]) * as[3];
            const int k = C / groups;
            const auto& av = vals[static_cast<size_t>(a)];
            const auto& bv = vals[static_cast<size_t>(b)];
            std::vector<double> out_v(static_cast<size_t>(N) * 2 * C * plane);
            for (int n = 0; n < N; ++n)
                for (int g = 0; g < groups; ++g)
                    for (int c = 0; c < k; ++c)
                        for (size_t p = 0; p < plane; ++p) {
                            out_v[(static_cast<size_t>(n) * 2 * C + g * 2 * k + c) * plane + p] =
                                av[(static_cast<size_t>(n) * C + g * k + c) * plane + p];
                            out_v[(static_cast<size_t>(n) * 2 * C + g * 2 * k + k + c) * plane + p] =
                                bv[(static_cast<size_t>(n) * C + g * k + c) * plane + p];
                        }
            return out_v;
        });
}

Tape::NodeId flatten2d(Tape& tape, Tape::NodeId x) {
    Tensor out = flatten2d_forward(tape.value(x));
    const bool need = tape.needs_grad(x);
    return tape.record(
        std::move(out), need,
        [x](Tape& t, Tape::NodeId self) {
            const auto& g = t.value(self).grad;
            auto& gx = t.value(x).grad;
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        },
        [x](const Tape&, const std::vector<std::vector<double>>& vals) { return vals[static_cast<size_t>(x)]; });
}

Tape::NodeId reshape(Tape& tape, Tape::NodeId x, std::vector<int> new_shape) {
    const Tensor& xv = tape.value(x);
    if (shape_numel(new_shape) != xv.numel()) {
        throw ShapeError("reshape " + shape_str(xv.shape) + " -> " + shape_str(new_shape) +
                         " changes element count");
    }
    Tensor out(new_shape, xv.data);
    const bool need = tape.needs_grad(x);
    return tape.record(
        std::move(out), need,
        [x](Tape& t, Tape::NodeId self) {
            const auto& g = t.value(self).grad;
            auto& gx = t.value(x).grad;
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        },
        [x](const Tape&, const std::vector<std::vector<double>>& vals) { return vals[static_cast<size_t>(x)]; });
}

Tape::NodeId euclidean_loss(Tape& tape, Tape::NodeId pred, Tape::NodeId target) {
    const Tensor& p = tape.value(pred);
    const Tensor& tg = tape.value(target);
    if (p.shape != tg.shape) {
        throw ShapeError("loss shapes differ: " + shape_str(p.shape) + " vs " + shape_str(tg.shape));
    }
    const int64_t n = p.numel();
    if (n < 1) throw ValueError("loss over an empty batch");
    const float inv = 1.0f / static_cast<float>(n);
    float acc = 0.0f;
    for (int64_t i = 0; i < n; ++i) {
        const float d = p.data[static_cast<size_t>(i)] - tg.data[static_cast<size_t>(i)];
        acc = std::fma(d, d, acc);
    }
    Tensor out({1}, std::vector<float>{acc * inv});
    const bool need = tape.needs_grad(pred);
    return tape.record(
        std::move(out), need,
        [pred, target, inv](Tape& t, Tape::NodeId self) {
            const float gl = t.value(self).grad[0];
            const Tensor& pv = t.value(pred);
            const Tensor& tv = t.value(target);
            auto& gp = t.value(pred).grad;
            const float factor = 2.0f * gl * inv;
            for (size_t i = 0; i < pv.data.size(); ++i) gp[i] += factor * (pv.data[i] - tv.data[i]);
        },
        [pred, target](const Tape&, const std::vector<std::vector<double>>& vals) {
            const auto& pv = vals[static_cast<size_t>(pred)];
            const auto& tv = vals[static_cast<size_t>(target)];
            double acc = 0.0;
            for (size_t i = 0; i < pv.size(); ++i) {
                const double d = pv[i] - tv[i];
                acc += d * d;
            }
            return std::vector<double>{acc / static_cast<double>(pv.size())};
        });
}

double grad_check(const ScalarGraph& f, const Tensor& input, double epsilon) {
    Tensor base = input;
    base.requires_grad = true;
    Tape tape;
    const auto x = tape.leaf(std::move(base));
    const auto out = f(tape, x);
    if (tape.value(out).numel() != 1) throw ValueError("grad_check: graph must be scalar-valued");
    tape.backward(out);
    const std::vector<float> analytic = tape.value(x).grad;

    std::vector<double> probe(input.data.begin(), input.data.end());
    double max_err = 0.0;
    for (size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + epsilon;
        const double fp = tape.eval_f64(out, x, probe);
        probe[i] = orig - epsilon;
        const double fm = tape.eval_f64(out, x, probe);
        probe[i] = orig;
        const double numeric = (fp - fm) / (2.0 * epsilon);
        const double a = static_cast<double>(analytic[static_cast<size_t>(i)]);
        const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace rsanet
