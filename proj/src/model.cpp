#include "rsanet/model.hpp"

#include <cmath>

#include "rsanet/data_io.hpp"
#include "rsanet/prng.hpp"

namespace rsanet {

namespace {

std::string body_id(size_t index) { return "body" + std::to_string(index); }

struct ShapeCursor {
    int c, h, w;
};

ShapeCursor apply_body_layer(const BodyLayer& layer, ShapeCursor in, const std::string& id) {
    switch (layer.kind) {
        case BodyLayer::Kind::Conv: {
            layer.conv.validate();
            if (layer.conv.in_channels != in.c) {
                throw ShapeError(id + ": conv expects " + std::to_string(layer.conv.in_channels) +
                                 " input channels, chain provides " + std::to_string(in.c));
            }
            const int oh = layer.conv.out_h(in.h);
            const int ow = layer.conv.out_w(in.w);
            if (in.h + 2 * layer.conv.padding < layer.conv.kernel_h || oh < 1 || ow < 1) {
                throw ShapeError(id + ": conv output collapses below 1x1");
            }
            return {layer.conv.out_channels, oh, ow};
        }
        case BodyLayer::Kind::Relu:
            return in;
        case BodyLayer::Kind::AvgPool: {
            if (layer.pool_kernel < 1 || layer.pool_stride < 1) throw ValueError(id + ": pool kernel/stride < 1");
            if (in.h < layer.pool_kernel || in.w < layer.pool_kernel) {
                throw ShapeError(id + ": pool window larger than input");
            }
            return {in.c, (in.h - layer.pool_kernel) / layer.pool_stride + 1,
                    (in.w - layer.pool_kernel) / layer.pool_stride + 1};
        }
    }
    throw ValueError(id + ": unknown body layer kind");
}

}  // namespace

SpecShapes spec_shapes(const ModelSpec& spec) {
    if (spec.input_c < 1 || spec.input_h < 1 || spec.input_w < 1) {
        throw ShapeError("model input shape must be positive");
    }
    ShapeCursor cur{spec.input_c, spec.input_h, spec.input_w};
    for (size_t i = 0; i < spec.body.size(); ++i) cur = apply_body_layer(spec.body[i], cur, body_id(i));

    SpecShapes s;
    s.body_c = cur.c;
    s.body_h = cur.h;
    s.body_w = cur.w;

    const ConvSpec& hc = spec.head.conv;
    hc.validate();
    if (2 * s.body_c != hc.in_channels) {
        throw ShapeError("head conv expects " + std::to_string(hc.in_channels) +
                         " input channels but the interleaved branches provide " + std::to_string(2 * s.body_c));
    }
    if (spec.interleave_groups < 1 || hc.in_channels % spec.interleave_groups != 0 ||
        s.body_c % spec.interleave_groups != 0) {
        throw ShapeError("interleave_groups " + std::to_string(spec.interleave_groups) +
                         " does not divide the branch channels " + std::to_string(s.body_c));
    }
    s.head_c = hc.out_channels;
    s.head_h = hc.out_h(s.body_h);
    s.head_w = hc.out_w(s.body_w);
    if (s.head_h < 1 || s.head_w < 1) throw ShapeError("head conv output collapses below 1x1");
    if (spec.head.pool_kernel < 1 || spec.head.pool_stride < 1) throw ValueError("head pool kernel/stride < 1");
    if (s.head_h < spec.head.pool_kernel || s.head_w < spec.head.pool_kernel) {
        throw ShapeError("head pool window larger than head conv output");
    }
    s.pooled_h = (s.head_h - spec.head.pool_kernel) / spec.head.pool_stride + 1;
    s.pooled_w = (s.head_w - spec.head.pool_kernel) / spec.head.pool_stride + 1;
    s.flat = s.head_c * s.pooled_h * s.pooled_w;
    return s;
}

SpecShapes validate_spec(const ModelSpec& spec) {
    SpecShapes s = spec_shapes(spec);
    if (spec.head.linear_in != s.flat) {
        throw ShapeError("head linear expects " + std::to_string(spec.head.linear_in) +
                         " inputs but pooling leaves " + std::to_string(s.flat));
    }
    if (spec.head.linear_out != 1) throw ShapeError("head linear must have exactly 1 output");
    return s;
}

ModelSpec desk_spec() {
    ModelSpec spec;
    spec.input_c = 3;
    spec.input_h = 32;
    spec.input_w = 32;
    const auto conv = [](int in, int out) {
        BodyLayer l;
        l.kind = BodyLayer::Kind::Conv;
        l.conv = ConvSpec{in, out, 3, 3, 2, 1, 1};
        return l;
    };
    BodyLayer relu_l;
    relu_l.kind = BodyLayer::Kind::Relu;
    spec.body = {conv(3, 32), relu_l, conv(32, 64), relu_l, conv(64, 256), relu_l};
    spec.head.conv = ConvSpec{512, 32, 3, 3, 1, 1, 16};
    spec.head.pool_kernel = 2;
    spec.head.pool_stride = 2;
    spec.head.linear_in = 128;
    spec.head.linear_out = 1;
    spec.interleave_groups = 16;
    return spec;
}

std::vector<std::string> Model::body_layer_ids() const {
    std::vector<std::string> ids;
    for (size_t i = 0; i < spec.body.size(); ++i) {
        if (spec.body[i].kind == BodyLayer::Kind::Conv) ids.push_back(body_id(i));
    }
    return ids;
}

Model Model::clone() const {
    Model copy;
    copy.spec = spec;
    copy.frozen = frozen;
    copy.param_order = param_order;
    for (const auto& [name, pair] : params) {
        copy.params[name] = {std::make_shared<Tensor>(*pair.weight), std::make_shared<Tensor>(*pair.bias)};
    }
    return copy;
}

namespace {

struct ParamPlan {
    std::string id;
    std::vector<int> weight_shape;
    std::vector<int> bias_shape;
    int fan_in;
};

std::vector<ParamPlan> plan_params(const ModelSpec& spec) {
    std::vector<ParamPlan> plan;
    for (size_t i = 0; i < spec.body.size(); ++i) {
        const BodyLayer& l = spec.body[i];
        if (l.kind != BodyLayer::Kind::Conv) continue;
        const int icg = l.conv.in_channels / l.conv.groups;
        plan.push_back({body_id(i),
                        {l.conv.out_channels, icg, l.conv.kernel_h, l.conv.kernel_w},
                        {l.conv.out_channels},
                        icg * l.conv.kernel_h * l.conv.kernel_w});
    }
    const ConvSpec& hc = spec.head.conv;
    const int hicg = hc.in_channels / hc.groups;
    plan.push_back({"head_conv",
                    {hc.out_channels, hicg, hc.kernel_h, hc.kernel_w},
                    {hc.out_channels},
                    hicg * hc.kernel_h * hc.kernel_w});
    plan.push_back({"head_linear",
                    {spec.head.linear_out, spec.head.linear_in},
                    {spec.head.linear_out},
                    spec.head.linear_in});
    return plan;
}

void random_fill(Tensor& weight, int fan_in, Xoshiro256ss& rng) {
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    for (auto& v : weight.data) v = rng.uniform(-bound, bound);
}

Model build_skeleton(const ModelSpec& spec) {
    validate_spec(spec);
    Model model;
    model.spec = spec;
    for (const auto& p : plan_params(spec)) {
        ParamPair pair{std::make_shared<Tensor>(p.weight_shape), std::make_shared<Tensor>(p.bias_shape)};
        pair.weight->requires_grad = true;
        pair.bias->requires_grad = true;
        model.params[p.id] = std::move(pair);
        model.param_order.push_back(p.id);
    }
    return model;
}

}  // namespace

Model build_model(const ModelSpec& spec, const InitRandom& init) {
    Model model = build_skeleton(spec);
    Xoshiro256ss rng(init.seed);
    for (const auto& p : plan_params(spec)) random_fill(*model.params[p.id].weight, p.fan_in, rng);
    return model;
}

Model build_model(const ModelSpec& spec, const InitImport& init, ImportReport* report) {
    Model model = build_skeleton(spec);
    auto named = load_weights(init.path);

    const auto body_ids = model.body_layer_ids();
    const std::set<std::string> body_set(body_ids.begin(), body_ids.end());

    // every file entry must match a body parameter by name and shape
    for (const auto& [name, tensor] : named) {
        const auto dot = name.rfind('.');
        const std::string id = dot == std::string::npos ? name : name.substr(0, dot);
        const std::string field = dot == std::string::npos ? "" : name.substr(dot + 1);
        if (!body_set.count(id) || (field != "weight" && field != "bias")) {
            throw DataError("weight file entry '" + name + "' does not name a body parameter");
        }
        Tensor& dst = field == "weight" ? *model.params[id].weight : *model.params[id].bias;
        if (tensor.shape != dst.shape) {
            throw DataError("weight file entry '" + name + "' has shape " + shape_str(tensor.shape) +
                            ", model expects " + shape_str(dst.shape));
        }
        dst.data = tensor.data;
    }

    // anything not covered by the file is randomized, in canonical order
    Xoshiro256ss rng(init.head_seed);
    for (const auto& p : plan_params(spec)) {
        const bool have_w = named.count(p.id + ".weight") > 0;
        const bool have_b = named.count(p.id + ".bias") > 0;
        if (have_w && have_b) {
            if (report) report->imported.push_back(p.id);
            continue;
        }
        if (have_w != have_b) throw DataError("weight file has only half of parameter '" + p.id + "'");
        random_fill(*model.params[p.id].weight, p.fan_in, rng);
        model.params[p.id].bias->data.assign(model.params[p.id].bias->data.size(), 0.0f);
        if (report) report->randomized.push_back(p.id);
    }
    return model;
}

void set_frozen(Model& model, const std::vector<std::string>& layer_ids, bool frozen) {
    for (const auto& id : layer_ids) {
        if (!model.params.count(id)) throw ValueError("unknown layer id '" + id + "'");
        if (frozen) {
            model.frozen.insert(id);
        } else {
            model.frozen.erase(id);
        }
    }
}

namespace {

struct Bound {
    Tape::NodeId weight;
    Tape::NodeId bias;
};

std::map<std::string, Bound> bind_params(Tape& tape, const Model& model) {
    std::map<std::string, Bound> bound;
    for (const auto& id : model.param_order) {
        const auto& pair = model.params.at(id);
        bound[id] = {tape.leaf(pair.weight), tape.leaf(pair.bias)};
    }
    return bound;
}

Tape::NodeId body_forward(Tape& tape, const Model& model, const std::map<std::string, Bound>& bound,
                          Tape::NodeId img) {
    Tape::NodeId cur = img;
    for (size_t i = 0; i < model.spec.body.size(); ++i) {
        const BodyLayer& l = model.spec.body[i];
        const std::string id = body_id(i);
        try {
            switch (l.kind) {
                case BodyLayer::Kind::Conv: {
                    const Bound& p = bound.at(id);
                    cur = conv2d(tape, cur, p.weight, p.bias, l.conv);
                    break;
                }
                case BodyLayer::Kind::Relu:
                    cur = relu(tape, cur);
                    break;
                case BodyLayer::Kind::AvgPool:
                    cur = avg_pool2d(tape, cur, l.pool_kernel, l.pool_stride);
                    break;
            }
        } catch (const ShapeError& e) {
            throw ShapeError(id + ": " + e.what());
        }
    }
    return cur;
}

}  // namespace

Tape::NodeId pair_forward(Tape& tape, const Model& model, Tape::NodeId img_a, Tape::NodeId img_b) {
    const Tensor& a = tape.value(img_a);
    const Tensor& b = tape.value(img_b);
    const std::vector<int> want = {a.ndim() == 4 ? a.dim(0) : -1, model.spec.input_c, model.spec.input_h,
                                   model.spec.input_w};
    if (a.ndim() != 4 || b.shape != a.shape || a.dim(1) != want[1] || a.dim(2) != want[2] || a.dim(3) != want[3]) {
        throw ShapeError("input: image batches must both be [N," + std::to_string(want[1]) + "," +
                         std::to_string(want[2]) + "," + std::to_string(want[3]) + "], got " + shape_str(a.shape) +
                         " and " + shape_str(b.shape));
    }

    const auto bound = bind_params(tape, model);
    const Tape::NodeId feat_a = body_forward(tape, model, bound, img_a);
    const Tape::NodeId feat_b = body_forward(tape, model, bound, img_b);

    try {
        Tape::NodeId cur = interleave(tape, feat_a, feat_b, model.spec.interleave_groups);
        const Bound& hc = bound.at("head_conv");
        cur = conv2d(tape, cur, hc.weight, hc.bias, model.spec.head.conv);
        cur = relu(tape, cur);
        cur = avg_pool2d(tape, cur, model.spec.head.pool_kernel, model.spec.head.pool_stride);
        cur = flatten2d(tape, cur);
        const Bound& hl = bound.at("head_linear");
        cur = linear(tape, cur, hl.weight, hl.bias);
        return reshape(tape, cur, {a.dim(0)});
    } catch (const ShapeError& e) {
        throw ShapeError(std::string("head: ") + e.what());
    }
}

std::vector<float> predict_pair_batch(const Model& model, const Tensor& batch_a, const Tensor& batch_b) {
    Tape tape;
    const auto a = tape.leaf(batch_a);
    const auto b = tape.leaf(batch_b);
    const auto out = pair_forward(tape, model, a, b);
    return tape.value(out).data;
}

std::map<std::string, Tensor> named_parameters(const Model& model) {
    std::map<std::string, Tensor> named;
    for (const auto& [id, pair] : model.params) {
        Tensor w = *pair.weight;
        Tensor b = *pair.bias;
        w.grad.clear();
        w.requires_grad = false;
        b.grad.clear();
        b.requires_grad = false;
        named[id + ".weight"] = std::move(w);
        named[id + ".bias"] = std::move(b);
    }
    return named;
}

void save_weights(const std::string& path, const Model& model) { save_weights(path, named_parameters(model)); }

void load_weights_into(Model& model, const std::string& path) {
    auto named = load_weights(path);
    size_t used = 0;
    for (const auto& id : model.param_order) {
        for (const char* field : {".weight", ".bias"}) {
            const std::string key = id + field;
            const auto it = named.find(key);
            if (it == named.end()) throw DataError("weight file is missing parameter '" + key + "'");
            Tensor& dst = field[1] == 'w' ? *model.params[id].weight : *model.params[id].bias;
            if (it->second.shape != dst.shape) {
                throw DataError("weight file entry '" + key + "' has shape " + shape_str(it->second.shape) +
                                ", model expects " + shape_str(dst.shape));
            }
            dst.data = it->second.data;
            ++used;
        }
    }
    if (used != named.size()) throw DataError("weight file contains entries unknown to the model spec");
}

}  // namespace rsanet
