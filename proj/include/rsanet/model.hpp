#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "rsanet/autodiff.hpp"
#include "rsanet/ops.hpp"

namespace rsanet {

// One entry of the body layer list.
struct BodyLayer {
    enum class Kind { Conv, Relu, AvgPool };
    Kind kind = Kind::Relu;
    ConvSpec conv;       // Kind::Conv
    int pool_kernel = 2; // Kind::AvgPool
    int pool_stride = 2;
};

// Head: group conv -> ReLU -> average pool -> flatten -> linear(-> 1).
struct HeadSpec {
    ConvSpec conv;
    int pool_kernel = 2;
    int pool_stride = 2;
    int linear_in = 0;
    int linear_out = 1;
};

// Declarative network description: a weight-shared body applied to both
// images, channel interleave, then the pair head.
struct ModelSpec {
    int input_c = 3;
    int input_h = 32;
    int input_w = 32;
    std::vector<BodyLayer> body;
    HeadSpec head;
    int interleave_groups = 16;
};

// Shape chain computed by validate_spec.
struct SpecShapes {
    int body_c = 0, body_h = 0, body_w = 0;      // per-branch body output
    int head_c = 0, head_h = 0, head_w = 0;      // after head conv
    int pooled_h = 0, pooled_w = 0;              // after head pool
    int flat = 0;                                // linear input features
};

// Walks the shape chain for the configured input size and checks every
// divisibility and size invariant except the final linear_in equality.
SpecShapes spec_shapes(const ModelSpec& spec);

// spec_shapes plus the linear layer checks; throws ShapeError naming the
// failing layer.
SpecShapes validate_spec(const ModelSpec& spec);

// The desk-scale default: 3x32x32 -> conv 3>32>64>256 (3x3 stride 2 pad 1,
// ReLU between) -> interleave(16) -> group conv 512>32 (16 groups, 3x3,
// stride 1, pad 1) -> ReLU -> avg pool 2/2 -> flatten 128 -> linear 1.
ModelSpec desk_spec();

struct ParamPair {
    std::shared_ptr<Tensor> weight;
    std::shared_ptr<Tensor> bias;
};

struct Model {
    ModelSpec spec;
    // layer id -> parameters; ids are "body<i>" for conv body layers plus
    // "head_conv" and "head_linear"
    std::map<std::string, ParamPair> params;
    std::set<std::string> frozen;
    std::vector<std::string> param_order;  // canonical iteration order

    std::vector<std::string> body_layer_ids() const;
    Model clone() const;  // deep copy of parameters and state
};

struct InitRandom {
    uint64_t seed = 0;
};

struct InitImport {
    std::string path;
    uint64_t head_seed = 0;  // head is always randomized on import
};

struct ImportReport {
    std::vector<std::string> imported;
    std::vector<std::string> randomized;
};

// Random init draws weights from uniform(-b, b) with b = sqrt(6 / fan_in)
// (fan_in = in_channels/groups * kh * kw for conv, F for linear), biases 0.
Model build_model(const ModelSpec& spec, const InitRandom& init);
Model build_model(const ModelSpec& spec, const InitImport& init, ImportReport* report = nullptr);

// Marks layers (un)frozen; frozen layers still take part in forward and
// gradient flow-through but the optimizer skips their updates.
void set_frozen(Model& model, const std::vector<std::string>& layer_ids, bool frozen);

// Body applied to one branch. Both branches must reuse one binding of the
// parameters, which pair_forward takes care of.
Tape::NodeId pair_forward(Tape& tape, const Model& model, Tape::NodeId img_a, Tape::NodeId img_b);

// Convenience inference: batched pair scores, no gradients kept.
std::vector<float> predict_pair_batch(const Model& model, const Tensor& batch_a, const Tensor& batch_b);

// Parameters as a named map ("<id>.weight" / "<id>.bias").
std::map<std::string, Tensor> named_parameters(const Model& model);

// Writes every parameter to the canonical weight container.
void save_weights(const std::string& path, const Model& model);

// Strict full restore: every model parameter must be present with a matching
// shape and the file may not contain extras.
void load_weights_into(Model& model, const std::string& path);

}  // namespace rsanet
