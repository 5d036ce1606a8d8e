#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "rsanet/ops.hpp"
#include "rsanet/tensor.hpp"

namespace rsanet {

// Reverse-mode autodiff over a dynamically recorded tape. Operations append
// entries in execution order; backward() replays them in exact reverse order,
// so gradient accumulation is deterministic. Gradients land in the shared
// Tensor::grad buffers, which is what makes Siamese weight sharing work: a
// parameter registered once and used by both branches receives the sum of
// both contributions.
class Tape {
public:
    using NodeId = int;
    // called as bwd(tape, self) where self is the node the closure belongs to
    using BackwardFn = std::function<void(Tape&, NodeId)>;
    // double-precision shadow forward: recomputes this node's values from the
    // already-filled values of earlier nodes (shapes read from the tape)
    using F64Fn = std::function<std::vector<double>(const Tape&, const std::vector<std::vector<double>>&)>;

    // Registers an existing tensor (parameter or input) as a leaf.
    NodeId leaf(std::shared_ptr<Tensor> t);
    NodeId leaf(Tensor t) { return leaf(std::make_shared<Tensor>(std::move(t))); }

    // Appends an operation result. `needs_grad` marks whether any upstream
    // leaf with requires_grad feeds it; backward skips dead branches.
    NodeId record(Tensor out, bool needs_grad, BackwardFn bwd, F64Fn f64 = nullptr);

    Tensor& value(NodeId id) { return *entries_[static_cast<size_t>(id)].tensor; }
    const Tensor& value(NodeId id) const { return *entries_[static_cast<size_t>(id)].tensor; }
    std::shared_ptr<Tensor> share(NodeId id) const { return entries_[static_cast<size_t>(id)].tensor; }
    bool needs_grad(NodeId id) const { return entries_[static_cast<size_t>(id)].needs_grad; }
    int size() const { return static_cast<int>(entries_.size()); }

    // Zeroes every grad buffer on the tape, seeds d(loss)/d(loss) = 1 and
    // replays the recorded operations in reverse. The loss must be scalar.
    void backward(NodeId loss);

    // Replays the graph up to `output` with double arithmetic, substituting
    // `leaf_values` for the given leaf. Used by grad_check, whose probe steps
    // would otherwise drown in f32 rounding noise.
    double eval_f64(NodeId output, NodeId overridden_leaf, const std::vector<double>& leaf_values) const;

private:
    struct Entry {
        std::shared_ptr<Tensor> tensor;
        BackwardFn bwd;
        bool needs_grad;
        F64Fn f64;
    };
    std::vector<Entry> entries_;
};

// Tape-recorded layer primitives.
Tape::NodeId conv2d(Tape& tape, Tape::NodeId x, Tape::NodeId w, Tape::NodeId b, const ConvSpec& spec);
Tape::NodeId relu(Tape& tape, Tape::NodeId x);
Tape::NodeId avg_pool2d(Tape& tape, Tape::NodeId x, int kernel, int stride);
Tape::NodeId linear(Tape& tape, Tape::NodeId x, Tape::NodeId w, Tape::NodeId b);
Tape::NodeId interleave(Tape& tape, Tape::NodeId a, Tape::NodeId b, int groups);
Tape::NodeId flatten2d(Tape& tape, Tape::NodeId x);
Tape::NodeId reshape(Tape& tape, Tape::NodeId x, std::vector<int> new_shape);

// Mean over the batch of squared differences; target receives no gradient.
Tape::NodeId euclidean_loss(Tape& tape, Tape::NodeId pred, Tape::NodeId target);

// Builds a scalar-valued graph from one input leaf; used by grad_check.
using ScalarGraph = std::function<Tape::NodeId(Tape&, Tape::NodeId)>;

// Compares analytic gradients against central finite differences and returns
// max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const ScalarGraph& f, const Tensor& input, double epsilon = 1e-3);

}  // namespace rsanet
