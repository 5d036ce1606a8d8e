#include "rsanet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

namespace rsanet {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ValueError("lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ValueError("momentum must be in [0,1)");
    if (batch_size < 1) throw ValueError("batch_size must be >= 1");
    if (epochs_frozen < 0 || epochs_unfrozen < 0) throw ValueError("epoch counts must be >= 0");
    if (schedule.kind == ScheduleSpec::Kind::Triangular) {
        if (!(schedule.base_lr > 0.0) || schedule.base_lr > schedule.max_lr || schedule.step_size < 1) {
            throw ValueError("triangular schedule requires 0 < base_lr <= max_lr and step_size >= 1");
        }
    }
}

double triangular_lr(double base_lr, double max_lr, int step_size, int64_t iteration) {
    if (base_lr > max_lr || step_size < 1) throw ValueError("triangular_lr requires base <= max, step_size >= 1");
    if (iteration < 0) throw ValueError("triangular_lr iteration must be >= 0");
    const int64_t cycle = 2 * static_cast<int64_t>(step_size);
    const int64_t pos = iteration % cycle;
    const double t = pos <= step_size ? static_cast<double>(pos) / step_size
                                      : static_cast<double>(cycle - pos) / step_size;
    return base_lr + (max_lr - base_lr) * t;
}

void sgd_update(std::vector<float>& w, const std::vector<float>& g, std::vector<float>& v, float lr,
                float momentum) {
    if (w.size() != g.size() || w.size() != v.size()) throw ShapeError("sgd buffers disagree in size");
    for (size_t i = 0; i < w.size(); ++i) {
        v[i] = std::fma(momentum, v[i], g[i]);
        w[i] = std::fma(-lr, v[i], w[i]);
    }
}

void sgd_step(Model& model, double lr, double momentum, SgdState& state) {
    const float lr_f = static_cast<float>(lr);
    const float mom_f = static_cast<float>(momentum);
    for (const auto& id : model.param_order) {
        if (model.frozen.count(id)) continue;  // velocity untouched
        auto& pair = model.params.at(id);
        if (pair.weight->grad.size() != pair.weight->data.size() ||
            pair.bias->grad.size() != pair.bias->data.size()) {
            throw ValueError("sgd_step: parameter '" + id + "' has no gradient");
        }
        auto& vel = state.velocity[id];
        if (vel.first.size() != pair.weight->data.size()) vel.first.assign(pair.weight->data.size(), 0.0f);
        if (vel.second.size() != pair.bias->data.size()) vel.second.assign(pair.bias->data.size(), 0.0f);
        sgd_update(pair.weight->data, pair.weight->grad, vel.first, lr_f, mom_f);
        sgd_update(pair.bias->data, pair.bias->grad, vel.second, lr_f, mom_f);
    }
}

namespace {

// Stages one mini-batch of image pairs into contiguous branch tensors.
struct BatchStager {
    const Dataset& data;
    Tensor a, b, target;

    explicit BatchStager(const Dataset& ds) : data(ds) {}

    void stage(const std::vector<int>& batch) {
        const auto& shape = data.images.front().shape;
        const int n = static_cast<int>(batch.size());
        a = Tensor({n, shape[0], shape[1], shape[2]});
        b = Tensor(a.shape);
        target = Tensor({n});
        const size_t elems = data.images.front().data.size();
        for (int p = 0; p < n; ++p) {
            const PairSample& s = data.pairs[static_cast<size_t>(batch[static_cast<size_t>(p)])];
            std::copy(data.images[static_cast<size_t>(s.i)].data.begin(),
                      data.images[static_cast<size_t>(s.i)].data.end(),
                      a.data.begin() + static_cast<std::ptrdiff_t>(p * elems));
            std::copy(data.images[static_cast<size_t>(s.j)].data.begin(),
                      data.images[static_cast<size_t>(s.j)].data.end(),
                      b.data.begin() + static_cast<std::ptrdiff_t>(p * elems));
            target.data[static_cast<size_t>(p)] = s.target;
        }
    }
};

float run_batch(Model& model, BatchStager& stager, const std::vector<int>& batch, double lr, double momentum,
                SgdState& state) {
    stager.stage(batch);
    Tape tape;
    const auto a = tape.leaf(std::move(stager.a));
    const auto b = tape.leaf(std::move(stager.b));
    const auto target = tape.leaf(std::move(stager.target));
    const auto pred = pair_forward(tape, model, a, b);
    const auto loss = euclidean_loss(tape, pred, target);
    const float lv = tape.value(loss).data[0];
    if (!std::isfinite(lv)) return lv;  // caller reports
    tape.backward(loss);
    sgd_step(model, lr, momentum, state);
    return lv;
}

double schedule_lr(const TrainConfig& cfg, int64_t iteration) {
    switch (cfg.schedule.kind) {
        case ScheduleSpec::Kind::Constant:
            return cfg.lr;
        case ScheduleSpec::Kind::Triangular:
            return triangular_lr(cfg.schedule.base_lr, cfg.schedule.max_lr, cfg.schedule.step_size, iteration);
    }
    throw ValueError("unknown schedule kind");
}

void set_body_requires_grad(Model& model, bool value) {
    for (const auto& id : model.body_layer_ids()) {
        model.params.at(id).weight->requires_grad = value;
        model.params.at(id).bias->requires_grad = value;
    }
}

}  // namespace

TrainHistory train(Model& model, const Dataset& data, const TrainConfig& config) {
    config.validate();
    if (data.pairs.empty()) throw DataError("train: dataset has no pairs");

    TrainHistory history;
    SgdState state;
    BatchStager stager(data);
    int64_t iteration = 0;
    int epoch_index = 0;

    const auto run_stage = [&](Stage stage, int epochs) {
        for (int e = 0; e < epochs; ++e, ++epoch_index) {
            const auto start = std::chrono::steady_clock::now();
            const auto batches = epoch_batches(static_cast<int>(data.pairs.size()), config.batch_size,
                                               config.seed, epoch_index, config.shuffle);
            const double lr_first = schedule_lr(config, iteration);
            double loss_sum = 0.0;
            int64_t samples = 0;
            for (size_t bi = 0; bi < batches.size(); ++bi) {
                const double lr_t = schedule_lr(config, iteration);
                const float lv = run_batch(model, stager, batches[bi], lr_t, config.momentum, state);
                if (!std::isfinite(lv)) {
                    throw NumericError("non-finite loss at epoch " + std::to_string(epoch_index) + " batch " +
                                       std::to_string(bi) + " (stage " +
                                       (stage == Stage::Frozen ? "frozen" : "unfrozen") + ")");
                }
                loss_sum += static_cast<double>(lv) * static_cast<double>(batches[bi].size());
                samples += static_cast<int64_t>(batches[bi].size());
                ++iteration;
            }
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            history.epochs.push_back(
                {epoch_index, stage, lr_first, loss_sum / static_cast<double>(samples), secs});
        }
    };

    if (config.epochs_frozen > 0) {
        set_frozen(model, model.body_layer_ids(), true);
        // frozen body parameters need no gradients of their own; flow-through
        // to earlier layers is moot because the body comes first
        set_body_requires_grad(model, false);
        run_stage(Stage::Frozen, config.epochs_frozen);
        set_body_requires_grad(model, true);
    }
    if (config.epochs_unfrozen > 0) {
        model.frozen.clear();
        run_stage(Stage::Unfrozen, config.epochs_unfrozen);
    }
    return history;
}

LrFindResult lr_find(const Model& model, const Dataset& data, const LrFindOptions& opts) {
    if (data.pairs.empty()) throw DataError("lr_find: dataset has no pairs");
    if (!(opts.lr_min > 0.0) || !(opts.lr_min < opts.lr_max) || opts.steps < 2) {
        throw ValueError("lr_find requires 0 < lr_min < lr_max and steps >= 2");
    }

    Model scratch = model.clone();
    SgdState state;
    BatchStager stager(data);
    const double ratio = opts.lr_max / opts.lr_min;

    LrFindResult result;
    double ema = 0.0;
    double best = std::numeric_limits<double>::infinity();
    int64_t shuffle_epoch = 0;
    auto batches = epoch_batches(static_cast<int>(data.pairs.size()), opts.batch_size, opts.seed, shuffle_epoch,
                                 true);
    size_t bi = 0;

    for (int i = 0; i < opts.steps; ++i) {
        if (bi == batches.size()) {
            batches = epoch_batches(static_cast<int>(data.pairs.size()), opts.batch_size, opts.seed,
                                    ++shuffle_epoch, true);
            bi = 0;
        }
        const double lr_i = opts.lr_min * std::pow(ratio, static_cast<double>(i) / (opts.steps - 1));
        const float lv = run_batch(scratch, stager, batches[bi++], lr_i, opts.momentum, state);
        if (!std::isfinite(lv)) {
            if (i == 0) throw NumericError("lr_find: non-finite loss at the very first step");
            break;
        }
        ema = opts.smoothing_beta * ema + (1.0 - opts.smoothing_beta) * static_cast<double>(lv);
        const double smoothed = ema / (1.0 - std::pow(opts.smoothing_beta, i + 1));
        result.lrs.push_back(lr_i);
        result.smoothed_losses.push_back(smoothed);
        if (smoothed > opts.abort_factor * best) break;
        best = std::min(best, smoothed);
    }

    // steepest negative slope of the smoothed curve; short curves fall back
    // to the loss minimum
    const size_t k = result.smoothed_losses.size();
    size_t pick = 0;
    if (k >= 3) {
        double best_slope = std::numeric_limits<double>::infinity();
        for (size_t i = 1; i + 1 < k; ++i) {
            const double slope = 0.5 * (result.smoothed_losses[i + 1] - result.smoothed_losses[i - 1]);
            if (slope < best_slope) {
                best_slope = slope;
                pick = i;
            }
        }
    } else {
        for (size_t i = 1; i < k; ++i)
            if (result.smoothed_losses[i] < result.smoothed_losses[pick]) pick = i;
    }
    if (k == 0) throw NumericError("lr_find recorded no finite losses");
    result.suggested_lr = result.lrs[pick];
    return result;
}

std::string history_csv(const TrainHistory& history, bool include_timing) {
    std::string out = "epoch,stage,lr,mean_loss,seconds\n";
    char buf[128];
    for (const auto& e : history.epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%.12g,%.12g,%.6f\n", e.epoch,
                      e.stage == Stage::Frozen ? "frozen" : "unfrozen", e.lr, e.mean_loss,
                      include_timing ? e.wall_seconds : 0.0);
        out += buf;
    }
    return out;
}

void write_history_csv(const std::string& path, const TrainHistory& history, bool include_timing) {
    write_file(path, history_csv(history, include_timing));
}

}  // namespace rsanet
