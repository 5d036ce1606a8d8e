#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rsanet/data_io.hpp"
#include "rsanet/model.hpp"

namespace rsanet {

struct ScheduleSpec {
    enum class Kind { Constant, Triangular };
    Kind kind = Kind::Constant;
    // Triangular only; Constant uses TrainConfig::lr.
    double base_lr = 0.0;
    double max_lr = 0.0;
    int step_size = 1;
};

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    int batch_size = 32;
    int epochs_frozen = 15;
    int epochs_unfrozen = 200;
    ScheduleSpec schedule;
    uint64_t seed = 0;
    bool shuffle = true;

    void validate() const;
};

enum class Stage { Frozen, Unfrozen };

struct EpochRecord {
    int epoch;            // global index across both stages
    Stage stage;
    double lr;            // lr at the epoch's first iteration
    double mean_loss;     // sample-weighted mean over the epoch
    double wall_seconds;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

// Triangular ramp base -> max over step_size iterations, then back, repeating
// with period 2*step_size.
double triangular_lr(double base_lr, double max_lr, int step_size, int64_t iteration);

// Momentum SGD state, one velocity buffer per parameter tensor.
struct SgdState {
    std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> velocity;
};

// v <- momentum*v + g;  w <- w - lr*v. Frozen layers are skipped entirely
// (velocity untouched). Gradients are read from the parameters' grad buffers.
void sgd_step(Model& model, double lr, double momentum, SgdState& state);

// Buffer-level update rule shared by sgd_step; exposed for tests.
void sgd_update(std::vector<float>& w, const std::vector<float>& g, std::vector<float>& v, float lr,
                float momentum);

struct LrFindOptions {
    double lr_min = 1e-5;
    double lr_max = 1.0;
    int steps = 80;
    double smoothing_beta = 0.98;
    double abort_factor = 4.0;
    int batch_size = 32;
    double momentum = 0.9;
    uint64_t seed = 0;
};

struct LrFindResult {
    std::vector<double> lrs;
    std::vector<double> smoothed_losses;
    double suggested_lr = 0.0;
};

// Learning-rate range test: one mini-batch step per point of the geometric
// grid lr_i = lr_min * (lr_max/lr_min)^(i/(steps-1)), losses smoothed by a
// bias-corrected EMA. The sweep aborts once the smoothed loss exceeds
// abort_factor * best; the suggestion is the lr at the steepest negative
// slope of the smoothed curve (central differences). Runs on a scratch copy;
// the input model is untouched.
LrFindResult lr_find(const Model& model, const Dataset& data, const LrFindOptions& opts);

// Two-stage loop: epochs_frozen epochs with the body frozen, then everything
// unfrozen for epochs_unfrozen epochs. Deterministic given (seed, data,
// config, initial weights). Throws NumericError naming epoch/batch if the
// loss goes non-finite.
TrainHistory train(Model& model, const Dataset& data, const TrainConfig& config);

// CSV "epoch,stage,lr,mean_loss,seconds". Wall-clock is only written with
// include_timing; otherwise the column reads 0.000000 so identical runs
// produce identical bytes.
std::string history_csv(const TrainHistory& history, bool include_timing);
void write_history_csv(const std::string& path, const TrainHistory& history, bool include_timing);

}  // namespace rsanet
