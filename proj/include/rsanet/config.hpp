#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsanet/model.hpp"
#include "rsanet/trainer.hpp"

namespace rsanet {

struct PathsConfig {
    std::string images_dir;
    std::vector<std::string> rdms;
    std::string weights_in;  // optional body import
    std::string weights_out = "weights.bin";
    std::string history_out = "history.csv";
    std::string lr_curve_out = "lr_curve.csv";
};

// Resolved run configuration. Flags override file values which override the
// defaults (desk-scale model, TrainConfig defaults, lr = auto).
struct RunConfig {
    ModelSpec model = desk_spec();
    TrainConfig train;
    LrFindOptions lr_find;
    bool lr_auto = true;  // when set, cmd_train takes its lr from lr_find
    PathsConfig paths;
};

// Flat key-value text format with [model] / [train] / [paths] sections;
// '#' starts a comment, values are whitespace-separated tokens. The grammar
// is documented in the README. Unknown sections or keys are errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical serialization of a resolved config; equal configs produce equal
// text. config_hash is FNV-1a 64 over these bytes.
std::string canonical_config(const RunConfig& config);
uint64_t config_hash(const RunConfig& config);

}  // namespace rsanet
