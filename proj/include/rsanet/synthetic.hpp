#pragma once

#include <cstdint>
#include <vector>

#include "rsanet/rsa.hpp"
#include "rsanet/tensor.hpp"

namespace rsanet {

// Synthetic recovery fixture: images are random low-dimensional latent codes
// linearly embedded into the pixel grid, and the ground-truth RDM is the
// min-max-normalized Euclidean distance between the latents. The embedding is
// shared between the train and held-out sets so held-out predictions probe
// generalization rather than memorization.
struct SyntheticSpec {
    int n_train = 24;
    int n_heldout = 12;
    int latent_dim = 8;
    int channels = 3;
    int height = 32;
    int width = 32;
    uint64_t seed = 0;
};

struct SyntheticSet {
    std::vector<Tensor> train_images;
    std::vector<Tensor> heldout_images;
    Rdm train_rdm;
    Rdm heldout_rdm;
};

SyntheticSet make_synthetic_set(const SyntheticSpec& spec);

}  // namespace rsanet
