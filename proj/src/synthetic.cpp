#include "rsanet/synthetic.hpp"

#include <cmath>

#include "rsanet/prng.hpp"

namespace rsanet {

namespace {

// pixel = clamp01(0.5 + kPixelScale * <embedding row, latent>); latents and
// embedding rows are scaled to unit variance so clamping is rare
constexpr double kPixelScale = 0.12;

std::vector<Tensor> embed_latents(const std::vector<std::vector<double>>& latents,
                                  const std::vector<double>& embedding, const SyntheticSpec& spec) {
    const int pixels = spec.channels * spec.height * spec.width;
    std::vector<Tensor> images;
    images.reserve(latents.size());
    for (const auto& z : latents) {
        Tensor img({spec.channels, spec.height, spec.width});
        for (int p = 0; p < pixels; ++p) {
            double acc = 0.0;
            const double* row = embedding.data() + static_cast<size_t>(p) * spec.latent_dim;
            for (int l = 0; l < spec.latent_dim; ++l) acc += row[l] * z[static_cast<size_t>(l)];
            const double v = 0.5 + kPixelScale * acc;
            img.data[static_cast<size_t>(p)] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
        }
        images.push_back(std::move(img));
    }
    return images;
}

Rdm latent_rdm(const std::vector<std::vector<double>>& latents, int latent_dim) {
    const int n = static_cast<int>(latents.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (int l = 0; l < latent_dim; ++l) {
                const double diff = latents[static_cast<size_t>(i)][static_cast<size_t>(l)] -
                                    latents[static_cast<size_t>(j)][static_cast<size_t>(l)];
                acc += diff * diff;
            }
            d(i, j) = d(j, i) = std::sqrt(acc);
        }
    return normalize_rdm(Rdm(std::move(d)));
}

}  // namespace

SyntheticSet make_synthetic_set(const SyntheticSpec& spec) {
    if (spec.n_train < 3 || spec.n_heldout < 3 || spec.latent_dim < 1 || spec.channels < 1 || spec.height < 1 ||
        spec.width < 1) {
        throw ValueError("synthetic spec fields out of range");
    }
    Xoshiro256ss rng(mix_seed(spec.seed, 0x5e7));

    // draw order is pinned: embedding, then train latents, then held-out
    const int pixels = spec.channels * spec.height * spec.width;
    const double embed_bound = std::sqrt(3.0 / spec.latent_dim);  // unit pixel variance
    std::vector<double> embedding(static_cast<size_t>(pixels) * spec.latent_dim);
    for (auto& v : embedding) v = rng.uniform(-embed_bound, embed_bound);

    const double latent_bound = std::sqrt(3.0);  // unit latent variance
    const auto draw_latents = [&](int count) {
        std::vector<std::vector<double>> latents(static_cast<size_t>(count),
                                                 std::vector<double>(static_cast<size_t>(spec.latent_dim)));
        for (auto& z : latents)
            for (auto& v : z) v = rng.uniform(-latent_bound, latent_bound);
        return latents;
    };
    const auto train_latents = draw_latents(spec.n_train);
    const auto heldout_latents = draw_latents(spec.n_heldout);

    return SyntheticSet{embed_latents(train_latents, embedding, spec),
                        embed_latents(heldout_latents, embedding, spec),
                        latent_rdm(train_latents, spec.latent_dim),
                        latent_rdm(heldout_latents, spec.latent_dim)};
}

}  // namespace rsanet
