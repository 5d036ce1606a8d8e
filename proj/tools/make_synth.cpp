// Generates a self-contained synthetic fixture (images, target RDMs, config)
// so the CLI can be exercised without external data.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <string>

#include "rsanet/data_io.hpp"
#include "rsanet/prng.hpp"
#include "rsanet/synthetic.hpp"

namespace fs = std::filesystem;
using namespace rsanet;

namespace {

void save_images(const std::string& dir, const std::vector<Tensor>& images) {
    fs::create_directories(dir);
    char name[32];
    for (size_t i = 0; i < images.size(); ++i) {
        std::snprintf(name, sizeof(name), "img_%03zu.tsr", i);
        save_tensor((fs::path(dir) / name).string(), images[i]);
    }
}

// noisy per-subject variants of the shared signal RDM
std::vector<Rdm> subject_rdms(const Rdm& signal, int subjects, double noise, uint64_t seed) {
    std::vector<Rdm> out;
    const int n = signal.size();
    for (int s = 0; s < subjects; ++s) {
        Xoshiro256ss rng(mix_seed(seed, 0x700 + static_cast<uint64_t>(s)));
        Eigen::MatrixXd m = signal.matrix();
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double v = std::max(0.0, m(i, j) + rng.uniform(-noise, noise));
                m(i, j) = v;
                m(j, i) = v;
            }
        out.emplace_back(std::move(m));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic fixture generator"};
    std::string out_dir = "fixture";
    int n_train = 24, n_heldout = 12, latent = 8, subjects = 1;
    int channels = 3, size = 32;
    double noise = 0.05;
    uint64_t seed = 0;
    int epochs_frozen = 15, epochs_unfrozen = 200;
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--n", n_train, "training image count");
    app.add_option("--held-out", n_heldout, "held-out image count");
    app.add_option("--latent", latent, "latent dimension");
    app.add_option("--subjects", subjects, "subject RDM count (noisy copies when > 1)");
    app.add_option("--noise", noise, "subject noise amplitude");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--channels", channels, "image channels");
    app.add_option("--size", size, "image height/width");
    app.add_option("--epochs-frozen", epochs_frozen, "config epochs_frozen");
    app.add_option("--epochs-unfrozen", epochs_unfrozen, "config epochs_unfrozen");
    CLI11_PARSE(app, argc, argv);

    try {
        SyntheticSpec spec;
        spec.n_train = n_train;
        spec.n_heldout = n_heldout;
        spec.latent_dim = latent;
        spec.channels = channels;
        spec.height = size;
        spec.width = size;
        spec.seed = seed;
        const SyntheticSet set = make_synthetic_set(spec);

        fs::create_directories(out_dir);
        save_images((fs::path(out_dir) / "images").string(), set.train_images);
        save_images((fs::path(out_dir) / "heldout").string(), set.heldout_images);
        write_rdm_csv((fs::path(out_dir) / "heldout_rdm.csv").string(), set.heldout_rdm);

        std::string rdm_list;
        if (subjects <= 1) {
            write_rdm_csv((fs::path(out_dir) / "target_rdm.csv").string(), set.train_rdm);
            rdm_list = "target_rdm.csv";
        } else {
            const auto subs = subject_rdms(set.train_rdm, subjects, noise, seed);
            for (size_t s = 0; s < subs.size(); ++s) {
                const std::string name = "subject_" + std::to_string(s) + ".csv";
                write_rdm_csv((fs::path(out_dir) / name).string(), subs[s]);
                if (s) rdm_list += ' ';
                rdm_list += name;
            }
        }

        std::string cfg;
        cfg += "[model]\n";
        cfg += "input = " + std::to_string(channels) + " " + std::to_string(size) + " " + std::to_string(size) +
               "\n\n";
        cfg += "[train]\n";
        cfg += "lr = auto\n";
        cfg += "batch_size = 32\n";
        cfg += "epochs_frozen = " + std::to_string(epochs_frozen) + "\n";
        cfg += "epochs_unfrozen = " + std::to_string(epochs_unfrozen) + "\n";
        cfg += "seed = " + std::to_string(seed) + "\n\n";
        cfg += "[paths]\n";
        cfg += "images_dir = images\n";
        cfg += "rdms = " + rdm_list + "\n";
        cfg += "weights_out = weights.bin\n";
        cfg += "history_out = history.csv\n";
        cfg += "lr_curve_out = lr_curve.csv\n";
        write_file((fs::path(out_dir) / "run.cfg").string(), cfg);

        std::printf("fixture written to %s (%d train, %d held-out images)\n", out_dir.c_str(), n_train,
                    n_heldout);
        std::printf("note: paths in run.cfg are relative to the fixture directory\n");
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "make-synth failed: %s\n", e.what());
        return 1;
    }
}
