#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rsanet/cli.hpp"
#include "rsanet/config.hpp"
#include "rsanet/data_io.hpp"
#include "rsanet/model.hpp"
#include "rsanet/prng.hpp"
#include "rsanet/rsa.hpp"
#include "rsanet/synthetic.hpp"

using namespace rsanet;
namespace fs = std::filesystem;

namespace {

// self-cleaning fixture directory with a small synthetic training setup
struct Fixture {
    fs::path root;
    SyntheticSet set;

    static SyntheticSet build_set(int n_train, int n_heldout) {
        SyntheticSpec spec;
        spec.n_train = n_train;
        spec.n_heldout = n_heldout;
        spec.latent_dim = 4;
        spec.channels = 2;
        spec.height = 8;
        spec.width = 8;
        spec.seed = 1;
        return make_synthetic_set(spec);
    }

    explicit Fixture(const std::string& name, int n_train = 6, int n_heldout = 4)
        : root(fs::temp_directory_path() / ("rsanet_cli_" + name)), set(build_set(n_train, n_heldout)) {
        fs::remove_all(root);
        fs::create_directories(root / "images");
        fs::create_directories(root / "heldout");
        char buf[32];
        for (size_t i = 0; i < set.train_images.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "img_%03zu.tsr", i);
            save_tensor((root / "images" / buf).string(), set.train_images[i]);
        }
        for (size_t i = 0; i < set.heldout_images.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "img_%03zu.tsr", i);
            save_tensor((root / "heldout" / buf).string(), set.heldout_images[i]);
        }
        write_rdm_csv((root / "target.csv").string(), set.train_rdm);
        write_config();
    }

    void write_config(const std::string& extra_train = "") {
        std::string cfg;
        cfg += "[model]\n";
        cfg += "input = 2 8 8\n";
        cfg += "body = conv 8 3 2 1; relu\n";
        cfg += "head_conv = 8 3 1 1 4\n";
        cfg += "head_pool = 2 2\n";
        cfg += "interleave_groups = 4\n";
        cfg += "[train]\n";
        cfg += "lr = 0.02\n";
        cfg += "batch_size = 16\n";
        cfg += "epochs_frozen = 1\n";
        cfg += "epochs_unfrozen = 4\n";
        cfg += "seed = 3\n";
        cfg += "lr_find_steps = 12\n";
        cfg += extra_train;
        cfg += "[paths]\n";
        cfg += "images_dir = " + (root / "images").string() + "\n";
        cfg += "rdms = " + (root / "target.csv").string() + "\n";
        cfg += "weights_out = " + (root / "weights.bin").string() + "\n";
        cfg += "history_out = " + (root / "history.csv").string() + "\n";
        cfg += "lr_curve_out = " + (root / "lr_curve.csv").string() + "\n";
        write_file((root / "run.cfg").string(), cfg);
    }

    std::string path(const std::string& name) const { return (root / name).string(); }

    ~Fixture() { fs::remove_all(root); }
};

}  // namespace

TEST_CASE("cmd_train: happy path, exit codes, determinism") {
    Fixture fx("train");

    SUBCASE("missing rdm file exits 2") {
        fs::remove(fx.path("target.csv"));
        CHECK(cli::run({"train", "--config", fx.path("run.cfg")}) == 2);
    }

    SUBCASE("bad config exits 1") {
        write_file(fx.path("bad.cfg"), std::string("[nope]\nx = 1\n"));
        CHECK(cli::run({"train", "--config", fx.path("bad.cfg")}) == 1);
        CHECK(cli::run({"train"}) == 1);  // missing --config
        CHECK(cli::run({"frobnicate"}) == 1);
    }

    SUBCASE("zero epochs writes the initialization") {
        fx.write_config("epochs_frozen = 0\nepochs_unfrozen = 0\n");
        CHECK(cli::run({"train", "--config", fx.path("run.cfg")}) == 0);
        const auto file_weights = load_weights(fx.path("weights.bin"));
        ModelSpec spec;
        {
            const RunConfig cfg = load_config(fx.path("run.cfg"));
            spec = cfg.model;
        }
        const Model fresh = build_model(spec, InitRandom{3});
        CHECK(file_weights.at("body0.weight").data == fresh.params.at("body0").weight->data);
        // history has only the header
        const auto hist = read_file(fx.path("history.csv"));
        CHECK(std::string(hist.begin(), hist.end()) == "epoch,stage,lr,mean_loss,seconds\n");
    }

    SUBCASE("multiple subject RDMs are group-averaged before training") {
        // perturbed copies whose average is the original signal
        Eigen::MatrixXd up = fx.set.train_rdm.matrix();
        Eigen::MatrixXd down = fx.set.train_rdm.matrix();
        for (int i = 0; i < up.rows(); ++i)
            for (int j = 0; j < up.cols(); ++j)
                if (i != j) {
                    up(i, j) += 0.05;
                    down(i, j) = std::max(0.0, down(i, j) - 0.05);
                }
        write_rdm_csv(fx.path("s1.csv"), Rdm(up));
        write_rdm_csv(fx.path("s2.csv"), Rdm(down));
        std::string cfg;
        {
            const auto bytes = read_file(fx.path("run.cfg"));
            cfg.assign(bytes.begin(), bytes.end());
        }
        const std::string single = "rdms = " + fx.path("target.csv");
        cfg.replace(cfg.find(single), single.size(), "rdms = " + fx.path("s1.csv") + " " + fx.path("s2.csv"));
        write_file(fx.path("multi.cfg"), cfg);
        CHECK(cli::run({"train", "--config", fx.path("multi.cfg")}) == 0);
        CHECK(fs::exists(fx.path("weights.bin")));
    }

    SUBCASE("numeric divergence exits 3") {
        fx.write_config("lr = 1e18\nmomentum = 0.0\nepochs_frozen = 0\nepochs_unfrozen = 40\n");
        CHECK(cli::run({"train", "--config", fx.path("run.cfg")}) == 3);
    }

    SUBCASE("two identical runs are byte-identical") {
        REQUIRE(cli::run({"train", "--config", fx.path("run.cfg")}) == 0);
        const auto w1 = read_file(fx.path("weights.bin"));
        const auto h1 = read_file(fx.path("history.csv"));
        REQUIRE(cli::run({"train", "--config", fx.path("run.cfg")}) == 0);
        CHECK(read_file(fx.path("weights.bin")) == w1);
        CHECK(read_file(fx.path("history.csv")) == h1);
        // a different seed changes the weights
        REQUIRE(cli::run({"train", "--config", fx.path("run.cfg"), "--seed", "99"}) == 0);
        CHECK(read_file(fx.path("weights.bin")) != w1);
    }
}

TEST_CASE("cmd_lr_find writes a curve and suggests within bounds") {
    Fixture fx("lrfind");
    fx.write_config("lr = auto\nlr_find_min = 1e-5\nlr_find_max = 1.0\nlr_find_steps = 10\n");
    REQUIRE(cli::run({"lr-find", "--config", fx.path("run.cfg")}) == 0);
    const auto curve = read_file(fx.path("lr_curve.csv"));
    const std::string text(curve.begin(), curve.end());
    CHECK(text.rfind("lr,smoothed_loss\n", 0) == 0);
    // row count <= steps + header
    const size_t rows = static_cast<size_t>(std::count(text.begin(), text.end(), '\n'));
    CHECK(rows <= 11);
    CHECK(rows >= 3);

    // rerun gives identical bytes
    REQUIRE(cli::run({"lr-find", "--config", fx.path("run.cfg")}) == 0);
    CHECK(read_file(fx.path("lr_curve.csv")) == curve);

    // model weight files are untouched by lr-find
    CHECK(!fs::exists(fx.path("weights.bin")));
}

TEST_CASE("cmd_predict round-trips through the library") {
    Fixture fx("predict");
    REQUIRE(cli::run({"train", "--config", fx.path("run.cfg")}) == 0);

    SUBCASE("prediction matches predict_rdm and parses back") {
        REQUIRE(cli::run({"predict", "--config", fx.path("run.cfg"), "--weights", fx.path("weights.bin"),
                          "--images", fx.path("heldout"), "--out-rdm", fx.path("pred.csv")}) == 0);
        const Rdm pred = load_rdm_csv(fx.path("pred.csv"));  // parses and validates
        const RunConfig cfg = load_config(fx.path("run.cfg"));
        Model model = build_model(cfg.model, InitRandom{0});
        load_weights_into(model, fx.path("weights.bin"));
        const Rdm lib = predict_rdm(model, fx.set.heldout_images);
        CHECK((pred.matrix() - lib.matrix()).cwiseAbs().maxCoeff() <= 1e-9);
    }

    SUBCASE("shape-mismatched weights exit 2") {
        // a config with a wider body cannot accept the trained weights
        Fixture other("predict_big", 4, 3);
        std::string cfg;
        cfg += "[model]\ninput = 2 8 8\nbody = conv 16 3 2 1; relu\nhead_conv = 8 3 1 1 4\n";
        cfg += "head_pool = 2 2\ninterleave_groups = 4\n";
        cfg += "[paths]\nimages_dir = " + other.path("images") + "\n";
        write_file(other.path("wide.cfg"), cfg);
        REQUIRE(cli::run({"predict", "--config", other.path("wide.cfg"), "--weights", fx.path("weights.bin"),
                          "--images", other.path("heldout"), "--out-rdm", other.path("pred.csv")}) == 2);
    }
}

TEST_CASE("cmd_evaluate prints report rows") {
    Fixture fx("evaluate");
    write_rdm_csv(fx.path("pred.csv"), fx.set.train_rdm);
    write_rdm_csv(fx.path("s1.csv"), fx.set.train_rdm);
    write_rdm_csv(fx.path("s2.csv"), fx.set.train_rdm);

    SUBCASE("pred equal to a single target") {
        CHECK(cli::run({"evaluate", "--pred", fx.path("pred.csv"), "--targets", fx.path("s1.csv"), "--out",
                        fx.path("report.csv")}) == 0);
        const auto rep = read_file(fx.path("report.csv"));
        const std::string text(rep.begin(), rep.end());
        CHECK(text.find("s1,1.000000,,\n") != std::string::npos);
    }
    SUBCASE("identical multi-subject targets give ceiling 1 and EV 100*r^2") {
        CHECK(cli::run({"evaluate", "--pred", fx.path("pred.csv"), "--targets", fx.path("s1.csv"),
                        fx.path("s2.csv"), "--name", "group", "--out", fx.path("report.csv")}) == 0);
        const auto rep = read_file(fx.path("report.csv"));
        const std::string text(rep.begin(), rep.end());
        CHECK(text.find("group,1.000000,1.000000,100.000000\n") != std::string::npos);
    }
    SUBCASE("degenerate targets exit 2") {
        // constant off-diagonal RDM has zero rank variance
        write_file(fx.path("flat.csv"), std::string("0,1,1\n1,0,1\n1,1,0\n"));
        CHECK(cli::run({"evaluate", "--pred", fx.path("flat.csv"), "--targets", fx.path("flat.csv")}) == 2);
    }
}

TEST_CASE("cmd_baseline fits layer combinations") {
    Fixture fx("baseline");
    // target = 2*l1 + 3*l2
    Xoshiro256ss rng(61);
    Eigen::MatrixXd l1 = Eigen::MatrixXd::Zero(8, 8), l2 = Eigen::MatrixXd::Zero(8, 8);
    for (int i = 0; i < 8; ++i)
        for (int j = i + 1; j < 8; ++j) {
            l1(i, j) = l1(j, i) = rng.uniform(0.0, 1.0);
            l2(i, j) = l2(j, i) = rng.uniform(0.0, 1.0);
        }
    write_rdm_csv(fx.path("l1.csv"), Rdm(l1));
    write_rdm_csv(fx.path("l2.csv"), Rdm(l2));
    write_rdm_csv(fx.path("target.csv"), Rdm(2.0 * l1 + 3.0 * l2));

    CHECK(cli::run({"baseline", "--layers", fx.path("l1.csv"), fx.path("l2.csv"), "--target",
                    fx.path("target.csv"), "--out-rdm", fx.path("fit.csv")}) == 0);
    const Rdm fitted = load_rdm_csv(fx.path("fit.csv"));
    CHECK(spearman(fitted, Rdm(2.0 * l1 + 3.0 * l2)) == doctest::Approx(1.0).epsilon(1e-6));

    SUBCASE("size mismatch exits 2") {
        write_file(fx.path("small.csv"), std::string("0,1\n1,0\n"));
        CHECK(cli::run({"baseline", "--layers", fx.path("small.csv"), "--target", fx.path("target.csv")}) == 2);
    }
}

TEST_CASE("outputs can be redirected with --out") {
    Fixture fx("outdir");
    const std::string out = fx.path("alt");
    REQUIRE(cli::run({"train", "--config", fx.path("run.cfg"), "--out", out}) == 0);
    CHECK(fs::exists(fs::path(out) / "weights.bin"));
    CHECK(fs::exists(fs::path(out) / "history.csv"));
    CHECK(!fs::exists(fx.path("weights.bin")));
}
