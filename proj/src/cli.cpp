#include "rsanet/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <optional>

#include "rsanet/config.hpp"
#include "rsanet/data_io.hpp"
#include "rsanet/model.hpp"
#include "rsanet/rsa.hpp"
#include "rsanet/trainer.hpp"

namespace rsanet::cli {

namespace {

int fail(int code, const char* kind, const std::string& msg) {
    std::string clean = msg;
    for (auto& ch : clean)
        if (ch == '"' || ch == '\n') ch = '\'';
    std::fprintf(stderr, "rsanet-error: code=%d kind=%s message=\"%s\"\n", code, kind, clean.c_str());
    return code;
}

std::string redirect(const std::string& out_dir, const std::string& path) {
    if (out_dir.empty()) return path;
    std::filesystem::create_directories(out_dir);
    return (std::filesystem::path(out_dir) / std::filesystem::path(path).filename()).string();
}

void print_header(uint64_t seed, uint64_t hash) {
    std::printf("# rsanet %s seed=%llu config_hash=%016llx\n", kVersion, static_cast<unsigned long long>(seed),
                static_cast<unsigned long long>(hash));
}

std::vector<Tensor> load_images(const std::string& dir) {
    const auto files = list_dir_sorted(dir, ".tsr");
    if (files.empty()) throw DataError("no .tsr images found in " + dir);
    std::vector<Tensor> images;
    images.reserve(files.size());
    for (const auto& f : files) images.push_back(load_tensor(f));
    return images;
}

Rdm load_training_target(const std::vector<std::string>& rdm_paths) {
    if (rdm_paths.empty()) throw ConfigError("paths.rdms must list at least one RDM csv");
    std::vector<Rdm> subjects;
    subjects.reserve(rdm_paths.size());
    for (const auto& p : rdm_paths) subjects.push_back(load_rdm_csv(p));
    return normalize_rdm(group_average(subjects));
}

struct TrainOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out_dir;
    bool timing = false;
};

RunConfig resolve_config(const std::string& config_path, const std::optional<uint64_t>& seed) {
    RunConfig cfg = load_config(config_path);
    if (seed) {
        cfg.train.seed = *seed;
        cfg.lr_find.seed = *seed;
    }
    return cfg;
}

Model build_from_config(const RunConfig& cfg) {
    if (cfg.paths.weights_in.empty()) return build_model(cfg.model, InitRandom{cfg.train.seed});
    ImportReport report;
    Model model = build_model(cfg.model, InitImport{cfg.paths.weights_in, cfg.train.seed}, &report);
    std::printf("imported %zu body layer(s), randomized %zu\n", report.imported.size(),
                report.randomized.size());
    return model;
}

int do_train(const TrainOpts& opts) {
    RunConfig cfg = resolve_config(opts.config_path, opts.seed);
    print_header(cfg.train.seed, config_hash(cfg));

    const auto images = load_images(cfg.paths.images_dir);
    const Rdm target = load_training_target(cfg.paths.rdms);
    Dataset dataset = make_dataset(images, target, /*both_orders=*/true);

    Model model = build_from_config(cfg);
    if (cfg.lr_auto) {
        const LrFindResult found = lr_find(model, dataset, cfg.lr_find);
        cfg.train.lr = found.suggested_lr;
        std::printf("lr_find suggested_lr=%.12g\n", found.suggested_lr);
    }

    const TrainHistory history = train(model, dataset, cfg.train);

    const std::string weights_path = redirect(opts.out_dir, cfg.paths.weights_out);
    const std::string history_path = redirect(opts.out_dir, cfg.paths.history_out);
    save_weights(weights_path, model);
    write_history_csv(history_path, history, opts.timing);

    if (!history.epochs.empty()) {
        double total = 0.0;
        for (const auto& e : history.epochs) total += e.wall_seconds;
        std::printf("trained %zu epoch(s), first mean_loss=%.6g last mean_loss=%.6g (%.1f s)\n",
                    history.epochs.size(), history.epochs.front().mean_loss, history.epochs.back().mean_loss,
                    total);
    }
    std::printf("weights: %s\nhistory: %s\n", weights_path.c_str(), history_path.c_str());
    return 0;
}

int do_lr_find(const TrainOpts& opts) {
    const RunConfig cfg = resolve_config(opts.config_path, opts.seed);
    print_header(cfg.train.seed, config_hash(cfg));

    const auto images = load_images(cfg.paths.images_dir);
    const Rdm target = load_training_target(cfg.paths.rdms);
    const Dataset dataset = make_dataset(images, target, /*both_orders=*/true);
    const Model model = build_from_config(cfg);

    const LrFindResult found = lr_find(model, dataset, cfg.lr_find);

    std::string csv = "lr,smoothed_loss\n";
    char buf[80];
    for (size_t i = 0; i < found.lrs.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", found.lrs[i], found.smoothed_losses[i]);
        csv += buf;
    }
    const std::string curve_path = redirect(opts.out_dir, cfg.paths.lr_curve_out);
    write_file(curve_path, csv);
    std::printf("suggested_lr=%.17g\ncurve: %s\n", found.suggested_lr, curve_path.c_str());
    return 0;
}

struct PredictOpts {
    std::string config_path;
    std::string weights_path;
    std::string images_dir;
    std::string out_rdm;
    std::optional<uint64_t> seed;
};

int do_predict(const PredictOpts& opts) {
    RunConfig cfg;
    if (!opts.config_path.empty()) cfg = resolve_config(opts.config_path, opts.seed);
    print_header(cfg.train.seed, config_hash(cfg));

    Model model = build_model(cfg.model, InitRandom{cfg.train.seed});
    load_weights_into(model, opts.weights_path);
    const auto images = load_images(opts.images_dir);
    const Rdm predicted = predict_rdm(model, images);
    write_rdm_csv(opts.out_rdm, predicted);
    std::printf("predicted %dx%d RDM: %s\n", predicted.size(), predicted.size(), opts.out_rdm.c_str());
    return 0;
}

struct EvaluateOpts {
    std::string pred_path;
    std::vector<std::string> target_paths;
    std::string name;
    std::string out_path;
};

int do_evaluate(const EvaluateOpts& opts) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : opts.target_paths)
        for (const unsigned char ch : p) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
    print_header(0, h);

    const Rdm pred = load_rdm_csv(opts.pred_path);
    std::vector<Rdm> targets;
    targets.reserve(opts.target_paths.size());
    for (const auto& p : opts.target_paths) targets.push_back(load_rdm_csv(p));

    EvalReport report;
    report.target_name = !opts.name.empty()
                             ? opts.name
                             : std::filesystem::path(opts.target_paths.front()).stem().string();
    report.spearman_r = spearman(pred, group_average(targets));
    if (targets.size() >= 2) {
        report.noise_ceiling_lower = noise_ceiling_lower(targets);
        if (report.noise_ceiling_lower > 0.0) {
            report.explained_variance_pct = explained_variance(report.spearman_r, report.noise_ceiling_lower);
        }
    }
    const std::string csv = eval_report_csv({report});
    std::fputs(csv.c_str(), stdout);
    if (!opts.out_path.empty()) write_file(opts.out_path, csv);
    return 0;
}

struct BaselineOpts {
    std::vector<std::string> layer_paths;
    std::string target_path;
    std::string out_rdm;
};

int do_baseline(const BaselineOpts& opts) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char ch : opts.target_path) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    print_header(0, h);

    std::vector<Rdm> layers;
    layers.reserve(opts.layer_paths.size());
    for (const auto& p : opts.layer_paths) layers.push_back(load_rdm_csv(p));
    const Rdm target = load_rdm_csv(opts.target_path);

    const BaselineFit fit = baseline_fit(layers, target);
    std::printf("term,weight\n");
    std::printf("intercept,%.12g\n", fit.weights[0]);
    for (size_t i = 0; i < opts.layer_paths.size(); ++i) {
        std::printf("%s,%.12g\n", opts.layer_paths[i].c_str(), fit.weights[static_cast<Eigen::Index>(i + 1)]);
    }
    std::printf("fit_spearman,%.12g\n", fit.spearman_r);
    if (!opts.out_rdm.empty()) write_rdm_csv(opts.out_rdm, fit.fitted);
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Siamese pairwise-dissimilarity networks with RSA evaluation"};
    app.require_subcommand(1);

    TrainOpts train_opts;
    auto* train_cmd = app.add_subcommand("train", "train a model against target RDMs");
    train_cmd->add_option("--config", train_opts.config_path, "run config file")->required();
    auto* train_seed = train_cmd->add_option("--seed", "override [train] seed");
    train_cmd->add_option("--out", train_opts.out_dir, "redirect output files into DIR");
    train_cmd->add_flag("--timing", train_opts.timing, "write wall-clock seconds into the history csv");

    TrainOpts lrf_opts;
    auto* lrf_cmd = app.add_subcommand("lr-find", "learning-rate range test");
    lrf_cmd->add_option("--config", lrf_opts.config_path, "run config file")->required();
    auto* lrf_seed = lrf_cmd->add_option("--seed", "override [train] seed");
    lrf_cmd->add_option("--out", lrf_opts.out_dir, "redirect output files into DIR");

    PredictOpts pred_opts;
    auto* pred_cmd = app.add_subcommand("predict", "predict an RDM for an image directory");
    pred_cmd->add_option("--config", pred_opts.config_path, "run config file (model section)");
    pred_cmd->add_option("--weights", pred_opts.weights_path, "trained weight file")->required();
    pred_cmd->add_option("--images", pred_opts.images_dir, "directory of .tsr images")->required();
    pred_cmd->add_option("--out-rdm", pred_opts.out_rdm, "output RDM csv path")->required();
    auto* pred_seed = pred_cmd->add_option("--seed", "override [train] seed");

    EvaluateOpts eval_opts;
    auto* eval_cmd = app.add_subcommand("evaluate", "score a predicted RDM against target RDMs");
    eval_cmd->add_option("--pred", eval_opts.pred_path, "predicted RDM csv")->required();
    eval_cmd->add_option("--targets", eval_opts.target_paths, "target RDM csv per subject")
        ->required()
        ->expected(-1);
    eval_cmd->add_option("--name", eval_opts.name, "target name for the report row");
    eval_cmd->add_option("--out", eval_opts.out_path, "also write the report csv here");

    BaselineOpts base_opts;
    auto* base_cmd = app.add_subcommand("baseline", "least-squares combination of layer RDMs");
    base_cmd->add_option("--layers", base_opts.layer_paths, "layer RDM csvs")->required()->expected(-1);
    base_cmd->add_option("--target", base_opts.target_path, "target RDM csv")->required();
    base_cmd->add_option("--out-rdm", base_opts.out_rdm, "write the fitted RDM csv here");

    std::vector<std::string> argv_vec;
    argv_vec.push_back("rsanet");
    argv_vec.insert(argv_vec.end(), args.begin(), args.end());
    std::vector<char*> argv;
    argv.reserve(argv_vec.size());
    for (auto& s : argv_vec) argv.push_back(s.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::fputs(app.help().c_str(), stdout);
        return 0;
    } catch (const CLI::ParseError& e) {
        return fail(1, "usage", e.what());
    }

    const auto opt_seed = [](CLI::Option* opt) -> std::optional<uint64_t> {
        if (opt->count() == 0) return std::nullopt;
        return static_cast<uint64_t>(std::stoull(opt->results().front()));
    };

    try {
        if (*train_cmd) {
            train_opts.seed = opt_seed(train_seed);
            return do_train(train_opts);
        }
        if (*lrf_cmd) {
            lrf_opts.seed = opt_seed(lrf_seed);
            return do_lr_find(lrf_opts);
        }
        if (*pred_cmd) {
            pred_opts.seed = opt_seed(pred_seed);
            return do_predict(pred_opts);
        }
        if (*eval_cmd) return do_evaluate(eval_opts);
        if (*base_cmd) return do_baseline(base_opts);
        return fail(1, "usage", "no subcommand given");
    } catch (const ConfigError& e) {
        return fail(1, "config", e.what());
    } catch (const NumericError& e) {
        return fail(3, "numeric", e.what());
    } catch (const FormatError& e) {
        return fail(2, "format", e.what());
    } catch (const DataError& e) {
        return fail(2, "data", e.what());
    } catch (const ShapeError& e) {
        return fail(2, "shape", e.what());
    } catch (const ValueError& e) {
        return fail(2, "value", e.what());
    } catch (const Error& e) {
        return fail(2, "error", e.what());
    } catch (const std::exception& e) {
        return fail(1, "internal", e.what());
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    args.reserve(static_cast<size_t>(argc > 0 ? argc - 1 : 0));
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace rsanet::cli
