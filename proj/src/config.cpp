#include "rsanet/config.hpp"

#include <cstdio>
#include <sstream>

#include "rsanet/data_io.hpp"

namespace rsanet {

namespace {

std::vector<std::string> tokens(const std::string& value) {
    std::istringstream is(value);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

int to_int(const std::string& tok, const std::string& key) {
    try {
        size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected integer, got '" + tok + "'");
    }
}

double to_double(const std::string& tok, const std::string& key) {
    try {
        size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected number, got '" + tok + "'");
    }
}

uint64_t to_u64(const std::string& tok, const std::string& key) {
    try {
        size_t used = 0;
        const uint64_t v = std::stoull(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected unsigned integer, got '" + tok + "'");
    }
}

bool to_bool(const std::string& tok, const std::string& key) {
    if (tok == "true" || tok == "1") return true;
    if (tok == "false" || tok == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + tok + "'");
}

// body grammar: semicolon-separated layers, each "conv OUT K STRIDE PAD",
// "relu" or "avg_pool K S"; conv input channels chain from the previous layer
std::vector<BodyLayer> parse_body(const std::string& value, int input_c, int* out_channels) {
    std::vector<BodyLayer> body;
    int channels = input_c;
    std::string item;
    std::istringstream is(value);
    while (std::getline(is, item, ';')) {
        const auto toks = tokens(item);
        if (toks.empty()) continue;
        BodyLayer layer;
        if (toks[0] == "conv") {
            if (toks.size() != 5) throw ConfigError("body conv needs 'conv OUT KERNEL STRIDE PAD'");
            layer.kind = BodyLayer::Kind::Conv;
            layer.conv.in_channels = channels;
            layer.conv.out_channels = to_int(toks[1], "body");
            layer.conv.kernel_h = layer.conv.kernel_w = to_int(toks[2], "body");
            layer.conv.stride = to_int(toks[3], "body");
            layer.conv.padding = to_int(toks[4], "body");
            layer.conv.groups = 1;
            channels = layer.conv.out_channels;
        } else if (toks[0] == "relu") {
            if (toks.size() != 1) throw ConfigError("body relu takes no arguments");
            layer.kind = BodyLayer::Kind::Relu;
        } else if (toks[0] == "avg_pool") {
            if (toks.size() != 3) throw ConfigError("body avg_pool needs 'avg_pool KERNEL STRIDE'");
            layer.kind = BodyLayer::Kind::AvgPool;
            layer.pool_kernel = to_int(toks[1], "body");
            layer.pool_stride = to_int(toks[2], "body");
        } else {
            throw ConfigError("unknown body layer '" + toks[0] + "'");
        }
        body.push_back(layer);
    }
    if (body.empty()) throw ConfigError("body must contain at least one layer");
    *out_channels = channels;
    return body;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::string section;
    std::string body_value;
    bool have_body = false;
    bool have_head_conv = false;
    std::vector<int> head_conv_args;

    std::istringstream lines(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(lines, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        std::string line = hash == std::string::npos ? raw : raw.substr(0, hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);

        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section");
            section = line.substr(1, line.size() - 2);
            if (section != "model" && section != "train" && section != "paths") {
                throw ConfigError("unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        {
            const auto e = key.find_last_not_of(" \t");
            key = e == std::string::npos ? "" : key.substr(0, e + 1);
            const auto s = value.find_first_not_of(" \t");
            value = s == std::string::npos ? "" : value.substr(s);
        }
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        const auto toks = tokens(value);

        if (section == "model") {
            if (key == "input") {
                if (toks.size() != 3) throw ConfigError("model input needs 'C H W'");
                cfg.model.input_c = to_int(toks[0], key);
                cfg.model.input_h = to_int(toks[1], key);
                cfg.model.input_w = to_int(toks[2], key);
            } else if (key == "body") {
                body_value = value;
                have_body = true;
            } else if (key == "head_conv") {
                if (toks.size() != 5) throw ConfigError("head_conv needs 'OUT KERNEL STRIDE PAD GROUPS'");
                head_conv_args.clear();
                for (const auto& t : toks) head_conv_args.push_back(to_int(t, key));
                have_head_conv = true;
            } else if (key == "head_pool") {
                if (toks.size() != 2) throw ConfigError("head_pool needs 'KERNEL STRIDE'");
                cfg.model.head.pool_kernel = to_int(toks[0], key);
                cfg.model.head.pool_stride = to_int(toks[1], key);
            } else if (key == "interleave_groups") {
                if (toks.size() != 1) throw ConfigError("interleave_groups needs one integer");
                cfg.model.interleave_groups = to_int(toks[0], key);
            } else {
                throw ConfigError("unknown key '" + key + "' in [model]");
            }
        } else if (section == "train") {
            if (key == "lr") {
                if (toks.size() != 1) throw ConfigError("lr needs one value");
                if (toks[0] == "auto") {
                    cfg.lr_auto = true;
                } else {
                    cfg.lr_auto = false;
                    cfg.train.lr = to_double(toks[0], key);
                }
            } else if (key == "momentum") {
                cfg.train.momentum = to_double(value, key);
            } else if (key == "batch_size") {
                cfg.train.batch_size = to_int(value, key);
            } else if (key == "epochs_frozen") {
                cfg.train.epochs_frozen = to_int(value, key);
            } else if (key == "epochs_unfrozen") {
                cfg.train.epochs_unfrozen = to_int(value, key);
            } else if (key == "seed") {
                cfg.train.seed = to_u64(value, key);
            } else if (key == "shuffle") {
                cfg.train.shuffle = to_bool(value, key);
            } else if (key == "schedule") {
                if (toks.size() == 1 && toks[0] == "constant") {
                    cfg.train.schedule.kind = ScheduleSpec::Kind::Constant;
                } else if (toks.size() == 4 && toks[0] == "triangular") {
                    cfg.train.schedule.kind = ScheduleSpec::Kind::Triangular;
                    cfg.train.schedule.base_lr = to_double(toks[1], key);
                    cfg.train.schedule.max_lr = to_double(toks[2], key);
                    cfg.train.schedule.step_size = to_int(toks[3], key);
                } else {
                    throw ConfigError("schedule is 'constant' or 'triangular BASE MAX STEP'");
                }
            } else if (key == "lr_find_min") {
                cfg.lr_find.lr_min = to_double(value, key);
            } else if (key == "lr_find_max") {
                cfg.lr_find.lr_max = to_double(value, key);
            } else if (key == "lr_find_steps") {
                cfg.lr_find.steps = to_int(value, key);
            } else if (key == "lr_find_beta") {
                cfg.lr_find.smoothing_beta = to_double(value, key);
            } else if (key == "lr_find_abort") {
                cfg.lr_find.abort_factor = to_double(value, key);
            } else {
                throw ConfigError("unknown key '" + key + "' in [train]");
            }
        } else if (section == "paths") {
            if (key == "images_dir") {
                cfg.paths.images_dir = value;
            } else if (key == "rdms") {
                if (toks.empty()) throw ConfigError("rdms needs at least one path");
                cfg.paths.rdms = toks;
            } else if (key == "weights_in") {
                cfg.paths.weights_in = value;
            } else if (key == "weights_out") {
                cfg.paths.weights_out = value;
            } else if (key == "history_out") {
                cfg.paths.history_out = value;
            } else if (key == "lr_curve_out") {
                cfg.paths.lr_curve_out = value;
            } else {
                throw ConfigError("unknown key '" + key + "' in [paths]");
            }
        } else {
            throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");
        }
    }

    if (have_body) {
        int body_out = 0;
        cfg.model.body = parse_body(body_value, cfg.model.input_c, &body_out);
        if (!have_head_conv) throw ConfigError("a custom body requires an explicit head_conv");
    }
    if (have_head_conv) {
        // input channels are twice the body output (the interleaved branches)
        int body_out = cfg.model.input_c;
        for (const auto& l : cfg.model.body)
            if (l.kind == BodyLayer::Kind::Conv) body_out = l.conv.out_channels;
        cfg.model.head.conv.in_channels = 2 * body_out;
        cfg.model.head.conv.out_channels = head_conv_args[0];
        cfg.model.head.conv.kernel_h = cfg.model.head.conv.kernel_w = head_conv_args[1];
        cfg.model.head.conv.stride = head_conv_args[2];
        cfg.model.head.conv.padding = head_conv_args[3];
        cfg.model.head.conv.groups = head_conv_args[4];
    }

    // derive linear_in from the configured geometry, then validate everything
    try {
        cfg.model.head.linear_in = spec_shapes(cfg.model).flat;
        cfg.model.head.linear_out = 1;
        validate_spec(cfg.model);
        cfg.train.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    // lr_find mirrors the train surface where it overlaps
    cfg.lr_find.batch_size = cfg.train.batch_size;
    cfg.lr_find.momentum = cfg.train.momentum;
    cfg.lr_find.seed = cfg.train.seed;
    return cfg;
}

RunConfig load_config(const std::string& path) {
    const auto bytes = read_file(path);
    return parse_config(std::string(bytes.begin(), bytes.end()));
}

std::string canonical_config(const RunConfig& c) {
    std::ostringstream os;
    char buf[64];
    const auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    os << "[model]\n";
    os << "input = " << c.model.input_c << ' ' << c.model.input_h << ' ' << c.model.input_w << '\n';
    os << "body =";
    for (size_t i = 0; i < c.model.body.size(); ++i) {
        const auto& l = c.model.body[i];
        if (i) os << " ;";
        switch (l.kind) {
            case BodyLayer::Kind::Conv:
                os << " conv " << l.conv.out_channels << ' ' << l.conv.kernel_h << ' ' << l.conv.stride << ' '
                   << l.conv.padding;
                break;
            case BodyLayer::Kind::Relu:
                os << " relu";
                break;
            case BodyLayer::Kind::AvgPool:
                os << " avg_pool " << l.pool_kernel << ' ' << l.pool_stride;
                break;
        }
    }
    os << '\n';
    os << "head_conv = " << c.model.head.conv.out_channels << ' ' << c.model.head.conv.kernel_h << ' '
       << c.model.head.conv.stride << ' ' << c.model.head.conv.padding << ' ' << c.model.head.conv.groups << '\n';
    os << "head_pool = " << c.model.head.pool_kernel << ' ' << c.model.head.pool_stride << '\n';
    os << "interleave_groups = " << c.model.interleave_groups << '\n';
    os << "[train]\n";
    os << "lr = " << (c.lr_auto ? std::string("auto") : num(c.train.lr)) << '\n';
    os << "momentum = " << num(c.train.momentum) << '\n';
    os << "batch_size = " << c.train.batch_size << '\n';
    os << "epochs_frozen = " << c.train.epochs_frozen << '\n';
    os << "epochs_unfrozen = " << c.train.epochs_unfrozen << '\n';
    if (c.train.schedule.kind == ScheduleSpec::Kind::Constant) {
        os << "schedule = constant\n";
    } else {
        os << "schedule = triangular " << num(c.train.schedule.base_lr) << ' ' << num(c.train.schedule.max_lr)
           << ' ' << c.train.schedule.step_size << '\n';
    }
    os << "seed = " << c.train.seed << '\n';
    os << "shuffle = " << (c.train.shuffle ? "true" : "false") << '\n';
    os << "lr_find_min = " << num(c.lr_find.lr_min) << '\n';
    os << "lr_find_max = " << num(c.lr_find.lr_max) << '\n';
    os << "lr_find_steps = " << c.lr_find.steps << '\n';
    os << "lr_find_beta = " << num(c.lr_find.smoothing_beta) << '\n';
    os << "lr_find_abort = " << num(c.lr_find.abort_factor) << '\n';
    os << "[paths]\n";
    os << "images_dir = " << c.paths.images_dir << '\n';
    os << "rdms =";
    for (const auto& p : c.paths.rdms) os << ' ' << p;
    os << '\n';
    os << "weights_in = " << c.paths.weights_in << '\n';
    os << "weights_out = " << c.paths.weights_out << '\n';
    os << "history_out = " << c.paths.history_out << '\n';
    os << "lr_curve_out = " << c.paths.lr_curve_out << '\n';
    return os.str();
}

uint64_t config_hash(const RunConfig& config) {
    const std::string text = canonical_config(config);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace rsanet
