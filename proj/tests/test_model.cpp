#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "rsanet/data_io.hpp"
#include "rsanet/model.hpp"

using namespace rsanet;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("rsanet_model_" + name)).string();
}

Tensor random_image_batch(int n, uint64_t seed) {
    Xoshiro256ss rng(seed);
    return oracles::random_tensor({n, 3, 32, 32}, rng, 0.0f, 1.0f);
}

}  // namespace

TEST_CASE("desk spec shape chain") {
    const ModelSpec spec = desk_spec();
    const SpecShapes s = validate_spec(spec);
    CHECK(s.body_c == 256);
    CHECK(s.body_h == 4);
    CHECK(s.body_w == 4);
    CHECK(s.head_c == 32);
    CHECK(s.head_h == 4);
    CHECK(s.pooled_h == 2);
    CHECK(s.flat == 128);
    CHECK(spec.head.linear_in == 128);  // "linear layer (128 input x 1 output)"
}

TEST_CASE("validate_spec rejects inconsistent specs") {
    ModelSpec spec = desk_spec();
    spec.head.linear_in = 100;
    CHECK_THROWS_AS(validate_spec(spec), ShapeError);

    spec = desk_spec();
    spec.interleave_groups = 3;  // does not divide 256
    CHECK_THROWS_AS(validate_spec(spec), ShapeError);

    spec = desk_spec();
    spec.body[0].conv.in_channels = 4;  // input has 3 channels
    CHECK_THROWS_AS(validate_spec(spec), ShapeError);

    spec = desk_spec();
    spec.head.linear_out = 2;
    CHECK_THROWS_AS(validate_spec(spec), ShapeError);
}

TEST_CASE("random init is seed-deterministic and fan-in bounded") {
    const Model m1 = build_model(desk_spec(), InitRandom{0});
    const Model m2 = build_model(desk_spec(), InitRandom{0});
    const Model m3 = build_model(desk_spec(), InitRandom{1});
    for (const auto& id : m1.param_order) {
        CHECK(m1.params.at(id).weight->data == m2.params.at(id).weight->data);  // bitwise
        CHECK(m1.params.at(id).bias->data == m2.params.at(id).bias->data);
    }
    // different seed must differ somewhere
    bool any_diff = false;
    for (const auto& id : m1.param_order) {
        if (m1.params.at(id).weight->data != m3.params.at(id).weight->data) any_diff = true;
    }
    CHECK(any_diff);

    // uniform(-b, b) with b = sqrt(6/fan_in); body0 conv: fan_in = 3*3*3
    const float bound = std::sqrt(6.0f / 27.0f);
    for (float v : m1.params.at("body0").weight->data) {
        CHECK(v >= -bound);
        CHECK(v <= bound);
    }
    for (float v : m1.params.at("body0").bias->data) CHECK(v == 0.0f);
}

TEST_CASE("weight save/load round-trips bitwise and canonically") {
    const Model model = build_model(desk_spec(), InitRandom{7});
    const std::string p1 = temp_path("w1.bin");
    const std::string p2 = temp_path("w2.bin");
    save_weights(p1, model);
    save_weights(p2, model);
    CHECK(read_file(p1) == read_file(p2));  // canonical bytes

    Model other = build_model(desk_spec(), InitRandom{8});
    load_weights_into(other, p1);
    for (const auto& id : model.param_order) {
        CHECK(other.params.at(id).weight->data == model.params.at(id).weight->data);
        CHECK(other.params.at(id).bias->data == model.params.at(id).bias->data);
    }
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("body import randomizes the head and round-trips the body") {
    const Model source = build_model(desk_spec(), InitRandom{3});
    // write a body-only container
    std::map<std::string, Tensor> body_only;
    for (const auto& id : source.body_layer_ids()) {
        body_only[id + ".weight"] = *source.params.at(id).weight;
        body_only[id + ".bias"] = *source.params.at(id).bias;
    }
    const std::string path = temp_path("body.bin");
    save_weights(path, body_only);

    ImportReport report;
    const Model imported = build_model(desk_spec(), InitImport{path, 99}, &report);
    CHECK(report.imported.size() == 3);
    CHECK(report.randomized.size() == 2);  // head_conv, head_linear
    for (const auto& id : source.body_layer_ids()) {
        CHECK(imported.params.at(id).weight->data == source.params.at(id).weight->data);
    }
    // head differs from the source's head (fresh random draw)
    CHECK(imported.params.at("head_conv").weight->data != source.params.at("head_conv").weight->data);

    // export body again: bitwise round-trip
    std::map<std::string, Tensor> exported;
    for (const auto& id : imported.body_layer_ids()) {
        exported[id + ".weight"] = *imported.params.at(id).weight;
        exported[id + ".bias"] = *imported.params.at(id).bias;
    }
    const std::string path2 = temp_path("body2.bin");
    save_weights(path2, exported);
    CHECK(read_file(path) == read_file(path2));

    // mismatched spec is rejected
    ModelSpec small = desk_spec();
    small.body[0].conv.out_channels = 16;
    small.body[2].conv.in_channels = 16;
    CHECK_THROWS_AS(build_model(small, InitImport{path, 0}), DataError);

    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("forward_pair: zeroed head gives zero prediction") {
    Model model = build_model(desk_spec(), InitRandom{0});
    auto& lin = model.params.at("head_linear");
    std::fill(lin.weight->data.begin(), lin.weight->data.end(), 0.0f);
    std::fill(lin.bias->data.begin(), lin.bias->data.end(), 0.0f);
    const Tensor a = random_image_batch(3, 1);
    const Tensor b = random_image_batch(3, 2);
    for (float v : predict_pair_batch(model, a, b)) CHECK(v == 0.0f);
}

TEST_CASE("forward_pair: self-pairs are legal and finite") {
    const Model model = build_model(desk_spec(), InitRandom{5});
    const Tensor a = random_image_batch(2, 3);
    for (float v : predict_pair_batch(model, a, a)) CHECK(std::isfinite(v));
}

TEST_CASE("forward_pair golden value is stable") {
    const Model model = build_model(desk_spec(), InitRandom{0});
    Xoshiro256ss rng(42);
    const Tensor a = oracles::random_tensor({1, 3, 32, 32}, rng, 0.0f, 1.0f);
    const Tensor b = oracles::random_tensor({1, 3, 32, 32}, rng, 0.0f, 1.0f);
    const float v = predict_pair_batch(model, a, b)[0];
    // pinned from the first deterministic run; tolerance covers rebuilds on
    // other instruction sets
    CHECK(v == doctest::Approx(0.728359f).epsilon(1e-4));
}

TEST_CASE("forward_pair reports the failing layer on shape mismatch") {
    const Model model = build_model(desk_spec(), InitRandom{0});
    Xoshiro256ss rng(6);
    const Tensor bad = oracles::random_tensor({1, 3, 16, 16}, rng);
    Tape tape;
    const auto a = tape.leaf(bad);
    const auto b = tape.leaf(bad);
    CHECK_THROWS_AS(pair_forward(tape, model, a, b), ShapeError);
}

TEST_CASE("weight sharing: one body tensor drives both branches") {
    Model model = build_model(desk_spec(), InitRandom{9});
    const Tensor a = random_image_batch(1, 7);
    const auto before = predict_pair_batch(model, a, a);
    model.params.at("body0").weight->data[0] += 0.25f;
    const auto after = predict_pair_batch(model, a, a);
    CHECK(before[0] != after[0]);
}

TEST_CASE("shared body gradient equals the sum of per-branch gradients") {
    // small spec keeps the finite check cheap
    ModelSpec spec;
    spec.input_c = 2;
    spec.input_h = 8;
    spec.input_w = 8;
    BodyLayer conv;
    conv.kind = BodyLayer::Kind::Conv;
    conv.conv = ConvSpec{2, 8, 3, 3, 2, 1, 1};
    BodyLayer relu_l;
    relu_l.kind = BodyLayer::Kind::Relu;
    spec.body = {conv, relu_l};
    spec.head.conv = ConvSpec{16, 8, 3, 3, 1, 1, 4};
    spec.head.pool_kernel = 2;
    spec.head.pool_stride = 2;
    spec.head.linear_in = 8 * 2 * 2;
    spec.head.linear_out = 1;
    spec.interleave_groups = 4;
    Model model = build_model(spec, InitRandom{11});

    Xoshiro256ss rng(12);
    const Tensor a = oracles::random_tensor({2, 2, 8, 8}, rng);
    const Tensor b = oracles::random_tensor({2, 2, 8, 8}, rng);
    const Tensor target({2}, {0.3f, 0.6f});

    // gradient of the shared body weight via the real Siamese forward
    Tape shared;
    const auto shared_loss =
        euclidean_loss(shared, pair_forward(shared, model, shared.leaf(a), shared.leaf(b)), shared.leaf(target));
    shared.backward(shared_loss);
    const auto g_shared = model.params.at("body0").weight->grad;

    // the same graph with the body weights duplicated per branch: each copy
    // then collects only its branch's contribution
    Tape split;
    auto wa = std::make_shared<Tensor>(*model.params.at("body0").weight);
    auto wb = std::make_shared<Tensor>(*model.params.at("body0").weight);
    wa->requires_grad = wb->requires_grad = true;
    const auto bias = split.leaf(model.params.at("body0").bias);
    const auto feat_a = relu(split, conv2d(split, split.leaf(a), split.leaf(wa), bias, conv.conv));
    const auto feat_b = relu(split, conv2d(split, split.leaf(b), split.leaf(wb), bias, conv.conv));
    auto cur = interleave(split, feat_a, feat_b, spec.interleave_groups);
    cur = conv2d(split, cur, split.leaf(model.params.at("head_conv").weight),
                 split.leaf(model.params.at("head_conv").bias), spec.head.conv);
    cur = relu(split, cur);
    cur = avg_pool2d(split, cur, spec.head.pool_kernel, spec.head.pool_stride);
    cur = flatten2d(split, cur);
    cur = linear(split, cur, split.leaf(model.params.at("head_linear").weight),
                 split.leaf(model.params.at("head_linear").bias));
    cur = reshape(split, cur, {2});
    split.backward(euclidean_loss(split, cur, split.leaf(target)));

    REQUIRE(g_shared.size() == wa->grad.size());
    for (size_t i = 0; i < g_shared.size(); ++i) {
        const double expected = static_cast<double>(wa->grad[i]) + static_cast<double>(wb->grad[i]);
        CHECK(oracles::rel_err(static_cast<double>(g_shared[i]), expected) < 1e-5);
    }
}

TEST_CASE("set_frozen validates layer ids") {
    Model model = build_model(desk_spec(), InitRandom{0});
    CHECK_THROWS_AS(set_frozen(model, {"nope"}, true), ValueError);
    set_frozen(model, {"body0"}, true);
    CHECK(model.frozen.count("body0") == 1);
    set_frozen(model, {"body0"}, false);
    CHECK(model.frozen.empty());
}
