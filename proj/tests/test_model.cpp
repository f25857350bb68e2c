#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "sepsa/model.hpp"
#include "sepsa/rng.hpp"

#include "test_oracles.hpp"

using namespace sepsa;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.cardinality = 4;
    c.width = 8;
    c.depth = 18;
    c.use_se = true;
    c.se_reduction = 4;
    c.dropout = 0.0;
    c.stage_widths = {8, 16, 32, 64, 128};
    c.stem_filters = {8, 16, 32};
    c.stem_kernels = {196, 144, 100};
    c.stem_strides = {16, 8, 4};
    c.input_length = 64000;
    return c;
}

}  // namespace

using oracles::explicit_branch_aggregate;
using oracles::randomize_block;

TEST_CASE("network forward: shape propagation and score range") {
    Network net = Network::build(tiny_config());
    kaiming_init(net, 7);
    Rng rng(3);
    Tensor x = Tensor::zeros({2, 1, 64000});
    x.fill_randn(rng);
    NoGradGuard ng;
    Tensor out = net.forward(x, false, nullptr);
    REQUIRE(out.shape() == std::vector<int>{2, 1});
    for (float v : out.values()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("stage contract: downsampling halves length (+-1) and doubles channels") {
    const NetworkPlan plan = build_plan(tiny_config());
    std::vector<long long> stage_lens;
    std::vector<int> stage_widths;
    for (const auto& l : plan.layers) {
        if (l.path.find(".conv_a") == std::string::npos) continue;
        stage_lens.push_back(l.out_len);
        stage_widths.push_back(l.cout);
    }
    REQUIRE(stage_lens.size() == 5);
    for (size_t s = 1; s < 5; ++s) {
        CHECK(stage_widths[s] == 2 * stage_widths[s - 1]);
        CHECK(std::abs(stage_lens[s] - (stage_lens[s - 1] + 1) / 2) <= 1);
    }
}

TEST_CASE("FLOPs accounting: closed forms and the Table-sized configuration") {
    LayerPlan dense_plan{"d", LayerPlan::Kind::kDense, 3, 2, 1, 1, 0, 1, 1};
    CHECK(dense_plan.flops() == 12);
    CHECK(dense_plan.params() == 8);

    ModelConfig full;  // defaults: C=4, d=64, stem (64,128,256)@(196,144,100)/(16,8,4)
    const long long flops = count_flops(full, 64000);
    MESSAGE("full-config FLOPs = ", flops);
    CHECK(flops >= 900000000LL);
    CHECK(flops <= 2700000000LL);
}

TEST_CASE("analytic parameter count matches the built network") {
    for (const bool use_se : {true, false}) {
        ModelConfig c = tiny_config();
        c.use_se = use_se;
        c.input_length = 8000;
        Network net = Network::build(c);
        long long total = 0;
        for (auto& p : net.parameters()) total += static_cast<long long>(p.tensor.numel());
        CHECK(total == count_params(c));
    }
}

TEST_CASE("params(C=1 plain) equals params(C=1 aggregated)") {
    ModelConfig aggregated = tiny_config();
    aggregated.cardinality = 1;
    ModelConfig plain = aggregated;
    plain.plain_resnet = true;
    CHECK(count_params(aggregated) == count_params(plain));
}

TEST_CASE("PSA block with zero branch weights returns the skip path exactly") {
    PsaBlock<double> block("blk", 8, 8, 16, 4, 1, false, 4, 0.0);
    Rng rng(11);
    TensorD x = TensorD::zeros({1, 8, 12});
    x.fill_randn(rng);
    TensorD out = block.forward(x, false, nullptr);  // all weights still zero
    CHECK(out.values() == x.values());
}

TEST_CASE("aggregation equivalence: grouped conv equals explicit branch sum") {
    Rng rng(2025);
    for (const int cardinality : {1, 2, 4, 8}) {
        for (int trial = 0; trial < 6; ++trial) {
            const int width = 8 * cardinality / std::gcd(8, cardinality);  // divisible by C
            const int branch_width = 2 + static_cast<int>(rng.uniform_index(3));
            PsaBlock<float> block("blk", width, width, branch_width, cardinality, 1, false, 1, 0.0);
            randomize_block(block, rng);
            Tensor b = Tensor::zeros({1 + static_cast<int>(rng.uniform_index(2)), width,
                                      6 + static_cast<int>(rng.uniform_index(8))});
            b.fill_randn(rng);
            NoGradGuard ng;
            Tensor grouped = block.aggregate(b, false, nullptr);
            Tensor explicit_sum = explicit_branch_aggregate(block, b);
            REQUIRE(grouped.shape() == explicit_sum.shape());
            for (size_t i = 0; i < grouped.numel(); ++i)
                CHECK(std::abs(grouped.values()[i] - explicit_sum.values()[i]) < 1e-6f);
        }
    }
}

TEST_CASE("ResNet collapse: C=1 block equals a plain residual composition, bit for bit") {
    PsaBlock<float> block("blk", 6, 8, 4, 1, 2, false, 1, 0.0);
    Rng rng(31);
    randomize_block(block, rng);
    Tensor x = Tensor::zeros({2, 6, 14});
    x.fill_randn(rng);
    NoGradGuard ng;

    Tensor from_block = block.forward(x, false, nullptr);

    // Plain residual path written out with ungrouped convolutions.
    Tensor a = conv1d(relu(block.bn_a.forward(x, false)), block.conv_a.weight, block.conv_a.bias, 2, 1, 1);
    Tensor b = conv1d(relu(block.bn_b.forward(a, false)), block.conv_b.weight, block.conv_b.bias, 1, 1, 1);
    Tensor t = conv1d(relu(block.bn_t.forward(b, false)), block.conv_t.weight, block.conv_t.bias, 1, 1, 1);
    Tensor m = conv1d(t, block.merge.weight, block.merge.bias, 1, 0, 1);
    Tensor skip = conv1d(x, block.projection->weight, block.projection->bias, 2, 0, 1);
    Tensor plain = add(skip, m);

    CHECK(from_block.values() == plain.values());

    ModelConfig pc = tiny_config();
    pc.cardinality = 1;
    pc.plain_resnet = true;
    pc.input_length = 8000;
    Network plain_net = Network::build(pc);
    for (auto& stage : plain_net.stages)
        for (auto& blk : stage) CHECK(blk.conv_t.groups == 1);  // branch count 1 per block
}

TEST_CASE("SE block: squeeze of constants, saturation identity, hand-rolled oracle") {
    SeBlock<double> se("se", 4, 2);
    Rng rng(41);
    se.reduce.weight.fill_randn(rng, 0.5);
    se.expand.weight.fill_randn(rng, 0.5);

    // Constant channels: the squeeze sees exactly those constants.
    TensorD constant = TensorD::from_values({1, 4, 3}, {1, 1, 1, 2, 2, 2, -1, -1, -1, 0.5, 0.5, 0.5});
    TensorD squeezed = squeeze_last(global_avg_pool1d(constant));
    CHECK(squeezed.values() == std::vector<double>{1.0, 2.0, -1.0, 0.5});

    // Saturated gate (+100 logits) passes the input through unchanged.
    SeBlock<double> sat("sat", 4, 2);
    std::fill(sat.expand.bias.values().begin(), sat.expand.bias.values().end(), 100.0);
    TensorD x = TensorD::zeros({2, 4, 5});
    x.fill_randn(rng);
    TensorD passed = sat.forward(x);
    for (size_t i = 0; i < x.numel(); ++i)
        CHECK(passed.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-12));

    // Full oracle on a random 1x4x8 input.
    TensorD y = TensorD::zeros({1, 4, 8});
    y.fill_randn(rng);
    TensorD out = se.forward(y);
    for (int c = 0; c < 4; ++c) {
        double avg = 0.0;
        for (int l = 0; l < 8; ++l) avg += y.values()[static_cast<size_t>(c) * 8 + l];
        avg /= 8.0;
        (void)avg;
    }
    // Hand-rolled squeeze/excite chain.
    std::vector<double> sq(4, 0.0);
    for (int c = 0; c < 4; ++c) {
        for (int l = 0; l < 8; ++l) sq[static_cast<size_t>(c)] += y.values()[static_cast<size_t>(c) * 8 + l];
        sq[static_cast<size_t>(c)] /= 8.0;
    }
    std::vector<double> hidden(2, 0.0);
    for (int o = 0; o < 2; ++o) {
        double acc = se.reduce.bias.values()[static_cast<size_t>(o)];
        for (int i = 0; i < 4; ++i) acc += se.reduce.weight.values()[static_cast<size_t>(o) * 4 + i] * sq[static_cast<size_t>(i)];
        hidden[static_cast<size_t>(o)] = std::max(0.0, acc);
    }
    for (int c = 0; c < 4; ++c) {
        double logit = se.expand.bias.values()[static_cast<size_t>(c)];
        for (int i = 0; i < 2; ++i) logit += se.expand.weight.values()[static_cast<size_t>(c) * 2 + i] * hidden[static_cast<size_t>(i)];
        const double gate = 1.0 / (1.0 + std::exp(-logit));
        CHECK(gate > 0.0);
        CHECK(gate < 1.0);
        for (int l = 0; l < 8; ++l)
            CHECK(out.values()[static_cast<size_t>(c) * 8 + l] ==
                  doctest::Approx(y.values()[static_cast<size_t>(c) * 8 + l] * gate).epsilon(1e-10));
    }

    CHECK_THROWS_AS((void)SeBlock<double>("bad", 6, 4), ConfigError);
}

TEST_CASE("gates forced to one reproduce the non-SE variant exactly") {
    ModelConfig with = tiny_config();
    with.input_length = 4000;
    ModelConfig without = with;
    without.use_se = false;

    Network net_se = Network::build(with);
    Network net_plain = Network::build(without);
    kaiming_init(net_se, 55);
    kaiming_init(net_plain, 55);
    // Copy the shared weights (same paths except SE layers) and saturate gates.
    auto se_params = net_se.parameters();
    auto plain_params = net_plain.parameters();
    for (auto& p : plain_params)
        for (auto& q : se_params)
            if (q.path == p.path) q.tensor.values() = p.tensor.values();
    for (auto& stage : net_se.stages)
        for (auto& block : stage) {
            std::fill(block.se->expand.weight.values().begin(), block.se->expand.weight.values().end(), 0.0f);
            std::fill(block.se->expand.bias.values().begin(), block.se->expand.bias.values().end(), 100.0f);
        }

    Rng rng(66);
    Tensor x = Tensor::zeros({1, 1, 4000});
    x.fill_randn(rng);
    NoGradGuard ng;
    Tensor a = net_se.forward(x, false, nullptr);
    Tensor b = net_plain.forward(x, false, nullptr);
    CHECK(a.values() == b.values());
}

TEST_CASE("scoring: boundary polarity, determinism, length contract") {
    ModelConfig c = tiny_config();
    c.input_length = 4000;
    Network zeroed = Network::build(c);  // all-zero weights: head logit is 0
    std::vector<float> clip(4000, 0.1f);
    const ScoreOutcome boundary = score_waveform(zeroed, clip);
    CHECK(boundary.score == doctest::Approx(0.5).epsilon(1e-7));
    CHECK_FALSE(boundary.bonafide);  // strict >

    Network net = Network::build(c);
    kaiming_init(net, 9);
    Rng rng(10);
    for (auto& v : clip) v = static_cast<float>(rng.normal());
    const ScoreOutcome s1 = score_waveform(net, clip);
    const ScoreOutcome s2 = score_waveform(net, clip);
    CHECK(s1.score == s2.score);

    std::vector<float> short_clip(100, 0.0f);
    CHECK_THROWS_AS((void)score_waveform(net, short_clip), ContractError);
}

TEST_CASE("kaiming_init: BN affine identity, fan-in variance, seed determinism") {
    ModelConfig c = tiny_config();
    c.input_length = 4000;
    Network net = Network::build(c);
    kaiming_init(net, 1234);
    bool saw_bn = false;
    for (auto& p : net.parameters()) {
        if (p.kind == NamedParam<float>::Kind::kGamma) {
            saw_bn = true;
            for (float v : p.tensor.values()) CHECK(v == 1.0f);
        }
        if (p.kind == NamedParam<float>::Kind::kBeta || p.kind == NamedParam<float>::Kind::kBias)
            for (float v : p.tensor.values()) CHECK(v == 0.0f);
    }
    CHECK(saw_bn);

    // fan_in = 576 = 192*3; 10^4 samples within 10% of 2/576.
    Conv1dLayer<float> probe("probe", 192, 18, 3, 1, 1, 1);
    Rng rng(77);
    probe.weight.fill_randn(rng, std::sqrt(2.0f / 576.0f));
    double var = 0.0;
    for (float v : probe.weight.values()) var += static_cast<double>(v) * v;
    var /= static_cast<double>(probe.weight.numel());
    CHECK(var == doctest::Approx(2.0 / 576.0).epsilon(0.10));

    Network again = Network::build(c);
    kaiming_init(again, 1234);
    auto pa = net.parameters();
    auto pb = again.parameters();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].tensor.values() == pb[i].tensor.values());
}

TEST_CASE("one backward pass reaches every trainable tensor") {
    ModelConfig c = tiny_config();
    c.input_length = 4000;
    Network net = Network::build(c);
    kaiming_init(net, 21);
    Rng rng(22);
    Tensor x = Tensor::zeros({2, 1, 4000});
    x.fill_randn(rng);
    Tensor targets = Tensor::from_values({2, 1}, {1.0f, 0.0f});
    Rng drop(23);
    Tensor loss = bce_loss(net.forward(x, true, &drop), targets);
    loss.backward();
    for (auto& p : net.parameters()) {
        INFO(p.path);
        REQUIRE(p.tensor.has_grad());
        bool any_nonzero = false;
        for (float g : p.tensor.grad()) {
            REQUIRE(std::isfinite(g));
            any_nonzero = any_nonzero || g != 0.0f;
        }
        CHECK(any_nonzero);
    }
}

TEST_CASE("model config validation names the offending stage") {
    ModelConfig c = tiny_config();
    c.stage_widths = {8, 16, 30, 60, 120};
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("stage 3"), ConfigError);

    ModelConfig p = tiny_config();
    p.plain_resnet = true;  // cardinality still 4
    CHECK_THROWS_AS(p.validate(), ConfigError);

    ModelConfig s = tiny_config();
    s.se_reduction = 3;
    CHECK_THROWS_AS(s.validate(), ConfigError);

    ModelConfig d = tiny_config();
    d.depth = 20;
    CHECK_THROWS_AS(d.validate(), ConfigError);

    ModelConfig short_input = tiny_config();
    short_input.input_length = 100;  // shorter than the first stem kernel stride chain
    CHECK_THROWS_AS((void)build_plan(short_input), ConfigError);
}

TEST_CASE("depth variants map to stage repeat counts") {
    ModelConfig c = tiny_config();
    CHECK(c.stage_repeats() == std::vector<int>{1, 1, 1, 1, 1});
    c.depth = 34;
    CHECK(c.stage_repeats() == std::vector<int>{2, 2, 2, 2, 2});
    c.depth = 50;
    CHECK(c.stage_repeats() == std::vector<int>{3, 3, 3, 3, 3});
    c.depth = 101;
    CHECK(c.stage_repeats() == std::vector<int>{6, 6, 7, 7, 6});
}

TEST_CASE("checkpoint: round trip restores every blob and the metadata") {
    namespace fs = std::filesystem;
    ModelConfig c = tiny_config();
    c.input_length = 4000;
    Network net = Network::build(c);
    kaiming_init(net, 91);
    // Make running stats non-trivial.
    Rng rng(92);
    Tensor x = Tensor::zeros({2, 1, 4000});
    x.fill_randn(rng);
    (void)net.forward(x, true, nullptr);

    CheckpointMeta meta;
    meta.epoch = 7;
    meta.dev_loss = 0.123456;
    meta.dev_eer = 0.05;
    meta.rng_state = "12345 67890";
    meta.config_json = c.to_json();
    save_checkpoint("model_test.ckpt", net, meta);

    CheckpointMeta loaded_meta;
    Network restored = network_from_checkpoint("model_test.ckpt", &loaded_meta);
    CHECK(loaded_meta.epoch == 7);
    CHECK(loaded_meta.dev_loss == 0.123456);
    CHECK(loaded_meta.rng_state == "12345 67890");

    auto pa = net.parameters();
    auto pb = restored.parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].tensor.values() == pb[i].tensor.values());
    auto ba = net.buffers();
    auto bb = restored.buffers();
    for (size_t i = 0; i < ba.size(); ++i) CHECK(*ba[i].data == *bb[i].data);

    NoGradGuard ng;
    CHECK(net.forward(x, false, nullptr).values() == restored.forward(x, false, nullptr).values());

    std::ofstream("model_test_bad.ckpt") << "not a checkpoint";
    CHECK_THROWS_AS((void)read_checkpoint("model_test_bad.ckpt"), DataError);
    fs::remove("model_test.ckpt");
    fs::remove("model_test_bad.ckpt");
}
