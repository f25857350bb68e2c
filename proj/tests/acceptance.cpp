// Acceptance suite: runs every release criterion end to end and prints one
// pass/fail line per criterion. Exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "sepsa/audio.hpp"
#include "sepsa/data.hpp"
#include "sepsa/dsp.hpp"
#include "sepsa/gradcheck.hpp"
#include "sepsa/harness.hpp"
#include "sepsa/metrics.hpp"
#include "sepsa/model.hpp"
#include "sepsa/train.hpp"

#include "test_oracles.hpp"

using namespace sepsa;
namespace fs = std::filesystem;

namespace {

const char* kWorkDir = "acceptance_work";

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

ModelConfig desk_config() {
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
    c.head_hidden = 64;
    c.input_length = 64000;
    return c;
}

ModelConfig micro_config() {
    ModelConfig c = desk_config();
    c.cardinality = 2;
    c.width = 4;
    c.se_reduction = 2;
    c.stage_widths = {4, 8, 16, 32, 64};
    c.stem_filters = {4, 8, 8};
    return c;
}

AudioClip make_tone(double freq, double seconds, double amp = 0.5, int rate = 16000) {
    AudioClip clip;
    clip.sample_rate = rate;
    const int n = static_cast<int>(seconds * rate);
    clip.samples.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        clip.samples[static_cast<size_t>(i)] =
            static_cast<float>(amp * std::sin(2.0 * 3.14159265358979323846 * freq * i / rate));
    return clip;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness: central finite differences on every op.
// ---------------------------------------------------------------------------
std::string criterion_gradients() {
    const GradCheckReport report = run_grad_checks(1234, 20);
    for (const auto& e : report.entries)
        if (!e.pass)
            return fmt("op %s max_rel_err %.3e exceeds 1e-4", e.op.c_str(), e.max_rel_err);
    double worst = 0.0;
    for (const auto& e : report.entries) worst = std::max(worst, e.max_rel_err);
    return fmt("OK %zu ops x 20 cases, worst rel err %.2e", report.entries.size(), worst);
}

// ---------------------------------------------------------------------------
// 2. Residual gradient identity on a two-block network (64-bit, 1e-10).
// ---------------------------------------------------------------------------
std::string criterion_residual_identity() {
    Rng rng(71);
    const int width = 8, len = 20;
    PsaBlock<double> block1("b1", width, width, 6, 2, 1, true, 4, 0.0);
    PsaBlock<double> block2("b2", width, width, 6, 2, 1, true, 4, 0.0);
    oracles::randomize_block(block1, rng);
    oracles::randomize_block(block2, rng);
    for (auto* block : {&block1, &block2})
        for (auto* bn : {&block->bn_a, &block->bn_b, &block->bn_t})
            for (int c = 0; c < width; ++c) {
                bn->running.mean[static_cast<size_t>(c)] = rng.normal(0.0, 0.3);
                bn->running.var[static_cast<size_t>(c)] = rng.uniform(0.5, 1.5);
            }

    std::vector<double> xv(static_cast<size_t>(width) * len);
    for (auto& v : xv) v = rng.normal();
    std::vector<double> loss_w(xv.size());
    for (auto& v : loss_w) v = rng.uniform(-1.0, 1.0);

    // Full pass: loss through both residual blocks.
    TensorD x = TensorD::from_values({1, width, len}, xv, true);
    TensorD h1 = block1.forward(x, false, nullptr);
    TensorD h2 = block2.forward(h1, false, nullptr);
    dot_sum(h2, loss_w).backward();
    const std::vector<double> grad_full = x.grad();
    const std::vector<double> upstream = h1.node()->grad;  // dL/dH1

    // Branch-only pass: J_F1^T applied to the captured upstream gradient.
    TensorD x2 = TensorD::from_values({1, width, len}, xv, true);
    TensorD f1 = block1.branch(x2, false, nullptr);
    dot_sum(f1, upstream).backward();
    const std::vector<double>& grad_branch = x2.grad();

    double worst = 0.0;
    for (size_t i = 0; i < grad_full.size(); ++i)
        worst = std::max(worst, std::abs(grad_full[i] - (grad_branch[i] + upstream[i])));
    if (worst >= 1e-10) return fmt("max |grad(x) - (J_F^T u + u)| = %.3e >= 1e-10", worst);
    return fmt("OK max deviation %.2e over %zu elements", worst, grad_full.size());
}

// ---------------------------------------------------------------------------
// 3. Aggregation equivalence: grouped conv vs explicit branch sum.
// ---------------------------------------------------------------------------
std::string criterion_aggregation() {
    Rng rng(2025);
    int cases = 0;
    float worst = 0.0f;
    for (const int cardinality : {1, 2, 4, 8}) {
        for (int trial = 0; trial < 25; ++trial) {
            const int width = cardinality * (1 + static_cast<int>(rng.uniform_index(3)));
            const int branch_width = 2 + static_cast<int>(rng.uniform_index(4));
            PsaBlock<float> block("blk", width, width, branch_width, cardinality, 1, false, 1, 0.0);
            oracles::randomize_block(block, rng);
            Tensor b = Tensor::zeros({1 + static_cast<int>(rng.uniform_index(2)), width,
                                      6 + static_cast<int>(rng.uniform_index(8))});
            b.fill_randn(rng);
            NoGradGuard ng;
            Tensor grouped = block.aggregate(b, false, nullptr);
            Tensor explicit_sum = oracles::explicit_branch_aggregate(block, b);
            for (size_t i = 0; i < grouped.numel(); ++i)
                worst = std::max(worst, std::abs(grouped.values()[i] - explicit_sum.values()[i]));
            ++cases;
        }
    }
    if (worst >= 1e-6f) return fmt("max |grouped - branch sum| = %.3e >= 1e-6", worst);
    return fmt("OK %d cases over C in {1,2,4,8}, worst %.2e", cases, worst);
}

// ---------------------------------------------------------------------------
// 4. ResNet collapse: C=1 aggregated block == plain residual block, exact.
// ---------------------------------------------------------------------------
std::string criterion_resnet_collapse() {
    Rng rng(31);
    PsaBlock<float> block("blk", 6, 8, 4, 1, 2, false, 1, 0.0);
    oracles::randomize_block(block, rng);
    Tensor x = Tensor::zeros({2, 6, 14});
    x.fill_randn(rng);
    NoGradGuard ng;
    Tensor from_block = block.forward(x, false, nullptr);
    Tensor a = conv1d(relu(block.bn_a.forward(x, false)), block.conv_a.weight, block.conv_a.bias, 2, 1, 1);
    Tensor b = conv1d(relu(block.bn_b.forward(a, false)), block.conv_b.weight, block.conv_b.bias, 1, 1, 1);
    Tensor t = conv1d(relu(block.bn_t.forward(b, false)), block.conv_t.weight, block.conv_t.bias, 1, 1, 1);
    Tensor m = conv1d(t, block.merge.weight, block.merge.bias, 1, 0, 1);
    Tensor skip = conv1d(x, block.projection->weight, block.projection->bias, 2, 0, 1);
    Tensor plain = add(skip, m);
    if (from_block.values() != plain.values()) return "C=1 block output differs from the plain composition";

    ModelConfig aggregated = desk_config();
    aggregated.cardinality = 1;
    ModelConfig plain_cfg = aggregated;
    plain_cfg.plain_resnet = true;
    if (count_params(aggregated) != count_params(plain_cfg))
        return "parameter counts differ between C=1 aggregated and plain variants";
    return fmt("OK bit-identical outputs; %lld parameters in both variants", count_params(plain_cfg));
}

// ---------------------------------------------------------------------------
// 5. Metric oracles: EER/AUC/min t-DCF vs brute force.
// ---------------------------------------------------------------------------
std::string criterion_metric_oracles() {
    Rng rng(404);
    const TDcfParams params;
    double worst_eer = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const ScoreSet set = oracles::random_set(rng, 200);
        worst_eer = std::max(worst_eer, std::abs(compute_eer(set).eer - oracles::oracle_eer(set)));
        if (compute_auc(set) != oracles::oracle_auc(set))
            return fmt("AUC mismatch with the pairwise oracle on trial %d", trial);
        if (compute_min_tdcf(set, params).min_tdcf != oracles::oracle_min_tdcf(set, params))
            return fmt("min t-DCF mismatch with the sweep oracle on trial %d", trial);
    }
    if (worst_eer >= 1e-9) return fmt("EER deviates from the oracle by %.3e >= 1e-9", worst_eer);
    return fmt("OK 100 sets (n <= 200): EER worst %.1e, AUC/t-DCF exact", worst_eer);
}

// ---------------------------------------------------------------------------
// 6. Cumulative EER arithmetic.
// ---------------------------------------------------------------------------
std::string criterion_cumulative_eer() {
    const double combined = cumulative_eer(3.04, 1.26);
    if (std::abs(combined - 4.30) > 0.005) return fmt("(3.04, 1.26) -> %.4f, expected 4.30", combined);
    return fmt("OK (3.04, 1.26) -> %.2f", combined);
}

// ---------------------------------------------------------------------------
// 7. Desk-scale end-to-end training.
// ---------------------------------------------------------------------------
std::string criterion_desk_training() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string dir = std::string(kWorkDir) + "/desk";
    const Manifest train_m = generate_synthetic_corpus(30, 11, dir + "/train");
    const Manifest dev_m = generate_synthetic_corpus(30, 12, dir + "/dev");

    TrainOptions options;
    options.schedule.base_lr = 1e-3;
    options.schedule.warmup_steps = 10;
    options.epochs = 30;
    options.batch_size = 16;
    options.seeds = {17, 43, 99};  // dev EER gated on the three-seed mean
    options.out_dir = dir + "/run";

    const RunResult result = train_loop(train_m, dev_m, desk_config(), options);
    const double minutes =
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - t0).count() /
        60.0;

    for (const auto& s : result.per_seed)
        if (s.max_train_acc < 1.0)
            return fmt("seed %llu peaked at %.1f%% train accuracy, expected 100%%",
                       static_cast<unsigned long long>(s.seed), 100.0 * s.max_train_acc);
    if (result.mean_dev_eer > 0.05)
        return fmt("mean dev EER %.4f > 0.05 over seeds {17,43,99}", result.mean_dev_eer);
    if (minutes >= 15.0) return fmt("runtime %.1f min >= 15 min", minutes);
    return fmt("OK 100%% train acc on every seed; mean dev EER %.4f; %.1f min", result.mean_dev_eer,
               minutes);
}

// ---------------------------------------------------------------------------
// 8. FLOPs accounting for the full-size configuration.
// ---------------------------------------------------------------------------
std::string criterion_flops() {
    const ModelConfig full;  // C=4, d=64, widths 32..512, stem (64,128,256)
    const long long flops = count_flops(full, 64000);
    if (flops < 900000000LL || flops > 2700000000LL)
        return fmt("%lld FLOPs outside [0.9e9, 2.7e9]", flops);
    return fmt("OK %.3g FLOPs within +-50%% of 1.8e9", static_cast<double>(flops));
}

// ---------------------------------------------------------------------------
// 9. DSP assertions: filters, z-score, standardization.
// ---------------------------------------------------------------------------
std::string criterion_dsp() {
    // Low-pass: stop band and pass band.
    AudioClip high = make_tone(6000.0, 2.0);
    const double stop_db = 10.0 * std::log10(dsp::tone_power(lowpass_filter(high, 4000.0).samples,
                                                             6000.0, 16000) /
                                             dsp::tone_power(high.samples, 6000.0, 16000));
    if (stop_db > -40.0) return fmt("low-pass stop band only %.1f dB down", -stop_db);
    AudioClip low = make_tone(1000.0, 2.0);
    const double pass_db = 10.0 * std::log10(dsp::tone_power(lowpass_filter(low, 4000.0).samples,
                                                             1000.0, 16000) /
                                             dsp::tone_power(low.samples, 1000.0, 16000));
    if (std::abs(pass_db) > 1.0) return fmt("low-pass pass band off by %.2f dB", pass_db);

    // High-pass: pass band and DC rejection.
    AudioClip mid = make_tone(2000.0, 2.0);
    const double hp_db = 10.0 * std::log10(dsp::tone_power(highpass_filter(mid, 300.0).samples,
                                                           2000.0, 16000) /
                                           dsp::tone_power(mid.samples, 2000.0, 16000));
    if (std::abs(hp_db) > 1.0) return fmt("high-pass pass band off by %.2f dB", hp_db);
    AudioClip dc;
    dc.sample_rate = 16000;
    dc.samples.assign(16000, 0.5f);
    double dc_peak = 0.0;
    const AudioClip dc_filtered = highpass_filter(dc, 300.0);
    for (size_t i = 300; i + 300 < dc_filtered.samples.size(); ++i)
        dc_peak = std::max(dc_peak, std::abs(static_cast<double>(dc_filtered.samples[i])));
    if (dc_peak > 1e-6) return fmt("high-pass leaves DC at %.2e", dc_peak);

    // Z-score statistics.
    Rng rng(5);
    AudioClip noisy;
    noisy.sample_rate = 16000;
    noisy.samples.resize(64000);
    for (auto& v : noisy.samples) v = static_cast<float>(rng.normal(0.2, 0.7));
    const AudioClip z = zscore_normalize(noisy);
    double mean = 0.0;
    for (float v : z.samples) mean += v;
    mean /= static_cast<double>(z.samples.size());
    double var = 0.0;
    for (float v : z.samples) var += (v - mean) * (v - mean);
    var /= static_cast<double>(z.samples.size());
    if (std::abs(mean) >= 1e-6 || std::abs(std::sqrt(var) - 1.0) >= 1e-6)
        return fmt("z-score stats off: mean %.2e, std-1 %.2e", mean, std::sqrt(var) - 1.0);

    // Standardization: exactly 64000 samples at 16 kHz.
    AudioClip long_clip = make_tone(440.0, 6.0);
    AudioClip short_clip = make_tone(440.0, 2.0);
    if (standardize_length(long_clip).samples.size() != 64000 ||
        standardize_length(short_clip).samples.size() != 64000)
        return "standardization did not yield exactly 64000 samples";
    return "OK stop >= 40 dB, pass within 1 dB, stats within 1e-6, length exactly 64000";
}

// ---------------------------------------------------------------------------
// 10. Determinism of the train command outputs.
// ---------------------------------------------------------------------------
std::string criterion_determinism() {
    const std::string dir = std::string(kWorkDir) + "/determinism";
    const Manifest train_m = generate_synthetic_corpus(4, 100, dir + "/train");
    const Manifest dev_m = generate_synthetic_corpus(4, 200, dir + "/dev");
    TrainOptions options;
    options.schedule.base_lr = 1e-3;
    options.schedule.warmup_steps = 2;
    options.epochs = 2;
    options.batch_size = 8;
    options.seeds = {7};
    options.out_dir = dir + "/a";
    (void)train_loop(train_m, dev_m, micro_config(), options);
    options.out_dir = dir + "/b";
    (void)train_loop(train_m, dev_m, micro_config(), options);
    for (const char* name : {"seed7_log.csv", "seed7_best.ckpt", "seed7_dev_scores.tsv"}) {
        const std::string a = read_bytes(dir + "/a/" + name);
        const std::string b = read_bytes(dir + "/b/" + name);
        if (a.empty() || a != b) return fmt("%s differs between identical runs", name);
    }
    return "OK log, checkpoint, and score files byte-identical across reruns";
}

// ---------------------------------------------------------------------------
// 11. Learning-rate schedule values and warmup/decay seam.
// ---------------------------------------------------------------------------
std::string criterion_schedule() {
    ScheduleConfig s;  // base 1e-4, warmup 1000, inverse sqrt
    if (lr_at(0, s) != 0.0) return fmt("lr(0) = %.3e, expected 0", lr_at(0, s));
    if (std::abs(lr_at(1000, s) - 1e-4) > 1e-18) return fmt("lr(1000) = %.10e, expected 1e-4", lr_at(1000, s));
    if (std::abs(lr_at(4000, s) - 5e-5) > 1e-12) return fmt("lr(4000) = %.10e, expected 5e-5", lr_at(4000, s));
    const double warmup_side = s.base_lr * 1000.0 / s.warmup_steps;
    const double decay_side = s.base_lr * std::sqrt(static_cast<double>(s.warmup_steps) / 1000.0);
    if (std::abs(warmup_side - decay_side) >= 1e-7 * s.base_lr)
        return fmt("warmup/decay seam jump %.3e", std::abs(warmup_side - decay_side));
    return "OK lr(0)=0, lr(1000)=1e-4, lr(4000)=5e-5, seamless warmup boundary";
}

// ---------------------------------------------------------------------------
// 12. Ablation harness runs the depth/SE/dropout grid to completion.
// ---------------------------------------------------------------------------
std::string criterion_ablation() {
    const std::string dir = std::string(kWorkDir) + "/ablation";
    const Manifest train_m = generate_synthetic_corpus(3, 300, dir + "/train");
    const Manifest dev_m = generate_synthetic_corpus(3, 301, dir + "/dev");
    RunConfig base;
    base.cardinality = 2;
    base.width = 4;
    base.se_reduction = 2;
    base.stage_widths = {4, 8, 16, 32, 64};
    base.stem_filters = {4, 8, 8};
    base.head_hidden = 64;
    base.lr = 1e-3;
    base.warmup_steps = 2;
    base.batch_size = 8;
    const std::string report = ablation_report(train_m, dev_m, base, 2, 17);

    std::istringstream in(report);
    std::string line;
    std::getline(in, line);
    if (line != "system,depth,se,spatial_dropout,dev_eer") return "unexpected report header";
    int rows = 0;
    bool saw_18 = false, saw_34 = false, saw_se = false, saw_sdrop = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        if (line.find(",18,") != std::string::npos) saw_18 = true;
        if (line.find(",34,") != std::string::npos) saw_34 = true;
        if (line.find("se-aggregated") != std::string::npos) saw_se = true;
        if (line.find("+sdrop") != std::string::npos) saw_sdrop = true;
    }
    if (rows != 8 || !saw_18 || !saw_34 || !saw_se || !saw_sdrop)
        return fmt("report shape wrong: %d rows", rows);
    return "OK 8-row grid (depths 18/34 x SE x spatial dropout) ran to completion";
}

struct Criterion {
    int id;
    const char* name;
    std::function<std::string()> run;
};

}  // namespace

int main() {
    fs::remove_all(kWorkDir);
    fs::create_directories(kWorkDir);

    const std::vector<Criterion> criteria = {
        {1, "gradient correctness (finite differences, every op)", criterion_gradients},
        {2, "residual gradient identity (two-block network, 64-bit)", criterion_residual_identity},
        {3, "aggregation equivalence (grouped conv vs branch sum)", criterion_aggregation},
        {4, "ResNet collapse at C=1", criterion_resnet_collapse},
        {5, "metric oracles (EER / AUC / min t-DCF)", criterion_metric_oracles},
        {6, "cumulative EER arithmetic", criterion_cumulative_eer},
        {7, "desk-scale end-to-end training", criterion_desk_training},
        {8, "FLOPs accounting for the Table-sized configuration", criterion_flops},
        {9, "DSP assertions (filters, z-score, standardization)", criterion_dsp},
        {10, "training determinism (byte-identical outputs)", criterion_determinism},
        {11, "learning-rate schedule", criterion_schedule},
        {12, "ablation harness (depth x SE x spatial dropout)", criterion_ablation},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool pass = false;
        try {
            detail = c.run();
            pass = detail.rfind("OK", 0) == 0;
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
                .count() /
            1000.0;
        std::printf("[%s] criterion %2d: %s (%.1fs) %s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                    seconds, detail.c_str());
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    fs::remove_all(kWorkDir);
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    else std::printf("all %zu criteria passed\n", criteria.size());
    return failures == 0 ? 0 : 1;
}
