#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sepsa/data.hpp"
#include "sepsa/metrics.hpp"
#include "sepsa/model.hpp"

namespace sepsa {

// ---------------------------------------------------------------------------
// Learning-rate schedule: linear warmup, then inverse-sqrt decay (default) or
// cosine annealing with warm restarts.
// ---------------------------------------------------------------------------
struct ScheduleConfig {
    double base_lr = 1e-4;
    int warmup_steps = 1000;
    enum class Decay { kInverseSqrt, kCosineRestarts } decay = Decay::kInverseSqrt;
    int restart_period = 1000;

    static ScheduleConfig::Decay parse_decay(const std::string& name);
};

double lr_at(long long step, const ScheduleConfig& schedule);

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay. Decay applies only to parameters flagged
// `decay` (conv/dense weights; never BN parameters or biases).
// ---------------------------------------------------------------------------
template <typename T>
struct AdamOptimizer {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.001;
    long long step_count = 0;

    struct Moments {
        std::vector<T> m, v;
    };
    std::vector<Moments> state;

    struct StepResult {
        bool applied = true;
        std::string diagnostic;
    };

    // Update in place; a non-finite gradient aborts the step with a diagnostic.
    StepResult step(std::vector<NamedParam<T>>& params, double lr) {
        if (state.empty()) {
            state.resize(params.size());
            for (size_t i = 0; i < params.size(); ++i) {
                state[i].m.assign(params[i].tensor.numel(), T(0));
                state[i].v.assign(params[i].tensor.numel(), T(0));
            }
        }
        for (auto& p : params) {
            if (!p.tensor.has_grad()) continue;
            for (const T g : p.tensor.grad())
                if (!std::isfinite(static_cast<double>(g)))
                    return {false, "non-finite gradient in '" + p.path + "'; step aborted"};
        }
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& values = params[i].tensor.values();
            auto& m = state[i].m;
            auto& v = state[i].v;
            const bool has_grad = params[i].tensor.has_grad();
            const T* grad = has_grad ? params[i].tensor.grad().data() : nullptr;
            for (size_t j = 0; j < values.size(); ++j) {
                const double g = grad ? static_cast<double>(grad[j]) : 0.0;
                const double mj = beta1 * m[j] + (1.0 - beta1) * g;
                const double vj = beta2 * v[j] + (1.0 - beta2) * g * g;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + epsilon);
                if (params[i].decay) update += lr * weight_decay * values[j];
                values[j] = static_cast<T>(values[j] - update);
            }
        }
        return {};
    }
};

// Global-norm gradient clipping; returns the pre-clip norm.
template <typename T>
double clip_gradients(std::vector<NamedParam<T>>& params, double max_norm) {
    double sq = 0.0;
    for (auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (const T g : p.tensor.grad()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& p : params) {
            if (!p.tensor.has_grad()) continue;
            for (auto& g : p.tensor.grad()) g = static_cast<T>(g * scale);
        }
    }
    return norm;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------
struct TrainOptions {
    ScheduleConfig schedule;
    double weight_decay = 0.001;
    double clip_norm = 5.0;
    int epochs = 50;
    int batch_size = 32;
    std::vector<uint64_t> seeds = {17, 29, 43};
    TDcfParams tdcf;
    double target_seconds = 4.0;
    std::string out_dir;  // when set: per-seed log, checkpoint, dev-score files
};

struct EpochLog {
    int epoch = 0;
    long long step = 0;  // global step count at epoch end
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double dev_loss = 0.0;
    double dev_eer = 0.0;
};

struct SeedRunResult {
    uint64_t seed = 0;
    std::vector<EpochLog> epochs;
    int best_epoch = 0;
    double best_dev_loss = 0.0;
    double best_dev_eer = 0.0;
    double best_dev_tdcf = 0.0;
    double max_train_acc = 0.0;
    int aborted_steps = 0;
    std::vector<std::pair<std::string, double>> best_dev_scores;
    std::string checkpoint_path, log_path, scores_path;
};

struct RunResult {
    std::vector<SeedRunResult> per_seed;
    double mean_dev_eer = 0.0;
    double mean_dev_tdcf = 0.0;

    std::string to_text() const;
};

// Preprocessed in-memory dataset: load -> standardize -> z-score.
struct PreparedClip {
    std::string utt_id;
    std::string attack_id;
    bool spoof = false;
    std::vector<float> samples;
};

std::vector<PreparedClip> prepare_clips(const Manifest& manifest, double target_seconds,
                                        std::vector<std::string>* warnings = nullptr);

RunResult train_loop(const Manifest& train_manifest, const Manifest& dev_manifest,
                     const ModelConfig& model_config, const TrainOptions& options);

// Best checkpoint by lowest dev loss; ties resolved toward the earlier epoch.
size_t select_best(const std::vector<double>& dev_losses);

// Scores every readable clip of the manifest; unreadable clips are skipped
// with a warning record and do not appear in the output.
std::vector<std::pair<std::string, double>> score_manifest(Network& network,
                                                           const Manifest& manifest,
                                                           double target_seconds,
                                                           std::vector<std::string>* warnings);

}  // namespace sepsa
