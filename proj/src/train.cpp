#include "sepsa/train.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "sepsa/audio.hpp"

namespace fs = std::filesystem;

namespace sepsa {

ScheduleConfig::Decay ScheduleConfig::parse_decay(const std::string& name) {
    if (name == "inverse_sqrt") return Decay::kInverseSqrt;
    if (name == "cosine_restarts") return Decay::kCosineRestarts;
    throw ConfigError("unknown schedule '" + name + "' (expected inverse_sqrt|cosine_restarts)");
}

double lr_at(long long step, const ScheduleConfig& schedule) {
    if (step < 0) throw ContractError("lr_at: negative step");
    if (step == 0) return 0.0;
    const double base = schedule.base_lr;
    const int warmup = schedule.warmup_steps;
    if (warmup > 0 && step <= warmup) return base * static_cast<double>(step) / warmup;
    switch (schedule.decay) {
        case ScheduleConfig::Decay::kInverseSqrt:
            return base * std::sqrt(static_cast<double>(std::max(warmup, 1)) / static_cast<double>(step));
        case ScheduleConfig::Decay::kCosineRestarts: {
            const long long t = (step - warmup - 1) % std::max(schedule.restart_period, 1);
            return base * 0.5 *
                   (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(t) /
                                   std::max(schedule.restart_period, 1)));
        }
    }
    return base;
}

size_t select_best(const std::vector<double>& dev_losses) {
    if (dev_losses.empty()) throw ContractError("select_best: no checkpoints");
    size_t best = 0;
    for (size_t i = 1; i < dev_losses.size(); ++i)
        if (dev_losses[i] < dev_losses[best]) best = i;  // strict: ties keep the earlier epoch
    return best;
}

std::vector<PreparedClip> prepare_clips(const Manifest& manifest, double target_seconds,
                                        std::vector<std::string>* warnings) {
    std::vector<PreparedClip> out;
    out.reserve(manifest.entries.size());
    for (const auto& entry : manifest.entries) {
        AudioClip clip;
        try {
            clip = load_wav(manifest.resolve_path(entry));
        } catch (const DataError& e) {
            if (warnings) warnings->push_back(std::string("skipping '") + entry.utt_id + "': " + e.what());
            continue;
        }
        clip = zscore_normalize(standardize_length(clip, target_seconds));
        PreparedClip p;
        p.utt_id = entry.utt_id;
        p.attack_id = entry.attack_id;
        p.spoof = entry.spoof;
        p.samples = std::move(clip.samples);
        out.push_back(std::move(p));
    }
    return out;
}

namespace {

struct DevEval {
    double loss = 0.0;
    double eer = 0.0;
    double tdcf = 0.0;
    std::vector<std::pair<std::string, double>> scores;
};

DevEval evaluate_dev(Network& net, const std::vector<PreparedClip>& dev, const TDcfParams& tdcf) {
    DevEval eval;
    ScoreSet set;
    double loss = 0.0;
    for (const auto& clip : dev) {
        const ScoreOutcome outcome = score_waveform(net, clip.samples);
        const double s = std::clamp(outcome.score, 1e-7, 1.0 - 1e-7);
        const double t = clip.spoof ? 0.0 : 1.0;
        loss += -(t * std::log(s) + (1.0 - t) * std::log(1.0 - s));
        eval.scores.emplace_back(clip.utt_id, outcome.score);
        set.entries.push_back({clip.utt_id, outcome.score, clip.spoof, clip.attack_id});
    }
    eval.loss = loss / static_cast<double>(dev.size());
    eval.eer = compute_eer(set).eer;
    eval.tdcf = compute_min_tdcf(set, tdcf).min_tdcf;
    return eval;
}

std::string format_epoch_line(const EpochLog& e) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%d,%lld,%.8e,%.6f,%.6f,%.6f", e.epoch,
                  static_cast<long long>(e.step), e.lr, e.train_loss, e.dev_loss, e.dev_eer);
    return buf;
}

}  // namespace

RunResult train_loop(const Manifest& train_manifest, const Manifest& dev_manifest,
                     const ModelConfig& model_config, const TrainOptions& options) {
    if (train_manifest.entries.empty() || dev_manifest.entries.empty())
        throw ConfigError("train_loop: train and dev manifests must be non-empty");
    if (options.seeds.empty()) throw ConfigError("train_loop: at least one seed required");
    if (options.epochs < 1 || options.batch_size < 1)
        throw ConfigError("train_loop: epochs and batch size must be >= 1");

    const std::vector<PreparedClip> train_clips = prepare_clips(train_manifest, options.target_seconds);
    const std::vector<PreparedClip> dev_clips = prepare_clips(dev_manifest, options.target_seconds);
    if (train_clips.empty() || dev_clips.empty())
        throw DataError("train_loop: no readable clips in train or dev manifest");
    const int input_len = static_cast<int>(train_clips.front().samples.size());

    ModelConfig config = model_config;
    config.input_length = input_len;

    if (!options.out_dir.empty()) fs::create_directories(options.out_dir);

    RunResult result;
    for (const uint64_t seed : options.seeds) {
        Network net = Network::build(config);
        kaiming_init(net, seed);
        auto params = net.parameters();

        AdamOptimizer<float> adam;
        adam.weight_decay = options.weight_decay;

        Rng dropout_rng(Rng::mix(seed, Rng::hash_str("dropout")));

        SeedRunResult seed_result;
        seed_result.seed = seed;

        // Best-so-far snapshot (parameter and buffer blobs by value).
        std::vector<std::vector<float>> best_params;
        std::vector<std::vector<float>> best_buffers;
        double best_loss = std::numeric_limits<double>::infinity();
        int best_epoch = -1;
        double best_eer = 0.0, best_tdcf = 0.0;

        long long global_step = 0;
        std::vector<size_t> order(train_clips.size());
        std::iota(order.begin(), order.end(), 0);

        for (int epoch = 1; epoch <= options.epochs; ++epoch) {
            Rng shuffle_rng(Rng::mix(seed, Rng::hash_str("shuffle") + static_cast<uint64_t>(epoch)));
            shuffle_rng.shuffle(order.begin(), order.end());

            double epoch_loss = 0.0;
            long long epoch_batches = 0;
            long long correct = 0;
            double last_lr = 0.0;

            for (size_t start = 0; start < order.size(); start += static_cast<size_t>(options.batch_size)) {
                const size_t end = std::min(order.size(), start + static_cast<size_t>(options.batch_size));
                const int bsz = static_cast<int>(end - start);
                std::vector<float> batch(static_cast<size_t>(bsz) * input_len);
                std::vector<float> targets(static_cast<size_t>(bsz));
                for (int i = 0; i < bsz; ++i) {
                    const PreparedClip& clip = train_clips[order[start + static_cast<size_t>(i)]];
                    std::copy(clip.samples.begin(), clip.samples.end(),
                              batch.begin() + static_cast<long>(i) * input_len);
                    targets[static_cast<size_t>(i)] = clip.spoof ? 0.0f : 1.0f;
                }
                Tensor x = Tensor::from_values({bsz, 1, input_len}, std::move(batch));
                Tensor t = Tensor::from_values({bsz, 1}, std::vector<float>(targets));
                Tensor scores = net.forward(x, true, &dropout_rng);
                Tensor loss = bce_loss(scores, t);
                loss.backward();

                for (int i = 0; i < bsz; ++i) {
                    const bool pred_bona = scores.values()[static_cast<size_t>(i)] > 0.5f;
                    if (pred_bona == (targets[static_cast<size_t>(i)] > 0.5f)) ++correct;
                }

                clip_gradients(params, options.clip_norm);
                ++global_step;
                last_lr = lr_at(global_step, options.schedule);
                const auto step_result = adam.step(params, last_lr);
                if (!step_result.applied) ++seed_result.aborted_steps;
                net.zero_grads();

                epoch_loss += loss.item();
                ++epoch_batches;
            }

            const DevEval dev = evaluate_dev(net, dev_clips, options.tdcf);

            EpochLog log;
            log.epoch = epoch;
            log.step = global_step;
            log.lr = last_lr;
            log.train_loss = epoch_loss / static_cast<double>(epoch_batches);
            log.train_acc = static_cast<double>(correct) / static_cast<double>(train_clips.size());
            log.dev_loss = dev.loss;
            log.dev_eer = dev.eer;
            seed_result.epochs.push_back(log);
            seed_result.max_train_acc = std::max(seed_result.max_train_acc, log.train_acc);

            if (dev.loss < best_loss) {
                best_loss = dev.loss;
                best_epoch = epoch;
                best_eer = dev.eer;
                best_tdcf = dev.tdcf;
                best_params.clear();
                for (auto& p : params) best_params.push_back(p.tensor.values());
                best_buffers.clear();
                for (auto& b : net.buffers()) best_buffers.push_back(*b.data);
            }
        }

        seed_result.best_epoch = best_epoch;
        seed_result.best_dev_loss = best_loss;
        seed_result.best_dev_eer = best_eer;
        seed_result.best_dev_tdcf = best_tdcf;

        // Restore the best snapshot for checkpointing and final dev scores.
        {
            size_t i = 0;
            for (auto& p : params) p.tensor.values() = best_params[i++];
            i = 0;
            for (auto& b : net.buffers()) *b.data = best_buffers[i++];
        }

        const DevEval final_dev = evaluate_dev(net, dev_clips, options.tdcf);
        seed_result.best_dev_scores = final_dev.scores;

        if (!options.out_dir.empty()) {
            const std::string tag = options.out_dir + "/seed" + std::to_string(seed);
            seed_result.log_path = tag + "_log.csv";
            seed_result.checkpoint_path = tag + "_best.ckpt";
            seed_result.scores_path = tag + "_dev_scores.tsv";

            std::ofstream log(seed_result.log_path);
            log << "epoch,step,lr,train_loss,dev_loss,dev_eer\n";
            for (const auto& e : seed_result.epochs) log << format_epoch_line(e) << '\n';
            log.close();

            CheckpointMeta meta;
            meta.epoch = best_epoch;
            meta.dev_loss = best_loss;
            meta.dev_eer = best_eer;
            std::ostringstream rng_state;
            rng_state << dropout_rng.engine();
            meta.rng_state = rng_state.str();
            meta.config_json = config.to_json();
            save_checkpoint(seed_result.checkpoint_path, net, meta);

            write_score_file(seed_result.scores_path, final_dev.scores);
        }

        result.per_seed.push_back(std::move(seed_result));
    }

    for (const auto& s : result.per_seed) {
        result.mean_dev_eer += s.best_dev_eer;
        result.mean_dev_tdcf += s.best_dev_tdcf;
    }
    result.mean_dev_eer /= static_cast<double>(result.per_seed.size());
    result.mean_dev_tdcf /= static_cast<double>(result.per_seed.size());
    return result;
}

std::string RunResult::to_text() const {
    std::string out;
    char buf[192];
    out += "seed,best_epoch,dev_loss,dev_eer,dev_tdcf,max_train_acc\n";
    for (const auto& s : per_seed) {
        std::snprintf(buf, sizeof(buf), "%llu,%d,%.6f,%.6f,%.6f,%.6f\n",
                      static_cast<unsigned long long>(s.seed), s.best_epoch, s.best_dev_loss,
                      s.best_dev_eer, s.best_dev_tdcf, s.max_train_acc);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "mean,,,%.6f,%.6f,\n", mean_dev_eer, mean_dev_tdcf);
    out += buf;
    return out;
}

std::vector<std::pair<std::string, double>> score_manifest(Network& network, const Manifest& manifest,
                                                           double target_seconds,
                                                           std::vector<std::string>* warnings) {
    std::vector<std::pair<std::string, double>> scores;
    for (const auto& entry : manifest.entries) {
        AudioClip clip;
        try {
            clip = load_wav(manifest.resolve_path(entry));
        } catch (const DataError& e) {
            if (warnings) warnings->push_back(std::string("skipping '") + entry.utt_id + "': " + e.what());
            continue;
        }
        clip = zscore_normalize(standardize_length(clip, target_seconds));
        scores.emplace_back(entry.utt_id, score_waveform(network, clip.samples).score);
    }
    return scores;
}

}  // namespace sepsa
