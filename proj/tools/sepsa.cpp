// Command-line surface: train, evaluate, score, augment, gradcheck, synth, sweep.
//
// Exit codes: 0 success, 1 usage, 2 configuration, 3 data, 4 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sepsa/audio.hpp"
#include "sepsa/data.hpp"
#include "sepsa/gradcheck.hpp"
#include "sepsa/harness.hpp"
#include "sepsa/metrics.hpp"
#include "sepsa/model.hpp"
#include "sepsa/train.hpp"

namespace fs = std::filesystem;
using namespace sepsa;

namespace {

TrainOptions options_from_config(const RunConfig& cfg) {
    TrainOptions options;
    options.schedule.base_lr = cfg.lr;
    options.schedule.warmup_steps = cfg.warmup_steps;
    options.schedule.decay = ScheduleConfig::parse_decay(cfg.schedule);
    options.schedule.restart_period = cfg.restart_period;
    options.weight_decay = cfg.weight_decay;
    options.clip_norm = cfg.clip_norm;
    options.epochs = cfg.epochs;
    options.batch_size = cfg.batch_size;
    options.seeds = cfg.seeds;
    options.target_seconds = cfg.clip_seconds;
    if (!cfg.tdcf_params.empty()) options.tdcf = TDcfParams::load(cfg.tdcf_params);
    options.out_dir = cfg.out_dir;
    return options;
}

int cmd_train(const std::string& config_path) {
    const RunConfig cfg = parse_run_config(config_path);
    if (cfg.train_manifest.empty() || cfg.dev_manifest.empty())
        throw ConfigError("train: config must set data.train_manifest and data.dev_manifest");
    const Manifest train_m = parse_manifest(cfg.train_manifest);
    const Manifest dev_m = parse_manifest(cfg.dev_manifest);
    const ModelConfig model = ModelConfig::from_run_config(cfg);
    const TrainOptions options = options_from_config(cfg);
    const RunResult result = train_loop(train_m, dev_m, model, options);
    std::cout << result.to_text();
    for (const auto& s : result.per_seed)
        std::cout << "checkpoint " << s.checkpoint_path << " (epoch " << s.best_epoch << ")\n";
    return 0;
}

ScoreSet score_set_from_manifest(Network& net, const Manifest& manifest, double seconds,
                                 std::vector<std::string>* warnings) {
    ScoreSet set;
    const auto scores = score_manifest(net, manifest, seconds, warnings);
    for (const auto& [utt, score] : scores) {
        for (const auto& e : manifest.entries)
            if (e.utt_id == utt) {
                set.entries.push_back({utt, score, e.spoof, e.attack_id});
                break;
            }
    }
    return set;
}

int cmd_evaluate(const std::string& scores_path, const std::string& keys_path,
                 const std::string& checkpoint, const std::string& manifest_path,
                 const std::string& tdcf_path, double seconds) {
    ScoreSet set;
    if (!scores_path.empty()) {
        if (keys_path.empty()) throw ConfigError("evaluate: --scores requires --keys");
        set = load_score_set(scores_path, keys_path);
    } else if (!checkpoint.empty() && !manifest_path.empty()) {
        Network net = network_from_checkpoint(checkpoint);
        const Manifest manifest = parse_manifest(manifest_path);
        std::vector<std::string> warnings;
        set = score_set_from_manifest(net, manifest, seconds, &warnings);
        for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    } else {
        throw ConfigError("evaluate: pass --scores/--keys or --checkpoint/--manifest");
    }
    const TDcfParams tdcf = tdcf_path.empty() ? TDcfParams{} : TDcfParams::load(tdcf_path);
    const EerResult eer = compute_eer(set);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "EER %.4f\n", eer.eer);
    std::cout << buf;
    std::snprintf(buf, sizeof(buf), "AUC %.4f\n", compute_auc(set));
    std::cout << buf;
    std::snprintf(buf, sizeof(buf), "min-tDCF %.4f\n", compute_min_tdcf(set, tdcf).min_tdcf);
    std::cout << buf;
    return 0;
}

int cmd_score(const std::string& checkpoint, const std::string& manifest_path,
              const std::string& out_path, double seconds) {
    Network net = network_from_checkpoint(checkpoint);
    const Manifest manifest = parse_manifest(manifest_path);
    std::vector<std::string> warnings;
    const auto scores = score_manifest(net, manifest, seconds, &warnings);
    write_score_file(out_path, scores);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "scored " << scores.size() << " clips, skipped " << warnings.size() << ", wrote "
              << out_path << '\n';
    return 0;
}

int cmd_augment(const std::string& manifest_path, const std::string& out_dir,
                const std::string& specs_csv, uint64_t seed, const std::string& encode_cmd,
                const std::string& decode_cmd) {
    const Manifest manifest = parse_manifest(manifest_path);
    const auto specs = AugmentationSpec::parse_list(specs_csv);
    CodecConfig codec{encode_cmd, decode_cmd};
    const AugmentResult result = augment_pipeline(manifest, specs, seed, out_dir, codec);
    write_manifest(result.manifest, out_dir + "/manifest.txt");
    for (const auto& log : result.logs) std::cerr << "note: " << log << '\n';
    std::cout << "wrote " << result.manifest.entries.size() << " manifest entries ("
              << result.skipped << " skipped augmentations) to " << out_dir << '\n';
    return 0;
}

int cmd_gradcheck(uint64_t seed, int cases) {
    const GradCheckReport report = run_grad_checks(seed, cases);
    std::cout << format_report(report);
    return report.all_pass() ? 0 : 4;
}

int cmd_synth(int n, uint64_t seed, const std::string& out_dir) {
    const Manifest manifest = generate_synthetic_corpus(n, seed, out_dir);
    std::cout << "wrote " << manifest.entries.size() << " clips (" << manifest.count_bonafide()
              << " bonafide, " << manifest.count_spoof() << " spoof) to " << out_dir << '\n';
    return 0;
}

void write_or_print(const std::string& out_path, const std::string& content) {
    if (out_path.empty()) {
        std::cout << content;
    } else {
        std::ofstream out(out_path);
        if (!out) throw DataError("cannot open '" + out_path + "' for writing");
        out << content;
        std::cout << "wrote " << out_path << '\n';
    }
}

int cmd_sweep(const std::string& grid, bool ablation, const std::string& config_path,
              const std::string& train_path, const std::string& dev_path, int epochs_override,
              uint64_t seed, const std::string& out_path) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : parse_run_config(config_path);
    if (!train_path.empty()) cfg.train_manifest = train_path;
    if (!dev_path.empty()) cfg.dev_manifest = dev_path;
    if (cfg.train_manifest.empty() || cfg.dev_manifest.empty())
        throw ConfigError("sweep: train and dev manifests required (flags or config)");
    const Manifest train_m = parse_manifest(cfg.train_manifest);
    const Manifest dev_m = parse_manifest(cfg.dev_manifest);
    const std::string report =
        ablation ? ablation_report(train_m, dev_m, cfg, epochs_override, seed)
                 : cardinality_sweep_report(train_m, dev_m, cfg, parse_sweep_grid(grid),
                                            epochs_override, seed);
    write_or_print(out_path, report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"unified voice-spoofing countermeasure: SE parallel stacked aggregation on raw audio"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "run the training loop from a config file");
    std::string train_config;
    train->add_option("--config", train_config, "run configuration file")->required();

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "compute EER / AUC / min t-DCF");
    std::string ev_scores, ev_keys, ev_ckpt, ev_manifest, ev_tdcf;
    double ev_seconds = 4.0;
    evaluate->add_option("--scores", ev_scores, "score file (utt<TAB>score)");
    evaluate->add_option("--keys", ev_keys, "key file (utt<TAB>key<TAB>attack)");
    evaluate->add_option("--checkpoint", ev_ckpt, "checkpoint to score with");
    evaluate->add_option("--manifest", ev_manifest, "manifest to score");
    evaluate->add_option("--tdcf", ev_tdcf, "t-DCF parameter file");
    evaluate->add_option("--seconds", ev_seconds, "clip length used when scoring");

    // score
    auto* score = app.add_subcommand("score", "write a score file for a manifest");
    std::string sc_ckpt, sc_manifest, sc_out;
    double sc_seconds = 4.0;
    score->add_option("--checkpoint", sc_ckpt)->required();
    score->add_option("--manifest", sc_manifest)->required();
    score->add_option("--out", sc_out)->required();
    score->add_option("--seconds", sc_seconds);

    // augment
    auto* augment = app.add_subcommand("augment", "apply the augmentation pipeline to a manifest");
    std::string ag_manifest, ag_out, ag_specs = "mp3:64,highpass:300,lowpass:4000,trim:-40,reverb:0.3";
    std::string ag_encode, ag_decode;
    uint64_t ag_seed = 1;
    augment->add_option("--manifest", ag_manifest)->required();
    augment->add_option("--out-dir", ag_out)->required();
    augment->add_option("--specs", ag_specs, "comma list, e.g. lowpass:4000,reverb:0.3");
    augment->add_option("--seed", ag_seed);
    augment->add_option("--codec-encode", ag_encode, "encoder template with {in} {out} {bitrate}");
    augment->add_option("--codec-decode", ag_decode, "decoder template with {in} {out}");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks for every op");
    uint64_t gc_seed = 1234;
    int gc_cases = 20;
    gradcheck->add_option("--seed", gc_seed);
    gradcheck->add_option("--cases", gc_cases, "random cases per op");

    // synth
    auto* synth = app.add_subcommand("synth", "generate the synthetic desk-scale corpus");
    int sy_n = 10;
    uint64_t sy_seed = 1;
    std::string sy_out;
    synth->add_option("--n", sy_n, "clips per class")->required();
    synth->add_option("--seed", sy_seed)->required();
    synth->add_option("--out", sy_out)->required();

    // sweep
    auto* sweep = app.add_subcommand("sweep", "cardinality/width grid or ablation harness");
    std::string sw_grid = "1x64,2x40,4x24,8x14,16x4,8x32,4x64";
    bool sw_ablation = false;
    std::string sw_config, sw_train, sw_dev, sw_out;
    int sw_epochs = 0;
    uint64_t sw_seed = 17;
    sweep->add_option("--grid", sw_grid, "comma list of CxD cells");
    sweep->add_flag("--ablation", sw_ablation, "depth/SE/spatial-dropout grid instead of CxD");
    sweep->add_option("--config", sw_config, "base run configuration");
    sweep->add_option("--train-manifest", sw_train);
    sweep->add_option("--dev-manifest", sw_dev);
    sweep->add_option("--epochs", sw_epochs, "override epoch count");
    sweep->add_option("--seed", sw_seed);
    sweep->add_option("--out", sw_out, "report path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (train->parsed()) return cmd_train(train_config);
        if (evaluate->parsed())
            return cmd_evaluate(ev_scores, ev_keys, ev_ckpt, ev_manifest, ev_tdcf, ev_seconds);
        if (score->parsed()) return cmd_score(sc_ckpt, sc_manifest, sc_out, sc_seconds);
        if (augment->parsed())
            return cmd_augment(ag_manifest, ag_out, ag_specs, ag_seed, ag_encode, ag_decode);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_cases);
        if (synth->parsed()) return cmd_synth(sy_n, sy_seed, sy_out);
        if (sweep->parsed())
            return cmd_sweep(sw_grid, sw_ablation, sw_config, sw_train, sw_dev, sw_epochs, sw_seed,
                             sw_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 1;
}
