#include "sepsa/harness.hpp"

#include <cstdio>

#include "sepsa/errors.hpp"
#include "sepsa/metrics.hpp"
#include "sepsa/train.hpp"

namespace sepsa {

namespace {

TrainOptions sweep_options(const RunConfig& cfg, int epochs_override, uint64_t seed) {
    TrainOptions options;
    options.schedule.base_lr = cfg.lr;
    options.schedule.warmup_steps = cfg.warmup_steps;
    options.schedule.decay = ScheduleConfig::parse_decay(cfg.schedule);
    options.schedule.restart_period = cfg.restart_period;
    options.weight_decay = cfg.weight_decay;
    options.clip_norm = cfg.clip_norm;
    options.epochs = epochs_override > 0 ? epochs_override : cfg.epochs;
    options.batch_size = cfg.batch_size;
    options.seeds = {seed};
    options.target_seconds = cfg.clip_seconds;
    if (!cfg.tdcf_params.empty()) options.tdcf = TDcfParams::load(cfg.tdcf_params);
    return options;  // out_dir left empty: results stay in memory
}

ScoreSet to_score_set(const std::vector<std::pair<std::string, double>>& scores,
                      const Manifest& manifest) {
    ScoreSet set;
    for (const auto& [utt, score] : scores)
        for (const auto& e : manifest.entries)
            if (e.utt_id == utt) {
                set.entries.push_back({utt, score, e.spoof, e.attack_id});
                break;
            }
    return set;
}

double auc_subset(const ScoreSet& all, const std::string& attack_prefix) {
    ScoreSet subset;
    for (const auto& e : all.entries)
        if (!e.spoof || e.attack_id.rfind(attack_prefix, 0) == 0) subset.entries.push_back(e);
    return compute_auc(subset);
}

}  // namespace

std::vector<SweepCell> parse_sweep_grid(const std::string& grid) {
    std::vector<SweepCell> cells;
    size_t start = 0;
    while (start <= grid.size()) {
        size_t end = grid.find(',', start);
        if (end == std::string::npos) end = grid.size();
        const std::string item = grid.substr(start, end - start);
        if (!item.empty()) {
            const size_t x = item.find('x');
            if (x == std::string::npos)
                throw ConfigError("sweep: grid item '" + item + "' must look like CxD (e.g. 4x64)");
            try {
                cells.push_back({std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1))});
            } catch (const std::exception&) {
                throw ConfigError("sweep: bad grid item '" + item + "'");
            }
        }
        start = end + 1;
    }
    if (cells.empty()) throw ConfigError("sweep: empty grid");
    return cells;
}

std::string cardinality_sweep_report(const Manifest& train_manifest, const Manifest& dev_manifest,
                                     const RunConfig& base, const std::vector<SweepCell>& cells,
                                     int epochs_override, uint64_t seed) {
    const TrainOptions options = sweep_options(base, epochs_override, seed);
    std::string report = "cardinality,width,auc_la,auc_pa\n";
    for (const SweepCell& cell : cells) {
        RunConfig cfg = base;
        cfg.cardinality = cell.cardinality;
        cfg.width = cell.width;
        const ModelConfig model = ModelConfig::from_run_config(cfg);
        const RunResult run = train_loop(train_manifest, dev_manifest, model, options);
        const ScoreSet set = to_score_set(run.per_seed.front().best_dev_scores, dev_manifest);
        char line[160];
        std::snprintf(line, sizeof(line), "%d,%d,%.6f,%.6f\n", cell.cardinality, cell.width,
                      auc_subset(set, "LA"), auc_subset(set, "PA"));
        report += line;
    }
    return report;
}

std::string ablation_report(const Manifest& train_manifest, const Manifest& dev_manifest,
                            const RunConfig& base, int epochs_override, uint64_t seed) {
    const TrainOptions options = sweep_options(base, epochs_override, seed);
    std::string report = "system,depth,se,spatial_dropout,dev_eer\n";
    for (const int depth : {18, 34})
        for (const bool use_se : {false, true})
            for (const bool spatial_dropout : {false, true}) {
                ModelConfig model = ModelConfig::from_run_config(base);
                model.depth = depth;
                model.use_se = use_se;
                model.dropout = spatial_dropout ? 0.1 : 0.0;
                const RunResult run = train_loop(train_manifest, dev_manifest, model, options);
                std::string name = std::string(use_se ? "se-aggregated" : "aggregated") + "-" +
                                   std::to_string(depth);
                if (spatial_dropout) name += "+sdrop";
                char line[160];
                std::snprintf(line, sizeof(line), "%s,%d,%d,%d,%.6f\n", name.c_str(), depth,
                              use_se ? 1 : 0, spatial_dropout ? 1 : 0, run.mean_dev_eer);
                report += line;
            }
    return report;
}

}  // namespace sepsa
