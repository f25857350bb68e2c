#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sepsa {

// One labeled trial in an evaluation protocol. attack_id is "-" for bonafide.
struct TrialEntry {
    std::string speaker_id;
    std::string utt_id;
    std::string attack_id;
    bool spoof = false;
    std::string path;

    const char* key_name() const { return spoof ? "spoof" : "bonafide"; }
};

struct Manifest {
    std::vector<TrialEntry> entries;
    std::string base_dir;  // audio paths resolve relative to the manifest location

    size_t count_bonafide() const;
    size_t count_spoof() const;
    std::string resolve_path(const TrialEntry& e) const;
};

// Whitespace-separated columns: speaker utt attack key path.
Manifest parse_manifest(const std::string& path);
Manifest parse_manifest_text(const std::string& text, const std::string& base_dir);
void write_manifest(const Manifest& manifest, const std::string& path);

// Desk-scale synthetic corpus: "bonafide" harmonic voices, an LA-like class
// with flattened spectral envelope, and a PA-like class colored by a synthetic
// room response. Classes are separable by construction.
Manifest generate_synthetic_corpus(int n_per_class, uint64_t seed, const std::string& out_dir);

// Flat key=value run configuration. Every field has a default; unknown keys
// are rejected.
struct RunConfig {
    // model
    int cardinality = 4;
    int width = 64;
    int depth = 18;
    bool use_se = true;
    int se_reduction = 16;
    double dropout = 0.0;
    std::string variant = "aggregated";  // aggregated | plain_resnet
    std::vector<int> stage_widths = {32, 64, 128, 256, 512};
    std::vector<int> stem_filters = {64, 128, 256};
    std::vector<int> stem_kernels = {196, 144, 100};
    std::vector<int> stem_strides = {16, 8, 4};
    int head_hidden = 1000;

    // train
    double lr = 1e-4;
    double weight_decay = 0.001;
    int warmup_steps = 1000;
    std::string schedule = "inverse_sqrt";  // inverse_sqrt | cosine_restarts
    int restart_period = 1000;
    int epochs = 50;
    int batch_size = 32;
    std::vector<uint64_t> seeds = {17, 29, 43};
    double clip_norm = 5.0;

    // data / io
    std::string train_manifest;
    std::string dev_manifest;
    std::string out_dir = "run";
    int sample_rate = 16000;
    double clip_seconds = 4.0;
    std::string pipeline_order = "load,augment,standardize,normalize";

    // augmentation
    std::string augment_specs = "mp3:64,highpass:300,lowpass:4000,trim:-40,reverb:0.3";
    std::string codec_encode_cmd;
    std::string codec_decode_cmd;

    // metrics
    std::string tdcf_params;  // path to a key=value t-DCF parameter file; empty = defaults
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text);
std::string run_config_to_json(const RunConfig& config);

}  // namespace sepsa
