#include "sepsa/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sepsa/audio.hpp"
#include "sepsa/errors.hpp"
#include "sepsa/rng.hpp"

namespace fs = std::filesystem;

namespace sepsa {

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------
size_t Manifest::count_bonafide() const {
    size_t n = 0;
    for (const auto& e : entries) n += e.spoof ? 0 : 1;
    return n;
}

size_t Manifest::count_spoof() const {
    size_t n = 0;
    for (const auto& e : entries) n += e.spoof ? 1 : 0;
    return n;
}

std::string Manifest::resolve_path(const TrialEntry& e) const {
    if (base_dir.empty() || fs::path(e.path).is_absolute()) return e.path;
    return (fs::path(base_dir) / e.path).string();
}

Manifest parse_manifest_text(const std::string& text, const std::string& base_dir) {
    Manifest manifest;
    manifest.base_dir = base_dir;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    std::vector<std::string> seen_ids;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        TrialEntry e;
        std::string key;
        if (!(ls >> e.speaker_id)) continue;  // blank line
        if (e.speaker_id[0] == '#') continue;
        if (!(ls >> e.utt_id >> e.attack_id >> key >> e.path))
            throw DataError("manifest line " + std::to_string(line_no) +
                            ": expected 5 columns (speaker utt attack key path)");
        if (key == "bonafide") e.spoof = false;
        else if (key == "spoof") e.spoof = true;
        else
            throw DataError("manifest line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (e.spoof == (e.attack_id == "-"))
            throw DataError("manifest line " + std::to_string(line_no) + ": key '" + key +
                            "' inconsistent with attack id '" + e.attack_id + "'");
        auto pos = std::lower_bound(seen_ids.begin(), seen_ids.end(), e.utt_id);
        if (pos != seen_ids.end() && *pos == e.utt_id)
            throw DataError("manifest line " + std::to_string(line_no) + ": duplicate utt_id '" +
                            e.utt_id + "'");
        seen_ids.insert(pos, e.utt_id);
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

Manifest parse_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("parse_manifest: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest_text(ss.str(), fs::path(path).parent_path().string());
}

void write_manifest(const Manifest& manifest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_manifest: cannot open '" + path + "' for writing");
    for (const auto& e : manifest.entries)
        out << e.speaker_id << ' ' << e.utt_id << ' ' << e.attack_id << ' ' << e.key_name() << ' '
            << e.path << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------
namespace {

constexpr double kPi = 3.14159265358979323846;

// Harmonic stack: amps[k] scales harmonic (k+1)*f0; phases randomized.
// vibrato_depth > 0 applies a slow sinusoidal pitch modulation.
std::vector<float> harmonic_tone(Rng& rng, int n, int sample_rate, double f0,
                                 const std::vector<double>& amps, double vibrato_depth = 0.0) {
    std::vector<float> out(static_cast<size_t>(n), 0.0f);
    const double vibrato_rate = vibrato_depth > 0.0 ? rng.uniform(4.0, 6.0) : 0.0;
    const double vibrato_phase = vibrato_depth > 0.0 ? rng.uniform(0.0, 2.0 * kPi) : 0.0;
    std::vector<double> phases(amps.size());
    for (auto& p : phases) p = rng.uniform(0.0, 2.0 * kPi);
    for (int i = 0; i < n; ++i) {
        const double mod =
            1.0 + vibrato_depth * std::sin(2.0 * kPi * vibrato_rate * i / sample_rate + vibrato_phase);
        double sample = 0.0;
        for (size_t k = 0; k < amps.size(); ++k) {
            if (amps[k] == 0.0) continue;
            phases[k] += 2.0 * kPi * f0 * static_cast<double>(k + 1) * mod / sample_rate;
            sample += amps[k] * std::sin(phases[k]);
        }
        out[static_cast<size_t>(i)] = static_cast<float>(sample);
    }
    return out;
}

void add_noise(Rng& rng, std::vector<float>& x, double level) {
    for (auto& v : x) v += static_cast<float>(level * rng.normal());
}

// Paul Kellet's three-pole 1/f approximation.
void add_pink_noise(Rng& rng, std::vector<float>& x, double level) {
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    for (auto& v : x) {
        const double w = rng.normal();
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        v += static_cast<float>(level * 0.2 * (b0 + b1 + b2 + w * 0.1848));
    }
}

void peak_normalize(std::vector<float>& x, double peak) {
    double m = 0.0;
    for (const float v : x) m = std::max(m, std::abs(static_cast<double>(v)));
    if (m == 0.0) return;
    const double s = peak / m;
    for (auto& v : x) v = static_cast<float>(v * s);
}

AudioClip make_bonafide(Rng& rng, int sample_rate) {
    const int n = static_cast<int>(rng.uniform(3.0, 5.0) * sample_rate);
    // Discrete f0 grid shared by every class and split, so class identity is
    // never confounded with pitch.
    const double f0 = 130.0 + 10.0 * static_cast<double>(rng.uniform_index(7));
    // Voiced-speech-like: a dominant fundamental with a 1/k envelope, energy
    // confined below ~1.6 kHz.
    const int n_harm = std::max(1, static_cast<int>(1600.0 / f0));
    std::vector<double> amps(static_cast<size_t>(n_harm));
    for (int k = 0; k < n_harm; ++k) amps[static_cast<size_t>(k)] = 1.0 / (k + 1);
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples = harmonic_tone(rng, n, sample_rate, f0, amps, 0.015);  // natural vibrato
    add_pink_noise(rng, clip.samples, 0.01);
    peak_normalize(clip.samples, 0.5);
    return clip;
}

AudioClip make_la_spoof(Rng& rng, int sample_rate) {
    // Machine-like flattened spectral envelope: equal-amplitude harmonics
    // reaching 7 kHz, which a bonafide clip never has.
    const int n = static_cast<int>(rng.uniform(3.0, 5.0) * sample_rate);
    const double f0 = 130.0 + 10.0 * static_cast<double>(rng.uniform_index(7));
    const int n_harm = std::max(1, static_cast<int>(7000.0 / f0));
    std::vector<double> amps(static_cast<size_t>(n_harm), 1.0);
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples = harmonic_tone(rng, n, sample_rate, f0, amps);
    add_noise(rng, clip.samples, 0.01);
    peak_normalize(clip.samples, 0.5);
    return clip;
}

AudioClip make_pa_spoof(Rng& rng, int sample_rate) {
    // Replayed bonafide: room response plus a narrow band-pass device
    // coloration that strips the fundamental region entirely.
    AudioClip clip = make_bonafide(rng, sample_rate);
    const auto ir = synth_room_impulse(0.3, sample_rate, rng.next_u64());
    clip = reverberate(clip, ir);
    clip = highpass_filter(clip, 1050.0);
    clip = lowpass_filter(clip, 1600.0);
    peak_normalize(clip.samples, 0.5);
    return clip;
}

}  // namespace

Manifest generate_synthetic_corpus(int n_per_class, uint64_t seed, const std::string& out_dir) {
    if (n_per_class < 1) throw ConfigError("generate_synthetic_corpus: n_per_class must be >= 1");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DataError("generate_synthetic_corpus: cannot create '" + out_dir + "'");

    const int sample_rate = 16000;
    Manifest manifest;
    manifest.base_dir = out_dir;

    struct ClassDef {
        const char* tag;
        const char* attack;
        bool spoof;
        AudioClip (*make)(Rng&, int);
    };
    const ClassDef classes[] = {
        {"bona", "-", false, &make_bonafide},
        {"la", "LA01", true, &make_la_spoof},
        {"pa", "PA01", true, &make_pa_spoof},
    };

    for (const auto& cls : classes) {
        for (int i = 0; i < n_per_class; ++i) {
            Rng rng(Rng::mix(seed, Rng::hash_str(cls.tag) + static_cast<uint64_t>(i)));
            AudioClip clip = cls.make(rng, sample_rate);
            char utt[64];
            std::snprintf(utt, sizeof(utt), "utt_%s_%04d", cls.tag, i + 1);
            clip.utt_id = utt;
            const std::string file = std::string(utt) + ".wav";
            write_wav_pcm16(out_dir + "/" + file, clip);
            TrialEntry entry;
            entry.speaker_id = "S" + std::to_string(1 + i % 5);
            entry.utt_id = utt;
            entry.attack_id = cls.attack;
            entry.spoof = cls.spoof;
            entry.path = file;
            manifest.entries.push_back(std::move(entry));
        }
    }
    write_manifest(manifest, out_dir + "/manifest.txt");
    return manifest;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------
namespace {

std::string trim_ws(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= s.size()) {
        size_t end = s.find(',', start);
        if (end == std::string::npos) end = s.size();
        const std::string item = trim_ws(s.substr(start, end - start));
        if (!item.empty()) out.push_back(item);
        start = end + 1;
    }
    return out;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& value, Parse parse) {
    std::vector<T> out;
    for (const auto& item : split_csv(value)) {
        try {
            out.push_back(parse(item));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': bad list item '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + value + "'");
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim_ws(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim_ws(line.substr(0, eq));
        const std::string value = trim_ws(line.substr(eq + 1));

        if (key == "model.cardinality") cfg.cardinality = parse_int(key, value);
        else if (key == "model.width") cfg.width = parse_int(key, value);
        else if (key == "model.depth") cfg.depth = parse_int(key, value);
        else if (key == "model.use_se") cfg.use_se = parse_bool(key, value);
        else if (key == "model.se_reduction") cfg.se_reduction = parse_int(key, value);
        else if (key == "model.dropout") cfg.dropout = parse_double(key, value);
        else if (key == "model.variant") {
            if (value != "aggregated" && value != "plain_resnet")
                throw ConfigError("config key 'model.variant': expected aggregated|plain_resnet");
            cfg.variant = value;
        } else if (key == "model.stage_widths")
            cfg.stage_widths = parse_list<int>(key, value, [&](const std::string& s) { return parse_int(key, s); });
        else if (key == "model.stem_filters")
            cfg.stem_filters = parse_list<int>(key, value, [&](const std::string& s) { return parse_int(key, s); });
        else if (key == "model.stem_kernels")
            cfg.stem_kernels = parse_list<int>(key, value, [&](const std::string& s) { return parse_int(key, s); });
        else if (key == "model.head_hidden") cfg.head_hidden = parse_int(key, value);
        else if (key == "model.stem_strides")
            cfg.stem_strides = parse_list<int>(key, value, [&](const std::string& s) { return parse_int(key, s); });
        else if (key == "train.lr") cfg.lr = parse_double(key, value);
        else if (key == "train.weight_decay") cfg.weight_decay = parse_double(key, value);
        else if (key == "train.warmup_steps") cfg.warmup_steps = parse_int(key, value);
        else if (key == "train.schedule") {
            if (value != "inverse_sqrt" && value != "cosine_restarts")
                throw ConfigError("config key 'train.schedule': expected inverse_sqrt|cosine_restarts");
            cfg.schedule = value;
        } else if (key == "train.restart_period") cfg.restart_period = parse_int(key, value);
        else if (key == "train.epochs") cfg.epochs = parse_int(key, value);
        else if (key == "train.batch_size") cfg.batch_size = parse_int(key, value);
        else if (key == "train.seeds")
            cfg.seeds = parse_list<uint64_t>(key, value, [&](const std::string& s) {
                return static_cast<uint64_t>(std::stoull(s));
            });
        else if (key == "train.clip_norm") cfg.clip_norm = parse_double(key, value);
        else if (key == "data.train_manifest") cfg.train_manifest = value;
        else if (key == "data.dev_manifest") cfg.dev_manifest = value;
        else if (key == "data.out_dir") cfg.out_dir = value;
        else if (key == "audio.sample_rate") cfg.sample_rate = parse_int(key, value);
        else if (key == "audio.clip_seconds") cfg.clip_seconds = parse_double(key, value);
        else if (key == "pipeline.order") cfg.pipeline_order = value;
        else if (key == "augment.specs") cfg.augment_specs = value;
        else if (key == "augment.codec_encode_cmd") cfg.codec_encode_cmd = value;
        else if (key == "augment.codec_decode_cmd") cfg.codec_decode_cmd = value;
        else if (key == "metrics.tdcf_params") cfg.tdcf_params = value;
        else throw ConfigError("unknown config key '" + key + "'");
    }
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("parse_run_config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config_text(ss.str());
}

std::string run_config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["model"] = {{"cardinality", c.cardinality},
                  {"width", c.width},
                  {"depth", c.depth},
                  {"use_se", c.use_se},
                  {"se_reduction", c.se_reduction},
                  {"dropout", c.dropout},
                  {"variant", c.variant},
                  {"stage_widths", c.stage_widths},
                  {"stem_filters", c.stem_filters},
                  {"stem_kernels", c.stem_kernels},
                  {"stem_strides", c.stem_strides},
                  {"head_hidden", c.head_hidden}};
    j["train"] = {{"lr", c.lr},
                  {"weight_decay", c.weight_decay},
                  {"warmup_steps", c.warmup_steps},
                  {"schedule", c.schedule},
                  {"restart_period", c.restart_period},
                  {"epochs", c.epochs},
                  {"batch_size", c.batch_size},
                  {"seeds", c.seeds},
                  {"clip_norm", c.clip_norm}};
    j["data"] = {{"train_manifest", c.train_manifest},
                 {"dev_manifest", c.dev_manifest},
                 {"out_dir", c.out_dir}};
    j["audio"] = {{"sample_rate", c.sample_rate}, {"clip_seconds", c.clip_seconds}};
    j["pipeline"] = {{"order", c.pipeline_order}};
    j["augment"] = {{"specs", c.augment_specs},
                    {"codec_encode_cmd", c.codec_encode_cmd},
                    {"codec_decode_cmd", c.codec_decode_cmd}};
    j["metrics"] = {{"tdcf_params", c.tdcf_params}};
    return j.dump(2);
}

}  // namespace sepsa
