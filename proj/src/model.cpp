#include "sepsa/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "sepsa/data.hpp"

namespace sepsa {

// ---------------------------------------------------------------------------
// ModelConfig
// ---------------------------------------------------------------------------
void ModelConfig::validate() const {
    if (cardinality < 1) throw ConfigError("model: cardinality must be >= 1");
    if (width < 1) throw ConfigError("model: bottleneck width must be >= 1");
    if (depth != 18 && depth != 34 && depth != 50 && depth != 101)
        throw ConfigError("model: depth must be one of 18, 34, 50, 101");
    if (plain_resnet && cardinality != 1)
        throw ConfigError("model: plain_resnet variant requires cardinality == 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must be in [0, 1)");
    if (stage_widths.empty()) throw ConfigError("model: no stage widths");
    for (size_t s = 0; s < stage_widths.size(); ++s) {
        if (stage_widths[s] < 1)
            throw ConfigError("model: stage " + std::to_string(s + 1) + " has non-positive width");
        if (s > 0 && stage_widths[s] != 2 * stage_widths[s - 1])
            throw ConfigError("model: stage " + std::to_string(s + 1) +
                              " width must double the previous stage (" +
                              std::to_string(stage_widths[s - 1]) + " -> " +
                              std::to_string(stage_widths[s]) + ")");
        if (stage_widths[s] % cardinality != 0)
            throw ConfigError("model: stage " + std::to_string(s + 1) + " width " +
                              std::to_string(stage_widths[s]) + " not divisible by cardinality " +
                              std::to_string(cardinality));
        if (use_se && stage_widths[s] % se_reduction != 0)
            throw ConfigError("model: stage " + std::to_string(s + 1) + " width " +
                              std::to_string(stage_widths[s]) + " not divisible by se_reduction " +
                              std::to_string(se_reduction));
    }
    if (stem_filters.size() != stem_kernels.size() || stem_filters.size() != stem_strides.size() ||
        stem_filters.empty())
        throw ConfigError("model: stem filters/kernels/strides must be non-empty and equally sized");
    for (size_t i = 0; i < stem_filters.size(); ++i)
        if (stem_filters[i] < 1 || stem_kernels[i] < 1 || stem_strides[i] < 1)
            throw ConfigError("model: stem layer " + std::to_string(i + 1) + " has a non-positive field");
    if (head_hidden < 1) throw ConfigError("model: head width must be positive");
    if (input_length < 1) throw ConfigError("model: input length must be positive");
}

std::vector<int> ModelConfig::stage_repeats() const {
    const size_t n = stage_widths.size();
    switch (depth) {
        case 18: return std::vector<int>(n, 1);
        case 34: return std::vector<int>(n, 2);
        case 50: return std::vector<int>(n, 3);
        case 101: {
            std::vector<int> r(n, 7);
            if (n >= 2) {
                r.front() = 6;
                r[1] = 6;
                r.back() = 6;
            }
            return r;
        }
        default: throw ConfigError("model: depth must be one of 18, 34, 50, 101");
    }
}

ModelConfig ModelConfig::from_run_config(const RunConfig& run) {
    ModelConfig m;
    m.cardinality = run.cardinality;
    m.width = run.width;
    m.depth = run.depth;
    m.use_se = run.use_se;
    m.se_reduction = run.se_reduction;
    m.dropout = run.dropout;
    m.plain_resnet = run.variant == "plain_resnet";
    m.stage_widths = run.stage_widths;
    m.stem_filters = run.stem_filters;
    m.stem_kernels = run.stem_kernels;
    m.stem_strides = run.stem_strides;
    m.head_hidden = run.head_hidden;
    m.input_length = static_cast<int>(std::llround(run.clip_seconds * run.sample_rate));
    return m;
}

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["cardinality"] = cardinality;
    j["width"] = width;
    j["depth"] = depth;
    j["use_se"] = use_se;
    j["se_reduction"] = se_reduction;
    j["dropout"] = dropout;
    j["plain_resnet"] = plain_resnet;
    j["stage_widths"] = stage_widths;
    j["stem_filters"] = stem_filters;
    j["stem_kernels"] = stem_kernels;
    j["stem_strides"] = stem_strides;
    j["head_hidden"] = head_hidden;
    j["input_length"] = input_length;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model config json: ") + e.what());
    }
    ModelConfig m;
    m.cardinality = j.at("cardinality").get<int>();
    m.width = j.at("width").get<int>();
    m.depth = j.at("depth").get<int>();
    m.use_se = j.at("use_se").get<bool>();
    m.se_reduction = j.at("se_reduction").get<int>();
    m.dropout = j.at("dropout").get<double>();
    m.plain_resnet = j.at("plain_resnet").get<bool>();
    m.stage_widths = j.at("stage_widths").get<std::vector<int>>();
    m.stem_filters = j.at("stem_filters").get<std::vector<int>>();
    m.stem_kernels = j.at("stem_kernels").get<std::vector<int>>();
    m.stem_strides = j.at("stem_strides").get<std::vector<int>>();
    m.head_hidden = j.at("head_hidden").get<int>();
    m.input_length = j.at("input_length").get<int>();
    return m;
}

// ---------------------------------------------------------------------------
// Analytic plan
// ---------------------------------------------------------------------------
long long NetworkPlan::flops() const {
    long long total = 0;
    for (const auto& l : layers) total += l.flops();
    return total;
}

long long NetworkPlan::params() const {
    long long total = 0;
    for (const auto& l : layers) total += l.params();
    return total;
}

namespace {

long long conv_out_len(long long len, int k, int stride, int padding, const std::string& where) {
    if (k > len + 2LL * padding)
        throw ConfigError("model plan: " + where + ": kernel " + std::to_string(k) +
                          " exceeds padded length " + std::to_string(len + 2LL * padding) +
                          " (temporal length exhausted)");
    return (len + 2LL * padding - k) / stride + 1;
}

}  // namespace

NetworkPlan build_plan(const ModelConfig& config) {
    config.validate();
    NetworkPlan plan;
    long long len = config.input_length;
    int channels = 1;

    for (size_t i = 0; i < config.stem_filters.size(); ++i) {
        const std::string p = "stem" + std::to_string(i + 1);
        const int k = config.stem_kernels[i];
        plan.layers.push_back({p + ".bn", LayerPlan::Kind::kBatchNorm, channels, channels, 1, 1, 0, 1, len});
        len = conv_out_len(len, k, config.stem_strides[i], k / 2, p);
        plan.layers.push_back({p + ".conv", LayerPlan::Kind::kConv, channels, config.stem_filters[i], k,
                               config.stem_strides[i], k / 2, 1, len});
        channels = config.stem_filters[i];
    }
    if (len < 2) throw ConfigError("model plan: stem output too short for max pooling");
    len = (len - 2) / 2 + 1;  // max pool k=2 stride 2

    const std::vector<int> repeats = config.stage_repeats();
    for (size_t s = 0; s < config.stage_widths.size(); ++s) {
        const int width = config.stage_widths[s];
        const int branch_width = config.width * (1 << s);
        const int grouped_out = config.cardinality * branch_width;
        for (int r = 0; r < repeats[s]; ++r) {
            const std::string p = "stage" + std::to_string(s + 1) + ".block" + std::to_string(r);
            const int stride = (s > 0 && r == 0) ? 2 : 1;
            plan.layers.push_back({p + ".bn_a", LayerPlan::Kind::kBatchNorm, channels, channels, 1, 1, 0, 1, len});
            const long long out_len = conv_out_len(len, 3, stride, 1, p);
            plan.layers.push_back({p + ".conv_a", LayerPlan::Kind::kConv, channels, width, 3, stride, 1, 1, out_len});
            plan.layers.push_back({p + ".bn_b", LayerPlan::Kind::kBatchNorm, width, width, 1, 1, 0, 1, out_len});
            plan.layers.push_back({p + ".conv_b", LayerPlan::Kind::kConv, width, width, 3, 1, 1, 1, out_len});
            plan.layers.push_back({p + ".bn_t", LayerPlan::Kind::kBatchNorm, width, width, 1, 1, 0, 1, out_len});
            plan.layers.push_back({p + ".conv_t", LayerPlan::Kind::kConv, width, grouped_out, 3, 1, 1,
                                   config.cardinality, out_len});
            plan.layers.push_back({p + ".merge", LayerPlan::Kind::kConv, grouped_out, width, 1, 1, 0, 1, out_len});
            if (channels != width || stride != 1)
                plan.layers.push_back({p + ".proj", LayerPlan::Kind::kConv, channels, width, 1, stride, 0, 1, out_len});
            if (config.use_se) {
                plan.layers.push_back({p + ".se.reduce", LayerPlan::Kind::kDense, width,
                                       width / config.se_reduction, 1, 1, 0, 1, 1});
                plan.layers.push_back({p + ".se.expand", LayerPlan::Kind::kDense,
                                       width / config.se_reduction, width, 1, 1, 0, 1, 1});
            }
            channels = width;
            len = out_len;
        }
    }
    if (len < 1) throw ConfigError("model plan: no temporal positions left for the head pool");
    plan.final_length = len;
    plan.layers.push_back({"head.hidden", LayerPlan::Kind::kDense, channels, config.head_hidden, 1, 1, 0, 1, 1});
    plan.layers.push_back({"head.out", LayerPlan::Kind::kDense, config.head_hidden, 1, 1, 1, 0, 1, 1});
    return plan;
}

long long count_params(const ModelConfig& config) { return build_plan(config).params(); }

long long count_flops(const ModelConfig& config, int input_length) {
    ModelConfig c = config;
    c.input_length = input_length;
    return build_plan(c).flops();
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------
ScoreOutcome score_waveform(Network& network, const std::vector<float>& samples) {
    if (samples.size() != static_cast<size_t>(network.config.input_length))
        throw ContractError("score_waveform: clip has " + std::to_string(samples.size()) +
                            " samples; expected preprocessed length " +
                            std::to_string(network.config.input_length));
    NoGradGuard ng;
    Tensor x = Tensor::from_values({1, 1, network.config.input_length}, samples);
    Tensor out = network.forward(x, false, nullptr);
    ScoreOutcome outcome;
    outcome.score = out.values()[0];
    outcome.bonafide = outcome.score > 0.5;
    return outcome;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
namespace {

constexpr char kMagic[8] = {'S', 'E', 'P', 'S', 'A', 'C', 'K', 'P'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void write_string(std::ofstream& out, const std::string& s) {
    write_pod(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw DataError("checkpoint '" + path + "': truncated");
    return v;
}

std::string read_string(std::ifstream& in, const std::string& path) {
    const uint32_t n = read_pod<uint32_t>(in, path);
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw DataError("checkpoint '" + path + "': truncated string");
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, Network& network, const CheckpointMeta& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_checkpoint: cannot open '" + path + "' for writing");
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, meta.format_version);
    write_pod(out, static_cast<int32_t>(meta.epoch));
    write_pod(out, meta.dev_loss);
    write_pod(out, meta.dev_eer);
    write_string(out, meta.rng_state);
    write_string(out, meta.config_json.empty() ? network.config.to_json() : meta.config_json);

    std::vector<std::pair<std::string, const std::vector<float>*>> blobs;
    auto params = network.parameters();
    for (auto& p : params) blobs.emplace_back(p.path, &p.tensor.values());
    for (auto& b : network.buffers()) blobs.emplace_back(b.path, b.data);

    write_pod(out, static_cast<uint64_t>(blobs.size()));
    for (const auto& [name, data] : blobs) {
        write_string(out, name);
        write_pod(out, static_cast<uint64_t>(data->size()));
        out.write(reinterpret_cast<const char*>(data->data()),
                  static_cast<std::streamsize>(data->size() * sizeof(float)));
    }
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("read_checkpoint: cannot open '" + path + "'");
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("checkpoint '" + path + "': bad magic");
    LoadedCheckpoint loaded;
    loaded.meta.format_version = read_pod<uint32_t>(in, path);
    if (loaded.meta.format_version != 1)
        throw DataError("checkpoint '" + path + "': unsupported format version " +
                        std::to_string(loaded.meta.format_version));
    loaded.meta.epoch = read_pod<int32_t>(in, path);
    loaded.meta.dev_loss = read_pod<double>(in, path);
    loaded.meta.dev_eer = read_pod<double>(in, path);
    loaded.meta.rng_state = read_string(in, path);
    loaded.meta.config_json = read_string(in, path);
    const uint64_t n = read_pod<uint64_t>(in, path);
    loaded.blobs.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
        std::string name = read_string(in, path);
        const uint64_t count = read_pod<uint64_t>(in, path);
        std::vector<float> data(count);
        if (count &&
            !in.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(count * sizeof(float))))
            throw DataError("checkpoint '" + path + "': truncated blob '" + name + "'");
        loaded.blobs.emplace_back(std::move(name), std::move(data));
    }
    return loaded;
}

void apply_checkpoint(Network& network, const LoadedCheckpoint& loaded) {
    auto params = network.parameters();
    auto buffers = network.buffers();
    size_t applied = 0;
    for (const auto& [name, data] : loaded.blobs) {
        bool found = false;
        for (auto& p : params) {
            if (p.path != name) continue;
            if (p.tensor.values().size() != data.size())
                throw DataError("checkpoint blob '" + name + "': size " + std::to_string(data.size()) +
                                " vs parameter size " + std::to_string(p.tensor.values().size()));
            p.tensor.values() = data;
            found = true;
            break;
        }
        if (!found) {
            for (auto& b : buffers) {
                if (b.path != name) continue;
                if (b.data->size() != data.size())
                    throw DataError("checkpoint blob '" + name + "': size mismatch for buffer");
                *b.data = data;
                found = true;
                break;
            }
        }
        if (!found) throw DataError("checkpoint blob '" + name + "': no matching parameter in network");
        ++applied;
    }
    if (applied != params.size() + buffers.size())
        throw DataError("checkpoint does not cover every network parameter (" +
                        std::to_string(applied) + " of " +
                        std::to_string(params.size() + buffers.size()) + ")");
}

Network network_from_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
    LoadedCheckpoint loaded = read_checkpoint(path);
    Network net = Network::build(ModelConfig::from_json(loaded.meta.config_json));
    apply_checkpoint(net, loaded);
    if (meta_out) *meta_out = loaded.meta;
    return net;
}

}  // namespace sepsa
