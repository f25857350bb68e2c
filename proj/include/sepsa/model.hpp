#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sepsa/errors.hpp"
#include "sepsa/tensor.hpp"

namespace sepsa {

struct RunConfig;

// Architecture recipe: cardinality C, bottleneck width d, the five stage
// widths, the three-layer stem, depth variant, SE and spatial-dropout knobs.
struct ModelConfig {
    int cardinality = 4;
    int width = 64;  // bottleneck width d: per-branch channels at stage multiplier 1
    int depth = 18;  // 18 | 34 | 50 | 101
    bool use_se = true;
    int se_reduction = 16;
    double dropout = 0.0;
    bool plain_resnet = false;  // requires cardinality == 1
    std::vector<int> stage_widths = {32, 64, 128, 256, 512};
    std::vector<int> stem_filters = {64, 128, 256};
    std::vector<int> stem_kernels = {196, 144, 100};
    std::vector<int> stem_strides = {16, 8, 4};
    int head_hidden = 1000;
    int input_length = 64000;

    void validate() const;
    std::vector<int> stage_repeats() const;
    static ModelConfig from_run_config(const RunConfig& run);
    std::string to_json() const;
    static ModelConfig from_json(const std::string& json_text);
};

// Analytic accounting from layer shapes.
struct LayerPlan {
    std::string path;
    enum class Kind { kConv, kDense, kBatchNorm } kind = Kind::kConv;
    int cin = 0, cout = 0, k = 1, stride = 1, padding = 0, groups = 1;
    long long out_len = 1;  // temporal positions (1 for dense)

    long long flops() const {
        if (kind == Kind::kBatchNorm) return 0;
        return 2LL * k * (cin / groups) * cout * out_len;
    }
    long long params() const {
        if (kind == Kind::kBatchNorm) return 2LL * cout;
        return static_cast<long long>(cout) * (cin / groups) * k + cout;
    }
};

struct NetworkPlan {
    std::vector<LayerPlan> layers;
    long long final_length = 0;  // temporal length entering the head pool
    long long flops() const;
    long long params() const;
};

NetworkPlan build_plan(const ModelConfig& config);
long long count_params(const ModelConfig& config);
long long count_flops(const ModelConfig& config, int input_length = 64000);

// ---------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------
template <typename T>
struct NamedParam {
    std::string path;
    TensorT<T> tensor;
    enum class Kind { kConvWeight, kDenseWeight, kBias, kGamma, kBeta } kind = Kind::kConvWeight;
    int fan_in = 0;
    bool decay = false;  // weight decay applies (conv/dense weights only)
};

template <typename T>
struct NamedBuffer {  // non-trainable state (BN running statistics)
    std::string path;
    std::vector<T>* data = nullptr;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------
template <typename T>
struct Conv1dLayer {
    std::string path;
    TensorT<T> weight, bias;
    int stride = 1, padding = 0, groups = 1;

    Conv1dLayer() = default;
    Conv1dLayer(std::string p, int cin, int cout, int k, int stride_, int padding_, int groups_)
        : path(std::move(p)),
          weight(TensorT<T>::zeros({cout, cin / groups_, k}, true)),
          bias(TensorT<T>::zeros({cout}, true)),
          stride(stride_),
          padding(padding_),
          groups(groups_) {}

    TensorT<T> forward(const TensorT<T>& x) const {
        return conv1d(x, weight, bias, stride, padding, groups);
    }
    void collect(std::vector<NamedParam<T>>& out) {
        const int fan_in = weight.dim(1) * weight.dim(2);
        out.push_back({path + ".weight", weight, NamedParam<T>::Kind::kConvWeight, fan_in, true});
        out.push_back({path + ".bias", bias, NamedParam<T>::Kind::kBias, fan_in, false});
    }
};

template <typename T>
struct BatchNormLayer {
    std::string path;
    TensorT<T> gamma, beta;
    BatchNormRunning<T> running;

    BatchNormLayer() = default;
    BatchNormLayer(std::string p, int channels)
        : path(std::move(p)),
          gamma(TensorT<T>::full({channels}, T(1), true)),
          beta(TensorT<T>::zeros({channels}, true)),
          running(channels) {}

    TensorT<T> forward(const TensorT<T>& x, bool training) {
        return batch_norm1d(x, gamma, beta, &running, training);
    }
    void collect(std::vector<NamedParam<T>>& out) {
        out.push_back({path + ".gamma", gamma, NamedParam<T>::Kind::kGamma, 0, false});
        out.push_back({path + ".beta", beta, NamedParam<T>::Kind::kBeta, 0, false});
    }
    void collect_buffers(std::vector<NamedBuffer<T>>& out) {
        out.push_back({path + ".running_mean", &running.mean});
        out.push_back({path + ".running_var", &running.var});
    }
};

template <typename T>
struct DenseLayer {
    std::string path;
    TensorT<T> weight, bias;

    DenseLayer() = default;
    DenseLayer(std::string p, int din, int dout)
        : path(std::move(p)),
          weight(TensorT<T>::zeros({dout, din}, true)),
          bias(TensorT<T>::zeros({dout}, true)) {}

    TensorT<T> forward(const TensorT<T>& x) const { return dense(x, weight, bias); }
    void collect(std::vector<NamedParam<T>>& out) {
        out.push_back({path + ".weight", weight, NamedParam<T>::Kind::kDenseWeight, weight.dim(1), true});
        out.push_back({path + ".bias", bias, NamedParam<T>::Kind::kBias, weight.dim(1), false});
    }
};

// Squeeze-and-excitation: gate = sigmoid(W2 relu(W1 avg(x))), out = x (.) gate.
template <typename T>
struct SeBlock {
    DenseLayer<T> reduce, expand;

    SeBlock() = default;
    SeBlock(const std::string& p, int channels, int reduction)
        : reduce(p + ".reduce", checked(p, channels, reduction), channels / reduction),
          expand(p + ".expand", channels / reduction, channels) {}

    static int checked(const std::string& p, int channels, int reduction) {
        if (reduction < 1 || channels % reduction != 0)
            throw ConfigError("SE block '" + p + "': reduction " + std::to_string(reduction) +
                              " does not divide channel count " + std::to_string(channels));
        return channels;
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        TensorT<T> squeezed = squeeze_last(global_avg_pool1d(x));
        TensorT<T> gate = sigmoid(expand.forward(relu(reduce.forward(squeezed))));
        return scale_channels(x, gate);
    }
    void collect(std::vector<NamedParam<T>>& out) {
        reduce.collect(out);
        expand.collect(out);
    }
};

// One SE-PSA block. Pre-activation convs; the cardinality-C transform set is
// realized as a grouped conv whose per-group outputs are merged by a
// pointwise conv (the aggregation node); spatial dropout sits right before
// that node; SE scales the aggregated branch before the skip join.
template <typename T>
struct PsaBlock {
    std::string path;
    int cardinality = 1;
    double dropout_rate = 0.0;
    BatchNormLayer<T> bn_a, bn_b, bn_t;
    Conv1dLayer<T> conv_a, conv_b, conv_t, merge;
    std::optional<Conv1dLayer<T>> projection;
    std::optional<SeBlock<T>> se;

    PsaBlock() = default;
    PsaBlock(std::string p, int cin, int width, int branch_width, int cardinality_, int stride,
             bool use_se, int se_reduction, double dropout)
        : path(std::move(p)), cardinality(cardinality_), dropout_rate(dropout) {
        const int grouped_out = cardinality * branch_width;
        bn_a = BatchNormLayer<T>(path + ".bn_a", cin);
        conv_a = Conv1dLayer<T>(path + ".conv_a", cin, width, 3, stride, 1, 1);
        bn_b = BatchNormLayer<T>(path + ".bn_b", width);
        conv_b = Conv1dLayer<T>(path + ".conv_b", width, width, 3, 1, 1, 1);
        bn_t = BatchNormLayer<T>(path + ".bn_t", width);
        conv_t = Conv1dLayer<T>(path + ".conv_t", width, grouped_out, 3, 1, 1, cardinality_);
        merge = Conv1dLayer<T>(path + ".merge", grouped_out, width, 1, 1, 0, 1);
        if (cin != width || stride != 1)
            projection = Conv1dLayer<T>(path + ".proj", cin, width, 1, stride, 0, 1);
        if (use_se) se = SeBlock<T>(path + ".se", width, se_reduction);
    }

    // The split-transform-merge path alone (input already has `width` channels).
    TensorT<T> aggregate(const TensorT<T>& b, bool training, Rng* dropout_rng) {
        TensorT<T> t = conv_t.forward(relu(bn_t.forward(b, training)));
        if (training && dropout_rate > 0.0 && dropout_rng)
            t = spatial_dropout(t, dropout_rate, true, *dropout_rng);
        return merge.forward(t);
    }

    // Everything except the skip join.
    TensorT<T> branch(const TensorT<T>& x, bool training, Rng* dropout_rng) {
        TensorT<T> a = conv_a.forward(relu(bn_a.forward(x, training)));
        TensorT<T> b = conv_b.forward(relu(bn_b.forward(a, training)));
        TensorT<T> agg = aggregate(b, training, dropout_rng);
        if (se) agg = se->forward(agg);
        return agg;
    }

    TensorT<T> forward(const TensorT<T>& x, bool training, Rng* dropout_rng) {
        TensorT<T> agg = branch(x, training, dropout_rng);
        TensorT<T> skip = projection ? projection->forward(x) : x;
        return add(skip, agg);
    }

    void collect(std::vector<NamedParam<T>>& out) {
        bn_a.collect(out);
        conv_a.collect(out);
        bn_b.collect(out);
        conv_b.collect(out);
        bn_t.collect(out);
        conv_t.collect(out);
        merge.collect(out);
        if (projection) projection->collect(out);
        if (se) se->collect(out);
    }
    void collect_buffers(std::vector<NamedBuffer<T>>& out) {
        bn_a.collect_buffers(out);
        bn_b.collect_buffers(out);
        bn_t.collect_buffers(out);
    }
};

// ---------------------------------------------------------------------------
// Full network: stem -> max pool -> five SE-PSA stages -> GMP -> head
// ---------------------------------------------------------------------------
template <typename T>
struct NetworkT {
    ModelConfig config;
    std::vector<BatchNormLayer<T>> stem_bn;
    std::vector<Conv1dLayer<T>> stem_conv;
    std::vector<std::vector<PsaBlock<T>>> stages;
    DenseLayer<T> head_hidden, head_out;

    static NetworkT build(const ModelConfig& config) {
        config.validate();
        NetworkT net;
        net.config = config;
        int channels = 1;
        for (size_t i = 0; i < config.stem_filters.size(); ++i) {
            const std::string p = "stem" + std::to_string(i + 1);
            net.stem_bn.emplace_back(p + ".bn", channels);
            const int k = config.stem_kernels[i];
            net.stem_conv.emplace_back(p + ".conv", channels, config.stem_filters[i], k,
                                       config.stem_strides[i], k / 2, 1);
            channels = config.stem_filters[i];
        }
        const std::vector<int> repeats = config.stage_repeats();
        for (size_t s = 0; s < config.stage_widths.size(); ++s) {
            const int width = config.stage_widths[s];
            const int mult = 1 << s;
            const int branch_width = config.width * mult;
            std::vector<PsaBlock<T>> blocks;
            for (int r = 0; r < repeats[s]; ++r) {
                const std::string p = "stage" + std::to_string(s + 1) + ".block" + std::to_string(r);
                const int stride = (s > 0 && r == 0) ? 2 : 1;
                blocks.emplace_back(p, channels, width, branch_width, config.cardinality, stride,
                                    config.use_se, config.se_reduction, config.dropout);
                channels = width;
            }
            net.stages.push_back(std::move(blocks));
        }
        net.head_hidden = DenseLayer<T>("head.hidden", channels, config.head_hidden);
        net.head_out = DenseLayer<T>("head.out", config.head_hidden, 1);
        return net;
    }

    // Scores in (0, 1): probability that the clip is bonafide.
    TensorT<T> forward(const TensorT<T>& x, bool training, Rng* dropout_rng) {
        TensorT<T> h = x;
        for (size_t i = 0; i < stem_conv.size(); ++i)
            h = stem_conv[i].forward(relu(stem_bn[i].forward(h, training)));
        h = max_pool1d(h, 2, 2);
        for (auto& stage : stages)
            for (auto& block : stage) h = block.forward(h, training, dropout_rng);
        h = squeeze_last(global_max_pool1d(h));
        h = relu(head_hidden.forward(h));
        return sigmoid(head_out.forward(h));
    }

    std::vector<NamedParam<T>> parameters() {
        std::vector<NamedParam<T>> out;
        for (size_t i = 0; i < stem_conv.size(); ++i) {
            stem_bn[i].collect(out);
            stem_conv[i].collect(out);
        }
        for (auto& stage : stages)
            for (auto& block : stage) block.collect(out);
        head_hidden.collect(out);
        head_out.collect(out);
        return out;
    }

    std::vector<NamedBuffer<T>> buffers() {
        std::vector<NamedBuffer<T>> out;
        for (auto& bn : stem_bn) bn.collect_buffers(out);
        for (auto& stage : stages)
            for (auto& block : stage) block.collect_buffers(out);
        return out;
    }

    void zero_grads() {
        for (auto& p : parameters()) p.tensor.zero_grad();
    }
};

using Network = NetworkT<float>;

// Kaiming init: conv/dense weights ~ N(0, 2/fan_in); BN gamma 1, beta 0; all
// biases 0; running stats reset. Deterministic per seed.
template <typename T>
void kaiming_init(NetworkT<T>& network, uint64_t seed) {
    Rng rng(seed);
    for (auto& p : network.parameters()) {
        using Kind = typename NamedParam<T>::Kind;
        switch (p.kind) {
            case Kind::kConvWeight:
            case Kind::kDenseWeight:
                p.tensor.fill_randn(rng, static_cast<T>(std::sqrt(2.0 / p.fan_in)));
                break;
            case Kind::kBias:
            case Kind::kBeta:
                std::fill(p.tensor.values().begin(), p.tensor.values().end(), T(0));
                break;
            case Kind::kGamma:
                std::fill(p.tensor.values().begin(), p.tensor.values().end(), T(1));
                break;
        }
    }
    for (auto& b : network.buffers()) {
        const bool is_var = b.path.ends_with("running_var");
        std::fill(b.data->begin(), b.data->end(), is_var ? T(1) : T(0));
    }
}

struct ScoreOutcome {
    double score = 0.0;
    bool bonafide = false;  // strict: score > 0.5
};

// Requires a preprocessed clip (standardized length).
ScoreOutcome score_waveform(Network& network, const std::vector<float>& samples);

// ---------------------------------------------------------------------------
// Checkpoints: binary container with config echo and blobs keyed by path.
// ---------------------------------------------------------------------------
struct CheckpointMeta {
    int epoch = 0;
    double dev_loss = 0.0;
    double dev_eer = 0.0;
    std::string rng_state;
    std::string config_json;
    uint32_t format_version = 1;
};

void save_checkpoint(const std::string& path, Network& network, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    CheckpointMeta meta;
    std::vector<std::pair<std::string, std::vector<float>>> blobs;
};

LoadedCheckpoint read_checkpoint(const std::string& path);
void apply_checkpoint(Network& network, const LoadedCheckpoint& loaded);
Network network_from_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr);

}  // namespace sepsa
