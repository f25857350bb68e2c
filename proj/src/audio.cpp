#include "sepsa/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "sepsa/dsp.hpp"
#include "sepsa/errors.hpp"
#include "sepsa/rng.hpp"

namespace fs = std::filesystem;

namespace sepsa {

namespace dsp {

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw ContractError("fft_radix2: size must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * 3.14159265358979323846 / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= static_cast<double>(n);
}

std::vector<double> fft_convolve(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) return {};
    const size_t out_len = a.size() + b.size() - 1;
    size_t n = 1;
    while (n < out_len) n <<= 1;
    std::vector<std::complex<double>> fa(n), fb(n);
    for (size_t i = 0; i < a.size(); ++i) fa[i] = a[i];
    for (size_t i = 0; i < b.size(); ++i) fb[i] = b[i];
    fft_radix2(fa, false);
    fft_radix2(fb, false);
    for (size_t i = 0; i < n; ++i) fa[i] *= fb[i];
    fft_radix2(fa, true);
    std::vector<double> out(out_len);
    for (size_t i = 0; i < out_len; ++i) out[i] = fa[i].real();
    return out;
}

double tone_power(const std::vector<float>& samples, double freq_hz, int sample_rate) {
    // Goertzel recurrence; returns mean-square power of the bin at freq_hz.
    const size_t n = samples.size();
    if (n == 0) return 0.0;
    const double w = 2.0 * 3.14159265358979323846 * freq_hz / sample_rate;
    const double coeff = 2.0 * std::cos(w);
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (size_t i = 0; i < n; ++i) {
        s0 = samples[i] + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    const double power = s1 * s1 + s2 * s2 - coeff * s1 * s2;
    return 2.0 * power / (static_cast<double>(n) * static_cast<double>(n));
}

namespace {
std::vector<std::complex<double>> padded_spectrum(const std::vector<float>& samples) {
    size_t n = 1;
    while (n < samples.size()) n <<= 1;
    std::vector<std::complex<double>> a(n);
    for (size_t i = 0; i < samples.size(); ++i) a[i] = samples[i];
    fft_radix2(a, false);
    return a;
}
}  // namespace

std::vector<double> band_energies(const std::vector<float>& samples, int sample_rate, int n_bands) {
    auto spec = padded_spectrum(samples);
    const size_t n = spec.size();
    std::vector<double> bands(static_cast<size_t>(n_bands), 0.0);
    const double nyquist = sample_rate / 2.0;
    for (size_t k = 1; k <= n / 2; ++k) {
        const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n);
        int b = static_cast<int>(f / nyquist * n_bands);
        b = std::min(b, n_bands - 1);
        bands[static_cast<size_t>(b)] += std::norm(spec[k]);
    }
    return bands;
}

double spectral_centroid(const std::vector<float>& samples, int sample_rate) {
    auto spec = padded_spectrum(samples);
    const size_t n = spec.size();
    double num = 0.0, den = 0.0;
    for (size_t k = 1; k <= n / 2; ++k) {
        const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n);
        const double p = std::norm(spec[k]);
        num += f * p;
        den += p;
    }
    return den > 0.0 ? num / den : 0.0;
}

}  // namespace dsp

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------
namespace {

uint32_t read_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
           static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}
uint16_t read_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | p[1] << 8);
}

void append_u32(std::string& s, uint32_t v) {
    s.push_back(static_cast<char>(v & 0xFF));
    s.push_back(static_cast<char>((v >> 8) & 0xFF));
    s.push_back(static_cast<char>((v >> 16) & 0xFF));
    s.push_back(static_cast<char>((v >> 24) & 0xFF));
}
void append_u16(std::string& s, uint16_t v) {
    s.push_back(static_cast<char>(v & 0xFF));
    s.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

AudioClip load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_wav: cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw DataError("load_wav: '" + path + "' is not a RIFF/WAVE file");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    size_t data_off = 0, data_len = 0;
    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const uint32_t chunk_len = read_u32(bytes.data() + pos + 4);
        const size_t body = pos + 8;
        if (body + chunk_len > bytes.size())
            throw DataError("load_wav: truncated chunk in '" + path + "'");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (chunk_len < 16) throw DataError("load_wav: malformed fmt chunk in '" + path + "'");
            format = read_u16(bytes.data() + body);
            channels = read_u16(bytes.data() + body + 2);
            rate = read_u32(bytes.data() + body + 4);
            bits = read_u16(bytes.data() + body + 14);
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = body;
            data_len = chunk_len;
        }
        pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
    }
    if (rate == 0 || data_off == 0)
        throw DataError("load_wav: missing fmt/data chunk in '" + path + "'");
    if (channels < 1 || channels > 2)
        throw DataError("load_wav: unsupported channel count " + std::to_string(channels) + " in '" +
                        path + "'");
    const bool pcm16 = (format == 1 && bits == 16);
    const bool f32 = (format == 3 && bits == 32);
    if (!pcm16 && !f32)
        throw DataError("load_wav: unsupported format (codec " + std::to_string(format) + ", " +
                        std::to_string(bits) + "-bit) in '" + path + "'");

    const size_t bytes_per = pcm16 ? 2 : 4;
    const size_t frame_bytes = bytes_per * channels;
    const size_t frames = data_len / frame_bytes;
    if (frames == 0) throw DataError("load_wav: empty data chunk in '" + path + "'");

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    clip.samples.resize(frames);
    for (size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            const unsigned char* p = bytes.data() + data_off + i * frame_bytes + c * bytes_per;
            if (pcm16) {
                const int16_t v = static_cast<int16_t>(p[0] | p[1] << 8);
                acc += v / 32768.0;
            } else {
                float v;
                std::memcpy(&v, p, 4);
                acc += v;
            }
        }
        clip.samples[i] = static_cast<float>(acc / channels);
    }
    return clip;
}

void write_wav_pcm16(const std::string& path, const AudioClip& clip) {
    const uint32_t n = static_cast<uint32_t>(clip.samples.size());
    std::string out;
    out.reserve(44 + 2 * n);
    out += "RIFF";
    append_u32(out, 36 + 2 * n);
    out += "WAVE";
    out += "fmt ";
    append_u32(out, 16);
    append_u16(out, 1);  // PCM
    append_u16(out, 1);  // mono
    append_u32(out, static_cast<uint32_t>(clip.sample_rate));
    append_u32(out, static_cast<uint32_t>(clip.sample_rate) * 2);
    append_u16(out, 2);
    append_u16(out, 16);
    out += "data";
    append_u32(out, 2 * n);
    for (const float v : clip.samples) {
        // Symmetric with the loader's /32768 scaling; +1.0 saturates to 32767.
        const long long q = std::llround(std::clamp(static_cast<double>(v), -1.0, 1.0) * 32768.0);
        append_u16(out, static_cast<uint16_t>(static_cast<int16_t>(std::clamp(q, -32768LL, 32767LL))));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("write_wav_pcm16: cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------
AudioClip standardize_length(const AudioClip& clip, double target_seconds) {
    if (clip.samples.empty()) throw ContractError("standardize_length: empty clip");
    const size_t target = static_cast<size_t>(std::llround(target_seconds * clip.sample_rate));
    AudioClip out = clip;
    if (clip.samples.size() >= target) {
        out.samples.assign(clip.samples.begin(), clip.samples.begin() + static_cast<long>(target));
    } else {
        out.samples.resize(target);
        for (size_t i = 0; i < target; ++i) out.samples[i] = clip.samples[i % clip.samples.size()];
    }
    return out;
}

AudioClip zscore_normalize(const AudioClip& clip, double epsilon) {
    AudioClip out = clip;
    const size_t n = clip.samples.size();
    if (n == 0) return out;
    double mean = 0.0;
    for (const float v : clip.samples) mean += v;
    mean /= static_cast<double>(n);
    double sq = 0.0;
    for (const float v : clip.samples) {
        const double d = v - mean;
        sq += d * d;
    }
    const double sigma = std::sqrt(sq / static_cast<double>(n));
    const double denom = std::max(sigma, epsilon);
    for (size_t i = 0; i < n; ++i)
        out.samples[i] = static_cast<float>((clip.samples[i] - mean) / denom);
    return out;
}

// ---------------------------------------------------------------------------
// FIR filters: 255-tap windowed sinc (Hamming), group delay compensated.
// ---------------------------------------------------------------------------
namespace {

constexpr int kFirTaps = 255;

std::vector<double> design_lowpass(double cutoff_hz, int sample_rate) {
    const double fc = cutoff_hz / sample_rate;
    const int center = (kFirTaps - 1) / 2;
    std::vector<double> h(kFirTaps);
    double sum = 0.0;
    for (int i = 0; i < kFirTaps; ++i) {
        const double x = i - center;
        const double sinc = x == 0.0 ? 2.0 * fc
                                     : std::sin(2.0 * 3.14159265358979323846 * fc * x) /
                                           (3.14159265358979323846 * x);
        const double window = 0.54 - 0.46 * std::cos(2.0 * 3.14159265358979323846 * i / (kFirTaps - 1));
        h[static_cast<size_t>(i)] = sinc * window;
        sum += h[static_cast<size_t>(i)];
    }
    for (auto& v : h) v /= sum;  // unity DC gain
    return h;
}

AudioClip apply_fir(const AudioClip& clip, const std::vector<double>& h) {
    const int center = (static_cast<int>(h.size()) - 1) / 2;
    const int n = static_cast<int>(clip.samples.size());
    AudioClip out = clip;
    for (int t = 0; t < n; ++t) {
        double acc = 0.0;
        for (int j = 0; j < static_cast<int>(h.size()); ++j) {
            const int pos = t + center - j;
            if (pos < 0 || pos >= n) continue;  // zero padding
            acc += h[static_cast<size_t>(j)] * clip.samples[static_cast<size_t>(pos)];
        }
        out.samples[static_cast<size_t>(t)] = static_cast<float>(acc);
    }
    return out;
}

void check_cutoff(double cutoff_hz, int sample_rate, const char* op) {
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate / 2.0))
        throw ConfigError(std::string(op) + ": cutoff " + std::to_string(cutoff_hz) +
                          " Hz outside (0, " + std::to_string(sample_rate / 2.0) + ")");
}

}  // namespace

AudioClip lowpass_filter(const AudioClip& clip, double cutoff_hz) {
    check_cutoff(cutoff_hz, clip.sample_rate, "lowpass_filter");
    return apply_fir(clip, design_lowpass(cutoff_hz, clip.sample_rate));
}

AudioClip highpass_filter(const AudioClip& clip, double cutoff_hz) {
    check_cutoff(cutoff_hz, clip.sample_rate, "highpass_filter");
    std::vector<double> h = design_lowpass(cutoff_hz, clip.sample_rate);
    for (auto& v : h) v = -v;
    h[(kFirTaps - 1) / 2] += 1.0;  // spectral inversion
    return apply_fir(clip, h);
}

// ---------------------------------------------------------------------------
// Silence trimming
// ---------------------------------------------------------------------------
TrimResult trim_silence(const AudioClip& clip, double threshold_db, double frame_ms) {
    if (threshold_db >= 0.0)
        throw ConfigError("trim_silence: threshold must be negative dBFS, got " +
                          std::to_string(threshold_db));
    const size_t frame = std::max<size_t>(
        1, static_cast<size_t>(std::llround(frame_ms * clip.sample_rate / 1000.0)));
    const size_t n = clip.samples.size();
    const size_t n_frames = (n + frame - 1) / frame;

    auto frame_is_silent = [&](size_t f) {
        const size_t begin = f * frame;
        const size_t end = std::min(n, begin + frame);
        double sq = 0.0;
        for (size_t i = begin; i < end; ++i)
            sq += static_cast<double>(clip.samples[i]) * clip.samples[i];
        const double rms = std::sqrt(sq / static_cast<double>(end - begin));
        if (rms == 0.0) return true;
        return 20.0 * std::log10(rms) < threshold_db;  // strict: exactly at threshold is kept
    };

    size_t first = 0;
    while (first < n_frames && frame_is_silent(first)) ++first;
    if (first == n_frames) {
        TrimResult r;
        r.clip = clip;
        r.all_below_threshold = true;
        return r;
    }
    size_t last = n_frames - 1;
    while (last > first && frame_is_silent(last)) --last;

    TrimResult r;
    r.clip = clip;
    const size_t begin = first * frame;
    const size_t end = std::min(n, (last + 1) * frame);
    r.clip.samples.assign(clip.samples.begin() + static_cast<long>(begin),
                          clip.samples.begin() + static_cast<long>(end));
    return r;
}

// ---------------------------------------------------------------------------
// Reverberation
// ---------------------------------------------------------------------------
AudioClip reverberate(const AudioClip& clip, const std::vector<float>& impulse) {
    if (impulse.empty()) throw ConfigError("reverberate: empty impulse response");
    std::vector<double> x(clip.samples.begin(), clip.samples.end());
    std::vector<double> h(impulse.begin(), impulse.end());
    std::vector<double> y = dsp::fft_convolve(x, h);

    AudioClip out = clip;
    double peak_in = 0.0;
    for (const float v : clip.samples) peak_in = std::max(peak_in, std::abs(static_cast<double>(v)));
    double peak_out = 0.0;
    for (size_t i = 0; i < clip.samples.size(); ++i) peak_out = std::max(peak_out, std::abs(y[i]));
    const double scale = peak_out > 0.0 ? peak_in / peak_out : 1.0;
    for (size_t i = 0; i < clip.samples.size(); ++i)
        out.samples[i] = static_cast<float>(y[i] * scale);
    return out;
}

std::vector<float> synth_room_impulse(double decay_seconds, int sample_rate, uint64_t seed) {
    if (decay_seconds <= 0.0)
        throw ConfigError("synth_room_impulse: decay must be positive, got " +
                          std::to_string(decay_seconds));
    const size_t len = std::max<size_t>(2, static_cast<size_t>(std::llround(decay_seconds * sample_rate)));
    Rng rng(seed);
    std::vector<float> ir(len);
    ir[0] = 1.0f;  // direct path
    for (size_t i = 1; i < len; ++i) {
        const double env = std::pow(10.0, -3.0 * static_cast<double>(i) /
                                              (decay_seconds * sample_rate));  // -60 dB over decay
        ir[i] = static_cast<float>(0.25 * rng.normal() * env);
    }
    return ir;
}

// ---------------------------------------------------------------------------
// External codec round trip
// ---------------------------------------------------------------------------
namespace {

std::string substitute(std::string tpl, const std::string& key, const std::string& value) {
    size_t pos;
    while ((pos = tpl.find(key)) != std::string::npos) tpl.replace(pos, key.size(), value);
    return tpl;
}

}  // namespace

CodecResult codec_compress(const AudioClip& clip, int bitrate_kbps, const CodecConfig& codec,
                           const std::string& work_dir) {
    CodecResult result;
    result.clip = clip;
    if (codec.encode_cmd.empty() || codec.decode_cmd.empty()) {
        result.log = "codec unavailable: no encoder/decoder configured; clip '" + clip.utt_id +
                     "' passed through";
        return result;
    }
    fs::create_directories(work_dir);
    const std::string base = work_dir + "/codec_" + (clip.utt_id.empty() ? "clip" : clip.utt_id);
    const std::string in_path = base + "_in.wav";
    const std::string mid_path = base + "_enc.bin";
    const std::string out_path = base + "_out.wav";

    auto cleanup = [&] {
        std::error_code ec;
        fs::remove(in_path, ec);
        fs::remove(mid_path, ec);
        fs::remove(out_path, ec);
    };

    write_wav_pcm16(in_path, clip);
    const std::string bitrate = std::to_string(bitrate_kbps);
    std::string enc = substitute(substitute(substitute(codec.encode_cmd, "{in}", in_path), "{out}",
                                            mid_path),
                                 "{bitrate}", bitrate);
    std::string dec = substitute(substitute(substitute(codec.decode_cmd, "{in}", mid_path), "{out}",
                                            out_path),
                                 "{bitrate}", bitrate);
    if (std::system(enc.c_str()) != 0 || std::system(dec.c_str()) != 0 || !fs::exists(out_path)) {
        result.log = "codec command failed for clip '" + clip.utt_id + "'; clip passed through";
        cleanup();
        return result;
    }
    AudioClip decoded;
    try {
        decoded = load_wav(out_path);
    } catch (const DataError& e) {
        result.log = std::string("codec produced unreadable output: ") + e.what();
        cleanup();
        return result;
    }
    cleanup();
    if (decoded.sample_rate != clip.sample_rate) {
        result.log = "codec changed sample rate for clip '" + clip.utt_id + "'; clip passed through";
        return result;
    }
    decoded.samples.resize(clip.samples.size(), 0.0f);  // truncate/pad back to input length
    result.clip = clip;
    result.clip.samples = std::move(decoded.samples);
    result.applied = true;
    return result;
}

// ---------------------------------------------------------------------------
// Augmentation specs and pipeline
// ---------------------------------------------------------------------------
std::string AugmentationSpec::name() const {
    switch (kind) {
        case Kind::kMp3: return "mp3";
        case Kind::kHighpass: return "highpass";
        case Kind::kLowpass: return "lowpass";
        case Kind::kTrimSilence: return "trim";
        case Kind::kReverb: return "reverb";
    }
    return "unknown";
}

AugmentationSpec AugmentationSpec::parse(const std::string& text) {
    const size_t colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    AugmentationSpec spec;
    try {
        if (kind == "mp3") {
            spec.kind = Kind::kMp3;
            if (!arg.empty()) spec.bitrate_kbps = std::stoi(arg);
            if (spec.bitrate_kbps <= 0) throw ConfigError("augmentation mp3: bitrate must be positive");
        } else if (kind == "highpass" || kind == "lowpass") {
            spec.kind = kind == "highpass" ? Kind::kHighpass : Kind::kLowpass;
            if (!arg.empty()) spec.cutoff_hz = std::stod(arg);
            else spec.cutoff_hz = spec.kind == Kind::kHighpass ? 300.0 : 4000.0;
        } else if (kind == "trim") {
            spec.kind = Kind::kTrimSilence;
            if (!arg.empty()) spec.silence_threshold_db = std::stod(arg);
            if (spec.silence_threshold_db >= 0.0)
                throw ConfigError("augmentation trim: threshold must be negative dBFS");
        } else if (kind == "reverb") {
            spec.kind = Kind::kReverb;
            if (!arg.empty()) spec.reverb_decay_s = std::stod(arg);
            if (spec.reverb_decay_s <= 0.0)
                throw ConfigError("augmentation reverb: decay must be positive");
        } else {
            throw ConfigError("unknown augmentation kind '" + kind + "'");
        }
    } catch (const std::invalid_argument&) {
        throw ConfigError("augmentation '" + text + "': malformed parameter");
    }
    return spec;
}

std::vector<AugmentationSpec> AugmentationSpec::parse_list(const std::string& csv) {
    std::vector<AugmentationSpec> specs;
    size_t start = 0;
    while (start <= csv.size()) {
        size_t end = csv.find(',', start);
        if (end == std::string::npos) end = csv.size();
        const std::string item = csv.substr(start, end - start);
        if (!item.empty()) specs.push_back(parse(item));
        start = end + 1;
    }
    return specs;
}

namespace {

AudioClip apply_spec(const AudioClip& clip, const AugmentationSpec& spec, uint64_t seed,
                     const CodecConfig& codec, const std::string& work_dir, bool* skipped,
                     std::vector<std::string>* logs) {
    switch (spec.kind) {
        case AugmentationSpec::Kind::kHighpass:
            return highpass_filter(clip, spec.cutoff_hz);
        case AugmentationSpec::Kind::kLowpass:
            return lowpass_filter(clip, spec.cutoff_hz);
        case AugmentationSpec::Kind::kTrimSilence: {
            TrimResult r = trim_silence(clip, spec.silence_threshold_db);
            if (r.all_below_threshold && logs)
                logs->push_back("trim: clip '" + clip.utt_id + "' entirely below threshold; kept unchanged");
            return r.clip;
        }
        case AugmentationSpec::Kind::kReverb: {
            const auto ir = synth_room_impulse(spec.reverb_decay_s, clip.sample_rate, seed);
            return reverberate(clip, ir);
        }
        case AugmentationSpec::Kind::kMp3: {
            CodecResult r = codec_compress(clip, spec.bitrate_kbps, codec, work_dir);
            if (!r.applied) {
                if (skipped) *skipped = true;
                if (logs) logs->push_back(r.log);
            }
            return r.clip;
        }
    }
    throw ConfigError("apply_spec: unhandled augmentation kind");
}

}  // namespace

AugmentResult augment_pipeline(const Manifest& manifest, const std::vector<AugmentationSpec>& specs,
                               uint64_t seed, const std::string& out_dir, const CodecConfig& codec) {
    if (specs.empty()) throw ConfigError("augment_pipeline: no augmentation specs given");
    fs::create_directories(out_dir);
    AugmentResult result;
    result.manifest.base_dir = out_dir;

    for (const auto& entry : manifest.entries) {
        AudioClip clip;
        try {
            clip = load_wav(manifest.resolve_path(entry));
        } catch (const DataError& e) {
            result.logs.push_back(std::string("skipping clip '") + entry.utt_id + "': " + e.what());
            ++result.skipped;
            continue;
        }
        clip.utt_id = entry.utt_id;

        // Original, referenced at its source location.
        TrialEntry original = entry;
        original.path = fs::relative(fs::absolute(manifest.resolve_path(entry)), fs::absolute(out_dir))
                            .string();
        result.manifest.entries.push_back(original);

        for (size_t i = 0; i < specs.size(); ++i) {
            const uint64_t clip_seed =
                Rng::mix(Rng::mix(seed, Rng::hash_str(entry.utt_id)), specs[i].seed + i);
            bool skipped = false;
            AudioClip augmented;
            try {
                augmented = apply_spec(clip, specs[i], clip_seed, codec, out_dir, &skipped, &result.logs);
            } catch (const std::exception& e) {
                result.logs.push_back("augmentation '" + specs[i].name() + "' failed for clip '" +
                                      entry.utt_id + "': " + e.what());
                ++result.skipped;
                continue;
            }
            if (skipped) ++result.skipped;

            TrialEntry copy = entry;
            copy.utt_id = entry.utt_id + "_aug" + std::to_string(i) + "_" + specs[i].name();
            copy.path = copy.utt_id + ".wav";
            augmented.utt_id = copy.utt_id;
            write_wav_pcm16(out_dir + "/" + copy.path, augmented);
            result.manifest.entries.push_back(copy);
        }
    }
    return result;
}

}  // namespace sepsa
