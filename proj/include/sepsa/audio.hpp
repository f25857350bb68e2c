#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sepsa/data.hpp"

namespace sepsa {

// Mono waveform in [-1, 1] with label metadata.
struct AudioClip {
    std::vector<float> samples;
    int sample_rate = 16000;
    std::string utt_id;
    enum class Label { kBonafide, kSpoof, kUnknown } label = Label::kUnknown;
    std::string attack_id;  // empty when none
};

// RIFF WAV: PCM16 or IEEE float32, mono or stereo (downmixed by averaging).
AudioClip load_wav(const std::string& path);
void write_wav_pcm16(const std::string& path, const AudioClip& clip);

// Length standardization: keep the first target seconds, repeat-concatenate
// shorter clips, then truncate to exactly round(target_seconds * rate).
AudioClip standardize_length(const AudioClip& clip, double target_seconds = 4.0);

// Per-clip (x - mean) / max(stddev, epsilon) with population stddev.
AudioClip zscore_normalize(const AudioClip& clip, double epsilon = 1e-8);

// Linear-phase windowed-sinc FIR (255 taps, Hamming); length preserved.
AudioClip lowpass_filter(const AudioClip& clip, double cutoff_hz);
AudioClip highpass_filter(const AudioClip& clip, double cutoff_hz);

struct TrimResult {
    AudioClip clip;
    bool all_below_threshold = false;  // whole clip silent: returned unchanged
};
// Drops leading/trailing frames whose RMS is strictly below threshold_db dBFS.
TrimResult trim_silence(const AudioClip& clip, double threshold_db = -40.0, double frame_ms = 20.0);

// Full convolution with the impulse, truncated to the input length and
// peak-normalized to the input's peak.
AudioClip reverberate(const AudioClip& clip, const std::vector<float>& impulse);

// Exponentially decaying noise response (60 dB over decay_seconds) with a
// unit direct path; deterministic per seed.
std::vector<float> synth_room_impulse(double decay_seconds, int sample_rate, uint64_t seed);

// External encoder/decoder command templates with {in}, {out}, {bitrate}
// placeholders. Empty commands mean the codec is unavailable.
struct CodecConfig {
    std::string encode_cmd;
    std::string decode_cmd;
};

struct CodecResult {
    AudioClip clip;
    bool applied = false;
    std::string log;
};
// Encode -> decode round trip at the given bitrate; on any failure the input
// passes through unchanged with applied=false and a log record.
CodecResult codec_compress(const AudioClip& clip, int bitrate_kbps, const CodecConfig& codec,
                           const std::string& work_dir);

struct AugmentationSpec {
    enum class Kind { kMp3, kHighpass, kLowpass, kTrimSilence, kReverb };
    Kind kind = Kind::kLowpass;
    double cutoff_hz = 4000.0;
    int bitrate_kbps = 64;
    double silence_threshold_db = -40.0;
    double reverb_decay_s = 0.3;
    uint64_t seed = 0;

    std::string name() const;
    // "lowpass:4000", "highpass:300", "mp3:64", "trim:-40", "reverb:0.3"
    static AugmentationSpec parse(const std::string& text);
    static std::vector<AugmentationSpec> parse_list(const std::string& csv);
};

struct AugmentResult {
    Manifest manifest;  // originals plus one copy per (clip, spec)
    int skipped = 0;    // codec fallbacks and failed clips
    std::vector<std::string> logs;
};

// Applies every spec to every clip, writing PCM16 copies under out_dir.
// Deterministic per (seed, utt_id, spec index); failing clips are logged and
// skipped, never abort the batch.
AugmentResult augment_pipeline(const Manifest& manifest, const std::vector<AugmentationSpec>& specs,
                               uint64_t seed, const std::string& out_dir,
                               const CodecConfig& codec = {});

}  // namespace sepsa
