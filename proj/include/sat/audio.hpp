#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <vector>

#include "sat/matrix.hpp"

namespace sat {

inline constexpr int kSampleRateHz = 16000;

// Mono PCM audio, samples in [-1, 1].
struct AudioBuffer {
    std::vector<float> samples;
    int sample_rate_hz = kSampleRateHz;
    int channel_count = 1;

    double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }

    // Throws AudioError unless the buffer is 16 kHz mono with finite samples.
    void validate() const;
};

enum class WavEncoding { Pcm16, Float32 };

// Reads a RIFF/WAVE file holding 16-bit integer or 32-bit float PCM. Anything
// other than 16 kHz mono is rejected; there is no resampler.
AudioBuffer load_wav(const std::filesystem::path& path);
AudioBuffer parse_wav(std::span<const std::uint8_t> bytes);

void save_wav(const std::filesystem::path& path, const AudioBuffer& audio,
              WavEncoding encoding = WavEncoding::Pcm16);
std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio, WavEncoding encoding = WavEncoding::Pcm16,
                                     int channel_count = 1, int sample_rate_hz = kSampleRateHz);

// Headerless little-endian float32 mono 16 kHz, read until EOF.
AudioBuffer read_raw_f32(std::istream& in);

struct MelFrontendConfig {
    int n_mels = 64;
    int sample_rate_hz = kSampleRateHz;
    int window_samples = 512; // 32 ms
    int hop_samples = 160;    // 10 ms
    int fft_size = 512;
    double f_min_hz = 0.0;
    double f_max_hz = 8000.0;
    float log_floor = 1e-10f;

    double frame_rate_hz() const { return static_cast<double>(sample_rate_hz) / hop_samples; }
    void validate() const;
};

// Number of frames produced for n_samples without center padding; 0 when the
// signal is shorter than one window.
std::int64_t frame_count(std::int64_t n_samples, const MelFrontendConfig& cfg = {});

// Log-mel spectrogram, n_mels rows by n_frames columns.
struct MelSpectrogram {
    Matrix values;
    double frame_rate_hz = 100.0;

    std::int64_t n_mels() const { return values.rows(); }
    std::int64_t n_frames() const { return values.cols(); }

    // Columns [begin, begin + count).
    MelSpectrogram slice(std::int64_t begin, std::int64_t count) const;
};

// Inference-mode batch norm applied independently to each mel bin.
struct NormalizerParams {
    std::vector<float> mean;
    std::vector<float> var;
    std::vector<float> gamma;
    std::vector<float> beta;
    float eps = 1e-5f;

    static NormalizerParams identity(int n_mels = 64);
    bool is_identity() const;
    void validate(std::int64_t n_mels) const;
};

// HTK-style triangular mel filters over the one-sided power spectrum.
class MelFilterbank {
public:
    explicit MelFilterbank(const MelFrontendConfig& cfg);

    int n_mels() const { return n_mels_; }
    int n_bins() const { return n_bins_; }
    float weight(int mel, int bin) const { return weights_[static_cast<std::size_t>(mel * n_bins_ + bin)]; }

private:
    int n_mels_ = 0;
    int n_bins_ = 0;
    std::vector<float> weights_;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Turns windows of raw samples into mel power vectors. One instance per
// thread; the FFT object keeps scratch state.
class FrameAnalyzer {
public:
    explicit FrameAnalyzer(const MelFrontendConfig& cfg);

    // window.size() must equal cfg.window_samples. Writes n_mels pre-log powers.
    void mel_power(std::span<const float> window, std::span<double> out);
    // Same, followed by log(max(power, log_floor)).
    void log_mel(std::span<const float> window, std::span<float> out);

    const MelFrontendConfig& config() const { return cfg_; }

private:
    MelFrontendConfig cfg_;
    MelFilterbank filterbank_;
    std::vector<double> hann_;
    std::vector<double> frame_;
    std::vector<std::complex<double>> spectrum_;
    std::vector<double> power_;
    std::vector<double> mel_;
};

MelSpectrogram compute_mel(const AudioBuffer& audio, const MelFrontendConfig& cfg = {});

// out[f,t] = gamma[f] * (in[f,t] - mean[f]) / sqrt(var[f] + eps) + beta[f]
MelSpectrogram normalize(const MelSpectrogram& mel, const NormalizerParams& params);

// Incremental frontend. Produces exactly the frames compute_mel would produce
// for the concatenation of every pushed block.
class StreamingMelExtractor {
public:
    explicit StreamingMelExtractor(const MelFrontendConfig& cfg = {});

    // Appends the new log-mel frames (one vector of n_mels per frame) to out.
    void push(std::span<const float> samples, std::vector<std::vector<float>>& out);

    std::int64_t samples_seen() const { return samples_seen_; }
    std::int64_t frames_emitted() const { return frames_emitted_; }

private:
    FrameAnalyzer analyzer_;
    std::vector<float> pending_;
    std::int64_t samples_seen_ = 0;
    std::int64_t frames_emitted_ = 0;
};

} // namespace sat
