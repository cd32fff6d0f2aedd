#include <algorithm>
#include <cmath>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "sat/audio.hpp"
#include "sat/error.hpp"

namespace sat {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void MelFrontendConfig::validate() const {
    if (n_mels != 64) throw ArgumentError("n_mels must be 64");
    if (sample_rate_hz != kSampleRateHz) throw ArgumentError("frontend sample rate must be 16000");
    if (hop_samples <= 0 || window_samples <= 0 || hop_samples >= window_samples) {
        throw ArgumentError("frontend requires 0 < hop < window");
    }
    if (fft_size < window_samples || (fft_size & (fft_size - 1)) != 0) {
        throw ArgumentError("fft_size must be a power of two >= window");
    }
    if (!(log_floor > 0.0f)) throw ArgumentError("log_floor must be positive");
    if (!(f_min_hz >= 0.0 && f_max_hz > f_min_hz && f_max_hz <= sample_rate_hz / 2.0)) {
        throw ArgumentError("mel band edges must satisfy 0 <= f_min < f_max <= nyquist");
    }
}

std::int64_t frame_count(std::int64_t n_samples, const MelFrontendConfig& cfg) {
    if (n_samples < cfg.window_samples) return 0;
    return (n_samples - cfg.window_samples) / cfg.hop_samples + 1;
}

MelSpectrogram MelSpectrogram::slice(std::int64_t begin, std::int64_t count) const {
    if (begin < 0 || count < 0 || begin + count > n_frames()) throw ShapeError("mel slice out of range");
    MelSpectrogram out;
    out.frame_rate_hz = frame_rate_hz;
    out.values = Matrix(n_mels(), count);
    for (std::int64_t f = 0; f < n_mels(); ++f) {
        const auto src = values.row(f).subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(count));
        std::copy(src.begin(), src.end(), out.values.row(f).begin());
    }
    return out;
}

NormalizerParams NormalizerParams::identity(int n_mels) {
    NormalizerParams p;
    p.mean.assign(static_cast<std::size_t>(n_mels), 0.0f);
    p.var.assign(static_cast<std::size_t>(n_mels), 1.0f);
    p.gamma.assign(static_cast<std::size_t>(n_mels), 1.0f);
    p.beta.assign(static_cast<std::size_t>(n_mels), 0.0f);
    p.eps = 0.0f;
    return p;
}

bool NormalizerParams::is_identity() const {
    auto all = [](const std::vector<float>& v, float x) {
        return std::all_of(v.begin(), v.end(), [x](float e) { return e == x; });
    };
    return eps == 0.0f && all(mean, 0.0f) && all(var, 1.0f) && all(gamma, 1.0f) && all(beta, 0.0f);
}

void NormalizerParams::validate(std::int64_t n_mels) const {
    const auto n = static_cast<std::size_t>(n_mels);
    if (mean.size() != n || var.size() != n || gamma.size() != n || beta.size() != n) {
        throw ShapeError("normalizer vectors must have one entry per mel bin");
    }
    if (!std::isfinite(eps) || eps < 0.0f) throw ShapeError("normalizer eps must be finite and non-negative");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(mean[i]) || !std::isfinite(var[i]) || !std::isfinite(gamma[i]) ||
            !std::isfinite(beta[i])) {
            throw ShapeError("normalizer parameters must be finite");
        }
        if (!(var[i] + eps > 0.0f)) throw ShapeError("normalizer var + eps must be positive");
    }
}

MelFilterbank::MelFilterbank(const MelFrontendConfig& cfg)
    : n_mels_(cfg.n_mels), n_bins_(cfg.fft_size / 2 + 1),
      weights_(static_cast<std::size_t>(n_mels_ * n_bins_), 0.0f) {
    const double mel_lo = hz_to_mel(cfg.f_min_hz);
    const double mel_hi = hz_to_mel(cfg.f_max_hz);
    std::vector<double> edges(static_cast<std::size_t>(n_mels_ + 2));
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_mels_ + 1));
    }
    for (int m = 0; m < n_mels_; ++m) {
        const double lo = edges[static_cast<std::size_t>(m)];
        const double center = edges[static_cast<std::size_t>(m + 1)];
        const double hi = edges[static_cast<std::size_t>(m + 2)];
        for (int k = 0; k < n_bins_; ++k) {
            const double hz = static_cast<double>(k) * cfg.sample_rate_hz / cfg.fft_size;
            const double rise = (hz - lo) / (center - lo);
            const double fall = (hi - hz) / (hi - center);
            weights_[static_cast<std::size_t>(m * n_bins_ + k)] =
                static_cast<float>(std::max(0.0, std::min(rise, fall)));
        }
    }
}

FrameAnalyzer::FrameAnalyzer(const MelFrontendConfig& cfg)
    : cfg_(cfg), filterbank_((cfg.validate(), cfg)), hann_(static_cast<std::size_t>(cfg.window_samples)),
      frame_(static_cast<std::size_t>(cfg.fft_size), 0.0), power_(static_cast<std::size_t>(cfg.fft_size / 2 + 1)),
      mel_(static_cast<std::size_t>(cfg.n_mels)) {
    // Periodic Hann window.
    for (int n = 0; n < cfg.window_samples; ++n) {
        hann_[static_cast<std::size_t>(n)] =
            0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / cfg.window_samples);
    }
}

void FrameAnalyzer::mel_power(std::span<const float> window, std::span<double> out) {
    if (window.size() != hann_.size() || out.size() != mel_.size()) throw ShapeError("frame size mismatch");
    std::fill(frame_.begin(), frame_.end(), 0.0);
    for (std::size_t n = 0; n < window.size(); ++n) frame_[n] = hann_[n] * window[n];

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    fft.fwd(spectrum_, frame_);

    for (std::size_t k = 0; k < power_.size(); ++k) power_[k] = std::norm(spectrum_[k]);

    for (int m = 0; m < filterbank_.n_mels(); ++m) {
        double acc = 0.0;
        for (int k = 0; k < filterbank_.n_bins(); ++k) {
            const float w = filterbank_.weight(m, k);
            if (w != 0.0f) acc += w * power_[static_cast<std::size_t>(k)];
        }
        out[static_cast<std::size_t>(m)] = acc;
    }
}

void FrameAnalyzer::log_mel(std::span<const float> window, std::span<float> out) {
    mel_power(window, mel_);
    const double floor = cfg_.log_floor;
    for (std::size_t m = 0; m < mel_.size(); ++m) {
        out[m] = static_cast<float>(std::log(std::max(mel_[m], floor)));
    }
}

MelSpectrogram compute_mel(const AudioBuffer& audio, const MelFrontendConfig& cfg) {
    audio.validate();
    cfg.validate();
    const auto n_samples = static_cast<std::int64_t>(audio.samples.size());
    if (n_samples < cfg.window_samples) {
        throw AudioError("audio shorter than one analysis window (" + std::to_string(n_samples) + " < " +
                         std::to_string(cfg.window_samples) + " samples)");
    }
    const std::int64_t n_frames = frame_count(n_samples, cfg);

    FrameAnalyzer analyzer(cfg);
    MelSpectrogram mel;
    mel.frame_rate_hz = cfg.frame_rate_hz();
    mel.values = Matrix(cfg.n_mels, n_frames);
    std::vector<float> column(static_cast<std::size_t>(cfg.n_mels));
    const std::span<const float> samples(audio.samples);
    for (std::int64_t t = 0; t < n_frames; ++t) {
        analyzer.log_mel(samples.subspan(static_cast<std::size_t>(t * cfg.hop_samples),
                                         static_cast<std::size_t>(cfg.window_samples)),
                         column);
        for (int m = 0; m < cfg.n_mels; ++m) mel.values(m, t) = column[static_cast<std::size_t>(m)];
    }
    return mel;
}

MelSpectrogram normalize(const MelSpectrogram& mel, const NormalizerParams& params) {
    params.validate(mel.n_mels());
    MelSpectrogram out = mel;
    for (std::int64_t f = 0; f < mel.n_mels(); ++f) {
        const auto i = static_cast<std::size_t>(f);
        const float scale = params.gamma[i] / std::sqrt(params.var[i] + params.eps);
        for (float& v : out.values.row(f)) v = scale * (v - params.mean[i]) + params.beta[i];
    }
    return out;
}

StreamingMelExtractor::StreamingMelExtractor(const MelFrontendConfig& cfg) : analyzer_(cfg) {}

void StreamingMelExtractor::push(std::span<const float> samples, std::vector<std::vector<float>>& out) {
    const auto& cfg = analyzer_.config();
    for (float s : samples) {
        if (!std::isfinite(s)) throw AudioError("audio contains non-finite samples");
    }
    pending_.insert(pending_.end(), samples.begin(), samples.end());
    samples_seen_ += static_cast<std::int64_t>(samples.size());

    std::size_t offset = 0;
    const auto window = static_cast<std::size_t>(cfg.window_samples);
    const auto hop = static_cast<std::size_t>(cfg.hop_samples);
    while (pending_.size() - offset >= window) {
        std::vector<float> frame(static_cast<std::size_t>(cfg.n_mels));
        analyzer_.log_mel(std::span<const float>(pending_).subspan(offset, window), frame);
        out.push_back(std::move(frame));
        ++frames_emitted_;
        offset += hop;
    }
    pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(offset));
}

} // namespace sat
