#include <algorithm>

#include "sat/error.hpp"
#include "sat/stream.hpp"

namespace sat {

StreamingTagger::StreamingTagger(const ModelConfig& cfg, const WeightSet& w, const ChunkPlan& plan, bool use_cache,
                                 const MelFrontendConfig& frontend)
    : cfg_(cfg), weights_(w), plan_(plan), use_cache_(use_cache), frontend_(frontend), mel_(frontend),
      state_(cfg, plan) {}

double StreamingTagger::seconds_seen() const {
    return static_cast<double>(mel_.samples_seen()) / frontend_.sample_rate_hz;
}

void StreamingTagger::push(std::span<const float> samples, std::vector<ChunkResult>& out) {
    if (finished_) throw ArgumentError("push after finish");
    std::vector<std::vector<float>> fresh;
    mel_.push(samples, fresh);
    for (auto& frame : fresh) {
        if (skip_frames_ > 0) {
            --skip_frames_;
            continue;
        }
        frames_.push_back(std::move(frame));
        if (static_cast<int>(frames_.size()) == plan_.model_frames) emit(plan_.model_frames, out);
    }
}

void StreamingTagger::finish(std::vector<ChunkResult>& out) {
    if (finished_) return;
    if (plan_.full_context && chunk_index_ == 0) {
        // Short clip in full-context mode: pad with silence up to one window.
        const std::int64_t needed =
            static_cast<std::int64_t>(plan_.model_frames - 1) * frontend_.hop_samples + frontend_.window_samples;
        const std::int64_t seen = mel_.samples_seen();
        if (seen < needed) {
            const std::vector<float> zeros(static_cast<std::size_t>(needed - seen), 0.0f);
            std::vector<std::vector<float>> fresh;
            mel_.push(zeros, fresh);
            for (auto& frame : fresh) frames_.push_back(std::move(frame));
            padded_seconds_ = static_cast<double>(needed - seen) / frontend_.sample_rate_hz;
        }
    }
    finished_ = true;
    const int available = static_cast<int>(std::min<std::size_t>(frames_.size(), plan_.model_frames));
    const int frames = available / cfg_.patch_size * cfg_.patch_size;
    if (frames >= cfg_.patch_size) emit(frames, out);
}

void StreamingTagger::emit(int frames, std::vector<ChunkResult>& out) {
    MelSpectrogram chunk;
    chunk.frame_rate_hz = frontend_.frame_rate_hz();
    chunk.values = Matrix(frontend_.n_mels, frames);
    for (int t = 0; t < frames; ++t) {
        const auto& col = frames_[static_cast<std::size_t>(t)];
        for (int m = 0; m < frontend_.n_mels; ++m) chunk.values(m, t) = col[static_cast<std::size_t>(m)];
    }

    ChunkResult result;
    result.index = chunk_index_;
    result.span.begin_frame = chunk_index_ * plan_.stride_frames;
    result.span.frames = frames;
    result.span.start_s = static_cast<double>(result.span.begin_frame) / frontend_.frame_rate_hz();
    const double stride_s = plan_.stride_s(frontend_.frame_rate_hz());
    result.span.end_s = frames == plan_.model_frames && !plan_.full_context
                            ? result.span.start_s + stride_s
                            : std::min(result.span.start_s + stride_s, seconds_seen() - padded_seconds_);
    result.tokens = frames / cfg_.patch_size * cfg_.n_freq_patches();

    if (!use_cache_) state_.reset();
    result.scores = process_chunk(state_, weights_, chunk);
    out.push_back(std::move(result));

    const auto consumed = std::min<std::size_t>(frames_.size(), static_cast<std::size_t>(plan_.stride_frames));
    frames_.erase(frames_.begin(), frames_.begin() + static_cast<std::ptrdiff_t>(consumed));
    skip_frames_ = plan_.stride_frames - static_cast<std::int64_t>(consumed);
    ++chunk_index_;
}

} // namespace sat
