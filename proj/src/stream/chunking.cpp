#include <algorithm>
#include <cmath>

#include "sat/error.hpp"
#include "sat/stream.hpp"

namespace sat {

ChunkPlan ChunkPlan::for_delay(double delay_s, const ModelConfig& cfg, double frame_rate_hz) {
    if (!(delay_s > 0.0) || !std::isfinite(delay_s)) throw ArgumentError("delay must be a positive number of seconds");
    ChunkPlan plan;
    plan.delay_s = delay_s;
    plan.stride_frames = static_cast<int>(std::lround(delay_s * frame_rate_hz));
    plan.model_frames = plan.stride_frames / cfg.patch_size * cfg.patch_size;
    if (plan.model_frames < cfg.patch_size) {
        throw ArgumentError("delay " + std::to_string(delay_s) + " s is shorter than one patch column");
    }
    if (plan.model_frames / cfg.patch_size > cfg.max_time_patches) {
        throw ArgumentError("delay " + std::to_string(delay_s) + " s exceeds the position table (" +
                            std::to_string(cfg.max_time_patches * cfg.patch_size) + " frames)");
    }
    return plan;
}

ChunkPlan ChunkPlan::full(const ModelConfig& cfg) {
    ChunkPlan plan;
    plan.stride_frames = cfg.max_time_patches * cfg.patch_size;
    plan.model_frames = plan.stride_frames;
    plan.delay_s = plan.stride_frames / 100.0;
    plan.full_context = true;
    return plan;
}

bool ChunkPlan::is_standard_delay() const {
    return !full_context && (delay_s == 1.0 || delay_s == 2.0);
}

std::vector<ChunkSpan> plan_chunks(std::int64_t n_frames, double duration_s, const ChunkPlan& plan,
                                   const ModelConfig& cfg, double frame_rate_hz) {
    std::vector<ChunkSpan> spans;
    const int p = cfg.patch_size;
    for (std::int64_t begin = 0; begin < n_frames; begin += plan.stride_frames) {
        const auto available = static_cast<int>(std::min<std::int64_t>(plan.stride_frames, n_frames - begin));
        const int frames = std::min(plan.model_frames, available) / p * p;
        if (frames < p) break;
        ChunkSpan span;
        span.begin_frame = begin;
        span.frames = frames;
        span.start_s = static_cast<double>(begin) / frame_rate_hz;
        // Full-width chunks cover a whole stride; a narrowed tail or a padded
        // full-context window ends with the audio.
        const double stride_end = span.start_s + plan.stride_s(frame_rate_hz);
        span.end_s = frames == plan.model_frames && !plan.full_context ? stride_end : std::min(stride_end, duration_s);
        spans.push_back(span);
    }
    return spans;
}

std::vector<float> average_rows(const std::vector<std::vector<float>>& rows) {
    if (rows.empty()) return {};
    std::vector<double> acc(rows.front().size(), 0.0);
    for (const auto& row : rows) {
        if (row.size() != acc.size()) throw ShapeError("score rows differ in length");
        for (std::size_t c = 0; c < row.size(); ++c) acc[c] += row[c];
    }
    std::vector<float> mean(acc.size());
    for (std::size_t c = 0; c < acc.size(); ++c) mean[c] = static_cast<float>(acc[c] / static_cast<double>(rows.size()));
    return mean;
}

namespace {

ClipScores run_chunks(const ModelConfig& cfg, const WeightSet& w, const AudioBuffer& audio, const ChunkPlan& plan,
                      bool use_cache) {
    audio.validate();
    const MelFrontendConfig frontend;
    const double duration = audio.duration_s();

    MelSpectrogram mel;
    const std::int64_t needed =
        static_cast<std::int64_t>(plan.model_frames - 1) * frontend.hop_samples + frontend.window_samples;
    if (plan.full_context && static_cast<std::int64_t>(audio.samples.size()) < needed) {
        AudioBuffer padded = audio;
        padded.samples.resize(static_cast<std::size_t>(needed), 0.0f);
        mel = compute_mel(padded, frontend);
    } else {
        if (static_cast<std::int64_t>(audio.samples.size()) < needed) {
            throw AudioError("audio (" + std::to_string(duration) + " s) is shorter than one chunk of " +
                             std::to_string(plan.model_frames) + " frames");
        }
        mel = compute_mel(audio, frontend);
    }

    ClipScores clip;
    clip.spans = plan_chunks(mel.n_frames(), duration, plan, cfg, mel.frame_rate_hz);
    StreamState state(cfg, plan);
    for (const ChunkSpan& span : clip.spans) {
        if (!use_cache) state.reset();
        const MelSpectrogram chunk = mel.slice(span.begin_frame, span.frames);
        clip.rows.push_back(process_chunk(state, w, chunk));
        clip.tokens.push_back(span.frames / cfg.patch_size * cfg.n_freq_patches());
    }
    clip.averaged = average_rows(clip.rows);
    return clip;
}

} // namespace

ClipScores run_clip(const ModelConfig& cfg, const WeightSet& w, const AudioBuffer& audio, const ChunkPlan& plan) {
    return run_chunks(cfg, w, audio, plan, true);
}

ClipScores run_clip(const ModelConfig& cfg, const WeightSet& w, const AudioBuffer& audio, double delay_s) {
    return run_chunks(cfg, w, audio, ChunkPlan::for_delay(delay_s, cfg), true);
}

ClipScores run_clip_stateless(const ModelConfig& cfg, const WeightSet& w, const AudioBuffer& audio,
                              const ChunkPlan& plan) {
    return run_chunks(cfg, w, audio, plan, false);
}

ClipScores run_clip_stateless(const ModelConfig& cfg, const WeightSet& w, const AudioBuffer& audio,
                              double delay_s) {
    return run_chunks(cfg, w, audio, ChunkPlan::for_delay(delay_s, cfg), false);
}

} // namespace sat
