#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "sat/audio.hpp"
#include "sat/model.hpp"

namespace sat {

// How a long spectrogram is cut into model chunks.
//
// Chunks start every `stride_frames` frames (delay seconds at 100 frames/s).
// The model consumes the first `model_frames` of each chunk, the largest
// patch-aligned width inside the stride: 192 frames (48 tokens) for 2 s,
// 96 frames (24 tokens) for 1 s.
struct ChunkPlan {
    double delay_s = 2.0;
    int stride_frames = 200;
    int model_frames = 192;
    // Full-context mode: a clip shorter than one window is zero-padded to it.
    bool full_context = false;

    static ChunkPlan for_delay(double delay_s, const ModelConfig& cfg, double frame_rate_hz = 100.0);
    // One 1024-frame (10.24 s, 256-token) window.
    static ChunkPlan full(const ModelConfig& cfg);

    // True for the 1 s / 2 s settings evaluated in the reference tables.
    bool is_standard_delay() const;
    double stride_s(double frame_rate_hz = 100.0) const { return stride_frames / frame_rate_hz; }
};

struct ChunkSpan {
    std::int64_t begin_frame = 0;
    int frames = 0; // frames handed to the model
    double start_s = 0.0;
    double end_s = 0.0;
};

// Chunk boundaries for a spectrogram of n_frames frames covering duration_s
// seconds. A tail with fewer than one patch column of frames is dropped.
std::vector<ChunkSpan> plan_chunks(std::int64_t n_frames, double duration_s, const ChunkPlan& plan,
                                   const ModelConfig& cfg, double frame_rate_hz = 100.0);

// Per-layer key/value memory of one stream. After c >= 1 chunks each layer
// holds the keys/values of the previous `cache_chunks` chunks.
class StreamState {
public:
    StreamState(const ModelConfig& cfg, const ChunkPlan& plan, int cache_chunks = 1);

    const ModelConfig& config() const { return cfg_; }
    const ChunkPlan& plan() const { return plan_; }
    int chunk_frames() const { return plan_.model_frames; }
    int cache_chunks() const { return cache_chunks_; }
    std::int64_t chunks_processed() const { return chunks_processed_; }

    // Context length the next chunk's attention will see from the cache.
    int cached_tokens() const;
    std::int64_t cache_bytes() const;

    // Cache of one layer (cached chunks concatenated oldest first).
    const LayerKV& layer_cache(int layer) const { return caches_.at(static_cast<std::size_t>(layer)); }

    void reset();

    // Replaces the cache with the keys/values just produced.
    void commit(std::vector<LayerKV> kv);

    // Versioned binary snapshot. Size depends only on config and cache fill.
    std::vector<std::uint8_t> serialize() const;
    static StreamState deserialize(std::span<const std::uint8_t> bytes);

private:
    ModelConfig cfg_;
    ChunkPlan plan_;
    int cache_chunks_ = 1;
    std::int64_t chunks_processed_ = 0;
    // Per layer, the cached chunks concatenated oldest first.
    std::vector<LayerKV> caches_;
    // Token count of each cached chunk, oldest first.
    std::deque<int> chunk_tokens_;

    friend std::vector<float> process_chunk(StreamState&, const WeightSet&, const MelSpectrogram&,
                                            AttentionObserver*);
};

// Accepts any positive delay; 1 s and 2 s are the standard settings.
StreamState new_stream(const ModelConfig& cfg, double delay_s);

// Runs one chunk through the model using and then updating the stream cache.
// The chunk must hold between one patch column and chunk_frames() frames.
std::vector<float> process_chunk(StreamState& state, const WeightSet& w, const MelSpectrogram& mel_chunk,
                                 AttentionObserver* observer = nullptr);

struct ClipScores {
    std::vector<std::vector<float>> rows; // one per chunk
    std::vector<ChunkSpan> spans;
    std::vector<int> tokens;
    std::vector<float> averaged;

    std::size_t n_chunks() const { return rows.size(); }
};

// Arithmetic mean of chunk rows in probability space.
std::vector<float> average_rows(const std::vector<std::vector<float>>& rows);

ClipScores run_clip(const ModelConfig& cfg, const WeightSet& w, const AudioBuffer& audio, const ChunkPlan& plan);
ClipScores run_clip(const ModelConfig& cfg, const WeightSet& w, const AudioBuffer& audio, double delay_s);

// Same chunking, with the cache cleared before every chunk.
ClipScores run_clip_stateless(const ModelConfig& cfg, const WeightSet& w, const AudioBuffer& audio,
                              const ChunkPlan& plan);
ClipScores run_clip_stateless(const ModelConfig& cfg, const WeightSet& w, const AudioBuffer& audio,
                              double delay_s);

struct ChunkResult {
    std::int64_t index = 0;
    ChunkSpan span;
    int tokens = 0;
    std::vector<float> scores;
};

// Push-based tagger: feed audio blocks as they arrive, receive chunk scores as
// soon as a chunk's frames are available. Memory is bounded by one chunk of
// frames plus the stream cache. Produces the same rows as run_clip.
class StreamingTagger {
public:
    StreamingTagger(const ModelConfig& cfg, const WeightSet& w, const ChunkPlan& plan, bool use_cache = true,
                    const MelFrontendConfig& frontend = {});

    // Appends finished chunks to out.
    void push(std::span<const float> samples, std::vector<ChunkResult>& out);
    // Flushes the tail chunk, if it holds at least one patch column.
    void finish(std::vector<ChunkResult>& out);

    const StreamState& state() const { return state_; }
    double seconds_seen() const;

private:
    void emit(int frames, std::vector<ChunkResult>& out);

    const ModelConfig& cfg_;
    const WeightSet& weights_;
    ChunkPlan plan_;
    bool use_cache_;
    MelFrontendConfig frontend_;
    StreamingMelExtractor mel_;
    StreamState state_;
    std::deque<std::vector<float>> frames_;
    std::int64_t skip_frames_ = 0;
    double padded_seconds_ = 0.0;
    std::int64_t chunk_index_ = 0;
    bool finished_ = false;
};

} // namespace sat
