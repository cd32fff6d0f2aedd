#include <bit>
#include <cstring>

#include "sat/error.hpp"
#include "sat/stream.hpp"

namespace sat {
namespace {

constexpr char kStateMagic[4] = {'S', 'A', 'T', 'S'};
constexpr std::uint32_t kStateVersion = 1;

class Writer {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void put_floats(const std::vector<float>& v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
        bytes.insert(bytes.end(), p, p + v.size() * sizeof(float));
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::vector<float> get_floats(std::size_t n) {
        need(n * sizeof(float));
        std::vector<float> v(n);
        std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(float));
        pos_ += n * sizeof(float);
        return v;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw ArgumentError("stream state snapshot is truncated");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

LayerKV drop_front(const LayerKV& kv, int n) {
    LayerKV out;
    out.n_heads = kv.n_heads;
    out.head_dim = kv.head_dim;
    out.n_ctx = kv.n_ctx - n;
    const auto per_head_in = static_cast<std::size_t>(kv.n_ctx) * kv.head_dim;
    const auto skip = static_cast<std::size_t>(n) * kv.head_dim;
    for (int h = 0; h < kv.n_heads; ++h) {
        const auto base = static_cast<std::ptrdiff_t>(h * per_head_in + skip);
        const auto end = static_cast<std::ptrdiff_t>((h + 1) * per_head_in);
        out.keys.insert(out.keys.end(), kv.keys.begin() + base, kv.keys.begin() + end);
        out.values.insert(out.values.end(), kv.values.begin() + base, kv.values.begin() + end);
    }
    return out;
}

} // namespace

StreamState::StreamState(const ModelConfig& cfg, const ChunkPlan& plan, int cache_chunks)
    : cfg_(cfg), plan_(plan), cache_chunks_(cache_chunks), caches_(static_cast<std::size_t>(cfg.n_layers)) {
    cfg_.validate();
    if (cache_chunks < 1) throw ArgumentError("cache must hold at least one chunk");
}

int StreamState::cached_tokens() const { return caches_.empty() ? 0 : caches_.front().n_ctx; }

std::int64_t StreamState::cache_bytes() const {
    std::int64_t total = 0;
    for (const auto& kv : caches_) total += kv.bytes();
    return total;
}

void StreamState::reset() {
    for (auto& kv : caches_) kv = LayerKV{};
    chunk_tokens_.clear();
}

void StreamState::commit(std::vector<LayerKV> kv) {
    if (kv.size() != caches_.size()) throw ShapeError("commit: expected one LayerKV per layer");
    const int new_tokens = kv.front().n_ctx;
    if (cache_chunks_ == 1) {
        caches_ = std::move(kv);
    } else {
        const int drop = static_cast<int>(chunk_tokens_.size()) >= cache_chunks_ ? chunk_tokens_.front() : 0;
        for (std::size_t l = 0; l < caches_.size(); ++l) {
            LayerKV kept = drop > 0 ? drop_front(caches_[l], drop) : std::move(caches_[l]);
            caches_[l] = LayerKV::concat(kept, kv[l]);
        }
        if (drop > 0) chunk_tokens_.pop_front();
    }
    if (cache_chunks_ == 1) chunk_tokens_.clear();
    chunk_tokens_.push_back(new_tokens);
    ++chunks_processed_;
}

std::vector<std::uint8_t> StreamState::serialize() const {
    Writer w;
    for (char c : kStateMagic) w.put(c);
    w.put(kStateVersion);
    w.put(static_cast<std::int32_t>(cfg_.variant));
    w.put(static_cast<std::int32_t>(cfg_.embed_dim));
    w.put(static_cast<std::int32_t>(cfg_.n_heads));
    w.put(static_cast<std::int32_t>(cfg_.n_layers));
    w.put(static_cast<std::int32_t>(cfg_.patch_size));
    w.put(static_cast<std::int32_t>(cfg_.mlp_ratio));
    w.put(static_cast<std::int32_t>(cfg_.n_classes));
    w.put(static_cast<std::int32_t>(cfg_.pooling));
    w.put(static_cast<std::int32_t>(cfg_.n_mels));
    w.put(static_cast<std::int32_t>(cfg_.max_time_patches));
    w.put(cfg_.norm_eps);
    w.put(plan_.delay_s);
    w.put(static_cast<std::int32_t>(plan_.stride_frames));
    w.put(static_cast<std::int32_t>(plan_.model_frames));
    w.put(static_cast<std::uint8_t>(plan_.full_context));
    w.put(static_cast<std::int32_t>(cache_chunks_));
    w.put(chunks_processed_);
    w.put(static_cast<std::uint32_t>(chunk_tokens_.size()));
    for (int t : chunk_tokens_) w.put(static_cast<std::int32_t>(t));
    for (const auto& kv : caches_) {
        w.put(static_cast<std::int32_t>(kv.n_heads));
        w.put(static_cast<std::int32_t>(kv.n_ctx));
        w.put(static_cast<std::int32_t>(kv.head_dim));
        w.put_floats(kv.keys);
        w.put_floats(kv.values);
    }
    return std::move(w.bytes);
}

StreamState StreamState::deserialize(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    for (char c : kStateMagic) {
        if (r.get<char>() != c) throw ArgumentError("stream state snapshot: bad magic");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kStateVersion) {
        throw ArgumentError("stream state snapshot: unsupported version " + std::to_string(version));
    }
    ModelConfig cfg;
    cfg.variant = static_cast<Variant>(r.get<std::int32_t>());
    cfg.embed_dim = r.get<std::int32_t>();
    cfg.n_heads = r.get<std::int32_t>();
    cfg.n_layers = r.get<std::int32_t>();
    cfg.patch_size = r.get<std::int32_t>();
    cfg.mlp_ratio = r.get<std::int32_t>();
    cfg.n_classes = r.get<std::int32_t>();
    cfg.pooling = static_cast<Pooling>(r.get<std::int32_t>());
    cfg.n_mels = r.get<std::int32_t>();
    cfg.max_time_patches = r.get<std::int32_t>();
    cfg.norm_eps = r.get<float>();
    ChunkPlan plan;
    plan.delay_s = r.get<double>();
    plan.stride_frames = r.get<std::int32_t>();
    plan.model_frames = r.get<std::int32_t>();
    plan.full_context = r.get<std::uint8_t>() != 0;
    const int cache_chunks = r.get<std::int32_t>();

    StreamState state(cfg, plan, cache_chunks);
    state.chunks_processed_ = r.get<std::int64_t>();
    const auto n_entries = r.get<std::uint32_t>();
    if (n_entries > static_cast<std::uint32_t>(cache_chunks)) throw ArgumentError("stream state snapshot: bad cache fill");
    std::int64_t total_tokens = 0;
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        state.chunk_tokens_.push_back(r.get<std::int32_t>());
        total_tokens += state.chunk_tokens_.back();
    }
    for (auto& kv : state.caches_) {
        kv.n_heads = r.get<std::int32_t>();
        kv.n_ctx = r.get<std::int32_t>();
        kv.head_dim = r.get<std::int32_t>();
        if (kv.n_ctx != total_tokens || (kv.n_ctx > 0 && (kv.n_heads != cfg.n_heads || kv.head_dim != cfg.head_dim()))) {
            throw ArgumentError("stream state snapshot: cache shape inconsistent with config");
        }
        const auto n = static_cast<std::size_t>(kv.n_heads) * kv.n_ctx * kv.head_dim;
        kv.keys = r.get_floats(n);
        kv.values = r.get_floats(n);
    }
    if (!r.done()) throw ArgumentError("stream state snapshot: trailing bytes");
    return state;
}

StreamState new_stream(const ModelConfig& cfg, double delay_s) {
    return StreamState(cfg, ChunkPlan::for_delay(delay_s, cfg));
}

std::vector<float> process_chunk(StreamState& state, const WeightSet& w, const MelSpectrogram& mel_chunk,
                                 AttentionObserver* observer) {
    const ModelConfig& cfg = state.cfg_;
    const std::int64_t width = mel_chunk.n_frames();
    if (width < cfg.patch_size || width > state.chunk_frames()) {
        throw ShapeError("chunk has " + std::to_string(width) + " frames; expected between " +
                         std::to_string(cfg.patch_size) + " and " + std::to_string(state.chunk_frames()));
    }
    const int cached = state.cached_tokens();
    ChunkForward fwd = cached > 0 ? forward_chunk(mel_chunk, cfg, w, state.caches_, observer)
                                  : forward_chunk(mel_chunk, cfg, w, {}, observer);
    if (fwd.context_length != fwd.n_tokens + cached) throw ShapeError("attention context length mismatch");
    state.commit(std::move(fwd.kv));
    return std::move(fwd.scores);
}

} // namespace sat
