#include <algorithm>
#include <cmath>

#include "sat/error.hpp"
#include "sat/model.hpp"

namespace sat {
namespace {

TokenGrid prepend_cls(const TokenGrid& grid, const Tensor& cls) {
    TokenGrid out;
    out.n_freq_patches = grid.n_freq_patches;
    out.n_time_patches = grid.n_time_patches;
    out.n_prefix = grid.n_prefix + 1;
    out.tokens = Matrix(grid.n_tokens() + 1, grid.tokens.cols());
    std::copy(cls.data.begin(), cls.data.end(), out.tokens.row(0).begin());
    std::copy(grid.tokens.flat().begin(), grid.tokens.flat().end(), out.tokens.row(1).begin());
    return out;
}

} // namespace

ChunkForward forward_chunk(const MelSpectrogram& mel_chunk, const ModelConfig& cfg, const WeightSet& w,
                           std::span<const LayerKV> caches, AttentionObserver* observer) {
    if (!caches.empty() && caches.size() != static_cast<std::size_t>(cfg.n_layers)) {
        throw ShapeError("expected one cache entry per layer (" + std::to_string(cfg.n_layers) + "), got " +
                         std::to_string(caches.size()));
    }
    for (float v : mel_chunk.values.flat()) {
        if (!std::isfinite(v)) throw ShapeError("spectrogram contains non-finite values");
    }

    TokenGrid grid = w.normalizer ? patchify(normalize(mel_chunk, *w.normalizer), cfg, w) : patchify(mel_chunk, cfg, w);
    grid = add_pos_embed(grid, w);
    if (cfg.pooling == Pooling::Cls) grid = prepend_cls(grid, w.cls_token.value());

    ChunkForward out;
    out.n_tokens = static_cast<int>(grid.n_tokens());
    out.kv.reserve(static_cast<std::size_t>(cfg.n_layers));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerKV* cache = caches.empty() ? nullptr : &caches[static_cast<std::size_t>(l)];
        BlockResult block = transformer_block(grid, l, cfg, w, cache, observer);
        grid = std::move(block.output);
        out.kv.push_back(std::move(block.kv));
        if (l == 0) out.context_length = out.n_tokens + (cache ? cache->n_ctx : 0);
    }
    grid.tokens = layer_norm(grid.tokens, w.norm_weight, w.norm_bias, cfg.norm_eps);
    out.scores = classify(grid, cfg, w);
    return out;
}

} // namespace sat
