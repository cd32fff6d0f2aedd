#include <algorithm>
#include <cmath>
#include <numbers>

#include "kernels.hpp"
#include "sat/error.hpp"
#include "sat/model.hpp"

namespace sat {

using detail::ConstMap;
using detail::MutMap;
using detail::view;

LayerKV LayerKV::concat(const LayerKV& a, const LayerKV& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    if (a.n_heads != b.n_heads || a.head_dim != b.head_dim) throw ShapeError("LayerKV concat: head layout mismatch");
    LayerKV out;
    out.n_heads = a.n_heads;
    out.head_dim = a.head_dim;
    out.n_ctx = a.n_ctx + b.n_ctx;
    out.keys.reserve(static_cast<std::size_t>(out.n_heads) * out.n_ctx * out.head_dim);
    out.values.reserve(out.keys.capacity());
    const auto span_a = static_cast<std::size_t>(a.n_ctx) * a.head_dim;
    const auto span_b = static_cast<std::size_t>(b.n_ctx) * b.head_dim;
    for (int h = 0; h < out.n_heads; ++h) {
        out.keys.insert(out.keys.end(), a.keys.begin() + h * span_a, a.keys.begin() + (h + 1) * span_a);
        out.keys.insert(out.keys.end(), b.keys.begin() + h * span_b, b.keys.begin() + (h + 1) * span_b);
        out.values.insert(out.values.end(), a.values.begin() + h * span_a, a.values.begin() + (h + 1) * span_a);
        out.values.insert(out.values.end(), b.values.begin() + h * span_b, b.values.begin() + (h + 1) * span_b);
    }
    return out;
}

Matrix layer_norm(const Matrix& x, const Tensor& weight, const Tensor& bias, float eps) {
    Matrix y(x.rows(), x.cols());
    const auto d = x.cols();
    for (std::int64_t r = 0; r < x.rows(); ++r) {
        const auto in = x.row(r);
        double mean = 0.0;
        for (float v : in) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (float v : in) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        auto out = y.row(r);
        for (std::int64_t c = 0; c < d; ++c) {
            const auto i = static_cast<std::size_t>(c);
            out[i] = static_cast<float>((in[i] - mean) * inv) * weight.data[i] + bias.data[i];
        }
    }
    return y;
}

TokenGrid patchify(const MelSpectrogram& mel, const ModelConfig& cfg, const WeightSet& w) {
    const int p = cfg.patch_size;
    if (mel.n_mels() != cfg.n_mels) {
        throw ShapeError("spectrogram has " + std::to_string(mel.n_mels()) + " mel bins, model expects " +
                         std::to_string(cfg.n_mels));
    }
    if (mel.n_frames() < p) {
        throw ShapeError("need at least " + std::to_string(p) + " frames to form a patch, got " +
                         std::to_string(mel.n_frames()));
    }
    TokenGrid grid;
    grid.n_freq_patches = cfg.n_freq_patches();
    grid.n_time_patches = static_cast<int>(mel.n_frames() / p);
    const std::int64_t n = static_cast<std::int64_t>(grid.n_freq_patches) * grid.n_time_patches;
    const std::int64_t patch_len = static_cast<std::int64_t>(p) * p;

    // Gather patches [N, P*P], then one GEMM against the flattened kernel.
    Matrix patches(n, patch_len);
    for (int t = 0; t < grid.n_time_patches; ++t) {
        for (int f = 0; f < grid.n_freq_patches; ++f) {
            auto dst = patches.row(grid.index(f, t));
            for (int i = 0; i < p; ++i) {
                const auto src = mel.values.row(static_cast<std::int64_t>(f) * p + i);
                std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(t) * p, p, dst.begin() + i * p);
            }
        }
    }
    const std::int64_t d = cfg.embed_dim;
    grid.tokens = Matrix(n, d);
    ConstMap kernel(w.patch_weight.data.data(), d, patch_len);
    Eigen::Map<const Eigen::RowVectorXf> bias(w.patch_bias.data.data(), d);
    auto out = view(grid.tokens);
    out.noalias() = view(patches) * kernel.transpose();
    out.rowwise() += bias;
    return grid;
}

TokenGrid add_pos_embed(const TokenGrid& grid, const WeightSet& w) {
    const std::int64_t d = grid.tokens.cols();
    const std::int64_t time_rows = w.time_pos.shape.at(0);
    if (grid.n_time_patches > time_rows) {
        throw ShapeError("chunk has " + std::to_string(grid.n_time_patches) +
                         " time patches but the position table holds " + std::to_string(time_rows));
    }
    if (grid.n_freq_patches > w.freq_pos.shape.at(0)) throw ShapeError("too many frequency patches");
    TokenGrid out = grid;
    for (int t = 0; t < grid.n_time_patches; ++t) {
        const float* tp = w.time_pos.data.data() + static_cast<std::int64_t>(t) * d;
        for (int f = 0; f < grid.n_freq_patches; ++f) {
            const float* fp = w.freq_pos.data.data() + static_cast<std::int64_t>(f) * d;
            auto row = out.tokens.row(grid.index(f, t));
            for (std::int64_t c = 0; c < d; ++c) row[static_cast<std::size_t>(c)] += tp[c] + fp[c];
        }
    }
    return out;
}

AttentionResult attention(const TokenGrid& x, int layer, const ModelConfig& cfg, const WeightSet& w,
                          const LayerKV* cache, AttentionObserver* observer) {
    const LayerWeights& L = w.layers.at(static_cast<std::size_t>(layer));
    const auto n = static_cast<int>(x.n_tokens());
    const std::int64_t d = x.tokens.cols();
    const int n_heads = cfg.n_heads;
    const int head_dim = cfg.head_dim();
    if (d != cfg.embed_dim || L.wq.shape.size() != 2 || L.wq.shape[0] != d) {
        throw ShapeError("attention input width " + std::to_string(d) + " does not match embed_dim " +
                         std::to_string(cfg.embed_dim));
    }
    const bool has_cache = cache != nullptr && !cache->empty();
    if (has_cache && (cache->n_heads != n_heads || cache->head_dim != head_dim)) {
        throw ShapeError("cache head layout " + std::to_string(cache->n_heads) + "x" +
                         std::to_string(cache->head_dim) + " does not match model " + std::to_string(n_heads) +
                         "x" + std::to_string(head_dim));
    }
    const int n_past = has_cache ? cache->n_ctx : 0;
    const int n_ctx = n_past + n;

    const Matrix q = detail::linear(x.tokens, L.wq, L.bq);
    const Matrix k = detail::linear(x.tokens, L.wk, L.bk);
    const Matrix v = detail::linear(x.tokens, L.wv, L.bv);

    AttentionResult result;
    result.kv.n_heads = n_heads;
    result.kv.n_ctx = n;
    result.kv.head_dim = head_dim;
    result.kv.keys.resize(static_cast<std::size_t>(n_heads) * n * head_dim);
    result.kv.values.resize(result.kv.keys.size());
    for (int h = 0; h < n_heads; ++h) {
        for (int i = 0; i < n; ++i) {
            const auto src = static_cast<std::ptrdiff_t>(i) * d + static_cast<std::ptrdiff_t>(h) * head_dim;
            const auto dst = (static_cast<std::ptrdiff_t>(h) * n + i) * head_dim;
            std::copy_n(k.data() + src, head_dim, result.kv.keys.begin() + dst);
            std::copy_n(v.data() + src, head_dim, result.kv.values.begin() + dst);
        }
    }

    // scores[h] is n x n_ctx; columns [0, n_past) come from the cache.
    std::vector<float> scores(static_cast<std::size_t>(n_heads) * n * n_ctx);
    Matrix context(n, d);
    const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
    using Strided = Eigen::Map<const detail::RowMajor, 0, Eigen::OuterStride<>>;
    for (int h = 0; h < n_heads; ++h) {
        Strided qh(q.data() + static_cast<std::ptrdiff_t>(h) * head_dim, n, head_dim, Eigen::OuterStride<>(d));
        ConstMap kh(result.kv.key(h, 0), n, head_dim);
        ConstMap vh(result.kv.value(h, 0), n, head_dim);
        Eigen::Map<detail::RowMajor, 0, Eigen::OuterStride<>> s(
            scores.data() + static_cast<std::size_t>(h) * n * n_ctx, n, n_ctx, Eigen::OuterStride<>(n_ctx));

        if (has_cache) {
            ConstMap kc(cache->key(h, 0), n_past, head_dim);
            s.leftCols(n_past).noalias() = qh * kc.transpose();
        }
        s.rightCols(n).noalias() = qh * kh.transpose();
        s *= scale;

        for (int i = 0; i < n; ++i) {
            float* row = scores.data() + (static_cast<std::size_t>(h) * n + i) * n_ctx;
            const float mx = *std::max_element(row, row + n_ctx);
            double sum = 0.0;
            for (int j = 0; j < n_ctx; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            const auto inv = static_cast<float>(1.0 / sum);
            for (int j = 0; j < n_ctx; ++j) row[j] *= inv;
        }
        if (observer != nullptr) {
            observer->on_attention(layer, h, n, n_ctx,
                                   std::span<const float>(scores.data() + static_cast<std::size_t>(h) * n * n_ctx,
                                                          static_cast<std::size_t>(n) * n_ctx));
        }

        Eigen::Map<detail::RowMajor, 0, Eigen::OuterStride<>> ctx(
            context.data() + static_cast<std::ptrdiff_t>(h) * head_dim, n, head_dim, Eigen::OuterStride<>(d));
        ctx.noalias() = s.rightCols(n) * vh;
        if (has_cache) {
            ConstMap vc(cache->value(h, 0), n_past, head_dim);
            ctx.noalias() += s.leftCols(n_past) * vc;
        }
    }

    result.output.n_freq_patches = x.n_freq_patches;
    result.output.n_time_patches = x.n_time_patches;
    result.output.n_prefix = x.n_prefix;
    result.output.tokens = detail::linear(context, L.wo, L.bo);
    return result;
}

namespace {

float gelu(float x) {
    return static_cast<float>(0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)));
}

} // namespace

BlockResult transformer_block(const TokenGrid& x, int layer, const ModelConfig& cfg, const WeightSet& w,
                              const LayerKV* cache, AttentionObserver* observer) {
    const LayerWeights& L = w.layers.at(static_cast<std::size_t>(layer));

    TokenGrid normed = x;
    normed.tokens = layer_norm(x.tokens, L.norm1_weight, L.norm1_bias, cfg.norm_eps);
    BlockResult result = attention(normed, layer, cfg, w, cache, observer);
    normed.tokens = Matrix();

    // Residual stream reuses the attention output buffer.
    auto h = view(result.output.tokens);
    h += view(x.tokens);

    {
        const Matrix n2 = layer_norm(result.output.tokens, L.norm2_weight, L.norm2_bias, cfg.norm_eps);
        Matrix hidden = detail::linear(n2, L.fc1_weight, L.fc1_bias);
        for (float& v : hidden.flat()) v = gelu(v);
        const Matrix mlp = detail::linear(hidden, L.fc2_weight, L.fc2_bias);
        h += view(mlp);
    }
    return result;
}

std::vector<float> classify(const TokenGrid& grid, const ModelConfig& cfg, const WeightSet& w) {
    const std::int64_t d = grid.tokens.cols();
    if (d != cfg.embed_dim || grid.n_tokens() == 0) throw ShapeError("classify: bad token grid");
    std::vector<double> pooled(static_cast<std::size_t>(d), 0.0);
    if (cfg.pooling == Pooling::Cls) {
        if (grid.n_prefix < 1) throw ShapeError("cls pooling requires a cls token in the grid");
        const auto row = grid.tokens.row(0);
        std::copy(row.begin(), row.end(), pooled.begin());
    } else {
        const std::int64_t first = grid.n_prefix;
        const std::int64_t count = grid.n_tokens() - first;
        if (count <= 0) throw ShapeError("classify: no patch tokens to pool");
        for (std::int64_t r = first; r < grid.n_tokens(); ++r) {
            const auto row = grid.tokens.row(r);
            for (std::int64_t c = 0; c < d; ++c) pooled[static_cast<std::size_t>(c)] += row[static_cast<std::size_t>(c)];
        }
        for (double& v : pooled) v /= static_cast<double>(count);
    }
    const auto n_classes = static_cast<std::size_t>(cfg.n_classes);
    if (w.head_weight.shape != std::vector<std::int64_t>{d, cfg.n_classes}) throw ShapeError("classify: head shape");
    std::vector<float> scores(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) {
        double logit = w.head_bias.data[c];
        for (std::int64_t i = 0; i < d; ++i) {
            logit += pooled[static_cast<std::size_t>(i)] * w.head_weight.data[static_cast<std::size_t>(i) * n_classes + c];
        }
        scores[c] = static_cast<float>(1.0 / (1.0 + std::exp(-logit)));
    }
    return scores;
}

} // namespace sat
