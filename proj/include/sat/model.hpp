#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sat/audio.hpp"
#include "sat/matrix.hpp"

namespace sat {

enum class Variant { Tiny, Small, Base };
enum class Pooling { Mean, Cls };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name); // "tiny" | "small" | "base"

struct ModelConfig {
    Variant variant = Variant::Tiny;
    int embed_dim = 192;
    int n_heads = 3;
    int n_layers = 12;
    int patch_size = 16;
    int mlp_ratio = 4;
    int n_classes = 527;
    Pooling pooling = Pooling::Mean;
    int n_mels = 64;
    // Rows of the time position table; 64 covers a 1024-frame (10.24 s) window.
    int max_time_patches = 64;
    float norm_eps = 1e-6f;

    static ModelConfig tiny();
    static ModelConfig small();
    static ModelConfig base();
    static ModelConfig for_variant(Variant v);

    int head_dim() const { return embed_dim / n_heads; }
    int n_freq_patches() const { return n_mels / patch_size; }
    int mlp_dim() const { return embed_dim * mlp_ratio; }

    // Throws ArgumentError on any inconsistent field.
    void validate() const;
};

// Named, shaped f32 tensor. Row-major.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s, float fill = 0.0f);

    std::int64_t numel() const;
    bool operator==(const Tensor&) const = default;
};

std::string shape_string(std::span<const std::int64_t> shape);

// Linear weights are stored [in, out]: y = x W + b.
struct LayerWeights {
    Tensor norm1_weight, norm1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor norm2_weight, norm2_bias;
    Tensor fc1_weight, fc1_bias, fc2_weight, fc2_bias;
};

struct WeightSet {
    Tensor patch_weight; // [d, 1, P, P]
    Tensor patch_bias;   // [d]
    Tensor time_pos;     // [max_time_patches, d]
    Tensor freq_pos;     // [n_freq_patches, d]
    std::vector<LayerWeights> layers;
    Tensor norm_weight, norm_bias;
    Tensor head_weight; // [d, n_classes]
    Tensor head_bias;   // [n_classes]
    // Absent when the checkpoint carries no frontend batch-norm tensors.
    std::optional<NormalizerParams> normalizer;
    std::optional<Tensor> cls_token; // [d]

    NormalizerParams effective_normalizer(int n_mels = 64) const {
        return normalizer ? *normalizer : NormalizerParams::identity(n_mels);
    }

    // Zero-filled tensors with the shapes cfg requires; norms at scale 1.
    static WeightSet zeros(const ModelConfig& cfg);

    // Visits every present tensor under its canonical name, in canonical
    // order. The normalizer is not a Tensor and is not visited.
    void for_each_tensor(const std::function<void(const std::string&, const Tensor&)>& fn) const;
    void for_each_tensor(const std::function<void(const std::string&, Tensor&)>& fn);

    std::int64_t parameter_count() const;

    // Throws ShapeError naming the first tensor inconsistent with cfg.
    void validate(const ModelConfig& cfg) const;

    bool operator==(const WeightSet&) const;
};

struct TensorSpec {
    std::string name;
    std::vector<std::int64_t> shape;
    bool required = true;
};

// Canonical tensor list for a config (optional cls token included only in cls mode).
std::vector<TensorSpec> expected_tensors(const ModelConfig& cfg);

// Tokens in frequency-major order: token index = t * n_freq_patches + f.
struct TokenGrid {
    Matrix tokens; // N x d
    int n_freq_patches = 0;
    int n_time_patches = 0;
    // Extra non-patch tokens placed ahead of the patch tokens (cls).
    int n_prefix = 0;

    std::int64_t n_tokens() const { return tokens.rows(); }
    std::int64_t index(int f, int t) const { return n_prefix + static_cast<std::int64_t>(t) * n_freq_patches + f; }
};

// Per-layer key/value projections, laid out [head][context][head_dim].
struct LayerKV {
    int n_heads = 0;
    int n_ctx = 0;
    int head_dim = 0;
    std::vector<float> keys;
    std::vector<float> values;

    bool empty() const { return n_ctx == 0; }
    const float* key(int head, int pos) const {
        return keys.data() + (static_cast<std::size_t>(head) * n_ctx + pos) * head_dim;
    }
    const float* value(int head, int pos) const {
        return values.data() + (static_cast<std::size_t>(head) * n_ctx + pos) * head_dim;
    }
    std::int64_t bytes() const { return static_cast<std::int64_t>((keys.size() + values.size()) * sizeof(float)); }

    // [a || b] along the context axis.
    static LayerKV concat(const LayerKV& a, const LayerKV& b);
    bool operator==(const LayerKV&) const = default;
};

// Receives every softmax-normalized attention matrix (n_query x n_context,
// row-major) as it is produced.
class AttentionObserver {
public:
    virtual ~AttentionObserver() = default;
    virtual void on_attention(int layer, int head, int n_query, int n_context, std::span<const float> weights) = 0;
};

struct AttentionResult {
    TokenGrid output;
    LayerKV kv; // keys/values of the current tokens only
};

using BlockResult = AttentionResult;

TokenGrid patchify(const MelSpectrogram& mel, const ModelConfig& cfg, const WeightSet& w);

// token(f, t) += time_pos[t] + freq_pos[f]; t is local to the grid.
TokenGrid add_pos_embed(const TokenGrid& grid, const WeightSet& w);

// Multi-head attention over [cache || current] with queries from the current
// tokens only. `x` is the already-normalized block input.
AttentionResult attention(const TokenGrid& x, int layer, const ModelConfig& cfg, const WeightSet& w,
                          const LayerKV* cache, AttentionObserver* observer = nullptr);

// Pre-norm block: x + Attn(LN1(x)), then + MLP(LN2(.)).
BlockResult transformer_block(const TokenGrid& x, int layer, const ModelConfig& cfg, const WeightSet& w,
                              const LayerKV* cache, AttentionObserver* observer = nullptr);

// Pooling, linear head and sigmoid. `grid` must already be final-normed.
std::vector<float> classify(const TokenGrid& grid, const ModelConfig& cfg, const WeightSet& w);

// Row-wise layer norm with affine parameters.
Matrix layer_norm(const Matrix& x, const Tensor& weight, const Tensor& bias, float eps);

struct ChunkForward {
    std::vector<float> scores;
    std::vector<LayerKV> kv; // one per layer
    int n_tokens = 0;
    int context_length = 0;
};

// Full forward for one raw (unnormalized) log-mel chunk. `caches` is either
// empty or holds one entry per layer; an empty LayerKV means no history.
ChunkForward forward_chunk(const MelSpectrogram& mel_chunk, const ModelConfig& cfg, const WeightSet& w,
                           std::span<const LayerKV> caches = {}, AttentionObserver* observer = nullptr);

} // namespace sat
