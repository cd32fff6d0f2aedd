#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include "sat/error.hpp"
#include "sat/memtrack.hpp"
#include "sat/profiler.hpp"

// Resolved only when sat_memtrack is linked in.
extern "C" {
__attribute__((weak)) std::int64_t sat_memtrack_live_bytes();
__attribute__((weak)) std::int64_t sat_memtrack_peak_bytes();
__attribute__((weak)) void sat_memtrack_reset_peak();
}

namespace sat {

double estimate_flops(const ModelConfig& cfg, std::int64_t n_tokens, std::int64_t cache_len, FlopCounting counting) {
    if (n_tokens < 0 || cache_len < 0) throw ArgumentError("token counts must be non-negative");
    const double n = static_cast<double>(n_tokens);
    const double d = cfg.embed_dim;
    const double ff = cfg.mlp_dim();
    const double patch = static_cast<double>(cfg.patch_size) * cfg.patch_size;

    const double patch_embed = 2.0 * n * patch * d;
    const double projections = 8.0 * n * d * d; // q, k, v, out
    const double mlp = 4.0 * n * d * ff;        // fc1 + fc2
    const double attn = 4.0 * n * (n + static_cast<double>(cache_len)) * d; // QK^T and AV
    const double head = 2.0 * d * cfg.n_classes;

    double per_layer = projections + mlp;
    if (counting == FlopCounting::Full) per_layer += attn;
    return patch_embed + cfg.n_layers * per_layer + head;
}

std::int64_t estimate_cache_bytes(const ModelConfig& cfg, std::int64_t cache_len) {
    return static_cast<std::int64_t>(cfg.n_layers) * 2 * cache_len * cfg.embed_dim *
           static_cast<std::int64_t>(sizeof(float));
}

std::int64_t estimate_peak_memory(const ModelConfig& cfg, std::int64_t n_tokens, std::int64_t cache_len) {
    const std::int64_t n = n_tokens;
    const std::int64_t d = cfg.embed_dim;
    const std::int64_t ctx = n + cache_len;
    // Attention phase: residual input, q/k/v, per-head score matrices, context.
    const std::int64_t attn = 5 * n * d + static_cast<std::int64_t>(cfg.n_heads) * n * ctx;
    // MLP phase: residual input, normed input, hidden activations.
    const std::int64_t mlp = 2 * n * d + n * cfg.mlp_dim();
    return std::max(attn, mlp) * static_cast<std::int64_t>(sizeof(float)) + estimate_cache_bytes(cfg, cache_len);
}

std::int64_t estimate_retained_memory(const ModelConfig& cfg, std::int64_t n_tokens, std::int64_t cache_len) {
    const std::int64_t n = n_tokens;
    const std::int64_t d = cfg.embed_dim;
    const std::int64_t ctx = n + cache_len;
    // ln1, q, k, v, context, out-proj, residual, ln2, fc2, residual.
    std::int64_t per_layer = 10 * n * d;
    per_layer += 2 * n * cfg.mlp_dim();                                // fc1 and GELU
    per_layer += 2 * static_cast<std::int64_t>(cfg.n_heads) * n * ctx; // scores and softmax
    if (cache_len > 0) per_layer += 2 * ctx * d;                       // [cache || current] keys and values
    const std::int64_t floats = n * d + cfg.n_layers * per_layer;
    return floats * static_cast<std::int64_t>(sizeof(float)) + estimate_cache_bytes(cfg, cache_len);
}

std::int64_t parameter_count(const ModelConfig& cfg) {
    std::int64_t n = 0;
    for (const auto& spec : expected_tensors(cfg)) {
        std::int64_t k = 1;
        for (auto dim : spec.shape) k *= dim;
        n += k;
    }
    return n;
}

CostReport profile(const ModelConfig& cfg, std::int64_t n_tokens, std::int64_t cache_len) {
    CostReport r;
    r.arch = std::string(variant_name(cfg.variant));
    r.n_tokens = n_tokens;
    r.context_length = cache_len;
    r.flops = estimate_flops(cfg, n_tokens, cache_len, FlopCounting::Full);
    r.layer_flops = estimate_flops(cfg, n_tokens, cache_len, FlopCounting::ParameterizedLayers);
    r.peak_activation_bytes = estimate_peak_memory(cfg, n_tokens, cache_len);
    r.retained_activation_bytes = estimate_retained_memory(cfg, n_tokens, cache_len);
    r.cache_bytes = estimate_cache_bytes(cfg, cache_len);
    r.parameters = parameter_count(cfg);
    return r;
}

bool memory_tracking_available() {
    return sat_memtrack_live_bytes != nullptr && sat_memtrack_peak_bytes != nullptr &&
           sat_memtrack_reset_peak != nullptr;
}

std::int64_t measured_peak_memory(const std::function<void()>& fn) {
    if (!memory_tracking_available()) {
        throw UnsupportedError("memory measurement unavailable: binary was built without sat_memtrack");
    }
    sat_memtrack_reset_peak();
    const std::int64_t base = sat_memtrack_live_bytes();
    fn();
    return std::max<std::int64_t>(0, sat_memtrack_peak_bytes() - base);
}

namespace {

std::string token_field(const CostReport& r) {
    if (r.context_length > 0) return std::to_string(r.n_tokens) + "/" + std::to_string(r.context_length);
    return std::to_string(r.n_tokens);
}

std::string human_bytes(std::int64_t b) {
    char buf[32];
    const double v = static_cast<double>(b);
    if (v >= 1e9) std::snprintf(buf, sizeof buf, "%.1f G", v / 1e9);
    else if (v >= 1e6) std::snprintf(buf, sizeof buf, "%.1f M", v / 1e6);
    else if (v >= 1e3) std::snprintf(buf, sizeof buf, "%.1f K", v / 1e3);
    else std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(b));
    return buf;
}

std::string gflops(double f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", f / 1e9);
    return buf;
}

} // namespace

nlohmann::json to_json(const CostReport& r) {
    return {
        {"schema", "sat.profile/1"},
        {"arch", r.arch},
        {"streaming", r.context_length > 0},
        {"tokens", token_field(r)},
        {"n_tokens", r.n_tokens},
        {"context_length", r.context_length},
        {"gflops", r.layer_flops / 1e9},
        {"gflops_all_matmuls", r.flops / 1e9},
        {"flops", r.layer_flops},
        {"flops_all_matmuls", r.flops},
        {"peak_activation_bytes", r.peak_activation_bytes},
        {"retained_activation_bytes", r.retained_activation_bytes},
        {"cache_bytes", r.cache_bytes},
        {"parameters", r.parameters},
    };
}

std::string to_markdown(std::span<const CostReport> rows) {
    std::ostringstream out;
    out << "| Model | Strm? | #Token | M (live) | M (retained) | Gflops | Gflops (all matmuls) | Size |\n";
    out << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        const bool streaming = r.context_length > 0;
        std::string name = streaming ? "SAT-" : "ViT-";
        name += static_cast<char>(std::toupper(static_cast<unsigned char>(r.arch.empty() ? '?' : r.arch[0])));
        char size[32];
        std::snprintf(size, sizeof size, "%.1f M", static_cast<double>(r.parameters) / 1e6);
        out << "| " << name << " | " << (streaming ? "yes" : "no") << " | " << token_field(r) << " | "
            << human_bytes(r.peak_activation_bytes) << " | " << human_bytes(r.retained_activation_bytes) << " | "
            << gflops(r.layer_flops) << " | " << gflops(r.flops) << " | " << size << " |\n";
    }
    return out.str();
}

} // namespace sat
