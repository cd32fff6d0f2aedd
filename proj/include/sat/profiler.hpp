#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include <json.hpp>

#include "sat/model.hpp"

namespace sat {

// What a flop count includes. Flops are 2 x multiply-accumulates throughout.
enum class FlopCounting {
    // Every matrix product: projections, attention scores and the
    // attention-weighted sum, MLP, patch embedding and head.
    Full,
    // Parameterized layers only (patch embedding, projections, MLP, head).
    // This is what module-hook profilers report and what the published
    // Gflops columns correspond to.
    ParameterizedLayers,
};

struct CostReport {
    std::string arch;
    std::int64_t n_tokens = 0;
    std::int64_t context_length = 0; // cached tokens attended to in addition to n_tokens
    double flops = 0.0;              // FlopCounting::Full
    double layer_flops = 0.0;        // FlopCounting::ParameterizedLayers
    std::int64_t peak_activation_bytes = 0;
    std::int64_t retained_activation_bytes = 0;
    std::int64_t cache_bytes = 0;
    std::int64_t parameters = 0;
};

double estimate_flops(const ModelConfig& cfg, std::int64_t n_tokens, std::int64_t cache_len,
                      FlopCounting counting = FlopCounting::Full);

// Largest live activation set of a single block during inference (f32),
// plus the key/value cache when cache_len > 0. Excludes parameters.
std::int64_t estimate_peak_memory(const ModelConfig& cfg, std::int64_t n_tokens, std::int64_t cache_len);

// Sum over all blocks of every intermediate tensor a framework forward pass
// materializes (including the concatenated keys/values), plus the cache. This
// is the quantity the published peak-memory columns track.
std::int64_t estimate_retained_memory(const ModelConfig& cfg, std::int64_t n_tokens, std::int64_t cache_len);

std::int64_t estimate_cache_bytes(const ModelConfig& cfg, std::int64_t cache_len);
std::int64_t parameter_count(const ModelConfig& cfg);

CostReport profile(const ModelConfig& cfg, std::int64_t n_tokens, std::int64_t cache_len);

// High-water mark of bytes allocated through operator new while fn runs,
// relative to the live total at entry. The hook is process-global: do not
// call concurrently. Throws UnsupportedError when the binary was built
// without the sat_memtrack object library.
std::int64_t measured_peak_memory(const std::function<void()>& fn);
bool memory_tracking_available();

nlohmann::json to_json(const CostReport& r);
// Table rows in the layout "| Model | Strm? | #Token | M | Gflops | ... |".
std::string to_markdown(std::span<const CostReport> rows);

} // namespace sat
