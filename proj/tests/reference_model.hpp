#pragma once

#include <vector>

#include "sat/model.hpp"

namespace sat::test {

// Keys/values of one layer, [context][embed_dim], double precision.
struct RefLayerKV {
    int n_ctx = 0;
    std::vector<double> keys;
    std::vector<double> values;
};

struct RefForward {
    std::vector<double> scores;
    std::vector<RefLayerKV> kv;
};

// Straight-line double-precision forward pass. Every attention layer builds
// the concatenated [cache || current] key and value matrices explicitly.
RefForward reference_forward(const MelSpectrogram& mel_chunk, const ModelConfig& cfg, const WeightSet& w,
                             const std::vector<RefLayerKV>* cache = nullptr);

// Runs consecutive chunks, carrying the previous chunk's keys/values.
std::vector<std::vector<double>> reference_stream(const std::vector<MelSpectrogram>& chunks, const ModelConfig& cfg,
                                                  const WeightSet& w);

} // namespace sat::test
