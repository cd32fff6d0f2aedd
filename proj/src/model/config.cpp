#include <string>

#include "sat/error.hpp"
#include "sat/model.hpp"

namespace sat {

std::string_view variant_name(Variant v) {
    switch (v) {
    case Variant::Tiny: return "tiny";
    case Variant::Small: return "small";
    case Variant::Base: return "base";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name) {
    if (name == "tiny" || name == "t") return Variant::Tiny;
    if (name == "small" || name == "s") return Variant::Small;
    if (name == "base" || name == "b") return Variant::Base;
    throw ArgumentError("unknown arch '" + std::string(name) + "' (expected tiny, small or base)");
}

ModelConfig ModelConfig::tiny() { return ModelConfig{}; }

ModelConfig ModelConfig::small() {
    ModelConfig c;
    c.variant = Variant::Small;
    c.embed_dim = 384;
    c.n_heads = 6;
    return c;
}

ModelConfig ModelConfig::base() {
    ModelConfig c;
    c.variant = Variant::Base;
    c.embed_dim = 768;
    c.n_heads = 12;
    return c;
}

ModelConfig ModelConfig::for_variant(Variant v) {
    switch (v) {
    case Variant::Tiny: return tiny();
    case Variant::Small: return small();
    case Variant::Base: return base();
    }
    throw ArgumentError("unknown variant");
}

void ModelConfig::validate() const {
    const ModelConfig ref = for_variant(variant);
    if (embed_dim != ref.embed_dim || n_heads != ref.n_heads) {
        throw ArgumentError("(embed_dim, n_heads) must be one of (192,3), (384,6), (768,12) matching the variant");
    }
    if (embed_dim % n_heads != 0) throw ArgumentError("embed_dim must be divisible by n_heads");
    if (n_layers <= 0) throw ArgumentError("n_layers must be positive");
    if (patch_size <= 0 || n_mels % patch_size != 0) throw ArgumentError("patch_size must divide n_mels");
    if (mlp_ratio <= 0 || n_classes <= 0 || max_time_patches <= 0) {
        throw ArgumentError("mlp_ratio, n_classes and max_time_patches must be positive");
    }
    if (!(norm_eps > 0.0f)) throw ArgumentError("norm_eps must be positive");
}

} // namespace sat
