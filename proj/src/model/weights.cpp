#include <cmath>
#include <numeric>

#include "sat/error.hpp"
#include "sat/model.hpp"

namespace sat {

Tensor::Tensor(std::vector<std::int64_t> s, float fill) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel()), fill);
}

std::int64_t Tensor::numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_string(std::span<const std::int64_t> shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::vector<TensorSpec> expected_tensors(const ModelConfig& cfg) {
    const std::int64_t d = cfg.embed_dim;
    const std::int64_t p = cfg.patch_size;
    const std::int64_t h = cfg.mlp_dim();
    std::vector<TensorSpec> specs = {
        {"patch_embed.weight", {d, 1, p, p}},
        {"patch_embed.bias", {d}},
        {"pos_embed.time", {cfg.max_time_patches, d}},
        {"pos_embed.freq", {cfg.n_freq_patches(), d}},
    };
    if (cfg.pooling == Pooling::Cls) specs.push_back({"cls_token", {d}});
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "blocks." + std::to_string(l) + ".";
        specs.push_back({pre + "norm1.weight", {d}});
        specs.push_back({pre + "norm1.bias", {d}});
        for (const char* proj : {"wq", "wk", "wv", "wo"}) {
            specs.push_back({pre + "attn." + proj + ".weight", {d, d}});
            specs.push_back({pre + "attn." + proj + ".bias", {d}});
        }
        specs.push_back({pre + "norm2.weight", {d}});
        specs.push_back({pre + "norm2.bias", {d}});
        specs.push_back({pre + "mlp.fc1.weight", {d, h}});
        specs.push_back({pre + "mlp.fc1.bias", {h}});
        specs.push_back({pre + "mlp.fc2.weight", {h, d}});
        specs.push_back({pre + "mlp.fc2.bias", {d}});
    }
    specs.push_back({"norm.weight", {d}});
    specs.push_back({"norm.bias", {d}});
    specs.push_back({"head.weight", {d, cfg.n_classes}});
    specs.push_back({"head.bias", {cfg.n_classes}});
    return specs;
}

namespace {

template <typename WS, typename Fn>
void visit_tensors(WS& w, Fn&& fn) {
    fn(std::string("patch_embed.weight"), w.patch_weight);
    fn(std::string("patch_embed.bias"), w.patch_bias);
    fn(std::string("pos_embed.time"), w.time_pos);
    fn(std::string("pos_embed.freq"), w.freq_pos);
    if (w.cls_token) fn(std::string("cls_token"), *w.cls_token);
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        auto& L = w.layers[l];
        const std::string pre = "blocks." + std::to_string(l) + ".";
        fn(pre + "norm1.weight", L.norm1_weight);
        fn(pre + "norm1.bias", L.norm1_bias);
        fn(pre + "attn.wq.weight", L.wq);
        fn(pre + "attn.wq.bias", L.bq);
        fn(pre + "attn.wk.weight", L.wk);
        fn(pre + "attn.wk.bias", L.bk);
        fn(pre + "attn.wv.weight", L.wv);
        fn(pre + "attn.wv.bias", L.bv);
        fn(pre + "attn.wo.weight", L.wo);
        fn(pre + "attn.wo.bias", L.bo);
        fn(pre + "norm2.weight", L.norm2_weight);
        fn(pre + "norm2.bias", L.norm2_bias);
        fn(pre + "mlp.fc1.weight", L.fc1_weight);
        fn(pre + "mlp.fc1.bias", L.fc1_bias);
        fn(pre + "mlp.fc2.weight", L.fc2_weight);
        fn(pre + "mlp.fc2.bias", L.fc2_bias);
    }
    fn(std::string("norm.weight"), w.norm_weight);
    fn(std::string("norm.bias"), w.norm_bias);
    fn(std::string("head.weight"), w.head_weight);
    fn(std::string("head.bias"), w.head_bias);
}

} // namespace

void WeightSet::for_each_tensor(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    visit_tensors(*this, fn);
}

void WeightSet::for_each_tensor(const std::function<void(const std::string&, Tensor&)>& fn) {
    visit_tensors(*this, fn);
}

WeightSet WeightSet::zeros(const ModelConfig& cfg) {
    cfg.validate();
    WeightSet w;
    w.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    if (cfg.pooling == Pooling::Cls) w.cls_token = Tensor{};
    const auto specs = expected_tensors(cfg);
    std::size_t i = 0;
    w.for_each_tensor([&](const std::string& name, Tensor& t) {
        t = Tensor(specs[i].shape);
        // Norm scales start at one.
        if (name.ends_with("norm1.weight") || name.ends_with("norm2.weight") || name == "norm.weight") {
            std::fill(t.data.begin(), t.data.end(), 1.0f);
        }
        ++i;
    });
    return w;
}

std::int64_t WeightSet::parameter_count() const {
    std::int64_t n = 0;
    for_each_tensor([&](const std::string&, const Tensor& t) { n += t.numel(); });
    if (normalizer) n += 4 * static_cast<std::int64_t>(normalizer->mean.size());
    return n;
}

void WeightSet::validate(const ModelConfig& cfg) const {
    cfg.validate();
    if (layers.size() != static_cast<std::size_t>(cfg.n_layers)) {
        throw ShapeError("weight set has " + std::to_string(layers.size()) + " layers, config expects " +
                         std::to_string(cfg.n_layers));
    }
    if (cfg.pooling == Pooling::Cls && !cls_token) throw ShapeError("cls pooling requires tensor 'cls_token'");
    std::vector<TensorSpec> specs = expected_tensors(cfg);
    if (cfg.pooling == Pooling::Mean && cls_token) {
        // Present but unused: still check its shape.
        specs.insert(specs.begin() + 4, TensorSpec{"cls_token", {cfg.embed_dim}});
    }
    std::size_t i = 0;
    for_each_tensor([&](const std::string& name, const Tensor& t) {
        const TensorSpec& spec = specs[i++];
        if (spec.name != name) throw ShapeError("unexpected tensor order at '" + name + "'");
        if (t.shape != spec.shape) {
            throw ShapeError("tensor '" + name + "' has shape " + shape_string(t.shape) + ", expected " +
                             shape_string(spec.shape));
        }
        if (t.data.size() != static_cast<std::size_t>(t.numel())) {
            throw ShapeError("tensor '" + name + "' payload size disagrees with its shape");
        }
        for (float v : t.data) {
            if (!std::isfinite(v)) throw ShapeError("tensor '" + name + "' contains non-finite values");
        }
    });
    if (normalizer) normalizer->validate(cfg.n_mels);
}

bool WeightSet::operator==(const WeightSet& other) const {
    if (layers.size() != other.layers.size() || cls_token.has_value() != other.cls_token.has_value()) return false;
    std::vector<const Tensor*> mine;
    std::vector<const Tensor*> theirs;
    for_each_tensor([&](const std::string&, const Tensor& t) { mine.push_back(&t); });
    other.for_each_tensor([&](const std::string&, const Tensor& t) { theirs.push_back(&t); });
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (!(*mine[i] == *theirs[i])) return false;
    }
    if (normalizer.has_value() != other.normalizer.has_value()) return false;
    if (normalizer) {
        const auto& a = *normalizer;
        const auto& b = *other.normalizer;
        if (a.mean != b.mean || a.var != b.var || a.gamma != b.gamma || a.beta != b.beta || a.eps != b.eps) {
            return false;
        }
    }
    return true;
}

} // namespace sat
