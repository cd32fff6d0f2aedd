#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <set>

#include <json.hpp>

#include "sat/checkpoint.hpp"
#include "sat/error.hpp"

namespace sat {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'A', 'T', 'W'};
constexpr std::size_t kPreambleBytes = 16;

// Frontend normalizer tensors, stored as [n_mels] each plus a scalar eps.
constexpr const char* kNormMean = "frontend.bn.mean";
constexpr const char* kNormVar = "frontend.bn.var";
constexpr const char* kNormWeight = "frontend.bn.weight";
constexpr const char* kNormBias = "frontend.bn.bias";
constexpr const char* kNormEps = "frontend.bn.eps";

std::size_t align_up(std::size_t n) { return (n + kPayloadAlignment - 1) / kPayloadAlignment * kPayloadAlignment; }

struct Entry {
    std::string name;
    std::vector<std::int64_t> shape;
    const std::vector<float>* data;
};

std::vector<Entry> collect(const WeightSet& w, std::vector<std::vector<float>>& scratch) {
    std::vector<Entry> entries;
    w.for_each_tensor([&](const std::string& name, const Tensor& t) { entries.push_back({name, t.shape, &t.data}); });
    if (w.normalizer) {
        const auto& n = *w.normalizer;
        const auto bins = static_cast<std::int64_t>(n.mean.size());
        entries.push_back({kNormMean, {bins}, &n.mean});
        entries.push_back({kNormVar, {bins}, &n.var});
        entries.push_back({kNormWeight, {bins}, &n.gamma});
        entries.push_back({kNormBias, {bins}, &n.beta});
        scratch.push_back({n.eps});
        entries.push_back({kNormEps, {1}, &scratch.back()});
    }
    return entries;
}

std::uint64_t read_u64(const std::uint8_t* p) {
    std::uint64_t v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

std::uint32_t read_u32(const std::uint8_t* p) {
    std::uint32_t v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

struct Record {
    std::vector<std::int64_t> shape;
    std::size_t offset = 0;
    std::size_t bytes = 0;
};

} // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<std::uint8_t> encode_weights(const WeightSet& w) {
    static_assert(std::endian::native == std::endian::little, "SATW writer assumes a little-endian host");
    std::vector<std::vector<float>> scratch;
    scratch.reserve(1);
    const auto entries = collect(w, scratch);

    json tensors = json::array();
    std::size_t offset = 0;
    for (const auto& e : entries) {
        tensors.push_back({{"name", e.name}, {"dtype", "f32"}, {"shape", e.shape}, {"byte_offset", offset}});
        offset = align_up(offset + e.data->size() * sizeof(float));
    }
    const std::size_t payload_bytes = offset;
    const json header = {{"format", "SATW"}, {"version", kWeightFormatVersion}, {"payload_bytes", payload_bytes},
                         {"tensors", tensors}};
    const std::string text = header.dump();

    const std::size_t payload_start = align_up(kPreambleBytes + text.size());
    std::vector<std::uint8_t> out(payload_start + payload_bytes, 0);
    std::memcpy(out.data(), kMagic, 4);
    const std::uint32_t version = kWeightFormatVersion;
    std::memcpy(out.data() + 4, &version, 4);
    const std::uint64_t header_len = text.size();
    std::memcpy(out.data() + 8, &header_len, 8);
    std::memcpy(out.data() + kPreambleBytes, text.data(), text.size());

    offset = 0;
    for (const auto& e : entries) {
        std::memcpy(out.data() + payload_start + offset, e.data->data(), e.data->size() * sizeof(float));
        offset = align_up(offset + e.data->size() * sizeof(float));
    }
    return out;
}

void save_weights(const WeightSet& w, const std::filesystem::path& path) {
    const auto bytes = encode_weights(w);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WeightError("cannot open weight file for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw WeightError("failed writing weight file: " + path.string());
}

WeightSet decode_weights(std::span<const std::uint8_t> bytes, const ModelConfig& cfg) {
    cfg.validate();
    if (bytes.size() < kPreambleBytes) throw WeightError("truncated weight file (no preamble)");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw WeightError("bad magic: not a SATW weight file");
    const std::uint32_t version = read_u32(bytes.data() + 4);
    if (version != kWeightFormatVersion) {
        throw WeightError("unknown SATW version " + std::to_string(version) + " (this build reads version " +
                          std::to_string(kWeightFormatVersion) + ")");
    }
    const std::uint64_t header_len = read_u64(bytes.data() + 8);
    if (header_len > bytes.size() - kPreambleBytes) throw WeightError("truncated weight file (header)");

    json header;
    try {
        header = json::parse(bytes.begin() + kPreambleBytes,
                             bytes.begin() + static_cast<std::ptrdiff_t>(kPreambleBytes + header_len));
    } catch (const json::exception& e) {
        throw WeightError(std::string("malformed SATW header: ") + e.what());
    }

    const std::size_t payload_start = align_up(kPreambleBytes + header_len);
    if (payload_start > bytes.size()) throw WeightError("truncated weight file (payload missing)");
    std::size_t payload_size = bytes.size() - payload_start;
    if (header.contains("payload_bytes")) {
        const auto declared = header["payload_bytes"];
        if (!declared.is_number_unsigned()) throw WeightError("malformed SATW header: payload_bytes");
        if (declared.get<std::uint64_t>() > payload_size) {
            throw WeightError("truncated weight file: header declares " + std::to_string(declared.get<std::uint64_t>()) +
                              " payload bytes, file holds " + std::to_string(payload_size));
        }
        payload_size = declared.get<std::size_t>();
    }

    std::map<std::string, Record> records;
    std::vector<std::pair<std::size_t, std::size_t>> extents;
    try {
        for (const auto& t : header.at("tensors")) {
            Record r;
            const auto name = t.at("name").get<std::string>();
            if (t.at("dtype").get<std::string>() != "f32") {
                throw WeightError("tensor '" + name + "' has unsupported dtype " + t.at("dtype").dump());
            }
            r.shape = t.at("shape").get<std::vector<std::int64_t>>();
            r.offset = t.at("byte_offset").get<std::size_t>();
            std::size_t numel = 1;
            for (auto dim : r.shape) {
                if (dim < 0) throw WeightError("tensor '" + name + "' has a negative dimension");
                numel *= static_cast<std::size_t>(dim);
            }
            r.bytes = numel * sizeof(float);
            if (r.offset % kPayloadAlignment != 0) throw WeightError("tensor '" + name + "' is not 64-byte aligned");
            if (r.offset > payload_size || r.bytes > payload_size - r.offset) {
                throw WeightError("truncated weight file: tensor '" + name + "' extends past the payload");
            }
            if (!records.emplace(name, r).second) throw WeightError("duplicate tensor name '" + name + "'");
            extents.emplace_back(r.offset, r.bytes);
        }
    } catch (const json::exception& e) {
        throw WeightError(std::string("malformed SATW header: ") + e.what());
    }
    std::sort(extents.begin(), extents.end());
    for (std::size_t i = 1; i < extents.size(); ++i) {
        if (extents[i - 1].first + extents[i - 1].second > extents[i].first) {
            throw WeightError("SATW tensors overlap in the payload");
        }
    }

    const std::uint8_t* payload = bytes.data() + payload_start;
    std::set<std::string> used;
    auto read_tensor = [&](const std::string& name, const std::vector<std::int64_t>& expected) {
        const auto it = records.find(name);
        if (it == records.end()) throw WeightError("missing tensor '" + name + "'");
        if (it->second.shape != expected) {
            throw WeightError("tensor '" + name + "' has shape " + shape_string(it->second.shape) + ", expected " +
                              shape_string(expected));
        }
        Tensor t;
        t.shape = expected;
        t.data.resize(it->second.bytes / sizeof(float));
        std::memcpy(t.data.data(), payload + it->second.offset, it->second.bytes);
        for (float v : t.data) {
            if (!std::isfinite(v)) throw WeightError("tensor '" + name + "' contains non-finite values");
        }
        used.insert(name);
        return t;
    };

    WeightSet w;
    w.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    if (cfg.pooling == Pooling::Cls || records.contains("cls_token")) w.cls_token = Tensor{};
    const auto specs = expected_tensors(cfg);
    std::map<std::string, std::vector<std::int64_t>> shapes;
    for (const auto& s : specs) shapes[s.name] = s.shape;
    if (w.cls_token) shapes["cls_token"] = {cfg.embed_dim};
    w.for_each_tensor([&](const std::string& name, Tensor& t) { t = read_tensor(name, shapes.at(name)); });

    const bool has_norm = records.contains(kNormMean) || records.contains(kNormVar) ||
                          records.contains(kNormWeight) || records.contains(kNormBias);
    if (has_norm) {
        const std::vector<std::int64_t> bins{cfg.n_mels};
        NormalizerParams n;
        n.mean = read_tensor(kNormMean, bins).data;
        n.var = read_tensor(kNormVar, bins).data;
        n.gamma = read_tensor(kNormWeight, bins).data;
        n.beta = read_tensor(kNormBias, bins).data;
        n.eps = records.contains(kNormEps) ? read_tensor(kNormEps, {1}).data[0] : 1e-5f;
        try {
            n.validate(cfg.n_mels);
        } catch (const Error& e) {
            throw WeightError(e.what());
        }
        w.normalizer = std::move(n);
    }

    for (const auto& [name, record] : records) {
        if (!used.contains(name)) throw WeightError("unexpected tensor '" + name + "' for this architecture");
    }
    return w;
}

WeightSet load_weights(const std::filesystem::path& path, const ModelConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WeightError("cannot open weight file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_weights(bytes, cfg);
    } catch (const WeightError& e) {
        throw WeightError(path.string() + ": " + e.what());
    }
}

WeightSet seeded_init(const ModelConfig& cfg, std::uint64_t seed) {
    WeightSet w = WeightSet::zeros(cfg);
    std::uint64_t state = seed;
    constexpr double kStd = 0.02;
    auto uniform = [&] {
        // 53 random bits into (0, 1].
        return (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
    };
    auto normal = [&] {
        for (;;) {
            const double u1 = uniform();
            const double u2 = uniform();
            const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
            if (std::abs(z) <= 2.0) return static_cast<float>(z * kStd);
        }
    };
    w.for_each_tensor([&](const std::string& name, Tensor& t) {
        const bool is_norm =
            name.ends_with("norm1.weight") || name.ends_with("norm1.bias") || name.ends_with("norm2.weight") ||
            name.ends_with("norm2.bias") || name == "norm.weight" || name == "norm.bias";
        if (is_norm) return;
        for (float& v : t.data) v = normal();
    });
    return w;
}

} // namespace sat
