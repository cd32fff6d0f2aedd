#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "sat/checkpoint.hpp"
#include "sat/error.hpp"
#include "test_support.hpp"

using namespace sat;

namespace {

std::uint64_t read_u64(const std::vector<std::uint8_t>& b, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[at + static_cast<std::size_t>(i)];
    return v;
}

nlohmann::json header_of(const std::vector<std::uint8_t>& bytes) {
    const auto len = read_u64(bytes, 8);
    return nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
}

} // namespace

TEST_CASE("round trip is bitwise exact") {
    const auto cfg = ModelConfig::tiny();
    WeightSet w = seeded_init(cfg, 41);
    NormalizerParams bn = NormalizerParams::identity();
    bn.mean[5] = -3.25f;
    bn.var[7] = 2.5f;
    w.normalizer = bn;
    const auto bytes = encode_weights(w);
    const WeightSet back = decode_weights(bytes, cfg);
    CHECK(back == w);
    bool all_equal = true;
    w.for_each_tensor([&](const std::string& name, const Tensor& t) {
        const Tensor* other = nullptr;
        back.for_each_tensor([&](const std::string& n2, const Tensor& t2) {
            if (n2 == name) other = &t2;
        });
        all_equal = all_equal && other && other->shape == t.shape &&
                    std::memcmp(other->data.data(), t.data.data(), t.data.size() * sizeof(float)) == 0;
    });
    CHECK(all_equal);
    CHECK(encode_weights(back) == bytes);
}

TEST_CASE("file layout") {
    const auto cfg = ModelConfig::tiny();
    const auto bytes = encode_weights(seeded_init(cfg, 42));
    CHECK(std::memcmp(bytes.data(), "SATW", 4) == 0);
    CHECK(bytes[4] == 1);
    const auto h = header_of(bytes);
    CHECK(h["format"] == "SATW");
    CHECK(h["version"] == 1);
    const std::size_t payload_start = (16 + read_u64(bytes, 8) + 63) / 64 * 64;
    CHECK(bytes.size() == payload_start + h["payload_bytes"].get<std::size_t>());
    bool found = false;
    for (const auto& t : h["tensors"]) {
        CHECK(t["dtype"] == "f32");
        CHECK(t["byte_offset"].get<std::size_t>() % 64 == 0);
        if (t["name"] == "patch_embed.weight") {
            found = true;
            CHECK(t["shape"] == nlohmann::json::array({192, 1, 16, 16}));
        }
    }
    CHECK(found);
}

TEST_CASE("saving and loading through a file") {
    const auto cfg = ModelConfig::small();
    const WeightSet w = seeded_init(cfg, 43);
    const auto dir = test::scratch_dir("ckpt");
    save_weights(w, dir / "s.satw");
    CHECK(load_weights(dir / "s.satw", cfg) == w);
    CHECK_THROWS_WITH_AS(load_weights(dir / "missing.satw", cfg), doctest::Contains("missing.satw"), WeightError);
}

TEST_CASE("malformed files are weight errors") {
    const auto cfg = ModelConfig::tiny();
    const auto good = encode_weights(seeded_init(cfg, 44));
    SUBCASE("bad magic") {
        auto b = good;
        b[0] = 'X';
        CHECK_THROWS_WITH_AS(decode_weights(b, cfg), doctest::Contains("magic"), WeightError);
    }
    SUBCASE("unknown version") {
        auto b = good;
        b[4] = 9;
        CHECK_THROWS_WITH_AS(decode_weights(b, cfg), doctest::Contains("version"), WeightError);
    }
    SUBCASE("variant mismatch names the tensor and shapes") {
        const auto base = encode_weights(seeded_init(ModelConfig::base(), 1));
        CHECK_THROWS_WITH_AS(decode_weights(base, cfg), doctest::Contains("[768"), WeightError);
    }
    SUBCASE("non-finite value") {
        auto b = good;
        const std::size_t payload = (16 + read_u64(b, 8) + 63) / 64 * 64;
        const float nan = NAN;
        std::memcpy(b.data() + payload, &nan, 4);
        CHECK_THROWS_WITH_AS(decode_weights(b, cfg), doctest::Contains("non-finite"), WeightError);
    }
    SUBCASE("every truncation is rejected") {
        std::mt19937 rng(7);
        for (int i = 0; i < 200; ++i) {
            const std::size_t len = rng() % good.size();
            std::vector<std::uint8_t> b(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(len));
            CHECK_THROWS_AS(decode_weights(b, cfg), WeightError);
        }
    }
    SUBCASE("random header corruption never crashes") {
        std::mt19937 rng(8);
        const auto hlen = read_u64(good, 8);
        for (int i = 0; i < 300; ++i) {
            auto b = good;
            b[16 + rng() % hlen] = static_cast<std::uint8_t>(rng());
            try {
                decode_weights(b, cfg);
            } catch (const WeightError&) {
            }
        }
        CHECK(true);
    }
}

TEST_CASE("missing normalizer falls back to identity") {
    const auto cfg = ModelConfig::tiny();
    const WeightSet w = seeded_init(cfg, 45);
    CHECK_FALSE(w.normalizer.has_value());
    const auto back = decode_weights(encode_weights(w), cfg);
    CHECK_FALSE(back.normalizer.has_value());
    CHECK(back.effective_normalizer().is_identity());
}

TEST_CASE("cls token is required only in cls mode") {
    ModelConfig cfg = ModelConfig::tiny();
    cfg.pooling = Pooling::Cls;
    const WeightSet with_cls = seeded_init(cfg, 46);
    REQUIRE(with_cls.cls_token.has_value());
    CHECK(decode_weights(encode_weights(with_cls), cfg) == with_cls);
    const auto mean_bytes = encode_weights(seeded_init(ModelConfig::tiny(), 46));
    CHECK_THROWS_WITH_AS(decode_weights(mean_bytes, cfg), doctest::Contains("cls_token"), WeightError);
}

TEST_CASE("parameter counts are near the published model sizes") {
    CHECK(seeded_init(ModelConfig::tiny(), 1).parameter_count() == doctest::Approx(5.6e6).epsilon(0.05));
    CHECK(seeded_init(ModelConfig::small(), 1).parameter_count() == doctest::Approx(22e6).epsilon(0.05));
    CHECK(WeightSet::zeros(ModelConfig::base()).parameter_count() == doctest::Approx(86e6).epsilon(0.05));
}

TEST_CASE("seeded init is deterministic and bounded") {
    const auto cfg = ModelConfig::tiny();
    const WeightSet a = seeded_init(cfg, 47);
    CHECK(a == seeded_init(cfg, 47));
    CHECK_FALSE(a == seeded_init(cfg, 48));
    double sum = 0.0;
    double sq = 0.0;
    std::size_t n = 0;
    bool bounded = true;
    for (const auto& t : {a.layers[0].wq, a.layers[3].fc1_weight, a.head_weight}) {
        for (float v : t.data) {
            sum += v;
            sq += double(v) * v;
            ++n;
            bounded = bounded && std::abs(v) <= 0.04f;
        }
    }
    CHECK(bounded);
    CHECK(std::abs(sum / n) < 1e-3);
    // A normal truncated at 2 sigma keeps about 77% of its variance.
    CHECK(std::sqrt(sq / n) == doctest::Approx(0.02 * 0.88).epsilon(0.05));
    CHECK(a.layers[0].norm1_weight.data == std::vector<float>(192, 1.0f));
    CHECK(a.layers[0].norm1_bias.data == std::vector<float>(192, 0.0f));
}

TEST_CASE("splitmix64 reference values") {
    std::uint64_t s = 0;
    CHECK(splitmix64(s) == 0xe220a8397b1dcdafULL);
    CHECK(splitmix64(s) == 0x6e789e6aa1b965f4ULL);
}
