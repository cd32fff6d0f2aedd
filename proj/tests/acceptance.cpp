// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "metrics_oracle.hpp"
#include "reference_model.hpp"
#include "sat/checkpoint.hpp"
#include "sat/cli.hpp"
#include "sat/metrics.hpp"
#include "sat/profiler.hpp"
#include "sat/stream.hpp"
#include "test_support.hpp"

using namespace sat;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances.
constexpr double kOracleTol = 1e-5;
constexpr double kFlopsTol = 0.15;
constexpr double kMemRatioTol = 0.20;
constexpr double kConstantMemTol = 0.01;
constexpr double kApTol = 1e-9;
constexpr double kHandApTol = 1e-15; // summation order differs from 7/12 by one ulp
constexpr double kRowSumTol = 1e-6;
constexpr double kChunkBudgetMs = 500.0;
constexpr double kTinyOracleBudgetS = 60.0;
constexpr double kBaseOracleBudgetS = 300.0;
constexpr double kTokenBudgetS = 1.0;

// Reference values: Gflops at 256 tokens and at 48 tokens with 48 cached,
// and peak memory in MB at 256 tokens, for tiny / small / base.
constexpr double kFullGflops[3] = {2.7, 10.0, 42.0};
constexpr double kStreamGflops[3] = {0.5, 2.1, 8.2};
constexpr double kPeakMb[3] = {52.0, 105.0, 210.0};

int g_failed = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failed;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const ModelConfig kVariants[3] = {ModelConfig::tiny(), ModelConfig::small(), ModelConfig::base()};

void token_accounting() {
    const auto t0 = Clock::now();
    const auto cfg = ModelConfig::tiny();
    const WeightSet w = WeightSet::zeros(cfg);
    const auto n1024 = patchify(test::random_mel(1024, 1), cfg, w).n_tokens();
    const auto n192 = patchify(test::random_mel(192, 1), cfg, w).n_tokens();
    const auto n96 = patchify(test::random_mel(96, 1), cfg, w).n_tokens();
    const auto two = ChunkPlan::for_delay(2.0, cfg);
    const auto one = ChunkPlan::for_delay(1.0, cfg);
    const bool plans = two.model_frames == 192 && one.model_frames == 96 && ChunkPlan::full(cfg).model_frames == 1024;
    const double dt = seconds_since(t0);
    report(n1024 == 256 && n192 == 48 && n96 == 24 && plans && dt < kTokenBudgetS, "token_accounting",
           fmt("1024/192/96 frames -> %lld/%lld/%lld tokens (want 256/48/24 exact), chunk plans %s, %.3f s (< %.0f s)",
               static_cast<long long>(n1024), static_cast<long long>(n192), static_cast<long long>(n96),
               plans ? "ok" : "wrong", dt, kTokenBudgetS));
}

void streaming_oracle() {
    bool ok = true;
    std::string detail;
    for (const auto& cfg : kVariants) {
        const auto t0 = Clock::now();
        const WeightSet w = seeded_init(cfg, 1000 + static_cast<std::uint64_t>(cfg.embed_dim));
        std::vector<MelSpectrogram> chunks;
        for (std::uint32_t k = 0; k < 5; ++k) chunks.push_back(test::random_mel(192, 500 + k));
        StreamState state(cfg, ChunkPlan::for_delay(2.0, cfg));
        std::vector<std::vector<float>> got;
        for (const auto& c : chunks) got.push_back(process_chunk(state, w, c));
        const auto want = test::reference_stream(chunks, cfg, w);
        double worst = 0.0;
        for (std::size_t k = 0; k < chunks.size(); ++k) worst = std::max(worst, test::max_abs_diff(got[k], want[k]));
        const double dt = seconds_since(t0);
        const double budget = cfg.variant == Variant::Base ? kBaseOracleBudgetS : kTinyOracleBudgetS;
        ok = ok && worst <= kOracleTol && dt < budget;
        detail += fmt("%s max|diff| %.2e in %.1f s (< %.0f s); ", std::string(variant_name(cfg.variant)).c_str(), worst,
                      dt, budget);
    }
    report(ok, "streaming_oracle", detail + fmt("tolerance %.0e over 5 chunks", kOracleTol));
}

void causality() {
    const auto cfg = ModelConfig::tiny();
    const WeightSet w = seeded_init(cfg, 2001);
    const AudioBuffer base = test::synth_audio(10.0, 2002);
    const auto ref = run_clip(cfg, w, base, 2.0);
    bool ok = ref.n_chunks() == 5;
    int checked = 0;
    for (std::size_t k = 1; k < ref.n_chunks(); ++k) {
        AudioBuffer changed = base;
        std::mt19937 rng(static_cast<std::uint32_t>(k));
        std::uniform_real_distribution<float> u(-0.5f, 0.5f);
        // Perturb only samples that belong to chunk k's frames.
        const std::size_t from = static_cast<std::size_t>(ref.spans[k].begin_frame) * 160;
        const std::size_t to = std::min(changed.samples.size(), from + 32000);
        for (std::size_t i = from; i < to; ++i) changed.samples[i] = u(rng);
        const auto got = run_clip(cfg, w, changed, 2.0);
        for (std::size_t j = 0; j < k; ++j) {
            ok = ok && got.rows[j] == ref.rows[j];
            ++checked;
        }
        ok = ok && got.rows[k] != ref.rows[k];
    }
    report(ok, "causality", fmt("%d earlier-chunk rows compared bitwise after perturbing chunks 1..4 (exact)", checked));
}

void constant_memory() {
    if (!memory_tracking_available()) {
        report(false, "constant_streaming_memory", "allocation hook not linked");
        return;
    }
    const auto cfg = ModelConfig::tiny();
    const WeightSet w = seeded_init(cfg, 3001);
    auto stream = [&](int chunks) {
        return measured_peak_memory([&] {
            StreamState state(cfg, ChunkPlan::for_delay(2.0, cfg));
            std::vector<double> running(static_cast<std::size_t>(cfg.n_classes), 0.0);
            for (int k = 0; k < chunks; ++k) {
                const auto row = process_chunk(state, w, test::random_mel(192, static_cast<std::uint32_t>(k)));
                for (std::size_t c = 0; c < running.size(); ++c) running[c] += row[c];
            }
        });
    };
    const auto two = stream(2);
    const auto twenty = stream(20);
    const double rel = std::abs(double(twenty) - double(two)) / double(two);
    report(rel <= kConstantMemTol, "constant_streaming_memory",
           fmt("peak live bytes 2 chunks %lld, 20 chunks %lld, relative diff %.4f (<= %.2f)",
               static_cast<long long>(two), static_cast<long long>(twenty), rel, kConstantMemTol));
}

void flops_accounting() {
    bool ok = true;
    std::string detail = "Gflops full/streaming ";
    for (int v = 0; v < 3; ++v) {
        const auto& cfg = kVariants[v];
        const double full = estimate_flops(cfg, 256, 0, FlopCounting::ParameterizedLayers) / 1e9;
        const double strm = estimate_flops(cfg, 48, 48, FlopCounting::ParameterizedLayers) / 1e9;
        ok = ok && std::abs(full / kFullGflops[v] - 1.0) <= kFlopsTol && std::abs(strm / kStreamGflops[v] - 1.0) <= kFlopsTol;
        detail += fmt("%s %.2f/%.2f (want %.1f/%.1f) ", std::string(variant_name(cfg.variant)).c_str(), full, strm,
                      kFullGflops[v], kStreamGflops[v]);
    }
    const double t = double(estimate_retained_memory(kVariants[0], 256, 0));
    const double rs = estimate_retained_memory(kVariants[1], 256, 0) / t;
    const double rb = estimate_retained_memory(kVariants[2], 256, 0) / t;
    const double ws = kPeakMb[1] / kPeakMb[0];
    const double wb = kPeakMb[2] / kPeakMb[0];
    ok = ok && std::abs(rs / ws - 1.0) <= kMemRatioTol && std::abs(rb / wb - 1.0) <= kMemRatioTol;
    detail += fmt("+-%.0f%%; memory ratio S/T %.2f (want %.2f), B/T %.2f (want %.2f) +-%.0f%%", kFlopsTol * 100, rs, ws,
                  rb, wb, kMemRatioTol * 100);
    report(ok, "flops_and_memory_accounting", detail);
}

void metric_oracles() {
    const double hand = *average_precision(std::vector<double>{0.9, 0.8, 0.7}, std::vector<std::uint8_t>{0, 1, 1});
    bool ok = std::abs(hand - 7.0 / 12.0) <= kHandApTol;
    double worst = 0.0;
    std::mt19937 rng(4001);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int inst = 0; inst < 200; ++inst) {
        const std::int64_t clips = 20 + inst % 60;
        ClipLabelMatrix m(clips, 527);
        const bool ties = inst % 3 == 0;
        for (std::size_t i = 0; i < m.labels.size(); ++i) {
            m.labels[i] = u(rng) < 0.08 ? 1 : 0;
            m.scores[i] = ties ? std::floor(u(rng) * 10.0) / 10.0 : u(rng);
        }
        m.labels[0] = 1;
        const auto r = mean_ap_detailed(m);
        double sum = 0.0;
        int scored = 0;
        for (std::int64_t c = 0; c < 527; ++c) {
            std::vector<double> s;
            std::vector<std::uint8_t> y;
            for (std::int64_t i = 0; i < clips; ++i) {
                s.push_back(m.score(i, c));
                y.push_back(m.label(i, c));
            }
            const auto want = test::brute_force_ap(s, y);
            if (want.has_value() != r.per_class[static_cast<std::size_t>(c)].has_value()) {
                ok = false;
                continue;
            }
            if (!want) continue;
            sum += *want;
            ++scored;
        }
        worst = std::max(worst, std::abs(sum / scored - r.map));
    }
    ok = ok && worst <= kApTol;
    report(ok, "metric_oracles",
           fmt("hand example %.17g (want 7/12 within %.0e); 200 x 527-class mAP vs brute force max|diff| %.2e (<= %.0e)", hand,
               kHandApTol, worst, kApTol));
}

struct HygieneObserver : AttentionObserver {
    double worst = 0.0;
    std::int64_t rows = 0;
    bool finite = true;
    void on_attention(int, int, int n_query, int n_context, std::span<const float> a) override {
        for (int i = 0; i < n_query; ++i) {
            double s = 0.0;
            for (int j = 0; j < n_context; ++j) {
                const float x = a[static_cast<std::size_t>(i * n_context + j)];
                finite = finite && std::isfinite(x);
                s += x;
            }
            worst = std::max(worst, std::abs(s - 1.0));
            ++rows;
        }
    }
};

void numerical_hygiene() {
    const auto cfg = ModelConfig::tiny();
    const WeightSet w = seeded_init(cfg, 5001);
    HygieneObserver obs;
    bool finite = true;
    std::mt19937 rng(5002);
    std::normal_distribution<float> g(0.0f, 1.0f);
    const int token_counts[3] = {24, 48, 256};
    for (int i = 0; i < 1000; ++i) {
        const int n = token_counts[i % 3];
        TokenGrid x;
        x.n_freq_patches = 4;
        x.n_time_patches = n / 4;
        x.tokens = Matrix(n, cfg.embed_dim);
        const float scale = std::pow(10.0f, static_cast<float>(i % 5) - 2.0f);
        for (float& v : x.tokens.flat()) v = scale * g(rng);
        LayerKV cache;
        const bool with_cache = i % 2 == 1;
        if (with_cache) cache = attention(x, i % 12, cfg, w, nullptr).kv;
        const auto r = attention(x, i % 12, cfg, w, with_cache ? &cache : nullptr, &obs);
        for (float v : r.output.tokens.flat()) finite = finite && std::isfinite(v);
    }
    for (int frames : {96, 192, 1024}) {
        StreamState state(cfg, frames == 1024 ? ChunkPlan::full(cfg) : ChunkPlan::for_delay(frames / 96.0, cfg));
        for (int k = 0; k < 2; ++k) {
            for (float v : process_chunk(state, w, test::random_mel(frames, static_cast<std::uint32_t>(frames + k)), &obs)) {
                finite = finite && std::isfinite(v);
            }
        }
    }
    const bool ok = obs.finite && finite && obs.worst <= kRowSumTol;
    report(ok, "numerical_hygiene",
           fmt("%lld attention rows from 1000 random forwards plus 24/48/256-token streams, max|rowsum-1| %.2e (<= %.0e), "
               "non-finite values: %s",
               static_cast<long long>(obs.rows), obs.worst, kRowSumTol, obs.finite && finite ? "none" : "FOUND"));
}

void eval_determinism() {
    const auto dir = test::scratch_dir("acceptance_eval");
    {
        std::ofstream manifest(dir / "manifest.tsv");
        std::ofstream strong(dir / "strong.tsv");
        for (int i = 0; i < 10; ++i) {
            const std::string name = "clip" + std::to_string(i);
            save_wav(dir / (name + ".wav"), test::synth_audio(10.0, 6000 + i, 100.0 + 300.0 * i));
            manifest << name << '\t' << name << ".wav\t" << (i % 5) << '\n';
            strong << name << "\t1.0\t3.0\t" << (i % 5) << '\n';
        }
    }
    const std::string manifest = (dir / "manifest.tsv").string();
    const std::string strong = (dir / "strong.tsv").string();
    auto once = [&](std::string& out) {
        const char* argv[] = {"sat", "eval", "--arch", "tiny", "--seed", "7", "--manifest", manifest.c_str(),
                              "--strong-labels", strong.c_str()};
        std::istringstream in;
        std::ostringstream o;
        std::ostringstream e;
        const int code = cli::run(10, argv, in, o, e, nullptr);
        out = o.str();
        return code;
    };
    std::string a;
    std::string b;
    const int ca = once(a);
    const int cb = once(b);
    report(ca == 0 && cb == 0 && a == b && !a.empty(), "eval_determinism",
           fmt("two eval runs over 10 synthetic clips: exit %d/%d, %zu bytes, byte-identical: %s", ca, cb, a.size(),
               a == b ? "yes" : "no"));
}

void throughput() {
    const auto cfg = ModelConfig::tiny();
    const WeightSet w = seeded_init(cfg, 7001);
    const auto mel = test::random_mel(192, 7002);
    StreamState state(cfg, ChunkPlan::for_delay(2.0, cfg));
    process_chunk(state, w, mel);
    std::vector<double> ms;
    for (int i = 0; i < 9; ++i) {
        const auto t0 = Clock::now();
        process_chunk(state, w, mel);
        ms.push_back(seconds_since(t0) * 1e3);
    }
    std::sort(ms.begin(), ms.end());
    const double median = ms[ms.size() / 2];
    report(median < kChunkBudgetMs, "throughput",
           fmt("tiny 2 s chunk with cache: median %.1f ms over 9 runs (< %.0f ms), real-time factor %.3f", median,
               kChunkBudgetMs, median / 2000.0));
}

} // namespace

int main() {
    token_accounting();
    streaming_oracle();
    causality();
    constant_memory();
    flops_accounting();
    metric_oracles();
    numerical_hygiene();
    eval_determinism();
    throughput();
    std::printf("%d criteria failed\n", g_failed);
    return g_failed == 0 ? 0 : 1;
}
