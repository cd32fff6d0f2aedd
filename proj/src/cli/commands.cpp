#include <algorithm>
#include <cstring>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "sat/checkpoint.hpp"
#include "sat/cli.hpp"
#include "sat/error.hpp"
#include "sat/metrics.hpp"
#include "sat/profiler.hpp"

namespace sat::cli {
namespace {

std::map<int, std::string> class_names(const std::string& path) {
    if (path.empty()) return {};
    return load_class_names(path);
}

std::string stream_id_for(const std::string& input) {
    if (input.empty()) return "stdin";
    return std::filesystem::path(input).stem().string();
}

// Maps an exception from a command body onto an exit code.
int report(const std::exception_ptr& eptr, std::ostream& err) {
    try {
        std::rethrow_exception(eptr);
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << '\n';
        return kExitBadArgs;
    } catch (const WeightError& e) {
        err << "error: " << e.what() << '\n';
        return kExitWeights;
    } catch (const AudioError& e) {
        err << "error: " << e.what() << '\n';
        return kExitAudio;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

TagRecord chunk_record(const std::string& id, const ChunkResult& c, int topk, const std::map<int, std::string>& names) {
    TagRecord r;
    r.stream_id = id;
    r.chunk_index = c.index;
    r.start_s = c.span.start_s;
    r.end_s = c.span.end_s;
    r.tokens = c.tokens;
    r.top = top_k(c.scores, topk, names);
    return r;
}

TagRecord summary_record(const std::string& id, const std::vector<std::vector<float>>& rows, double start_s,
                         double end_s, int tokens, int topk, const std::map<int, std::string>& names) {
    TagRecord r;
    r.stream_id = id;
    r.type = "summary";
    r.chunk_index = -1;
    r.start_s = start_s;
    r.end_s = end_s;
    r.tokens = tokens;
    r.chunks = static_cast<std::int64_t>(rows.size());
    if (!rows.empty()) r.top = top_k(average_rows(rows), topk, names);
    return r;
}

int env_threads() {
    if (const char* v = std::getenv("SAT_NUM_THREADS")) {
        const int n = std::atoi(v);
        if (n > 0) return n;
    }
    return static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
}

struct ManifestRow {
    std::string clip_id;
    std::filesystem::path wav;
    std::vector<int> labels;
    bool has_labels = false;
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open manifest: " + path.string());
    std::vector<ManifestRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) f.push_back(field);
        if (f.size() < 2) throw ArgumentError(path.string() + ":" + std::to_string(line_no) + ": expected clip_id<TAB>wav_path[<TAB>class_ids]");
        if (line_no == 1 && f[0] == "clip_id") continue;
        ManifestRow row;
        row.clip_id = f[0];
        row.wav = f[1];
        if (row.wav.is_relative()) row.wav = path.parent_path() / row.wav;
        if (f.size() >= 3) {
            row.labels = parse_class_list(f[2]);
            row.has_labels = true;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

int cmd_tag(const TagOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        if (opt.format != "jsonl" && opt.format != "csv") throw ArgumentError("--format must be jsonl or csv");
        if (opt.topk < 1) throw ArgumentError("--topk must be positive");
        const ModelConfig cfg = ModelConfig::for_variant(parse_variant(opt.model.arch));
        const ChunkPlan plan = parse_delay(opt.delay, cfg);
        const auto names = class_names(opt.labels);
        const WeightSet w = load_model(opt.model, cfg);
        const AudioBuffer audio = load_wav(opt.input);
        const ClipScores clip = run_clip(cfg, w, audio, plan);

        const std::string id = stream_id_for(opt.input);
        std::vector<TagRecord> records;
        for (std::size_t i = 0; i < clip.rows.size(); ++i) {
            ChunkResult c;
            c.index = static_cast<std::int64_t>(i);
            c.span = clip.spans[i];
            c.tokens = clip.tokens[i];
            c.scores = clip.rows[i];
            records.push_back(chunk_record(id, c, opt.topk, names));
        }
        // A single full-context window is already the clip-level answer.
        if (!(plan.full_context && clip.rows.size() == 1)) {
            records.push_back(summary_record(id, clip.rows, 0.0, clip.spans.back().end_s, clip.tokens.front(),
                                             opt.topk, names));
        }
        if (opt.format == "csv") write_csv_header(out);
        for (const auto& r : records) {
            if (opt.format == "csv") write_csv(out, r);
            else out << to_json(r).dump() << '\n';
        }
        out.flush();
        return kExitOk;
    } catch (...) {
        return report(std::current_exception(), err);
    }
}

int cmd_stream(const StreamOptions& opt, std::istream& in, std::ostream& out, std::ostream& err,
               const std::atomic<bool>* stop) {
    try {
        if (opt.stdin_raw_f32 == !opt.input.empty()) {
            throw ArgumentError("exactly one of --stdin-raw-f32 or --input is required");
        }
        if (opt.topk < 1) throw ArgumentError("--topk must be positive");
        const ModelConfig cfg = ModelConfig::for_variant(parse_variant(opt.model.arch));
        const ChunkPlan plan = parse_delay(opt.delay, cfg);
        const auto names = class_names(opt.labels);
        const WeightSet w = load_model(opt.model, cfg);
        const std::string id = stream_id_for(opt.input);

        StreamingTagger tagger(cfg, w, plan, !opt.no_cache);
        std::vector<std::vector<float>> rows;
        std::vector<ChunkResult> ready;
        double first_start = 0.0;
        double last_end = 0.0;
        int tokens = 0;
        auto drain = [&] {
            for (const auto& c : ready) {
                if (rows.empty()) {
                    first_start = c.span.start_s;
                    tokens = c.tokens;
                }
                last_end = c.span.end_s;
                // Only the running rows needed for the summary are kept.
                rows.push_back(c.scores);
                out << to_json(chunk_record(id, c, opt.topk, names)).dump() << '\n';
                out.flush();
            }
            ready.clear();
        };
        auto stopped = [&] { return stop != nullptr && stop->load(); };

        bool interrupted = false;
        if (!opt.input.empty()) {
            const AudioBuffer audio = load_wav(opt.input);
            const std::span<const float> all(audio.samples);
            for (std::size_t pos = 0; pos < all.size(); pos += opt.block_samples) {
                if (stopped()) {
                    interrupted = true;
                    break;
                }
                tagger.push(all.subspan(pos, std::min(opt.block_samples, all.size() - pos)), ready);
                drain();
            }
        } else {
            std::vector<char> bytes(opt.block_samples * sizeof(float));
            std::vector<char> carry;
            std::vector<float> block;
            while (true) {
                if (stopped()) {
                    interrupted = true;
                    break;
                }
                in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
                const auto got = static_cast<std::size_t>(in.gcount());
                carry.insert(carry.end(), bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(got));
                const std::size_t whole = carry.size() / sizeof(float);
                block.resize(whole);
                std::memcpy(block.data(), carry.data(), whole * sizeof(float));
                carry.erase(carry.begin(), carry.begin() + static_cast<std::ptrdiff_t>(whole * sizeof(float)));
                tagger.push(block, ready);
                drain();
                if (!in) {
                    if (stopped()) interrupted = true;
                    break;
                }
            }
            if (!carry.empty() && !interrupted) err << "warning: dropped " << carry.size() << " trailing bytes\n";
        }
        if (!interrupted) {
            tagger.finish(ready);
            drain();
        }
        if (rows.empty() && !interrupted) throw AudioError("stream ended before one chunk of audio was available");
        TagRecord summary = summary_record(id, rows, first_start, last_end, tokens, opt.topk, names);
        summary.interrupted = interrupted;
        out << to_json(summary).dump() << '\n';
        out.flush();
        return kExitOk;
    } catch (...) {
        return report(std::current_exception(), err);
    }
}

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        const ModelConfig cfg = ModelConfig::for_variant(parse_variant(opt.model.arch));
        const ChunkPlan plan = parse_delay(opt.delay, cfg);
        const WeightSet w = load_model(opt.model, cfg);
        const auto rows = read_manifest(opt.manifest);
        if (rows.empty()) throw ArgumentError("manifest is empty");
        std::map<std::string, std::vector<int>> weak;
        if (!opt.weak_labels.empty()) weak = load_weak_labels(opt.weak_labels);
        std::map<std::string, std::vector<Event>> strong;
        if (!opt.strong_labels.empty()) strong = load_strong_labels(opt.strong_labels);

        const std::size_t n = rows.size();
        std::vector<std::optional<ClipScores>> results(n);
        std::vector<std::string> failures(n);
        std::atomic<std::size_t> next{0};
        const int n_threads = std::clamp(opt.threads > 0 ? opt.threads : env_threads(), 1, static_cast<int>(n));
        auto worker = [&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    results[i] = run_clip(cfg, w, load_wav(rows[i].wav), plan);
                } catch (const std::exception& e) {
                    failures[i] = e.what();
                }
            }
        };
        std::vector<std::thread> pool;
        for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();

        std::vector<std::size_t> ok;
        nlohmann::json failed = nlohmann::json::array();
        for (std::size_t i = 0; i < n; ++i) {
            if (results[i]) {
                ok.push_back(i);
            } else {
                err << "warning: " << rows[i].clip_id << ": " << failures[i] << '\n';
                failed.push_back(rows[i].clip_id);
            }
        }

        ClipLabelMatrix m(static_cast<std::int64_t>(ok.size()), cfg.n_classes);
        for (std::size_t r = 0; r < ok.size(); ++r) {
            const auto& row = rows[ok[r]];
            const auto& clip = *results[ok[r]];
            std::vector<int> labels = row.labels;
            if (const auto it = weak.find(row.clip_id); it != weak.end()) labels = it->second;
            for (int c : labels) {
                if (c < 0 || c >= cfg.n_classes) {
                    throw ArgumentError(row.clip_id + ": class id " + std::to_string(c) + " out of range");
                }
                m.label(static_cast<std::int64_t>(r), c) = 1;
            }
            for (int c = 0; c < cfg.n_classes; ++c) {
                m.score(static_cast<std::int64_t>(r), c) = clip.averaged[static_cast<std::size_t>(c)];
            }
        }

        nlohmann::json report_json = {
            {"schema", kEvalSchema},
            {"arch", std::string(variant_name(cfg.variant))},
            {"delay", opt.delay},
            {"n_clips", n},
            {"n_evaluated", ok.size()},
            {"n_failed", n - ok.size()},
            {"failed", failed},
        };
        if (ok.empty()) {
            report_json["mAP"] = nullptr;
        } else {
            try {
                const auto map = mean_ap_detailed(m);
                report_json["mAP"] = map.map;
                report_json["n_scored_classes"] = map.classes_scored;
            } catch (const ArgumentError& e) {
                err << "warning: " << e.what() << '\n';
                report_json["mAP"] = nullptr;
                report_json["n_scored_classes"] = 0;
            }
        }
        if (!opt.strong_labels.empty()) {
            const double chunk_s = plan.stride_s();
            F1Counts seg;
            F1Counts onset;
            for (std::size_t i : ok) {
                const auto it = strong.find(rows[i].clip_id);
                const std::vector<Event> none;
                const std::vector<Event>& truth = it != strong.end() ? it->second : none;
                const auto& clip = *results[i];
                seg += segment_counts(clip.rows, truth, chunk_s);
                onset += onset_counts(events_from_chunks(clip.rows, chunk_s), truth);
            }
            report_json["seg_f1"] = seg.f1();
            report_json["onset_f1"] = onset.f1();
            report_json["segment_s"] = chunk_s;
            report_json["onset_collar_s"] = kDefaultOnsetCollar;
        }
        out << report_json.dump(2) << '\n';
        out.flush();
        const bool too_many_failures = (n - ok.size()) * 10 > n;
        return too_many_failures ? kExitFailure : kExitOk;
    } catch (...) {
        return report(std::current_exception(), err);
    }
}

int cmd_profile(const ProfileOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        if (opt.format != "json" && opt.format != "table") throw ArgumentError("--format must be json or table");
        if (opt.tokens.has_value() == opt.delay.has_value()) throw ArgumentError("exactly one of --tokens or --delay is required");
        const ModelConfig cfg = ModelConfig::for_variant(parse_variant(opt.arch));
        std::int64_t n_tokens = 0;
        if (opt.tokens) {
            if (*opt.tokens < 1) throw ArgumentError("--tokens must be at least 1");
            n_tokens = *opt.tokens;
        } else {
            const ChunkPlan plan = parse_delay(*opt.delay, cfg);
            n_tokens = static_cast<std::int64_t>(plan.model_frames / cfg.patch_size) * cfg.n_freq_patches();
        }
        const CostReport r = profile(cfg, n_tokens, opt.streaming ? n_tokens : 0);
        if (opt.format == "table") {
            out << to_markdown(std::span<const CostReport>(&r, 1));
        } else {
            out << to_json(r).dump() << '\n';
        }
        return kExitOk;
    } catch (...) {
        return report(std::current_exception(), err);
    }
}

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err,
        const std::atomic<bool>* stop) {
    CLI::App app{"Streaming audio tagging engine"};
    app.require_subcommand(1);

    auto add_model = [](CLI::App* cmd, ModelSource& m) {
        cmd->add_option("--arch", m.arch, "tiny, small or base")->capture_default_str();
        cmd->add_option("--weights", m.weights, "SATW weight file");
        cmd->add_option("--seed", m.seed, "use seeded random weights instead of a file");
    };

    TagOptions tag;
    auto* tag_cmd = app.add_subcommand("tag", "Tag a WAV file chunk by chunk");
    add_model(tag_cmd, tag.model);
    tag_cmd->add_option("--delay", tag.delay, "1, 2 or full")->capture_default_str();
    tag_cmd->add_option("--input", tag.input, "16 kHz mono WAV")->required();
    tag_cmd->add_option("--topk", tag.topk)->capture_default_str();
    tag_cmd->add_option("--labels", tag.labels, "class-name CSV (id,name)");
    tag_cmd->add_option("--format", tag.format, "jsonl or csv")->capture_default_str();

    StreamOptions stream;
    auto* stream_cmd = app.add_subcommand("stream", "Tag a continuous stream, one record per chunk");
    add_model(stream_cmd, stream.model);
    stream_cmd->add_option("--delay", stream.delay, "1, 2 or full")->capture_default_str();
    stream_cmd->add_option("--input", stream.input, "16 kHz mono WAV");
    stream_cmd->add_flag("--stdin-raw-f32", stream.stdin_raw_f32, "read headerless f32le 16 kHz mono from stdin");
    stream_cmd->add_flag("--no-cache", stream.no_cache, "reset the key/value cache before every chunk");
    stream_cmd->add_option("--topk", stream.topk)->capture_default_str();
    stream_cmd->add_option("--labels", stream.labels, "class-name CSV (id,name)");

    EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a manifest of clips (mAP, Seg-F1, Onset-F1)");
    add_model(eval_cmd, eval.model);
    eval_cmd->add_option("--delay", eval.delay, "1, 2 or full")->capture_default_str();
    eval_cmd->add_option("--manifest", eval.manifest, "TSV: clip_id, wav_path[, class_ids]")->required();
    eval_cmd->add_option("--weak-labels", eval.weak_labels, "CSV: clip_id, class_ids");
    eval_cmd->add_option("--strong-labels", eval.strong_labels, "TSV: clip_id, onset_s, offset_s, class_id");
    eval_cmd->add_option("--threads", eval.threads, "worker threads (default: SAT_NUM_THREADS or all cores)");

    ProfileOptions prof;
    auto* prof_cmd = app.add_subcommand("profile", "Estimate flops and activation memory");
    prof_cmd->add_option("--arch", prof.arch)->capture_default_str();
    auto* tokens_opt = prof_cmd->add_option("--tokens", prof.tokens, "tokens per forward pass");
    auto* delay_opt = prof_cmd->add_option("--delay", prof.delay, "1, 2 or full");
    tokens_opt->excludes(delay_opt);
    prof_cmd->add_flag("--streaming", prof.streaming, "attend to one cached chunk of equal length");
    prof_cmd->add_option("--format", prof.format, "json or table")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        app.exit(e, out, err);
        return kExitBadArgs;
    }

    if (tag_cmd->parsed()) return cmd_tag(tag, out, err);
    if (stream_cmd->parsed()) return cmd_stream(stream, in, out, err, stop);
    if (eval_cmd->parsed()) return cmd_eval(eval, out, err);
    if (prof_cmd->parsed()) return cmd_profile(prof, out, err);
    return kExitBadArgs;
}

} // namespace sat::cli
