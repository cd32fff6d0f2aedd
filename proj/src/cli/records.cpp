#include <algorithm>
#include <cstdio>
#include <numeric>

#include "sat/checkpoint.hpp"
#include "sat/cli.hpp"
#include "sat/error.hpp"

namespace sat::cli {

ChunkPlan parse_delay(const std::string& delay, const ModelConfig& cfg) {
    if (delay == "full") return ChunkPlan::full(cfg);
    double seconds = 0.0;
    try {
        std::size_t used = 0;
        seconds = std::stod(delay, &used);
        if (used != delay.size()) throw ArgumentError("");
    } catch (const std::exception&) {
        throw ArgumentError("--delay must be 1, 2, full or a positive number of seconds (got '" + delay + "')");
    }
    return ChunkPlan::for_delay(seconds, cfg);
}

WeightSet load_model(const ModelSource& src, const ModelConfig& cfg) {
    if (!src.weights.empty() && src.seed) throw ArgumentError("--weights and --seed are mutually exclusive");
    if (src.seed) return seeded_init(cfg, *src.seed);
    if (src.weights.empty()) throw ArgumentError("one of --weights or --seed is required");
    return load_weights(src.weights, cfg);
}

std::vector<TagRecord::Entry> top_k(const std::vector<float>& scores, int k, const std::map<int, std::string>& names) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    const auto n = static_cast<std::size_t>(std::clamp<int>(k, 0, static_cast<int>(scores.size())));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), [&](int a, int b) {
        const auto ua = static_cast<std::size_t>(a);
        const auto ub = static_cast<std::size_t>(b);
        return scores[ua] > scores[ub] || (scores[ua] == scores[ub] && a < b);
    });
    std::vector<TagRecord::Entry> top;
    for (std::size_t i = 0; i < n; ++i) {
        const int id = order[i];
        const auto it = names.find(id);
        top.push_back({id, it != names.end() ? it->second : "class_" + std::to_string(id),
                       scores[static_cast<std::size_t>(id)]});
    }
    return top;
}

nlohmann::json to_json(const TagRecord& r) {
    nlohmann::json top = nlohmann::json::array();
    for (const auto& e : r.top) top.push_back({{"id", e.class_id}, {"name", e.class_name}, {"p", e.probability}});
    nlohmann::json j = {
        {"schema", kTagSchema}, {"stream", r.stream_id}, {"type", r.type},     {"chunk", r.chunk_index},
        {"start_s", r.start_s}, {"end_s", r.end_s},      {"tokens", r.tokens}, {"top", top},
    };
    if (r.type == "summary") {
        j["chunks"] = r.chunks;
        if (r.interrupted) j["interrupted"] = true;
    }
    return j;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

} // namespace

void write_csv_header(std::ostream& out) {
    out << "schema,stream,type,chunk,start_s,end_s,tokens,rank,class_id,class_name,probability\n";
}

void write_csv(std::ostream& out, const TagRecord& r) {
    for (std::size_t rank = 0; rank < r.top.size(); ++rank) {
        const auto& e = r.top[rank];
        out << kTagSchema << ',' << csv_field(r.stream_id) << ',' << r.type << ',' << r.chunk_index << ','
            << num(r.start_s) << ',' << num(r.end_s) << ',' << r.tokens << ',' << rank + 1 << ',' << e.class_id << ','
            << csv_field(e.class_name) << ',' << num(e.probability) << '\n';
    }
}

} // namespace sat::cli
