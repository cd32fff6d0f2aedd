#pragma once

#include <atomic>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sat/model.hpp"
#include "sat/stream.hpp"

namespace sat::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitBadArgs = 2,
    kExitWeights = 3,
    kExitAudio = 4,
};

inline constexpr const char* kTagSchema = "sat.tag/1";
inline constexpr const char* kEvalSchema = "sat.eval/1";

// Where the model comes from: a SATW file, or seeded random weights.
struct ModelSource {
    std::string arch = "tiny";
    std::string weights;
    std::optional<std::uint64_t> seed;
};

struct TagOptions {
    ModelSource model;
    std::string delay = "2"; // "1", "2", "full" or any positive seconds value
    std::string input;
    int topk = 5;
    std::string labels;
    std::string format = "jsonl"; // jsonl | csv
};

struct StreamOptions {
    ModelSource model;
    std::string delay = "2";
    std::string input;
    bool stdin_raw_f32 = false;
    bool no_cache = false;
    int topk = 5;
    std::string labels;
    std::size_t block_samples = 1600;
};

struct EvalOptions {
    ModelSource model;
    std::string delay = "2";
    std::string manifest;
    std::string weak_labels;
    std::string strong_labels;
    int threads = 0; // 0: SAT_NUM_THREADS or hardware concurrency
};

struct ProfileOptions {
    std::string arch = "tiny";
    std::optional<std::int64_t> tokens;
    std::optional<std::string> delay;
    bool streaming = false;
    std::string format = "json"; // json | table
};

// One chunk (or clip-summary) output line.
struct TagRecord {
    std::string stream_id;
    std::string type = "chunk"; // chunk | summary
    std::int64_t chunk_index = 0;
    double start_s = 0.0;
    double end_s = 0.0;
    int tokens = 0;
    struct Entry {
        int class_id = 0;
        std::string class_name;
        float probability = 0.0f;
    };
    std::vector<Entry> top;
    std::int64_t chunks = 0; // summary only
    bool interrupted = false;
};

ChunkPlan parse_delay(const std::string& delay, const ModelConfig& cfg);
WeightSet load_model(const ModelSource& src, const ModelConfig& cfg);

// Top-k classes by descending probability, ties by class id.
std::vector<TagRecord::Entry> top_k(const std::vector<float>& scores, int k, const std::map<int, std::string>& names);

nlohmann::json to_json(const TagRecord& r);
void write_csv_header(std::ostream& out);
void write_csv(std::ostream& out, const TagRecord& r);

int cmd_tag(const TagOptions& opt, std::ostream& out, std::ostream& err);
// Stops reading input (and emits the summary) once `stop` becomes true.
int cmd_stream(const StreamOptions& opt, std::istream& in, std::ostream& out, std::ostream& err,
               const std::atomic<bool>* stop = nullptr);
int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err);
int cmd_profile(const ProfileOptions& opt, std::ostream& out, std::ostream& err);

// Parses argv (subcommand first) and dispatches.
int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err,
        const std::atomic<bool>* stop = nullptr);

} // namespace sat::cli
