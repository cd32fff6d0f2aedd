#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sat {

// Clip-level ground truth and scores, both n_clips x n_classes row-major.
struct ClipLabelMatrix {
    std::int64_t n_clips = 0;
    std::int64_t n_classes = 0;
    std::vector<std::uint8_t> labels;
    std::vector<double> scores;

    ClipLabelMatrix() = default;
    ClipLabelMatrix(std::int64_t clips, std::int64_t classes)
        : n_clips(clips), n_classes(classes), labels(static_cast<std::size_t>(clips * classes), 0),
          scores(static_cast<std::size_t>(clips * classes), 0.0) {}

    std::uint8_t& label(std::int64_t clip, std::int64_t cls) { return labels[static_cast<std::size_t>(clip * n_classes + cls)]; }
    double& score(std::int64_t clip, std::int64_t cls) { return scores[static_cast<std::size_t>(clip * n_classes + cls)]; }
    void validate() const;
};

// Mean over positives of precision at the positive's rank. Ranks are by
// descending score with ties kept in input order. nullopt when there are no
// positives.
std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct MeanApResult {
    double map = 0.0;
    std::vector<std::optional<double>> per_class;
    std::int64_t classes_scored = 0;
};

// Unweighted mean of per-class AP over classes with at least one positive.
// Throws ArgumentError if no class has a positive.
MeanApResult mean_ap_detailed(const ClipLabelMatrix& m);
double mean_ap(const ClipLabelMatrix& m);

struct Event {
    int class_id = 0;
    double onset_s = 0.0;
    double offset_s = 0.0;
};

struct F1Counts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    F1Counts& operator+=(const F1Counts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    // 2TP / (2TP + FP + FN); 1.0 when all three are zero.
    double f1() const;
};

// Scores are n_chunks rows of per-class probabilities; chunk k covers
// [k*chunk_s, (k+1)*chunk_s).
F1Counts segment_counts(const std::vector<std::vector<float>>& chunk_scores, std::span<const Event> truth,
                        double chunk_s, double threshold = 0.5);
double segment_f1(const std::vector<std::vector<float>>& chunk_scores, std::span<const Event> truth, double chunk_s,
                  double threshold = 0.5);

// Merges runs of consecutive above-threshold chunks into one event per class.
std::vector<Event> events_from_chunks(const std::vector<std::vector<float>>& chunk_scores, double chunk_s,
                                      double threshold = 0.5);

inline constexpr double kDefaultOnsetCollar = 0.2;

// Greedy one-to-one matching in onset order: a prediction matches the
// earliest unmatched truth event of its class with |onset difference| <= collar.
F1Counts onset_counts(std::span<const Event> predicted, std::span<const Event> truth,
                      double collar_s = kDefaultOnsetCollar);
double onset_f1(std::span<const Event> predicted, std::span<const Event> truth, double collar_s = kDefaultOnsetCollar);

// --- Label files -----------------------------------------------------------

// Strong labels: TSV rows "clip_id  onset_s  offset_s  class_id". A header
// row is skipped if its onset column is not numeric.
std::map<std::string, std::vector<Event>> load_strong_labels(const std::filesystem::path& path);

// Weak labels: CSV rows "clip_id,class_id[,class_id...]". A single quoted
// field may also hold the list, separated by commas, semicolons or spaces.
std::map<std::string, std::vector<int>> load_weak_labels(const std::filesystem::path& path);

// Class-name table: CSV rows "id,name".
std::map<int, std::string> load_class_names(const std::filesystem::path& path);

// Parses a class-id list separated by commas, semicolons or whitespace.
std::vector<int> parse_class_list(const std::string& text);

} // namespace sat
