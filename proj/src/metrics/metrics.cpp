#include <algorithm>
#include <cmath>
#include <numeric>

#include "sat/error.hpp"
#include "sat/metrics.hpp"

namespace sat {

void ClipLabelMatrix::validate() const {
    const auto n = static_cast<std::size_t>(n_clips * n_classes);
    if (labels.size() != n || scores.size() != n) throw ArgumentError("label and score matrices differ in shape");
    for (double s : scores) {
        if (!std::isfinite(s)) throw ArgumentError("scores must be finite");
    }
}

std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ArgumentError("scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::int64_t hits = 0;
    double sum = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]] != 0) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    if (hits == 0) return std::nullopt;
    return sum / static_cast<double>(hits);
}

MeanApResult mean_ap_detailed(const ClipLabelMatrix& m) {
    m.validate();
    MeanApResult result;
    result.per_class.resize(static_cast<std::size_t>(m.n_classes));
    std::vector<double> col_scores(static_cast<std::size_t>(m.n_clips));
    std::vector<std::uint8_t> col_labels(static_cast<std::size_t>(m.n_clips));
    double sum = 0.0;
    for (std::int64_t c = 0; c < m.n_classes; ++c) {
        for (std::int64_t i = 0; i < m.n_clips; ++i) {
            const auto idx = static_cast<std::size_t>(i * m.n_classes + c);
            col_scores[static_cast<std::size_t>(i)] = m.scores[idx];
            col_labels[static_cast<std::size_t>(i)] = m.labels[idx];
        }
        const auto ap = average_precision(col_scores, col_labels);
        result.per_class[static_cast<std::size_t>(c)] = ap;
        if (ap) {
            sum += *ap;
            ++result.classes_scored;
        }
    }
    if (result.classes_scored == 0) throw ArgumentError("mean_ap: no class has a positive label");
    result.map = sum / static_cast<double>(result.classes_scored);
    return result;
}

double mean_ap(const ClipLabelMatrix& m) { return mean_ap_detailed(m).map; }

double F1Counts::f1() const {
    const std::int64_t denom = 2 * tp + fp + fn;
    if (denom == 0) return 1.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

F1Counts segment_counts(const std::vector<std::vector<float>>& chunk_scores, std::span<const Event> truth,
                        double chunk_s, double threshold) {
    if (!(chunk_s > 0.0)) throw ArgumentError("segment length must be positive");
    F1Counts counts;
    if (chunk_scores.empty()) return counts;
    const std::size_t n_classes = chunk_scores.front().size();
    for (const Event& e : truth) {
        if (e.class_id < 0 || static_cast<std::size_t>(e.class_id) >= n_classes) {
            throw ArgumentError("truth event class id " + std::to_string(e.class_id) + " out of range");
        }
    }
    std::vector<std::uint8_t> active(n_classes);
    for (std::size_t k = 0; k < chunk_scores.size(); ++k) {
        const auto& row = chunk_scores[k];
        if (row.size() != n_classes) throw ArgumentError("score rows differ in length");
        const double lo = static_cast<double>(k) * chunk_s;
        const double hi = static_cast<double>(k + 1) * chunk_s;
        std::fill(active.begin(), active.end(), 0);
        for (const Event& e : truth) {
            if (e.onset_s < hi && e.offset_s > lo) active[static_cast<std::size_t>(e.class_id)] = 1;
        }
        for (std::size_t c = 0; c < n_classes; ++c) {
            const bool predicted = row[c] >= threshold;
            if (predicted && active[c]) ++counts.tp;
            else if (predicted) ++counts.fp;
            else if (active[c]) ++counts.fn;
        }
    }
    return counts;
}

double segment_f1(const std::vector<std::vector<float>>& chunk_scores, std::span<const Event> truth, double chunk_s,
                  double threshold) {
    return segment_counts(chunk_scores, truth, chunk_s, threshold).f1();
}

std::vector<Event> events_from_chunks(const std::vector<std::vector<float>>& chunk_scores, double chunk_s,
                                      double threshold) {
    std::vector<Event> events;
    if (chunk_scores.empty()) return events;
    const std::size_t n_classes = chunk_scores.front().size();
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::optional<std::size_t> run_start;
        for (std::size_t k = 0; k <= chunk_scores.size(); ++k) {
            const bool on = k < chunk_scores.size() && chunk_scores[k][c] >= threshold;
            if (on && !run_start) run_start = k;
            if (!on && run_start) {
                events.push_back({static_cast<int>(c), static_cast<double>(*run_start) * chunk_s,
                                  static_cast<double>(k) * chunk_s});
                run_start.reset();
            }
        }
    }
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.onset_s < b.onset_s; });
    return events;
}

F1Counts onset_counts(std::span<const Event> predicted, std::span<const Event> truth, double collar_s) {
    auto by_onset = [](std::span<const Event> events) {
        std::vector<std::size_t> order(events.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return events[a].onset_s < events[b].onset_s; });
        return order;
    };
    const auto pred_order = by_onset(predicted);
    const auto truth_order = by_onset(truth);
    std::vector<std::uint8_t> matched(truth.size(), 0);

    F1Counts counts;
    for (std::size_t pi : pred_order) {
        const Event& p = predicted[pi];
        bool hit = false;
        for (std::size_t ti : truth_order) {
            const Event& t = truth[ti];
            if (matched[ti] || t.class_id != p.class_id) continue;
            // Small slack so collar-boundary cases are not decided by rounding.
            if (std::abs(t.onset_s - p.onset_s) <= collar_s + 1e-9) {
                matched[ti] = 1;
                hit = true;
                break;
            }
        }
        if (hit) ++counts.tp;
        else ++counts.fp;
    }
    counts.fn = static_cast<std::int64_t>(truth.size()) - counts.tp;
    return counts;
}

double onset_f1(std::span<const Event> predicted, std::span<const Event> truth, double collar_s) {
    return onset_counts(predicted, truth, collar_s).f1();
}

} // namespace sat
