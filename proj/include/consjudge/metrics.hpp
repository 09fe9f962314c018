#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "consjudge/domain.hpp"

namespace consjudge {

enum class MetricKind { kRougeL, kAccuracyContains, kStringEM };

std::string_view to_string(MetricKind kind);
MetricKind metric_kind_from_string(std::string_view s);

/// ROUGE-L F1 over normalized whitespace tokens (lower-cased, punctuation
/// replaced by spaces). 0 when either side is empty or nothing matches.
double rouge_l(std::string_view candidate, std::string_view reference);

/// 1 when some normalized gold occurs in the normalized response as a
/// contiguous run of whole tokens. Golds that normalize to nothing never match.
int accuracy_contains(std::string_view response, std::span<const std::string> golds);

/// Fraction of aspect sets with at least one member contained in the response
/// (same containment rule as accuracy_contains).
double string_em(std::string_view response, std::span<const std::vector<std::string>> aspect_sets);

struct MetricJudgment {
    std::size_t best = 0;
    std::size_t worst = 0;
    bool degenerate = false;  // every candidate scored the same
    std::vector<double> scores;
};

/// Raw-metric judge: argmax/argmin of the metric over candidates, lowest index
/// on ties. ROUGE-L uses the first reference; StringEM uses the task's aspect
/// sets, or each answer as its own set when none are given.
MetricJudgment metric_judge(const JudgeTask& task, MetricKind kind);

struct Selection {
    std::string query_id;
    std::size_t best = 0;
    bool degenerate = false;
};

struct SelectionVector {
    std::string judge_id;
    std::vector<Selection> selections;
};

/// Fraction of queries with the same best index. Both vectors must cover the
/// same query ids in the same order. Degenerate entries are excluded from the
/// denominator; throws kPrecondition when nothing is left to compare.
double pairwise_agreement(const SelectionVector& a, const SelectionVector& b);

/// Restricts every vector to the query ids they all share, in the order of the
/// first vector. Throws kPrecondition when the intersection is empty.
std::vector<SelectionVector> align_selections(std::span<const SelectionVector> selections);

using Matrix = std::vector<std::vector<double>>;

/// matrix[i][j] = pairwise_agreement(i, j), diagonal fixed to 1. NaN when the
/// pair has no query where both judges made a choice.
Matrix agreement_matrix(std::span<const SelectionVector> selections);

struct HistogramSpec {
    std::vector<double> edges;         // ascending bin edges; bins are [e_i, e_i+1), last closed
    std::vector<std::size_t> counts;   // filled by consistency_histogram

    static HistogramSpec uniform(double lo = -1.0, double hi = 1.0, std::size_t bins = 20);
};

struct HistogramResult {
    HistogramSpec histogram;
    std::size_t n = 0;
    std::optional<double> mean;
    std::optional<double> stddev;  // population standard deviation
};

/// Throws kRange for a score outside [-1, 1].
HistogramResult consistency_histogram(std::span<const double> scores, HistogramSpec spec);

nlohmann::ordered_json to_json(const HistogramResult& h);
nlohmann::ordered_json matrix_to_json(const std::vector<std::string>& labels, const Matrix& m);

/// Fixed-width terminal table.
std::string render_matrix_table(const std::vector<std::string>& labels, const Matrix& m);
std::string render_histogram_table(const std::string& title, const HistogramResult& h);

}  // namespace consjudge
