#include "consjudge/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "consjudge/error.hpp"
#include "consjudge/judgment_parser.hpp"

namespace consjudge {

double EmbeddingVector::norm() const noexcept {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::kDimensionMismatch,
                    fmt::format("cosine of vectors with dims {} and {}", a.size(), b.size()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::kDegenerateEmbedding, "cosine of a zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<double> consistency_scores(std::span<const EmbeddingVector> embeddings, bool include_self) {
    const auto k = embeddings.size();
    if (k < 2) throw Error(ErrorCode::kCardinality, fmt::format("consistency needs k >= 2, got {}", k));
    const auto dim = embeddings.front().dim();
    std::vector<std::vector<double>> unit;
    unit.reserve(k);
    for (const auto& e : embeddings) {
        if (e.dim() != dim) {
            throw Error(ErrorCode::kDimensionMismatch,
                        fmt::format("embedding dims differ: {} vs {}", dim, e.dim()));
        }
        const double n = e.norm();
        if (n == 0.0 || !std::isfinite(n)) throw Error(ErrorCode::kDegenerateEmbedding, "zero or non-finite embedding");
        std::vector<double> u(e.values);
        for (auto& v : u) v /= n;
        unit.push_back(std::move(u));
    }

    // Pairwise cosines are symmetric; fill the upper triangle once.
    std::vector<double> sums(k, include_self ? 1.0 : 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d) dot += unit[i][d] * unit[j][d];
            dot = std::clamp(dot, -1.0, 1.0);
            sums[i] += dot;
            sums[j] += dot;
        }
    }
    for (auto& s : sums) s /= static_cast<double>(k);
    return sums;
}

namespace {

ConsistencyReport base_report(const JudgmentSet& judgments, std::span<const double> scores) {
    if (judgments.k_effective() != scores.size()) {
        throw Error(ErrorCode::kCardinality,
                    fmt::format("{} judgments but {} scores", judgments.k_effective(), scores.size()));
    }
    if (scores.size() < 2) {
        throw Error(ErrorCode::kCardinality, "pair selection needs at least two judgments");
    }
    ConsistencyReport report;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        report.scores.push_back({judgments.judgments[i].aspect, scores[i]});
    }
    return report;
}

}  // namespace

ConsistencyReport select_pair(const JudgmentSet& judgments, std::span<const double> scores) {
    auto report = base_report(judgments, scores);
    std::size_t hi = 0;
    std::size_t lo = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[hi]) hi = i;
        if (scores[i] < scores[lo]) lo = i;
    }
    report.chosen_index = hi;
    report.rejected_index = lo;
    if (hi == lo) {
        report.skipped = true;
        report.skip_reason = std::string(kSkipUniformScores);
    }
    return report;
}

ConsistencyReport select_random_pair(const JudgmentSet& judgments, std::span<const double> scores,
                                     std::uint64_t seed) {
    auto report = base_report(judgments, scores);
    const auto k = scores.size();
    std::mt19937_64 rng(seed);
    report.chosen_index = static_cast<std::size_t>(rng() % k);
    report.rejected_index = static_cast<std::size_t>(rng() % (k - 1));
    if (report.rejected_index >= report.chosen_index) ++report.rejected_index;
    return report;
}

std::optional<PreferenceRecord> build_judge_training_instance(const JudgeTask& task,
                                                              const ConsistencyReport& report,
                                                              const JudgmentSet& judgments,
                                                              const PromptFactory& prompts,
                                                              std::span<const std::size_t> order) {
    if (report.skipped) return std::nullopt;
    const auto k = judgments.k_effective();
    if (report.chosen_index >= k || report.rejected_index >= k || report.chosen_index == report.rejected_index) {
        throw Error(ErrorCode::kIntegrity, "consistency report indices do not address distinct judgments");
    }
    const auto& chosen = judgments.judgments[report.chosen_index];
    const auto& rejected = judgments.judgments[report.rejected_index];
    if (chosen.raw.empty() || rejected.raw.empty()) {
        throw Error(ErrorCode::kIntegrity,
                    fmt::format("task '{}': selected judgment text is empty", task.query.id));
    }

    PreferenceRecord rec;
    rec.kind = PreferenceKind::kJudge;
    rec.query_id = task.query.id;
    rec.prompt = prompts.build_all_dims_prompt(task.query, task.gt, task.responses, order);
    rec.chosen = chosen.raw;
    rec.rejected = rejected.raw;

    const auto m = task.responses.m();
    auto scores = nlohmann::ordered_json::array();
    for (const auto& s : report.scores) {
        scores.push_back({{"aspect", s.aspect.name()}, {"score", s.score}});
    }
    rec.meta["aspect_scores"] = std::move(scores);
    rec.meta["chosen_aspect"] = chosen.aspect.name();
    rec.meta["rejected_aspect"] = rejected.aspect.name();
    rec.meta["chosen_selection"] = {{"best", std::string(1, label_of(chosen.best, m))},
                                    {"worst", std::string(1, label_of(chosen.worst, m))}};
    rec.meta["rejected_selection"] = {{"best", std::string(1, label_of(rejected.best, m))},
                                      {"worst", std::string(1, label_of(rejected.worst, m))}};
    rec.meta["k_effective"] = k;
    return rec;
}

}  // namespace consjudge
