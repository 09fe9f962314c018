#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "consjudge/domain.hpp"
#include "consjudge/embedding.hpp"
#include "consjudge/prompts.hpp"

namespace consjudge {

inline constexpr std::string_view kSkipUniformScores = "degenerate-uniform-scores";

struct AspectScore {
    HybridAspect aspect;
    double score = 0.0;
};

struct ConsistencyReport {
    std::vector<AspectScore> scores;
    std::size_t chosen_index = 0;    // position in the JudgmentSet
    std::size_t rejected_index = 0;  // position in the JudgmentSet
    bool skipped = false;
    std::string skip_reason;
};

/// S_i = (1/k) * sum_j cos(e_i, e_j), self-term included. With
/// `include_self = false` the j = i term is dropped (still divided by k),
/// which shifts every score by exactly -1/k.
///
/// Requires k >= 2, equal dimensions and nonzero vectors.
std::vector<double> consistency_scores(std::span<const EmbeddingVector> embeddings, bool include_self = true);

/// chosen = argmax, rejected = argmin, ties resolved to the lowest position
/// (which is the canonical aspect order). All-equal scores yield a skipped
/// report with reason "degenerate-uniform-scores".
ConsistencyReport select_pair(const JudgmentSet& judgments, std::span<const double> scores);

/// Ablation: a uniformly random ordered pair of distinct judgments.
ConsistencyReport select_random_pair(const JudgmentSet& judgments, std::span<const double> scores,
                                     std::uint64_t seed);

/// Judge-training row: prompt is the all-dimensions judge prompt for the task,
/// chosen/rejected are the full raw texts. Returns nullopt for skipped reports.
/// `order` is the candidate display order the judgments were elicited with.
std::optional<PreferenceRecord> build_judge_training_instance(const JudgeTask& task,
                                                              const ConsistencyReport& report,
                                                              const JudgmentSet& judgments,
                                                              const PromptFactory& prompts,
                                                              std::span<const std::size_t> order = {});

}  // namespace consjudge
