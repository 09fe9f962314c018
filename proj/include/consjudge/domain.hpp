#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "consjudge/error.hpp"

namespace consjudge {

inline constexpr std::size_t kMinChoices = 2;
inline constexpr std::size_t kMaxChoices = 6;

struct Query {
    std::string id;
    std::string text;
    std::string dataset;
};

struct GroundTruth {
    std::vector<std::string> answers;
    // Short-answer sets for String-EM style datasets; empty when not provided.
    std::vector<std::vector<std::string>> aspect_sets;
};

struct ResponseOrigin {
    std::string model;
    double temperature = 0.0;
    std::optional<bool> with_docs;  // set for RAG-stage samples only
    int ordinal = 0;

    bool operator==(const ResponseOrigin&) const = default;
};

struct CandidateResponse {
    std::size_t label_index = 0;
    std::string text;
    ResponseOrigin origin;

    bool operator==(const CandidateResponse&) const = default;
};

struct ResponseSet {
    std::vector<CandidateResponse> candidates;

    std::size_t m() const noexcept { return candidates.size(); }
    bool operator==(const ResponseSet&) const = default;
};

enum class EvaluationDimension {
    kHallucination = 0,
    kCompleteness = 1,
    kCoherence = 2,
    kSemanticConsistency = 3,
};

inline constexpr std::array<EvaluationDimension, 4> kAllDimensions = {
    EvaluationDimension::kHallucination,
    EvaluationDimension::kCompleteness,
    EvaluationDimension::kCoherence,
    EvaluationDimension::kSemanticConsistency,
};

/// Identifier form used in aspect names and files, e.g. "SemanticConsistency".
std::string_view dimension_id(EvaluationDimension d);
/// Human form used inside prompts, e.g. "Semantic Consistency".
std::string_view dimension_display_name(EvaluationDimension d);
std::optional<EvaluationDimension> dimension_from_id(std::string_view id);

/// A non-empty set of evaluation dimensions, kept in canonical enum order.
class HybridAspect {
public:
    /// Throws kInvalidInput on an empty list or duplicate dimensions.
    static HybridAspect of(std::span<const EvaluationDimension> dims);
    static HybridAspect of(std::initializer_list<EvaluationDimension> dims);
    /// Parses the canonical "+"-joined name, e.g. "Hallucination+Completeness".
    static HybridAspect from_name(std::string_view name);
    static HybridAspect all_dimensions();

    const std::vector<EvaluationDimension>& dimensions() const noexcept { return dims_; }
    bool contains(EvaluationDimension d) const noexcept;
    std::size_t size() const noexcept { return dims_.size(); }

    /// Canonical name, e.g. "Coherence+SemanticConsistency".
    std::string name() const;
    /// Prompt form, e.g. "Coherence + Semantic Consistency".
    std::string display_name() const;

    bool operator==(const HybridAspect&) const = default;

private:
    HybridAspect() = default;
    std::vector<EvaluationDimension> dims_;
};

struct Judgment {
    HybridAspect aspect = HybridAspect::all_dimensions();
    std::string cot;
    std::size_t best = 0;
    std::size_t worst = 0;
    std::string raw;

    bool operator==(const Judgment&) const = default;
};

/// Valid judgments for one task, in canonical aspect order.
struct JudgmentSet {
    std::vector<Judgment> judgments;
    std::size_t k_configured = 0;

    std::size_t k_effective() const noexcept { return judgments.size(); }
};

struct JudgeTask {
    Query query;
    GroundTruth gt;
    ResponseSet responses;
};

enum class PreferenceKind { kJudge, kGenerator };

std::string_view to_string(PreferenceKind kind);
PreferenceKind preference_kind_from_string(std::string_view s);

/// One DPO training row.
struct PreferenceRecord {
    PreferenceKind kind = PreferenceKind::kJudge;
    std::string query_id;
    std::string prompt;
    std::string chosen;
    std::string rejected;
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();

    bool operator==(const PreferenceRecord&) const = default;
};

/// Letter for a candidate position: 0 -> 'A'. Throws kRange unless index < m <= 6.
char label_of(std::size_t index, std::size_t m);
/// Inverse of label_of; accepts lower case. Throws kRange for letters outside the first m.
std::size_t index_of(char label, std::size_t m);

/// Returns the set unchanged when labels are exactly 0..m-1 in order and 2 <= m <= 6.
const ResponseSet& validate_response_set(const ResponseSet& set);
void validate_query(const Query& q);
void validate_ground_truth(const GroundTruth& gt);
void validate_judgment(const Judgment& j, std::size_t m);
void validate_preference(const PreferenceRecord& r);

}  // namespace consjudge
