#include "consjudge/domain.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "consjudge/text_util.hpp"

namespace consjudge {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kRange: return "range";
        case ErrorCode::kDuplicateLabel: return "duplicate-label";
        case ErrorCode::kCardinality: return "cardinality";
        case ErrorCode::kPrecondition: return "precondition";
        case ErrorCode::kInvalidInput: return "invalid-input";
        case ErrorCode::kTemplate: return "template";
        case ErrorCode::kTransport: return "transport";
        case ErrorCode::kHttpStatus: return "http-status";
        case ErrorCode::kRateLimited: return "rate-limited";
        case ErrorCode::kMalformedResponse: return "malformed-response";
        case ErrorCode::kDegenerateEmbedding: return "degenerate-embedding";
        case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
        case ErrorCode::kIntegrity: return "integrity";
        case ErrorCode::kParse: return "parse";
        case ErrorCode::kIo: return "io";
        case ErrorCode::kConfig: return "config";
    }
    return "unknown";
}

std::string_view dimension_id(EvaluationDimension d) {
    switch (d) {
        case EvaluationDimension::kHallucination: return "Hallucination";
        case EvaluationDimension::kCompleteness: return "Completeness";
        case EvaluationDimension::kCoherence: return "Coherence";
        case EvaluationDimension::kSemanticConsistency: return "SemanticConsistency";
    }
    return "";
}

std::string_view dimension_display_name(EvaluationDimension d) {
    if (d == EvaluationDimension::kSemanticConsistency) return "Semantic Consistency";
    return dimension_id(d);
}

std::optional<EvaluationDimension> dimension_from_id(std::string_view id) {
    for (auto d : kAllDimensions) {
        if (dimension_id(d) == id || dimension_display_name(d) == id) return d;
    }
    return std::nullopt;
}

HybridAspect HybridAspect::of(std::span<const EvaluationDimension> dims) {
    if (dims.empty()) {
        throw Error(ErrorCode::kInvalidInput, "hybrid aspect needs at least one dimension");
    }
    HybridAspect aspect;
    aspect.dims_.assign(dims.begin(), dims.end());
    std::sort(aspect.dims_.begin(), aspect.dims_.end());
    if (std::adjacent_find(aspect.dims_.begin(), aspect.dims_.end()) != aspect.dims_.end()) {
        throw Error(ErrorCode::kInvalidInput, "hybrid aspect has a duplicate dimension");
    }
    return aspect;
}

HybridAspect HybridAspect::of(std::initializer_list<EvaluationDimension> dims) {
    return of(std::span<const EvaluationDimension>(dims.begin(), dims.size()));
}

HybridAspect HybridAspect::from_name(std::string_view name) {
    std::vector<EvaluationDimension> dims;
    for (const auto& part : split(name, '+')) {
        auto d = dimension_from_id(trim(part));
        if (!d) {
            throw Error(ErrorCode::kInvalidInput,
                        fmt::format("unknown evaluation dimension '{}' in aspect '{}'", part, name));
        }
        dims.push_back(*d);
    }
    return of(dims);
}

HybridAspect HybridAspect::all_dimensions() { return of(kAllDimensions); }

bool HybridAspect::contains(EvaluationDimension d) const noexcept {
    return std::find(dims_.begin(), dims_.end(), d) != dims_.end();
}

std::string HybridAspect::name() const {
    std::string out;
    for (auto d : dims_) {
        if (!out.empty()) out += '+';
        out += dimension_id(d);
    }
    return out;
}

std::string HybridAspect::display_name() const {
    std::string out;
    for (auto d : dims_) {
        if (!out.empty()) out += " + ";
        out += dimension_display_name(d);
    }
    return out;
}

std::string_view to_string(PreferenceKind kind) {
    return kind == PreferenceKind::kJudge ? "judge" : "generator";
}

PreferenceKind preference_kind_from_string(std::string_view s) {
    if (s == "judge") return PreferenceKind::kJudge;
    if (s == "generator") return PreferenceKind::kGenerator;
    throw Error(ErrorCode::kInvalidInput, fmt::format("unknown preference kind '{}'", s));
}

char label_of(std::size_t index, std::size_t m) {
    if (m > kMaxChoices || index >= m) {
        throw Error(ErrorCode::kRange, fmt::format("label index {} out of range for m={}", index, m));
    }
    return static_cast<char>('A' + index);
}

std::size_t index_of(char label, std::size_t m) {
    char upper = (label >= 'a' && label <= 'z') ? static_cast<char>(label - 'a' + 'A') : label;
    if (upper < 'A' || upper > 'Z') {
        throw Error(ErrorCode::kRange, fmt::format("'{}' is not a choice letter", label));
    }
    auto index = static_cast<std::size_t>(upper - 'A');
    if (m > kMaxChoices || index >= m) {
        throw Error(ErrorCode::kRange, fmt::format("choice '{}' out of range for m={}", upper, m));
    }
    return index;
}

const ResponseSet& validate_response_set(const ResponseSet& set) {
    const auto m = set.m();
    if (m < kMinChoices || m > kMaxChoices) {
        throw Error(ErrorCode::kCardinality,
                    fmt::format("response set has {} candidates; expected {}..{}", m, kMinChoices,
                                kMaxChoices));
    }
    std::vector<bool> seen(m, false);
    for (const auto& c : set.candidates) {
        if (c.label_index >= m) {
            throw Error(ErrorCode::kRange,
                        fmt::format("candidate label index {} out of range for m={}", c.label_index, m));
        }
        if (seen[c.label_index]) {
            throw Error(ErrorCode::kDuplicateLabel,
                        fmt::format("duplicate candidate label index {}", c.label_index));
        }
        seen[c.label_index] = true;
    }
    for (std::size_t i = 0; i < m; ++i) {
        if (set.candidates[i].label_index != i) {
            throw Error(ErrorCode::kInvalidInput, "candidate labels must appear in order 0..m-1");
        }
    }
    return set;
}

void validate_query(const Query& q) {
    if (q.id.empty()) throw Error(ErrorCode::kInvalidInput, "query id is empty");
    if (trim(q.text).empty()) {
        throw Error(ErrorCode::kInvalidInput, fmt::format("query '{}' has empty text", q.id));
    }
}

void validate_ground_truth(const GroundTruth& gt) {
    if (gt.answers.empty()) throw Error(ErrorCode::kPrecondition, "ground truth has no answers");
    for (const auto& a : gt.answers) {
        if (a.empty()) throw Error(ErrorCode::kPrecondition, "ground truth answer is empty");
    }
}

void validate_judgment(const Judgment& j, std::size_t m) {
    if (j.best >= m || j.worst >= m) {
        throw Error(ErrorCode::kRange, "judgment selection out of range");
    }
    if (j.best == j.worst) {
        throw Error(ErrorCode::kIntegrity, "judgment selects the same candidate as best and worst");
    }
}

void validate_preference(const PreferenceRecord& r) {
    if (r.query_id.empty()) throw Error(ErrorCode::kIntegrity, "preference record has no query id");
    if (r.prompt.empty()) {
        throw Error(ErrorCode::kIntegrity,
                    fmt::format("preference record '{}' has an empty prompt", r.query_id));
    }
    if (r.chosen.empty() || r.rejected.empty()) {
        throw Error(ErrorCode::kIntegrity,
                    fmt::format("preference record '{}' has an empty chosen/rejected text", r.query_id));
    }
    if (r.chosen == r.rejected) {
        throw Error(ErrorCode::kIntegrity,
                    fmt::format("preference record '{}' has chosen == rejected", r.query_id));
    }
}

}  // namespace consjudge
