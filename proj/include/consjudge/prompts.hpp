#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "consjudge/domain.hpp"

namespace consjudge {

/// The eight hybrid aspects in canonical order: four singletons,
/// Hallucination+Completeness, Coherence+SemanticConsistency,
/// Hallucination+Completeness+SemanticConsistency, then all four.
std::vector<HybridAspect> enumerate_hybrid_aspects();

std::string_view dimension_description(EvaluationDimension d);

/// Substitutes `{identifier}` placeholders in a single pass; substituted values
/// are never rescanned. Braces around anything that is not a bare identifier
/// are copied literally. Throws kTemplate when an identifier has no binding.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& bindings);

/// Template bodies. Missing files in a template directory fall back to the
/// built-in defaults.
struct PromptTemplates {
    std::string judge;
    std::string generator_with_docs;
    std::string generator_without_docs;
    std::string referee;

    static PromptTemplates defaults();
    /// Reads judge.txt, generator_docs.txt, generator_nodocs.txt, referee.txt.
    static PromptTemplates load_dir(const std::filesystem::path& dir);
};

class PromptFactory {
public:
    explicit PromptFactory(PromptTemplates templates = PromptTemplates::defaults());

    /// `order`, when non-empty, is the display order of candidates: position p
    /// shows candidate order[p]. Empty means candidate order.
    std::string build_judge_prompt(const HybridAspect& aspect, const Query& q, const GroundTruth& gt,
                                   const ResponseSet& responses,
                                   std::span<const std::size_t> order = {}) const;

    std::string build_all_dims_prompt(const Query& q, const GroundTruth& gt, const ResponseSet& responses,
                                      std::span<const std::size_t> order = {}) const;

    /// With documents: passages rendered as "Passage i: {text}" ahead of the query.
    std::string build_generator_prompt(const Query& q,
                                       const std::optional<std::vector<std::string>>& docs) const;

    std::string build_referee_prompt(const Query& q, const GroundTruth& gt, const ResponseSet& responses,
                                     std::string_view judgment_a, std::string_view judgment_b) const;

    const PromptTemplates& templates() const noexcept { return templates_; }

private:
    std::map<std::string, std::string> task_bindings(const Query& q, const GroundTruth& gt,
                                                     const ResponseSet& responses,
                                                     std::span<const std::size_t> order) const;

    PromptTemplates templates_;
};

}  // namespace consjudge
