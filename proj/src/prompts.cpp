#include "consjudge/prompts.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "consjudge/text_util.hpp"

namespace consjudge {

namespace {

using D = EvaluationDimension;

constexpr std::string_view kDefaultJudgeTemplate =
    "You are an excellent evaluation expert. Please select the best answer and the worst answer "
    "from {num_choices} choices based on the ground truth and the query from the {aspect_names} aspect.\n"
    "{aspect_descriptions}\n"
    "Note: your result format must strictly be \"COT:{.there is your analysis}. Answer : Best "
    "answer:{a choice must be one of{label_list}}. Worst answer :{a choice must be one "
    "of{label_list_spaced}}\". Output the content of COT first and then output the Answer.\n"
    "Here is the query:{query}, Here is the ground truth:{ground_truth}\n"
    "{choices}\n"
    "Result:\n";

constexpr std::string_view kDefaultGeneratorDocsTemplate =
    "Given the following passages, answer the question.\n"
    "\n"
    "{documents}\n"
    "\n"
    "Question: {query}\n"
    "Answer:";

constexpr std::string_view kDefaultGeneratorNoDocsTemplate =
    "Answer the following question.\n"
    "\n"
    "Question: {query}\n"
    "Answer:";

constexpr std::string_view kDefaultRefereeTemplate =
    "You are an excellent evaluation expert. Two judgments below each select the best answer and the "
    "worst answer among the same choices. Decide which judgment is more accurate given the query and "
    "the ground truth.\n"
    "Here is the query:{query}, Here is the ground truth:{ground_truth}\n"
    "{choices}\n"
    "Judgment A:{judgment_a}\n"
    "Judgment B:{judgment_b}\n"
    "Note: your result format must strictly be \"Reason:{your analysis}. Better judgment:{A, B or "
    "Tie}\".\n"
    "Result:\n";

constexpr std::string_view kNumberWords[] = {"zero", "one", "two", "three", "four", "five", "six"};

bool is_ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot read template {}", p.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::vector<HybridAspect> enumerate_hybrid_aspects() {
    return {
        HybridAspect::of({D::kHallucination}),
        HybridAspect::of({D::kCompleteness}),
        HybridAspect::of({D::kCoherence}),
        HybridAspect::of({D::kSemanticConsistency}),
        HybridAspect::of({D::kHallucination, D::kCompleteness}),
        HybridAspect::of({D::kCoherence, D::kSemanticConsistency}),
        HybridAspect::of({D::kHallucination, D::kCompleteness, D::kSemanticConsistency}),
        HybridAspect::all_dimensions(),
    };
}

std::string_view dimension_description(EvaluationDimension d) {
    switch (d) {
        case D::kHallucination:
            return "Hallucination refers to the presence of information in the option that contradicts "
                   "ground truth, it is an incorrect answer to the question.";
        case D::kCompleteness:
            return "Completeness refers to whether the choice contains as complete information as possible "
                   "from the ground truth. it did not fully answer the question correctly.";
        case D::kCoherence:
            return "coherence refers to whether the choice is logically coherent and whether the language "
                   "between each sentence is fluent.";
        case D::kSemanticConsistency:
            return "Semantic Consistency refers to whether the choice is semantically consistent with the "
                   "ground truth, rather than just having lexical repetition.";
    }
    return "";
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& bindings) {
    std::string out;
    out.reserve(tmpl.size() * 2);
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{' && i + 1 < tmpl.size() && is_ident_start(tmpl[i + 1])) {
            std::size_t j = i + 1;
            while (j < tmpl.size() && is_ident_char(tmpl[j])) ++j;
            if (j < tmpl.size() && tmpl[j] == '}') {
                std::string name(tmpl.substr(i + 1, j - i - 1));
                auto it = bindings.find(name);
                if (it == bindings.end()) {
                    throw Error(ErrorCode::kTemplate, fmt::format("unbound placeholder {{{}}}", name));
                }
                out += it->second;
                i = j + 1;
                continue;
            }
        }
        out += tmpl[i++];
    }
    return out;
}

PromptTemplates PromptTemplates::defaults() {
    return PromptTemplates{std::string(kDefaultJudgeTemplate), std::string(kDefaultGeneratorDocsTemplate),
                           std::string(kDefaultGeneratorNoDocsTemplate), std::string(kDefaultRefereeTemplate)};
}

PromptTemplates PromptTemplates::load_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw Error(ErrorCode::kConfig, fmt::format("template directory {} does not exist", dir.string()));
    }
    auto t = defaults();
    auto load = [&](const char* file, std::string& slot) {
        auto p = dir / file;
        if (std::filesystem::exists(p)) slot = read_file(p);
    };
    load("judge.txt", t.judge);
    load("generator_docs.txt", t.generator_with_docs);
    load("generator_nodocs.txt", t.generator_without_docs);
    load("referee.txt", t.referee);
    return t;
}

PromptFactory::PromptFactory(PromptTemplates templates) : templates_(std::move(templates)) {}

std::map<std::string, std::string> PromptFactory::task_bindings(const Query& q, const GroundTruth& gt,
                                                                const ResponseSet& responses,
                                                                std::span<const std::size_t> order) const {
    validate_query(q);
    validate_ground_truth(gt);
    validate_response_set(responses);
    const auto m = responses.m();

    std::vector<std::size_t> identity(m);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    if (order.empty()) order = identity;
    if (order.size() != m) {
        throw Error(ErrorCode::kPrecondition, "display order length differs from the response set size");
    }
    std::vector<bool> seen(m, false);
    for (auto idx : order) {
        if (idx >= m || seen[idx]) throw Error(ErrorCode::kPrecondition, "display order is not a permutation");
        seen[idx] = true;
    }

    std::map<std::string, std::string> b;
    b["query"] = q.text;
    b["ground_truth"] = join(gt.answers, "; ");
    b["num_choices"] = std::string(kNumberWords[m]);

    std::string labels;
    std::string labels_spaced;
    std::string choices;
    for (std::size_t pos = 0; pos < m; ++pos) {
        const char letter = label_of(pos, m);
        const auto& text = responses.candidates[order[pos]].text;
        labels += (pos ? "," : "") + std::string(1, letter);
        labels_spaced += (pos ? ", " : "") + std::string(1, letter);
        if (pos) choices += (pos % 2 == 0) ? ",\n" : ", ";
        choices += fmt::format("Here is the {} choice:{}", letter, text);
        b[fmt::format("choice_{}", letter)] = text;
    }
    choices += '.';
    b["label_list"] = "[" + labels + "]";
    b["label_list_spaced"] = "[" + labels_spaced + "]";
    b["choices"] = std::move(choices);
    return b;
}

std::string PromptFactory::build_judge_prompt(const HybridAspect& aspect, const Query& q, const GroundTruth& gt,
                                              const ResponseSet& responses,
                                              std::span<const std::size_t> order) const {
    auto b = task_bindings(q, gt, responses, order);
    b["aspect_names"] = aspect.display_name();
    std::string descriptions;
    for (auto d : aspect.dimensions()) {
        if (!descriptions.empty()) descriptions += '\n';
        descriptions += fmt::format("{}: {}", dimension_display_name(d), dimension_description(d));
    }
    b["aspect_descriptions"] = std::move(descriptions);
    return render_template(templates_.judge, b);
}

std::string PromptFactory::build_all_dims_prompt(const Query& q, const GroundTruth& gt,
                                                 const ResponseSet& responses,
                                                 std::span<const std::size_t> order) const {
    return build_judge_prompt(HybridAspect::all_dimensions(), q, gt, responses, order);
}

std::string PromptFactory::build_generator_prompt(const Query& q,
                                                  const std::optional<std::vector<std::string>>& docs) const {
    validate_query(q);
    std::map<std::string, std::string> b{{"query", q.text}};
    if (!docs) return render_template(templates_.generator_without_docs, b);

    if (docs->empty()) throw Error(ErrorCode::kInvalidInput, "document list is empty");
    std::string block;
    for (std::size_t i = 0; i < docs->size(); ++i) {
        const auto& doc = (*docs)[i];
        if (trim(doc).empty()) {
            throw Error(ErrorCode::kInvalidInput, fmt::format("document {} is empty", i + 1));
        }
        if (i) block += '\n';
        block += fmt::format("Passage {}: {}", i + 1, doc);
    }
    b["documents"] = std::move(block);
    return render_template(templates_.generator_with_docs, b);
}

std::string PromptFactory::build_referee_prompt(const Query& q, const GroundTruth& gt,
                                                const ResponseSet& responses, std::string_view judgment_a,
                                                std::string_view judgment_b) const {
    auto b = task_bindings(q, gt, responses, {});
    b["judgment_a"] = std::string(judgment_a);
    b["judgment_b"] = std::string(judgment_b);
    return render_template(templates_.referee, b);
}

}  // namespace consjudge
