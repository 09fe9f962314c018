#include "consjudge/judgment_parser.hpp"

#include <array>
#include <initializer_list>

#include <fmt/format.h>

#include "consjudge/text_util.hpp"

namespace consjudge {

namespace {

constexpr std::size_t npos = std::string_view::npos;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_alnum(char c) { return is_alpha(c) || (c >= '0' && c <= '9'); }
char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool word_at(std::string_view text, std::size_t pos, std::string_view word) {
    if (pos + word.size() > text.size()) return false;
    for (std::size_t k = 0; k < word.size(); ++k) {
        if (lower(text[pos + k]) != word[k]) return false;
    }
    return true;
}

struct Marker {
    std::size_t begin;
    std::size_t end;  // one past the marker (after ':' when present)
};

// Matches `w1 \s+ w2 ... \s* :` with a word boundary before w1 and after the
// last word. The colon is optional when `colon_required` is false.
std::optional<Marker> find_marker(std::string_view text, std::initializer_list<std::string_view> words,
                                  std::size_t from, bool colon_required = true) {
    for (std::size_t i = from; i < text.size(); ++i) {
        if (i > 0 && is_alnum(text[i - 1])) continue;
        std::size_t p = i;
        bool ok = true;
        bool first = true;
        for (auto w : words) {
            if (!first) {
                std::size_t q = p;
                while (q < text.size() && is_space(text[q])) ++q;
                if (q == p) {
                    ok = false;
                    break;
                }
                p = q;
            }
            first = false;
            if (!word_at(text, p, w)) {
                ok = false;
                break;
            }
            p += w.size();
        }
        if (!ok) continue;
        if (p < text.size() && is_alnum(text[p])) continue;
        std::size_t q = p;
        while (q < text.size() && is_space(text[q])) ++q;
        if (q < text.size() && text[q] == ':') return Marker{i, q + 1};
        if (!colon_required) return Marker{i, p};
    }
    return std::nullopt;
}

// "Answer :" that is not the tail of "Best answer" / "Worst answer".
std::size_t find_standalone_answer(std::string_view text, std::size_t from) {
    std::size_t pos = from;
    while (auto mk = find_marker(text, {"answer"}, pos)) {
        std::size_t q = mk->begin;
        while (q > from && is_space(text[q - 1])) --q;
        std::size_t w = q;
        while (w > from && is_alpha(text[w - 1])) --w;
        auto prev = to_lower_ascii(text.substr(w, q - w));
        if (prev != "best" && prev != "worst") return mk->begin;
        pos = mk->begin + 1;
    }
    return npos;
}

enum class LabelStatus { kOk, kInvalid, kOutOfRange };

LabelStatus read_label(std::string_view text, std::size_t pos, std::size_t m, std::size_t& index) {
    auto skip_space = [&] {
        while (pos < text.size() && is_space(text[pos])) ++pos;
    };
    skip_space();
    while (pos < text.size() && (text[pos] == '{' || text[pos] == '(' || text[pos] == '[' || text[pos] == '*')) {
        ++pos;
        skip_space();
    }
    for (std::string_view prefix : {"choice", "option"}) {
        if (word_at(text, pos, prefix) && pos + prefix.size() < text.size() &&
            is_space(text[pos + prefix.size()])) {
            pos += prefix.size();
            skip_space();
            break;
        }
    }
    if (pos >= text.size() || !is_alpha(text[pos])) return LabelStatus::kInvalid;
    if (pos + 1 < text.size() && is_alnum(text[pos + 1])) return LabelStatus::kInvalid;
    auto letter = static_cast<std::size_t>(lower(text[pos]) - 'a');
    if (letter >= m) return LabelStatus::kOutOfRange;
    index = letter;
    return LabelStatus::kOk;
}

std::string extract_cot(std::string_view between) {
    auto t = trim(between);
    if (t.size() >= 2 && t.front() == '{') {
        if (t.back() == '}') return std::string(t.substr(1, t.size() - 2));
        if (t.size() >= 3 && t.back() == '.' && t[t.size() - 2] == '}') {
            return std::string(t.substr(1, t.size() - 3));
        }
    }
    return std::string(t);
}

ParseFailure fail(ParseFailureReason reason, std::string_view raw) { return {reason, std::string(raw)}; }

ParseFailureReason label_failure(LabelStatus s) {
    return s == LabelStatus::kOutOfRange ? ParseFailureReason::kLabelOutOfRange
                                         : ParseFailureReason::kInvalidLabel;
}

}  // namespace

std::string_view to_string(ParseFailureReason reason) {
    switch (reason) {
        case ParseFailureReason::kMissingCotMarker: return "MissingCotMarker";
        case ParseFailureReason::kMissingBest: return "MissingBest";
        case ParseFailureReason::kMissingWorst: return "MissingWorst";
        case ParseFailureReason::kInvalidLabel: return "InvalidLabel";
        case ParseFailureReason::kLabelOutOfRange: return "LabelOutOfRange";
        case ParseFailureReason::kDegenerateSelection: return "DegenerateSelection";
    }
    return "Unknown";
}

std::optional<ParseFailureReason> parse_failure_reason_from_string(std::string_view s) {
    for (auto r : {ParseFailureReason::kMissingCotMarker, ParseFailureReason::kMissingBest,
                   ParseFailureReason::kMissingWorst, ParseFailureReason::kInvalidLabel,
                   ParseFailureReason::kLabelOutOfRange, ParseFailureReason::kDegenerateSelection}) {
        if (to_string(r) == s) return r;
    }
    return std::nullopt;
}

ParseOutcome parse_judgment(std::string_view raw, std::size_t m, const HybridAspect& aspect) {
    if (m < kMinChoices || m > kMaxChoices) {
        throw Error(ErrorCode::kPrecondition, fmt::format("parse_judgment needs 2 <= m <= 6, got {}", m));
    }
    auto cot = find_marker(raw, {"cot"}, 0, /*colon_required=*/false);
    if (!cot) return fail(ParseFailureReason::kMissingCotMarker, raw);

    auto best = find_marker(raw, {"best", "answer"}, cot->end);
    if (!best) return fail(ParseFailureReason::kMissingBest, raw);

    Judgment j;
    j.aspect = aspect;
    j.raw = std::string(raw);
    if (auto s = read_label(raw, best->end, m, j.best); s != LabelStatus::kOk) {
        return fail(label_failure(s), raw);
    }

    auto worst = find_marker(raw, {"worst", "answer"}, best->end);
    if (!worst) return fail(ParseFailureReason::kMissingWorst, raw);
    if (auto s = read_label(raw, worst->end, m, j.worst); s != LabelStatus::kOk) {
        return fail(label_failure(s), raw);
    }
    if (j.best == j.worst) return fail(ParseFailureReason::kDegenerateSelection, raw);

    std::size_t cot_end = best->begin;
    auto answer = find_standalone_answer(raw.substr(0, best->begin), cot->end);
    if (answer != npos) cot_end = answer;
    j.cot = extract_cot(raw.substr(cot->end, cot_end - cot->end));
    return j;
}

std::string format_judgment(std::string_view cot, std::size_t best, std::size_t worst, std::size_t m) {
    return fmt::format("COT:{{{}}}. Answer : Best answer:{}. Worst answer :{}", cot, label_of(best, m),
                       label_of(worst, m));
}

std::string answer_line(const Judgment& j, std::size_t m) {
    return fmt::format("Best answer:{}. Worst answer:{}", label_of(j.best, m), label_of(j.worst, m));
}

std::string repair_prompt(const ParseFailure& failure, std::string_view original_prompt) {
    std::string_view problem;
    switch (failure.reason) {
        case ParseFailureReason::kMissingCotMarker:
            problem = "it has no \"COT:\" section";
            break;
        case ParseFailureReason::kMissingBest:
            problem = "the \"Best answer\" field is missing";
            break;
        case ParseFailureReason::kMissingWorst:
            problem = "the \"Worst answer\" field is missing";
            break;
        case ParseFailureReason::kInvalidLabel:
            problem = "a selected answer is not a single choice letter";
            break;
        case ParseFailureReason::kLabelOutOfRange:
            problem = "a selected answer is not one of the listed choices";
            break;
        case ParseFailureReason::kDegenerateSelection:
            problem = "the best answer and the worst answer are the same choice";
            break;
    }
    return fmt::format(
        "Your previous reply could not be used because {} ({}).\n"
        "Previous reply:\n{}\n\n"
        "Reply again and follow the result format strictly: \"COT:{{your analysis}}. Answer : Best "
        "answer:{{one choice letter}}. Worst answer :{{a different choice letter}}\".\n\n"
        "{}",
        problem, to_string(failure.reason), failure.raw, original_prompt);
}

}  // namespace consjudge
