#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "consjudge/domain.hpp"

namespace consjudge {

enum class ParseFailureReason {
    kMissingCotMarker,
    kMissingBest,
    kMissingWorst,
    kInvalidLabel,
    kLabelOutOfRange,
    kDegenerateSelection,
};

std::string_view to_string(ParseFailureReason reason);
std::optional<ParseFailureReason> parse_failure_reason_from_string(std::string_view s);

struct ParseFailure {
    ParseFailureReason reason;
    std::string raw;
};

using ParseOutcome = std::variant<Judgment, ParseFailure>;

/// Parses "COT:{...}. Answer : Best answer:X. Worst answer :Y".
///
/// Markers match case-insensitively with optional whitespace around ':'. The
/// first "Best answer" marker after the COT marker is authoritative, and the
/// "Worst answer" marker is searched after it. Failures report the first
/// violated rule in document order. Total for any input bytes; only throws
/// kPrecondition when m is outside 2..6.
ParseOutcome parse_judgment(std::string_view raw, std::size_t m, const HybridAspect& aspect);

/// Canonical rendering that parse_judgment maps back to an equal Judgment
/// (the raw field is set to the rendered text).
std::string format_judgment(std::string_view cot, std::size_t best, std::size_t worst, std::size_t m);

/// Answer-only text ("Best answer:B. Worst answer:D") for embedding ablations.
std::string answer_line(const Judgment& j, std::size_t m);

/// Follow-up prompt naming what was wrong and restating the format, followed
/// by the original task.
std::string repair_prompt(const ParseFailure& failure, std::string_view original_prompt);

}  // namespace consjudge
