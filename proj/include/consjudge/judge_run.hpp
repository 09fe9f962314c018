#pragma once

#include <optional>
#include <string>
#include <vector>

#include "consjudge/domain.hpp"
#include "consjudge/judgment_parser.hpp"

namespace consjudge {

/// Everything that happened while asking the judge about one aspect.
struct AspectTrace {
    HybridAspect aspect = HybridAspect::all_dimensions();
    std::vector<std::string> attempts;              // raw outputs, original first then re-asks
    std::optional<Judgment> judgment;               // set when some attempt parsed
    std::optional<ParseFailureReason> last_failure; // set when no attempt parsed
    std::string gateway_error;                      // non-empty when a request failed outright

    bool ok() const noexcept { return judgment.has_value(); }
};

struct JudgeRun {
    std::vector<AspectTrace> traces;     // one per configured aspect, canonical order
    JudgmentSet judgments;               // the valid subset, same order
    std::vector<std::size_t> display_order;  // candidate shown at each position; empty = identity
};

}  // namespace consjudge
