#include <doctest.h>

#include <random>

#include "consjudge/judgment_parser.hpp"

using namespace consjudge;

namespace {

const HybridAspect kAll = HybridAspect::all_dimensions();

Judgment ok(std::string_view raw, std::size_t m = 4) {
    auto r = parse_judgment(raw, m, kAll);
    REQUIRE_MESSAGE(std::holds_alternative<Judgment>(r), "expected a judgment for: " << raw);
    return std::get<Judgment>(r);
}

ParseFailureReason failure(std::string_view raw, std::size_t m = 4) {
    auto r = parse_judgment(raw, m, kAll);
    REQUIRE_MESSAGE(std::holds_alternative<ParseFailure>(r), "expected a failure for: " << raw);
    return std::get<ParseFailure>(r).reason;
}

}  // namespace

TEST_CASE("strict format parses") {
    const auto j = ok("COT:{B is concise and correct}. Answer : Best answer:B. Worst answer :D");
    CHECK(j.best == 1);
    CHECK(j.worst == 3);
    CHECK(j.cot == "B is concise and correct");
    CHECK(j.aspect == kAll);
}

TEST_CASE("lenient marker spelling") {
    CHECK(ok("cot: fine. answer: best answer : c. worst answer: a").best == 2);
    CHECK(ok("COT {x} Best  Answer:{A} Worst\tanswer:{B}").worst == 1);
    CHECK(ok("COT:x\nBest answer: (choice C)\nWorst answer: option A").best == 2);
    CHECK(ok("COT: x. Best answer: **B**. Worst answer: [D]").worst == 3);
}

TEST_CASE("first best marker is authoritative") {
    const auto j = ok("COT:{..}. Best answer:A. Worst answer:C. Best answer:B");
    CHECK(j.best == 0);
    CHECK(j.worst == 2);
}

TEST_CASE("failure reasons") {
    CHECK(failure("Best answer:A. Worst answer:B") == ParseFailureReason::kMissingCotMarker);
    CHECK(failure("COT:{x}. Worst answer:B") == ParseFailureReason::kMissingBest);
    CHECK(failure("COT:{x}. Best answer:A.") == ParseFailureReason::kMissingWorst);
    CHECK(failure("COT:{x}. Best answer:AB. Worst answer:C") == ParseFailureReason::kInvalidLabel);
    CHECK(failure("COT:{x}. Best answer:7. Worst answer:C") == ParseFailureReason::kInvalidLabel);
    CHECK(failure("COT:{x}. Best answer:E. Worst answer:A") == ParseFailureReason::kLabelOutOfRange);
    CHECK(failure("COT:{x}. Best answer:B. Worst answer:b") == ParseFailureReason::kDegenerateSelection);
    CHECK(failure("") == ParseFailureReason::kMissingCotMarker);
    // Best label problems are reported before a missing worst marker.
    CHECK(failure("COT:{x}. Best answer:Z") == ParseFailureReason::kLabelOutOfRange);
}

TEST_CASE("failure keeps the raw text") {
    auto r = parse_judgment("no format here", 4, kAll);
    REQUIRE(std::holds_alternative<ParseFailure>(r));
    CHECK(std::get<ParseFailure>(r).raw == "no format here");
}

TEST_CASE("m outside 2..6 is a precondition error") {
    CHECK_THROWS_AS(parse_judgment("COT:x Best answer:A Worst answer:B", 1, kAll), Error);
    CHECK_THROWS_AS(parse_judgment("COT:x Best answer:A Worst answer:B", 7, kAll), Error);
}

TEST_CASE("format_judgment round-trips") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 300; ++i) {
        const std::size_t m = 2 + rng() % 5;
        const std::size_t best = rng() % m;
        std::size_t worst = rng() % (m - 1);
        if (worst >= best) ++worst;
        const auto text = format_judgment("analysis " + std::to_string(i), best, worst, m);
        const auto j = ok(text, m);
        CHECK(j.best == best);
        CHECK(j.worst == worst);
        CHECK(j.cot == "analysis " + std::to_string(i));
        CHECK(j.raw == text);
    }
}

TEST_CASE("failure reason names round-trip") {
    for (auto r : {ParseFailureReason::kMissingCotMarker, ParseFailureReason::kMissingBest,
                   ParseFailureReason::kMissingWorst, ParseFailureReason::kInvalidLabel,
                   ParseFailureReason::kLabelOutOfRange, ParseFailureReason::kDegenerateSelection}) {
        CHECK(parse_failure_reason_from_string(to_string(r)) == r);
    }
    CHECK_FALSE(parse_failure_reason_from_string("Nope").has_value());
}

TEST_CASE("repair prompt names the problem and restates the task") {
    ParseFailure f{ParseFailureReason::kMissingWorst, "COT:{x}. Best answer:A"};
    const auto p = repair_prompt(f, "ORIGINAL TASK");
    CHECK(p.find("Worst answer") != std::string::npos);
    CHECK(p.find("MissingWorst") != std::string::npos);
    CHECK(p.find("COT:{x}. Best answer:A") != std::string::npos);
    CHECK(p.rfind("ORIGINAL TASK") == p.size() - std::string("ORIGINAL TASK").size());
}

TEST_CASE("answer line") {
    Judgment j;
    j.best = 1;
    j.worst = 3;
    CHECK(answer_line(j, 4) == "Best answer:B. Worst answer:D");
}
