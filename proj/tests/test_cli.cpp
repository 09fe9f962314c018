#include <doctest.h>

#include <sstream>

#include <fmt/format.h>

#include "consjudge/cli.hpp"
#include "consjudge/dataset_io.hpp"
#include "test_util.hpp"

using namespace consjudge;
using testutil::TempDir;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "consjudge");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string write_tasks(const TempDir& dir, int n) {
    std::string content;
    for (int i = 0; i < n; ++i) {
        content += fmt::format(R"({{"id":"q{}","question":"Which river runs through city {}?","answers":["River {}"]}})",
                               i, i, i) +
                   "\n";
    }
    const auto p = (dir / "tasks.jsonl").string();
    testutil::write_file(p, content);
    return p;
}

}  // namespace

TEST_CASE("help and parse errors") {
    CHECK(run({"--help"}).code == kExitOk);
    CHECK(run({}).code == kExitConfig);
    CHECK(run({"no-such-command"}).code == kExitConfig);
    CHECK(run({"compare-judges"}).code == kExitConfig);  // required options missing
}

TEST_CASE("config files are validated") {
    TempDir dir;
    const auto cfg = (dir / "c.json").string();
    testutil::write_file(cfg, R"({"seed": 3, "colour": "blue"})");
    auto r = run({"--config", cfg, "judge-pipeline"});
    CHECK(r.code == kExitConfig);
    CHECK(r.err.find("colour") != std::string::npos);
    testutil::write_file(cfg, "{not json");
    CHECK(run({"--config", cfg, "judge-pipeline"}).code == kExitConfig);
    testutil::write_file(cfg, R"({"judge": {"aspects": ["Fluency"]}})");
    CHECK(run({"--config", cfg, "judge-pipeline"}).code == kExitConfig);
}

TEST_CASE("dry run prints a plan and makes no calls") {
    TempDir dir;
    const auto tasks = write_tasks(dir, 5);
    const auto r = run({"--mock", "--dry-run", "--tasks", tasks, "-o", (dir / "c.jsonl").string(), "sample-judge-data"});
    REQUIRE(r.code == kExitOk);
    const auto plan = nlohmann::json::parse(r.out);
    CHECK(plan["network_calls"] == 0);
    CHECK(plan["tasks"] == 5);
    CHECK(plan["estimated_requests"] == 5 * 4 * 3);
    CHECK_FALSE(std::filesystem::exists(dir / "c.jsonl"));
}

TEST_CASE("missing credentials fail before any request") {
    TempDir dir;
    const auto tasks = write_tasks(dir, 2);
    const auto cfg = (dir / "c.json").string();
    testutil::write_file(cfg, R"({"endpoints": {"generators": [
        {"base_url": "http://127.0.0.1:1/v1", "model": "g1", "api_key_env": "CONSJUDGE_TEST_UNSET_KEY"},
        {"base_url": "http://127.0.0.1:1/v1", "model": "g2"}]}})");
    const auto r = run({"--config", cfg, "--tasks", tasks, "-o", (dir / "c.jsonl").string(), "sample-judge-data"});
    CHECK(r.code == kExitConfig);
    CHECK(r.err.find("CONSJUDGE_TEST_UNSET_KEY") != std::string::npos);
}

TEST_CASE("outputs must not collide with inputs") {
    TempDir dir;
    const auto tasks = write_tasks(dir, 2);
    CHECK(run({"--mock", "--tasks", tasks, "-o", tasks, "sample-judge-data"}).code == kExitConfig);
}

TEST_CASE("empty task file gives an empty run") {
    TempDir dir;
    const auto tasks = (dir / "tasks.jsonl").string();
    testutil::write_file(tasks, "");
    const auto out = (dir / "c.jsonl").string();
    const auto r = run({"--mock", "--tasks", tasks, "-o", out, "sample-judge-data"});
    CHECK(r.code == kExitOk);
    const auto stats = read_json_file(out + ".stats.json");
    CHECK(stats["input"] == 0);
    CHECK(stats["emitted"] == 0);
}

TEST_CASE("mock pipelines end to end with resume") {
    TempDir dir;
    const auto tasks = write_tasks(dir, 8);
    const auto cands = (dir / "cands.jsonl").string();
    const auto prefs = (dir / "prefs.jsonl").string();
    const auto cache = (dir / "cache").string();
    REQUIRE(run({"--mock", "--cache-dir", cache, "--tasks", tasks, "-o", cands, "sample-judge-data"}).code == kExitOk);
    CHECK(read_judge_tasks(cands).size() == 8);

    auto r = run({"--mock", "--cache-dir", cache, "--candidates", cands, "-o", prefs, "judge-pipeline"});
    REQUIRE(r.code == kExitOk);
    const auto first = testutil::read_file(prefs);
    const auto stats = read_json_file(prefs + ".stats.json");
    CHECK(stats["self_check"] == true);
    CHECK(stats["emitted"].get<int>() == static_cast<int>(read_preferences(prefs).size()));

    // A second run resumes and has nothing left to do.
    r = run({"--mock", "--cache-dir", cache, "--candidates", cands, "-o", prefs, "judge-pipeline"});
    CHECK(r.code == kExitOk);
    CHECK(testutil::read_file(prefs) == first);
    CHECK(read_json_file(prefs + ".stats.json")["skip_reasons"]["already-present"] == 8);

    // Analysis against a raw metric, then a report.
    const auto analysis = (dir / "analysis.json").string();
    r = run({"--candidates", cands, "-o", analysis, "analyze", "--judge-log", "cj=" + prefs + ".log.jsonl",
             "--against-metric", "rouge_l"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("agreement over") != std::string::npos);
    r = run({"emit-report", "--input", prefs + ".stats.json", "--input", analysis});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("# Run report") != std::string::npos);
    CHECK(r.out.find("judge-pipeline") != std::string::npos);
}

TEST_CASE("skip rate above the threshold exits 3") {
    TempDir dir;
    const auto tasks = write_tasks(dir, 3);
    const auto cands = (dir / "cands.jsonl").string();
    REQUIRE(run({"--mock", "--tasks", tasks, "-o", cands, "sample-judge-data"}).code == kExitOk);
    const auto cfg = (dir / "c.json").string();
    testutil::write_file(cfg, R"({"mock": {"format_violation_rate": 1.0}})");
    const auto r = run({"--config", cfg, "--mock", "--candidates", cands, "-o", (dir / "p.jsonl").string(),
                        "judge-pipeline"});
    CHECK(r.code == kExitSkipRate);
    CHECK(r.err.find("skip rate") != std::string::npos);
}
