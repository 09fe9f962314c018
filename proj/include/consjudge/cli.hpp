#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "consjudge/gateway.hpp"
#include "consjudge/metrics.hpp"
#include "consjudge/orchestrator.hpp"

namespace consjudge {

enum ExitCode : int {
    kExitOk = 0,
    kExitFatal = 1,
    kExitConfig = 2,
    kExitSkipRate = 3,
};

struct RunPaths {
    std::string tasks;
    std::string retrieval;
    std::string candidates;
    std::string output;
    std::string log;
    std::string stats;
    std::string cache_dir;
    std::string templates;
};

/// Everything a run needs, from the config file with command-line overrides applied.
struct RunConfig {
    std::optional<ModelEndpoint> judge;
    std::optional<ModelEndpoint> embedder;
    std::optional<ModelEndpoint> referee;
    std::optional<ModelEndpoint> rag_generator;
    std::vector<ModelEndpoint> generators;

    SamplingPlan sampling;
    RagSamplingOptions rag;
    JudgeOptions judge_options;
    bool embed_answer_only = false;
    bool include_self = true;

    RunPaths paths;
    std::uint64_t seed = 0;
    std::size_t parallelism = 8;
    int retries = 5;
    double max_skip_rate = 0.2;

    bool no_cache = false;
    bool dry_run = false;
    bool mock = false;
    bool random_pairs = false;
    bool log_vectors = false;
    bool overwrite = false;

    nlohmann::json mock_behavior = nlohmann::json::object();

    /// Reads the documented config tree; unknown top-level keys are rejected.
    static RunConfig from_json(const nlohmann::json& j);
};

/// Runs the command line; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace consjudge
