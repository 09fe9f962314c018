#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "consjudge/dataset_io.hpp"
#include "consjudge/gateway.hpp"
#include "consjudge/judge_run.hpp"
#include "consjudge/prompts.hpp"

namespace consjudge {

inline constexpr std::string_view kSkipGenerationFailed = "generation-failed";
inline constexpr std::string_view kSkipJudgeUnavailable = "judge-unavailable";
inline constexpr std::string_view kSkipInsufficientJudgments = "insufficient-judgments";
inline constexpr std::string_view kSkipEmbeddingFailed = "embedding-failed";
inline constexpr std::string_view kSkipParseFailed = "parse-failed";
inline constexpr std::string_view kSkipMissingRetrieval = "missing-retrieval";
inline constexpr std::string_view kSkipIdenticalCandidates = "identical-candidates";
inline constexpr std::string_view kSkipTaskError = "task-error";

/// Seed for everything random about one task; independent of processing order.
std::uint64_t task_seed(std::uint64_t run_seed, std::string_view query_id);

struct SamplingPlan {
    std::vector<ModelEndpoint> generators;
    std::vector<double> temperatures{0.5, 0.6, 0.7};
    int picks_per_model = 1;
    std::uint64_t rng_seed = 0;
    int max_tokens = 512;

    void validate() const;
};

/// One response per (generator, temperature), then picks_per_model of each
/// generator's responses chosen with the task's seeded RNG. Gateway errors propagate.
ResponseSet sample_candidates(ModelGateway& gateway, const PromptFactory& prompts, const Query& q,
                              const SamplingPlan& plan);

struct RagSamplingOptions {
    double temperature = 0.7;
    int samples_per_mode = 2;  // per retrieval mode; m = 2 * samples_per_mode
    int max_tokens = 512;
};

/// With-documents samples first (ordinals 0..n-1), then without.
ResponseSet sample_rag_candidates(ModelGateway& gateway, const PromptFactory& prompts, const Query& q,
                                  const RetrievalRecord& retrieval, const ModelEndpoint& gen,
                                  const RagSamplingOptions& options);

struct JudgeOptions {
    std::vector<HybridAspect> aspects = enumerate_hybrid_aspects();
    int repair_retries = 2;
    double temperature = 0.0;
    int max_tokens = 1024;
    bool shuffle = false;  // one random candidate display order per task
};

/// Asks for a judgment under one aspect, re-asking with a repair prompt on
/// parse failures. Judgment labels are display positions.
AspectTrace judge_once(ModelGateway& gateway, const ModelEndpoint& judge, const std::string& prompt,
                       const HybridAspect& aspect, std::size_t m, const JudgeOptions& options);

std::vector<std::size_t> display_order_for(std::size_t m, bool shuffle, std::uint64_t seed);

JudgeRun run_judge_over_aspects(ModelGateway& gateway, const PromptFactory& prompts, const JudgeTask& task,
                                const ModelEndpoint& judge, const JudgeOptions& options, std::uint64_t seed);

/// Where per-task results go. Called on one thread, in input order; `output`
/// before `log` for the same task.
struct PipelineSinks {
    std::function<void(const ojson&)> output;
    std::function<void(const ojson&)> log;
};

struct JudgePipelineConfig {
    ModelEndpoint judge;
    ModelEndpoint embedder;
    JudgeOptions judge_options;
    std::uint64_t seed = 0;
    std::size_t parallelism = 8;
    bool random_pairs = false;     // ablation: chosen/rejected drawn at random
    bool embed_answer_only = false;  // embed "Best answer:X. Worst answer:Y" instead of the full text
    bool include_self = true;
    bool log_vectors = false;
};

/// Output lines are judge preference rows; log lines are judgment-log entries.
/// Tasks whose ids are in `skip_ids` count as skipped with reason "already-present".
RunStatistics judge_consistency_pipeline(ModelGateway& gateway, const PromptFactory& prompts,
                                         const std::vector<JudgeTask>& tasks, const JudgePipelineConfig& config,
                                         const PipelineSinks& sinks, const std::set<std::string>& skip_ids = {});

struct RagPipelineConfig {
    ModelEndpoint judge;
    JudgeOptions judge_options;
    std::uint64_t seed = 0;
    std::size_t parallelism = 8;
};

/// Output lines are generator preference rows; log lines are selection records
/// (candidate-index space) usable by compare-judges and analyze.
RunStatistics rag_reward_pipeline(ModelGateway& gateway, const PromptFactory& prompts,
                                  const std::vector<JudgeTask>& tasks,
                                  const std::map<std::string, RetrievalRecord>& retrieval,
                                  const RagPipelineConfig& config, const PipelineSinks& sinks,
                                  const std::set<std::string>& skip_ids = {});

/// Candidate sampling stages; output lines are candidate-set records.
RunStatistics sample_judge_data(ModelGateway& gateway, const PromptFactory& prompts,
                                const std::vector<TaskRecord>& tasks, const SamplingPlan& plan,
                                std::size_t parallelism, const PipelineSinks& sinks,
                                const std::set<std::string>& skip_ids = {});

RunStatistics rag_sample(ModelGateway& gateway, const PromptFactory& prompts, const std::vector<TaskRecord>& tasks,
                         const std::map<std::string, RetrievalRecord>& retrieval, const ModelEndpoint& gen,
                         const RagSamplingOptions& options, std::size_t parallelism, const PipelineSinks& sinks,
                         const std::set<std::string>& skip_ids = {});

enum class RefereeVerdict { kA, kB, kTie };

/// Reads "Better judgment: A | B | Tie"; nullopt when absent or unreadable.
std::optional<RefereeVerdict> parse_referee_verdict(std::string_view raw);

struct CompareResult {
    std::size_t overlap = 0;         // tasks covered by both selection lists
    std::size_t compared = 0;        // overlap minus excluded
    std::size_t short_circuited = 0; // identical selections, no referee call
    std::size_t excluded = 0;        // referee reply unreadable or unavailable
    std::size_t wins_a = 0;
    std::size_t wins_b = 0;
    std::size_t ties = 0;

    double win_rate_a() const noexcept { return compared ? double(wins_a) / double(compared) : 0.0; }
    double win_rate_b() const noexcept { return compared ? double(wins_b) / double(compared) : 0.0; }
    double tie_rate() const noexcept { return compared ? double(ties) / double(compared) : 0.0; }
    ojson to_json() const;
};

/// Throws kPrecondition when the two lists share no task.
CompareResult reference_judge_compare(ModelGateway& gateway, const PromptFactory& prompts,
                                      const std::vector<JudgeTask>& tasks,
                                      const std::vector<SelectionRecord>& selections_a,
                                      const std::vector<SelectionRecord>& selections_b,
                                      const ModelEndpoint& referee, const JudgeOptions& options,
                                      std::size_t parallelism = 8);

}  // namespace consjudge
