#include "consjudge/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "consjudge/consistency.hpp"
#include "consjudge/judgment_parser.hpp"
#include "consjudge/parallel.hpp"
#include "consjudge/text_util.hpp"

namespace consjudge {

namespace {

// What one task produced; assembled on a worker, emitted in input order.
struct TaskOutcome {
    std::optional<ojson> output;
    std::optional<ojson> log;
    std::string skip_reason;
    std::map<std::string, std::size_t> counters;
};

template <typename Task, typename IdOf, typename Work>
RunStatistics run_tasks(std::string pipeline, const std::vector<Task>& tasks, std::size_t parallelism,
                        const std::set<std::string>& skip_ids, const PipelineSinks& sinks, IdOf&& id_of,
                        Work&& work) {
    const auto start = std::chrono::steady_clock::now();
    RunStatistics stats;
    stats.pipeline = std::move(pipeline);
    stats.input = tasks.size();
    std::map<std::string, std::size_t> counters;

    ordered_parallel_for(
        tasks.size(), parallelism,
        [&](std::size_t i) -> TaskOutcome {
            if (skip_ids.count(id_of(tasks[i]))) {
                TaskOutcome o;
                o.skip_reason = std::string(kSkipAlreadyPresent);
                return o;
            }
            try {
                return work(tasks[i]);
            } catch (const Error& e) {
                spdlog::warn("task '{}' failed: {}", id_of(tasks[i]), e.what());
                TaskOutcome o;
                o.skip_reason = std::string(kSkipTaskError);
                return o;
            }
        },
        [&](std::size_t, TaskOutcome&& o) {
            if (o.output) {
                if (sinks.output) sinks.output(*o.output);
                ++stats.emitted;
            } else {
                stats.skip(o.skip_reason.empty() ? "unknown" : o.skip_reason);
            }
            if (o.log && sinks.log) sinks.log(*o.log);
            for (const auto& [k, v] : o.counters) counters[k] += v;
        });

    for (const auto& [k, v] : counters) stats.extra[k] = v;
    stats.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!stats.self_check()) throw Error(ErrorCode::kIntegrity, "run statistics do not add up");
    return stats;
}

ojson origin_json(const ResponseOrigin& o) {
    ojson j;
    j["model"] = o.model;
    j["temperature"] = o.temperature;
    if (o.with_docs) j["with_docs"] = *o.with_docs;
    j["ordinal"] = o.ordinal;
    return j;
}

std::string letter(std::size_t index, std::size_t m) { return std::string(1, label_of(index, m)); }

}  // namespace

std::uint64_t task_seed(std::uint64_t run_seed, std::string_view query_id) {
    return mix64(run_seed ^ fnv1a64(query_id));
}

void SamplingPlan::validate() const {
    if (generators.empty()) throw Error(ErrorCode::kConfig, "sampling plan has no generator endpoints");
    if (temperatures.empty()) throw Error(ErrorCode::kConfig, "sampling plan has no temperatures");
    for (double t : temperatures) {
        if (!(t >= 0.0 && t <= 2.0)) throw Error(ErrorCode::kConfig, fmt::format("temperature {} outside [0, 2]", t));
    }
    if (picks_per_model < 1 || static_cast<std::size_t>(picks_per_model) > temperatures.size()) {
        throw Error(ErrorCode::kConfig, "picks_per_model must be between 1 and the number of temperatures");
    }
    const auto m = generators.size() * static_cast<std::size_t>(picks_per_model);
    if (m < kMinChoices || m > kMaxChoices) {
        throw Error(ErrorCode::kConfig, fmt::format("sampling plan yields {} candidates; need 2..6", m));
    }
    if (max_tokens < 1) throw Error(ErrorCode::kConfig, "max_tokens must be positive");
}

ResponseSet sample_candidates(ModelGateway& gateway, const PromptFactory& prompts, const Query& q,
                              const SamplingPlan& plan) {
    plan.validate();
    const auto prompt = prompts.build_generator_prompt(q, std::nullopt);
    std::mt19937_64 rng(task_seed(plan.rng_seed, q.id));
    ResponseSet out;
    for (const auto& gen : plan.generators) {
        std::vector<CandidateResponse> samples;
        for (double t : plan.temperatures) {
            GenerationParams params;
            params.temperature = t;
            params.max_tokens = plan.max_tokens;
            CandidateResponse c;
            c.text = gateway.chat_complete(gen, prompt, params, 0);
            c.origin = {gen.model_id, t, std::nullopt, 0};
            samples.push_back(std::move(c));
        }
        std::vector<std::size_t> idx(samples.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(plan.picks_per_model));
        std::sort(idx.begin(), idx.end());
        for (auto i : idx) {
            samples[i].label_index = out.candidates.size();
            out.candidates.push_back(std::move(samples[i]));
        }
    }
    return out;
}

ResponseSet sample_rag_candidates(ModelGateway& gateway, const PromptFactory& prompts, const Query& q,
                                  const RetrievalRecord& retrieval, const ModelEndpoint& gen,
                                  const RagSamplingOptions& options) {
    if (retrieval.documents.empty()) {
        throw Error(ErrorCode::kPrecondition, fmt::format("query '{}' has no retrieved documents", q.id));
    }
    if (options.samples_per_mode < 1 || options.samples_per_mode > 3) {
        throw Error(ErrorCode::kConfig, "samples_per_mode must be between 1 and 3");
    }
    ResponseSet out;
    for (bool with_docs : {true, false}) {
        const auto prompt = with_docs ? prompts.build_generator_prompt(q, retrieval.texts())
                                      : prompts.build_generator_prompt(q, std::nullopt);
        for (int ord = 0; ord < options.samples_per_mode; ++ord) {
            GenerationParams params;
            params.temperature = options.temperature;
            params.max_tokens = options.max_tokens;
            params.seed = 0;  // request seed = ordinal, so repeated samples differ
            CandidateResponse c;
            c.label_index = out.candidates.size();
            c.text = gateway.chat_complete(gen, prompt, params, ord);
            c.origin = {gen.model_id, options.temperature, with_docs, ord};
            out.candidates.push_back(std::move(c));
        }
    }
    if (out.m() < kMinChoices) throw Error(ErrorCode::kCardinality, "too few RAG candidates");
    return out;
}

AspectTrace judge_once(ModelGateway& gateway, const ModelEndpoint& judge, const std::string& prompt,
                       const HybridAspect& aspect, std::size_t m, const JudgeOptions& options) {
    AspectTrace trace;
    trace.aspect = aspect;
    GenerationParams params;
    params.temperature = options.temperature;
    params.max_tokens = options.max_tokens;

    std::string request = prompt;
    for (int attempt = 0; attempt <= options.repair_retries; ++attempt) {
        std::string raw;
        try {
            raw = gateway.chat_complete(judge, request, params, 0);
        } catch (const Error& e) {
            trace.gateway_error = e.what();
            return trace;
        }
        trace.attempts.push_back(raw);
        auto outcome = parse_judgment(raw, m, aspect);
        if (auto* j = std::get_if<Judgment>(&outcome)) {
            trace.judgment = std::move(*j);
            trace.last_failure.reset();
            return trace;
        }
        const auto& failure = std::get<ParseFailure>(outcome);
        trace.last_failure = failure.reason;
        request = repair_prompt(failure, prompt);
    }
    return trace;
}

std::vector<std::size_t> display_order_for(std::size_t m, bool shuffle, std::uint64_t seed) {
    if (!shuffle) return {};
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix64(seed ^ 0x5bd1e995ULL));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

JudgeRun run_judge_over_aspects(ModelGateway& gateway, const PromptFactory& prompts, const JudgeTask& task,
                                const ModelEndpoint& judge, const JudgeOptions& options, std::uint64_t seed) {
    validate_response_set(task.responses);
    if (options.aspects.empty()) throw Error(ErrorCode::kConfig, "no judge aspects configured");
    JudgeRun run;
    const auto m = task.responses.m();
    run.display_order = display_order_for(m, options.shuffle, seed);
    run.judgments.k_configured = options.aspects.size();
    for (const auto& aspect : options.aspects) {
        const auto prompt = prompts.build_judge_prompt(aspect, task.query, task.gt, task.responses, run.display_order);
        auto trace = judge_once(gateway, judge, prompt, aspect, m, options);
        if (trace.judgment) run.judgments.judgments.push_back(*trace.judgment);
        run.traces.push_back(std::move(trace));
    }
    return run;
}

// ---------------------------------------------------------------------------

RunStatistics judge_consistency_pipeline(ModelGateway& gateway, const PromptFactory& prompts,
                                         const std::vector<JudgeTask>& tasks, const JudgePipelineConfig& config,
                                         const PipelineSinks& sinks, const std::set<std::string>& skip_ids) {
    const std::string selection_mode = config.random_pairs ? "random" : "consistency";
    auto stats = run_tasks(
        "judge-pipeline", tasks, config.parallelism, skip_ids, sinks,
        [](const JudgeTask& t) -> const std::string& { return t.query.id; },
        [&](const JudgeTask& task) {
            TaskOutcome out;
            const auto seed = task_seed(config.seed, task.query.id);
            const auto run = run_judge_over_aspects(gateway, prompts, task, config.judge, config.judge_options, seed);
            const auto m = task.responses.m();

            JudgmentLogInput log;
            log.task = &task;
            log.run = &run;
            log.selection_mode = selection_mode;
            log.log_vectors = config.log_vectors;

            for (const auto& t : run.traces) {
                if (!t.ok()) ++out.counters["aspect_failures"];
            }

            if (run.judgments.k_effective() < 2) {
                const bool unavailable = std::all_of(run.traces.begin(), run.traces.end(),
                                                     [](const AspectTrace& t) { return !t.gateway_error.empty(); });
                out.skip_reason = std::string(unavailable ? kSkipJudgeUnavailable : kSkipInsufficientJudgments);
                log.skip_reason = out.skip_reason;
                out.log = judgment_log_entry(log);
                return out;
            }

            std::vector<EmbeddingVector> vectors;
            try {
                for (const auto& j : run.judgments.judgments) {
                    vectors.push_back(
                        gateway.embed(config.embedder, config.embed_answer_only ? answer_line(j, m) : j.raw));
                }
            } catch (const Error& e) {
                spdlog::warn("task '{}': embedding failed: {}", task.query.id, e.what());
                vectors.clear();
                out.skip_reason = std::string(kSkipEmbeddingFailed);
                log.skip_reason = out.skip_reason;
                out.log = judgment_log_entry(log);
                return out;
            }
            log.embeddings = &vectors;

            const auto scores = consistency_scores(vectors, config.include_self);
            auto report = config.random_pairs ? select_random_pair(run.judgments, scores, mix64(seed + 1))
                                              : select_pair(run.judgments, scores);
            log.report = &report;
            if (report.skipped) {
                out.skip_reason = report.skip_reason;
                log.skip_reason = out.skip_reason;
                out.log = judgment_log_entry(log);
                return out;
            }
            auto record = build_judge_training_instance(task, report, run.judgments, prompts, run.display_order);
            if (record && record->chosen == record->rejected) {
                // Distinct aspects can produce byte-identical replies; DPO cannot use them.
                out.skip_reason = std::string(kSkipIdenticalCandidates);
                log.skip_reason = out.skip_reason;
                out.log = judgment_log_entry(log);
                return out;
            }
            record->meta["selection"] = selection_mode;
            out.output = preference_to_json(*record);
            out.log = judgment_log_entry(log);
            return out;
        });
    if (!stats.extra.contains("aspect_failures")) stats.extra["aspect_failures"] = 0;
    return stats;
}

RunStatistics rag_reward_pipeline(ModelGateway& gateway, const PromptFactory& prompts,
                                  const std::vector<JudgeTask>& tasks,
                                  const std::map<std::string, RetrievalRecord>& retrieval,
                                  const RagPipelineConfig& config, const PipelineSinks& sinks,
                                  const std::set<std::string>& skip_ids) {
    auto stats = run_tasks(
        "rag-pipeline", tasks, config.parallelism, skip_ids, sinks,
        [](const JudgeTask& t) -> const std::string& { return t.query.id; },
        [&](const JudgeTask& task) {
            TaskOutcome out;
            const auto docs = retrieval.find(task.query.id);
            if (docs == retrieval.end()) {
                out.skip_reason = std::string(kSkipMissingRetrieval);
                return out;
            }
            const auto m = task.responses.m();
            const auto seed = task_seed(config.seed, task.query.id);
            const auto order = display_order_for(m, config.judge_options.shuffle, seed);
            const auto candidate = [&](std::size_t pos) { return order.empty() ? pos : order[pos]; };

            const auto prompt = prompts.build_all_dims_prompt(task.query, task.gt, task.responses, order);
            const auto trace =
                judge_once(gateway, config.judge, prompt, HybridAspect::all_dimensions(), m, config.judge_options);
            if (!trace.ok()) {
                out.skip_reason = std::string(trace.gateway_error.empty() ? kSkipParseFailed : kSkipJudgeUnavailable);
                return out;
            }
            const auto& j = *trace.judgment;
            const auto best = candidate(j.best);
            const auto worst = candidate(j.worst);
            const auto& chosen = task.responses.candidates[best];
            const auto& rejected = task.responses.candidates[worst];
            if (chosen.text == rejected.text) {
                out.skip_reason = std::string(kSkipIdenticalCandidates);
                return out;
            }

            PreferenceRecord rec;
            rec.kind = PreferenceKind::kGenerator;
            rec.query_id = task.query.id;
            rec.prompt = prompts.build_generator_prompt(task.query, docs->second.texts());
            rec.chosen = chosen.text;
            rec.rejected = rejected.text;
            rec.meta["best"] = letter(best, m);
            rec.meta["worst"] = letter(worst, m);
            rec.meta["chosen_origin"] = origin_json(chosen.origin);
            rec.meta["rejected_origin"] = origin_json(rejected.origin);
            rec.meta["judge_attempts"] = trace.attempts.size();
            out.output = preference_to_json(rec);

            SelectionRecord sel;
            sel.judge = config.judge.model_id;
            sel.query_id = task.query.id;
            sel.m = m;
            sel.best = best;
            sel.worst = worst;
            sel.judgment = order.empty() ? j.raw : format_judgment(j.cot, best, worst, m);
            out.log = selection_to_json(sel);

            auto mode = [](const CandidateResponse& c) {
                if (!c.origin.with_docs) return std::string("unknown");
                return std::string(*c.origin.with_docs ? "with_docs" : "without_docs");
            };
            ++out.counters["chosen_" + mode(chosen)];
            ++out.counters["rejected_" + mode(rejected)];
            return out;
        });
    for (const char* k : {"chosen_with_docs", "chosen_without_docs", "rejected_with_docs", "rejected_without_docs"}) {
        if (!stats.extra.contains(k)) stats.extra[k] = 0;
    }
    return stats;
}

RunStatistics sample_judge_data(ModelGateway& gateway, const PromptFactory& prompts,
                                const std::vector<TaskRecord>& tasks, const SamplingPlan& plan,
                                std::size_t parallelism, const PipelineSinks& sinks,
                                const std::set<std::string>& skip_ids) {
    plan.validate();
    return run_tasks(
        "sample-judge-data", tasks, parallelism, skip_ids, sinks,
        [](const TaskRecord& t) -> const std::string& { return t.query.id; },
        [&](const TaskRecord& t) {
            TaskOutcome out;
            try {
                JudgeTask task{t.query, t.gt, sample_candidates(gateway, prompts, t.query, plan)};
                out.output = judge_task_to_json(task);
            } catch (const Error& e) {
                spdlog::warn("task '{}': sampling failed: {}", t.query.id, e.what());
                out.skip_reason = std::string(kSkipGenerationFailed);
            }
            return out;
        });
}

RunStatistics rag_sample(ModelGateway& gateway, const PromptFactory& prompts, const std::vector<TaskRecord>& tasks,
                         const std::map<std::string, RetrievalRecord>& retrieval, const ModelEndpoint& gen,
                         const RagSamplingOptions& options, std::size_t parallelism, const PipelineSinks& sinks,
                         const std::set<std::string>& skip_ids) {
    return run_tasks(
        "rag-sample", tasks, parallelism, skip_ids, sinks,
        [](const TaskRecord& t) -> const std::string& { return t.query.id; },
        [&](const TaskRecord& t) {
            TaskOutcome out;
            const auto docs = retrieval.find(t.query.id);
            if (docs == retrieval.end()) {
                out.skip_reason = std::string(kSkipMissingRetrieval);
                return out;
            }
            try {
                JudgeTask task{t.query, t.gt, sample_rag_candidates(gateway, prompts, t.query, docs->second, gen, options)};
                out.output = judge_task_to_json(task);
            } catch (const Error& e) {
                spdlog::warn("task '{}': sampling failed: {}", t.query.id, e.what());
                out.skip_reason = std::string(kSkipGenerationFailed);
            }
            return out;
        });
}

// ---------------------------------------------------------------------------

std::optional<RefereeVerdict> parse_referee_verdict(std::string_view raw) {
    const auto pos = find_ci(raw, "better judgment");
    if (pos == std::string_view::npos) return std::nullopt;
    auto rest = raw.substr(pos + std::string_view("better judgment").size());
    while (!rest.empty() && (std::isspace(static_cast<unsigned char>(rest.front())) || rest.front() == ':' ||
                             rest.front() == '{' || rest.front() == '(' || rest.front() == '[' || rest.front() == '*')) {
        rest.remove_prefix(1);
    }
    if (rest.empty()) return std::nullopt;
    if (to_lower_ascii(rest.substr(0, 3)) == "tie") return RefereeVerdict::kTie;
    const auto next_is_word = rest.size() > 1 && std::isalnum(static_cast<unsigned char>(rest[1]));
    if (next_is_word) return std::nullopt;
    if (rest.front() == 'A' || rest.front() == 'a') return RefereeVerdict::kA;
    if (rest.front() == 'B' || rest.front() == 'b') return RefereeVerdict::kB;
    return std::nullopt;
}

ojson CompareResult::to_json() const {
    ojson j;
    j["overlap"] = overlap;
    j["compared"] = compared;
    j["short_circuited"] = short_circuited;
    j["excluded"] = excluded;
    j["wins_a"] = wins_a;
    j["wins_b"] = wins_b;
    j["ties"] = ties;
    j["win_rate_a"] = win_rate_a();
    j["win_rate_b"] = win_rate_b();
    j["tie_rate"] = tie_rate();
    return j;
}

CompareResult reference_judge_compare(ModelGateway& gateway, const PromptFactory& prompts,
                                      const std::vector<JudgeTask>& tasks,
                                      const std::vector<SelectionRecord>& selections_a,
                                      const std::vector<SelectionRecord>& selections_b,
                                      const ModelEndpoint& referee, const JudgeOptions& options,
                                      std::size_t parallelism) {
    std::unordered_map<std::string, const SelectionRecord*> by_id_b;
    for (const auto& s : selections_b) by_id_b[s.query_id] = &s;
    std::unordered_map<std::string, const JudgeTask*> by_id_task;
    for (const auto& t : tasks) by_id_task[t.query.id] = &t;

    struct Item {
        const JudgeTask* task;
        const SelectionRecord* a;
        const SelectionRecord* b;
    };
    std::vector<Item> items;
    std::set<std::string> seen;
    for (const auto& a : selections_a) {
        auto b = by_id_b.find(a.query_id);
        auto t = by_id_task.find(a.query_id);
        if (b == by_id_b.end() || t == by_id_task.end() || !seen.insert(a.query_id).second) continue;
        items.push_back({t->second, &a, b->second});
    }
    if (items.empty()) throw Error(ErrorCode::kPrecondition, "the two selection lists share no task");

    GenerationParams params;
    params.temperature = options.temperature;
    params.max_tokens = options.max_tokens;

    CompareResult result;
    result.overlap = items.size();
    enum class Outcome { kA, kB, kTie, kShortCircuit, kExcluded };
    ordered_parallel_for(
        items.size(), parallelism,
        [&](std::size_t i) -> Outcome {
            const auto& it = items[i];
            if (it.a->best == it.b->best && it.a->worst == it.b->worst) return Outcome::kShortCircuit;
            const auto m = it.task->responses.m();
            auto text = [&](const SelectionRecord& s) {
                return s.judgment.empty() ? fmt::format("Best answer:{}. Worst answer :{}", letter(s.best, m),
                                                        letter(s.worst, m))
                                          : s.judgment;
            };
            const auto prompt = prompts.build_referee_prompt(it.task->query, it.task->gt, it.task->responses,
                                                             text(*it.a), text(*it.b));
            std::string raw;
            try {
                raw = gateway.chat_complete(referee, prompt, params, 0);
            } catch (const Error& e) {
                spdlog::warn("task '{}': referee failed: {}", it.task->query.id, e.what());
                return Outcome::kExcluded;
            }
            const auto verdict = parse_referee_verdict(raw);
            if (!verdict) return Outcome::kExcluded;
            switch (*verdict) {
                case RefereeVerdict::kA: return Outcome::kA;
                case RefereeVerdict::kB: return Outcome::kB;
                case RefereeVerdict::kTie: return Outcome::kTie;
            }
            return Outcome::kExcluded;
        },
        [&](std::size_t, Outcome o) {
            switch (o) {
                case Outcome::kA: ++result.wins_a; break;
                case Outcome::kB: ++result.wins_b; break;
                case Outcome::kTie: ++result.ties; break;
                case Outcome::kShortCircuit:
                    ++result.ties;
                    ++result.short_circuited;
                    break;
                case Outcome::kExcluded: ++result.excluded; break;
            }
        });
    result.compared = result.overlap - result.excluded;
    return result;
}

}  // namespace consjudge
