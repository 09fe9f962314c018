#include "consjudge/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "consjudge/dataset_io.hpp"
#include "consjudge/mock_llm.hpp"
#include "consjudge/text_util.hpp"

namespace consjudge {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::string_view kMockBaseUrl = "http://mock.local/v1";

ModelEndpoint endpoint_from_json(const json& j, EndpointKind kind, std::string_view role) {
    if (!j.is_object()) throw Error(ErrorCode::kConfig, fmt::format("endpoint '{}' must be an object", role));
    ModelEndpoint e;
    e.base_url = j.value("base_url", "");
    e.model_id = j.value("model", "");
    e.api_key_env = j.value("api_key_env", "");
    e.kind = kind;
    return e;
}

template <typename T>
void read_if(const json& j, const char* key, T& slot) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) slot = it->get<T>();
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw Error(ErrorCode::kConfig, fmt::format("unknown key '{}' in {}", key, where));
        }
    }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    if (j.is_null()) return c;
    if (!j.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
    try {
        reject_unknown(j,
                       {"endpoints", "sampling", "rag", "judge", "paths", "seed", "parallelism", "retries",
                        "max_skip_rate", "mock"},
                       "config");
        if (auto e = j.find("endpoints"); e != j.end()) {
            reject_unknown(*e, {"judge", "embedder", "referee", "rag_generator", "generators"}, "endpoints");
            if (e->contains("judge")) c.judge = endpoint_from_json(e->at("judge"), EndpointKind::kChat, "judge");
            if (e->contains("embedder")) {
                c.embedder = endpoint_from_json(e->at("embedder"), EndpointKind::kEmbedding, "embedder");
            }
            if (e->contains("referee")) c.referee = endpoint_from_json(e->at("referee"), EndpointKind::kChat, "referee");
            if (e->contains("rag_generator")) {
                c.rag_generator = endpoint_from_json(e->at("rag_generator"), EndpointKind::kChat, "rag_generator");
            }
            if (e->contains("generators")) {
                for (const auto& g : e->at("generators")) {
                    c.generators.push_back(endpoint_from_json(g, EndpointKind::kChat, "generators"));
                }
            }
        }
        if (auto s = j.find("sampling"); s != j.end()) {
            reject_unknown(*s, {"temperatures", "picks_per_model", "max_tokens"}, "sampling");
            read_if(*s, "temperatures", c.sampling.temperatures);
            read_if(*s, "picks_per_model", c.sampling.picks_per_model);
            read_if(*s, "max_tokens", c.sampling.max_tokens);
        }
        if (auto r = j.find("rag"); r != j.end()) {
            reject_unknown(*r, {"temperature", "samples_per_mode", "max_tokens"}, "rag");
            read_if(*r, "temperature", c.rag.temperature);
            read_if(*r, "samples_per_mode", c.rag.samples_per_mode);
            read_if(*r, "max_tokens", c.rag.max_tokens);
        }
        if (auto g = j.find("judge"); g != j.end()) {
            reject_unknown(*g, {"aspects", "repair_retries", "temperature", "max_tokens", "shuffle", "embed", "include_self"},
                           "judge");
            if (g->contains("aspects")) {
                c.judge_options.aspects.clear();
                for (const auto& a : g->at("aspects")) {
                    c.judge_options.aspects.push_back(HybridAspect::from_name(a.get<std::string>()));
                }
            }
            read_if(*g, "repair_retries", c.judge_options.repair_retries);
            read_if(*g, "temperature", c.judge_options.temperature);
            read_if(*g, "max_tokens", c.judge_options.max_tokens);
            read_if(*g, "shuffle", c.judge_options.shuffle);
            read_if(*g, "include_self", c.include_self);
            if (g->contains("embed")) {
                const auto mode = g->at("embed").get<std::string>();
                if (mode != "full" && mode != "answer-only") {
                    throw Error(ErrorCode::kConfig, "judge.embed must be \"full\" or \"answer-only\"");
                }
                c.embed_answer_only = mode == "answer-only";
            }
        }
        if (auto p = j.find("paths"); p != j.end()) {
            reject_unknown(*p, {"tasks", "retrieval", "candidates", "output", "log", "stats", "cache_dir", "templates"},
                           "paths");
            read_if(*p, "tasks", c.paths.tasks);
            read_if(*p, "retrieval", c.paths.retrieval);
            read_if(*p, "candidates", c.paths.candidates);
            read_if(*p, "output", c.paths.output);
            read_if(*p, "log", c.paths.log);
            read_if(*p, "stats", c.paths.stats);
            read_if(*p, "cache_dir", c.paths.cache_dir);
            read_if(*p, "templates", c.paths.templates);
        }
        read_if(j, "seed", c.seed);
        read_if(j, "parallelism", c.parallelism);
        read_if(j, "retries", c.retries);
        read_if(j, "max_skip_rate", c.max_skip_rate);
        if (j.contains("mock")) c.mock_behavior = j.at("mock");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kConfig, fmt::format("invalid config: {}", e.what()));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::kConfig) throw;
        throw Error(ErrorCode::kConfig, fmt::format("invalid config: {}", e.what()));
    }
    return c;
}

namespace {

struct Flags {
    std::string config;
    std::optional<std::string> cache_dir, tasks, retrieval, candidates, output, log, stats, templates;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> parallelism;
    std::optional<double> max_skip_rate;
    std::optional<std::string> against_metric;
    bool no_cache = false;
    bool dry_run = false;
    bool mock = false;
    bool random_pairs = false;
    bool log_vectors = false;
    bool overwrite = false;
    bool shuffle = false;
    bool answer_only = false;
    bool verbose = false;
    std::vector<std::string> judge_logs;
    std::vector<std::string> inputs;
    std::string selections_a;
    std::string selections_b;
};

void apply_flags(RunConfig& c, const Flags& f) {
    auto set = [](std::string& slot, const std::optional<std::string>& v) {
        if (v) slot = *v;
    };
    set(c.paths.cache_dir, f.cache_dir);
    set(c.paths.tasks, f.tasks);
    set(c.paths.retrieval, f.retrieval);
    set(c.paths.candidates, f.candidates);
    set(c.paths.output, f.output);
    set(c.paths.log, f.log);
    set(c.paths.stats, f.stats);
    set(c.paths.templates, f.templates);
    if (f.seed) c.seed = *f.seed;
    if (f.parallelism) c.parallelism = *f.parallelism;
    if (f.max_skip_rate) c.max_skip_rate = *f.max_skip_rate;
    c.no_cache |= f.no_cache;
    c.dry_run |= f.dry_run;
    c.mock |= f.mock;
    c.random_pairs |= f.random_pairs;
    c.log_vectors |= f.log_vectors;
    c.overwrite |= f.overwrite;
    c.judge_options.shuffle |= f.shuffle;
    c.embed_answer_only |= f.answer_only;
    c.sampling.rng_seed = c.seed;
}

void require_path(const std::string& p, std::string_view what) {
    if (p.empty()) throw Error(ErrorCode::kConfig, fmt::format("no {} path given", what));
}

void require_input(const std::string& p, std::string_view what) {
    require_path(p, what);
    if (!fs::exists(p)) throw Error(ErrorCode::kConfig, fmt::format("{} file {} does not exist", what, p));
}

ModelEndpoint mock_endpoint(std::string model, EndpointKind kind) {
    return ModelEndpoint{std::string(kMockBaseUrl), std::move(model), "", kind};
}

// Fills endpoints the mock needs but the config left out.
void default_mock_endpoints(RunConfig& c) {
    if (!c.judge) c.judge = mock_endpoint("mock-judge", EndpointKind::kChat);
    if (!c.embedder) c.embedder = mock_endpoint("mock-embedder", EndpointKind::kEmbedding);
    if (!c.referee) c.referee = mock_endpoint("mock-referee", EndpointKind::kChat);
    if (!c.rag_generator) c.rag_generator = mock_endpoint("mock-rag-generator", EndpointKind::kChat);
    if (c.generators.empty()) {
        for (int i = 1; i <= 4; ++i) c.generators.push_back(mock_endpoint(fmt::format("mock-gen-{}", i), EndpointKind::kChat));
    }
}

const ModelEndpoint& need(const std::optional<ModelEndpoint>& e, std::string_view role) {
    if (!e) throw Error(ErrorCode::kConfig, fmt::format("config has no '{}' endpoint", role));
    return *e;
}

void check_distinct(std::initializer_list<std::string> paths) {
    std::vector<fs::path> seen;
    for (const auto& p : paths) {
        if (p.empty()) continue;
        const auto norm = fs::weakly_canonical(fs::absolute(p));
        if (std::find(seen.begin(), seen.end(), norm) != seen.end()) {
            throw Error(ErrorCode::kConfig, fmt::format("path {} is used for two different files", p));
        }
        seen.push_back(norm);
    }
}

std::size_t count_lines(const std::string& path) {
    std::size_t n = 0;
    if (path.empty() || !fs::exists(path)) return 0;
    for_each_jsonl(path, [&](const JsonlLine&) { ++n; });
    return n;
}

struct Runtime {
    std::shared_ptr<MockLlm> mock;
    std::unique_ptr<ModelGateway> gateway;
    PromptFactory prompts;
};

Runtime make_runtime(const RunConfig& c, const std::vector<const ModelEndpoint*>& endpoints) {
    for (const auto* e : endpoints) validate_endpoint(*e);
    GatewayOptions opts;
    if (!c.paths.cache_dir.empty()) opts.cache_dir = fs::path(c.paths.cache_dir);
    opts.read_cache = !c.no_cache;
    opts.permits = static_cast<int>(std::max<std::size_t>(c.parallelism, 1));
    opts.max_attempts = c.retries;
    Runtime rt{nullptr, nullptr,
               PromptFactory(c.paths.templates.empty() ? PromptTemplates::defaults()
                                                       : PromptTemplates::load_dir(c.paths.templates))};
    std::shared_ptr<Transport> transport;
    if (c.mock) {
        rt.mock = std::make_shared<MockLlm>(MockBehavior::from_json(c.mock_behavior));
        transport = rt.mock;
    } else {
        transport = std::make_shared<HttpTransport>();
    }
    rt.gateway = std::make_unique<ModelGateway>(transport, opts);
    if (!c.mock) {
        // Fail before any network traffic when a key is missing.
        for (const auto* e : endpoints) rt.gateway->check_credentials(*e);
    }
    return rt;
}

// Opens output/log for appending (resume) or truncation (--overwrite) and
// collects ids already done.
struct OutputFiles {
    JsonlWriter output;
    JsonlWriter log;
    std::set<std::string> done;
};

std::unique_ptr<OutputFiles> open_outputs(const RunConfig& c) {
    auto f = std::make_unique<OutputFiles>();
    if (!c.overwrite) {
        f->done = existing_query_ids(c.paths.output);
        for (auto& id : existing_query_ids(c.paths.log)) f->done.insert(id);
    }
    f->output = JsonlWriter(c.paths.output, !c.overwrite);
    f->log = JsonlWriter(c.paths.log, !c.overwrite);
    return f;
}

std::string default_path(const std::string& set, const std::string& output, std::string_view suffix) {
    if (!set.empty()) return set;
    return output + std::string(suffix);
}

json endpoint_json(const ModelEndpoint& e) {
    return {{"base_url", e.base_url}, {"model", e.model_id}, {"api_key_env", e.api_key_env},
            {"kind", e.kind == EndpointKind::kChat ? "chat" : "embedding"}};
}

int finish(const RunConfig& c, RunStatistics stats, const Runtime& rt, std::ostream& out, std::ostream& err) {
    const auto g = rt.gateway->stats();
    stats.requests = g.requests;
    stats.cache_hit_rate = g.hit_rate();
    write_json_file(c.paths.stats, stats.to_json());
    out << stats.to_json().dump(2) << '\n';
    if (!stats.self_check()) {
        err << "statistics self-check failed\n";
        return kExitFatal;
    }
    if (stats.skip_rate() > c.max_skip_rate) {
        err << fmt::format("skip rate {:.3f} exceeds the threshold {:.3f}\n", stats.skip_rate(), c.max_skip_rate);
        return kExitSkipRate;
    }
    return kExitOk;
}

void print_plan(std::ostream& out, const std::string& command, json plan) {
    plan["command"] = command;
    plan["network_calls"] = 0;
    out << plan.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

int cmd_sample_judge_data(RunConfig& c, std::ostream& out, std::ostream& err) {
    require_input(c.paths.tasks, "tasks");
    require_path(c.paths.output, "output");
    c.paths.log = default_path(c.paths.log, c.paths.output, ".log.jsonl");
    c.paths.stats = default_path(c.paths.stats, c.paths.output, ".stats.json");
    check_distinct({c.paths.tasks, c.paths.output, c.paths.log, c.paths.stats});
    c.sampling.generators = c.generators;
    c.sampling.validate();
    std::vector<const ModelEndpoint*> eps;
    for (const auto& g : c.generators) eps.push_back(&g);

    if (c.dry_run) {
        const auto n = count_lines(c.paths.tasks);
        json gens = json::array();
        for (const auto& g : c.generators) gens.push_back(endpoint_json(g));
        print_plan(out, "sample-judge-data",
                   {{"tasks", n},
                    {"generators", gens},
                    {"temperatures", c.sampling.temperatures},
                    {"picks_per_model", c.sampling.picks_per_model},
                    {"estimated_requests", n * c.generators.size() * c.sampling.temperatures.size()}});
        return kExitOk;
    }
    auto rt = make_runtime(c, eps);
    const auto tasks = read_tasks(c.paths.tasks);
    auto files = open_outputs(c);
    PipelineSinks sinks{[&](const ojson& j) { files->output.write(j); }, {}};
    auto stats = sample_judge_data(*rt.gateway, rt.prompts, tasks, c.sampling, c.parallelism, sinks, files->done);
    return finish(c, std::move(stats), rt, out, err);
}

int cmd_judge_pipeline(RunConfig& c, std::ostream& out, std::ostream& err) {
    require_input(c.paths.candidates, "candidates");
    require_path(c.paths.output, "output");
    c.paths.log = default_path(c.paths.log, c.paths.output, ".log.jsonl");
    c.paths.stats = default_path(c.paths.stats, c.paths.output, ".stats.json");
    check_distinct({c.paths.candidates, c.paths.output, c.paths.log, c.paths.stats});
    const auto& judge = need(c.judge, "judge");
    const auto& embedder = need(c.embedder, "embedder");

    if (c.dry_run) {
        const auto n = count_lines(c.paths.candidates);
        const auto k = c.judge_options.aspects.size();
        print_plan(out, "judge-pipeline",
                   {{"tasks", n},
                    {"judge", endpoint_json(judge)},
                    {"embedder", endpoint_json(embedder)},
                    {"aspects", k},
                    {"selection", c.random_pairs ? "random" : "consistency"},
                    {"estimated_requests", n * k * 2},
                    {"max_requests", n * k * (2 + static_cast<std::size_t>(c.judge_options.repair_retries))}});
        return kExitOk;
    }
    auto rt = make_runtime(c, {&judge, &embedder});
    const auto tasks = read_judge_tasks(c.paths.candidates);
    auto files = open_outputs(c);
    JudgePipelineConfig pc;
    pc.judge = judge;
    pc.embedder = embedder;
    pc.judge_options = c.judge_options;
    pc.seed = c.seed;
    pc.parallelism = c.parallelism;
    pc.random_pairs = c.random_pairs;
    pc.embed_answer_only = c.embed_answer_only;
    pc.include_self = c.include_self;
    pc.log_vectors = c.log_vectors;
    PipelineSinks sinks{[&](const ojson& j) { files->output.write(j); }, [&](const ojson& j) { files->log.write(j); }};
    auto stats = judge_consistency_pipeline(*rt.gateway, rt.prompts, tasks, pc, sinks, files->done);
    return finish(c, std::move(stats), rt, out, err);
}

int cmd_rag_sample(RunConfig& c, std::ostream& out, std::ostream& err) {
    require_input(c.paths.tasks, "tasks");
    require_input(c.paths.retrieval, "retrieval");
    require_path(c.paths.output, "output");
    c.paths.log = default_path(c.paths.log, c.paths.output, ".log.jsonl");
    c.paths.stats = default_path(c.paths.stats, c.paths.output, ".stats.json");
    check_distinct({c.paths.tasks, c.paths.retrieval, c.paths.output, c.paths.log, c.paths.stats});
    const auto& gen = need(c.rag_generator, "rag_generator");
    if (c.dry_run) {
        const auto n = count_lines(c.paths.tasks);
        print_plan(out, "rag-sample",
                   {{"tasks", n},
                    {"generator", endpoint_json(gen)},
                    {"temperature", c.rag.temperature},
                    {"samples_per_mode", c.rag.samples_per_mode},
                    {"estimated_requests", n * 2 * static_cast<std::size_t>(c.rag.samples_per_mode)}});
        return kExitOk;
    }
    auto rt = make_runtime(c, {&gen});
    const auto tasks = read_tasks(c.paths.tasks);
    const auto retrieval = read_retrieval(c.paths.retrieval);
    auto files = open_outputs(c);
    PipelineSinks sinks{[&](const ojson& j) { files->output.write(j); }, {}};
    auto stats = rag_sample(*rt.gateway, rt.prompts, tasks, retrieval, gen, c.rag, c.parallelism, sinks, files->done);
    return finish(c, std::move(stats), rt, out, err);
}

int cmd_rag_pipeline(RunConfig& c, std::ostream& out, std::ostream& err) {
    require_input(c.paths.candidates, "candidates");
    require_input(c.paths.retrieval, "retrieval");
    require_path(c.paths.output, "output");
    c.paths.log = default_path(c.paths.log, c.paths.output, ".selections.jsonl");
    c.paths.stats = default_path(c.paths.stats, c.paths.output, ".stats.json");
    check_distinct({c.paths.candidates, c.paths.retrieval, c.paths.output, c.paths.log, c.paths.stats});
    const auto& judge = need(c.judge, "judge");
    if (c.dry_run) {
        const auto n = count_lines(c.paths.candidates);
        print_plan(out, "rag-pipeline",
                   {{"tasks", n},
                    {"judge", endpoint_json(judge)},
                    {"estimated_requests", n},
                    {"max_requests", n * (1 + static_cast<std::size_t>(c.judge_options.repair_retries))}});
        return kExitOk;
    }
    auto rt = make_runtime(c, {&judge});
    const auto tasks = read_judge_tasks(c.paths.candidates);
    const auto retrieval = read_retrieval(c.paths.retrieval);
    auto files = open_outputs(c);
    RagPipelineConfig pc;
    pc.judge = judge;
    pc.judge_options = c.judge_options;
    pc.seed = c.seed;
    pc.parallelism = c.parallelism;
    PipelineSinks sinks{[&](const ojson& j) { files->output.write(j); }, [&](const ojson& j) { files->log.write(j); }};
    auto stats = rag_reward_pipeline(*rt.gateway, rt.prompts, tasks, retrieval, pc, sinks, files->done);
    return finish(c, std::move(stats), rt, out, err);
}

std::pair<std::string, std::string> named_path(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) return {fs::path(spec).stem().string(), spec};
    return {spec.substr(0, eq), spec.substr(eq + 1)};
}

SelectionVector to_selection_vector(const std::string& name, const std::vector<SelectionRecord>& recs) {
    SelectionVector v;
    v.judge_id = name;
    for (const auto& r : recs) v.selections.push_back({r.query_id, r.best, r.degenerate});
    return v;
}

int cmd_analyze(RunConfig& c, const Flags& f, std::ostream& out) {
    if (f.judge_logs.empty()) throw Error(ErrorCode::kConfig, "analyze needs at least one --judge-log");
    std::optional<MetricKind> metric;
    if (f.against_metric) metric = metric_kind_from_string(*f.against_metric);
    if (metric) require_input(c.paths.candidates, "candidates");
    if (!metric && f.judge_logs.size() < 2) {
        throw Error(ErrorCode::kConfig, "analyze needs two judge logs, or one plus --against-metric");
    }
    if (c.dry_run) {
        print_plan(out, "analyze", {{"judge_logs", f.judge_logs}, {"against_metric", f.against_metric.value_or("")}});
        return kExitOk;
    }

    std::vector<SelectionVector> vectors;
    json histograms = json::object();
    std::string tables;
    for (const auto& spec : f.judge_logs) {
        const auto [name, path] = named_path(spec);
        require_input(path, "judge log");
        vectors.push_back(to_selection_vector(name, read_selections(path, name)));

        std::vector<double> scores;
        for_each_jsonl(path, [&](const JsonlLine& line) {
            if (auto it = line.value.find("scores"); it != line.value.end()) {
                for (const auto& s : *it) scores.push_back(s.at("score").get<double>());
            }
        });
        if (!scores.empty()) {
            const auto h = consistency_histogram(scores, HistogramSpec::uniform(-1.0, 1.0, 20));
            histograms[name] = json::parse(to_json(h).dump());
            tables += render_histogram_table(fmt::format("consistency scores: {}", name), h) + "\n";
        }
    }
    if (metric) {
        SelectionVector v;
        v.judge_id = fmt::format("raw-metric:{}", to_string(*metric));
        for (const auto& task : read_judge_tasks(c.paths.candidates)) {
            const auto mj = metric_judge(task, *metric);
            v.selections.push_back({task.query.id, mj.best, mj.degenerate});
        }
        vectors.push_back(std::move(v));
    }

    const auto aligned = align_selections(vectors);
    const auto matrix = agreement_matrix(aligned);
    std::vector<std::string> labels;
    for (const auto& v : aligned) labels.push_back(v.judge_id);
    for (std::size_t i = 0; i < matrix.size(); ++i)
        for (std::size_t j = i + 1; j < matrix.size(); ++j)
            if (std::isnan(matrix[i][j]))
                spdlog::warn("judges '{}' and '{}' have no comparable queries", labels[i], labels[j]);

    json report;
    report["v"] = kSchemaVersion;
    report["queries"] = aligned.front().selections.size();
    report["agreement"] = json::parse(matrix_to_json(labels, matrix).dump());
    report["histograms"] = histograms;
    if (!c.paths.output.empty()) write_json_file(c.paths.output, ojson::parse(report.dump()));
    out << "agreement over " << aligned.front().selections.size() << " queries\n"
        << render_matrix_table(labels, matrix) << '\n'
        << tables;
    return kExitOk;
}

int cmd_compare(RunConfig& c, const Flags& f, std::ostream& out) {
    require_input(c.paths.candidates, "candidates");
    require_input(f.selections_a, "selections A");
    require_input(f.selections_b, "selections B");
    const auto& referee = need(c.referee, "referee");
    if (c.dry_run) {
        print_plan(out, "compare-judges",
                   {{"referee", endpoint_json(referee)}, {"max_requests", count_lines(c.paths.candidates)}});
        return kExitOk;
    }
    auto rt = make_runtime(c, {&referee});
    const auto tasks = read_judge_tasks(c.paths.candidates);
    const auto a = read_selections(f.selections_a, "a");
    const auto b = read_selections(f.selections_b, "b");
    const auto result = reference_judge_compare(*rt.gateway, rt.prompts, tasks, a, b, referee, c.judge_options,
                                                c.parallelism);
    auto j = result.to_json();
    j["selections_a"] = f.selections_a;
    j["selections_b"] = f.selections_b;
    if (!c.paths.output.empty()) write_json_file(c.paths.output, j);
    out << j.dump(2) << '\n';
    return kExitOk;
}

int cmd_emit_report(RunConfig& c, const Flags& f, std::ostream& out) {
    if (f.inputs.empty()) throw Error(ErrorCode::kConfig, "emit-report needs at least one --input");
    std::string md = "# Run report\n";
    for (const auto& path : f.inputs) {
        require_input(path, "report input");
        const auto j = read_json_file(path);
        md += fmt::format("\n## {}\n\n", fs::path(path).filename().string());
        if (j.contains("pipeline")) {
            md += fmt::format("- pipeline: {}\n- input: {}\n- emitted: {}\n- skipped: {}\n",
                              j.at("pipeline").get<std::string>(), j.value("input", 0), j.value("emitted", 0),
                              j.value("skipped", 0));
            const auto reasons = j.value("skip_reasons", ojson::object());
            for (const auto& [reason, n] : reasons.items()) {
                md += fmt::format("  - {}: {}\n", reason, n.dump());
            }
            md += fmt::format("- self-check: {}\n- requests: {}\n- cache hit rate: {:.3f}\n- wall time: {:.2f} s\n",
                              j.value("self_check", false) ? "ok" : "FAILED", j.value("requests", 0),
                              j.value("cache_hit_rate", 0.0), j.value("wall_time_s", 0.0));
        } else if (j.contains("agreement")) {
            const auto labels = j.at("agreement").at("judges").get<std::vector<std::string>>();
            const auto matrix = j.at("agreement").at("matrix").get<Matrix>();
            md += fmt::format("Agreement over {} queries:\n\n```\n{}```\n", j.value("queries", 0),
                              render_matrix_table(labels, matrix));
        } else if (j.contains("win_rate_a")) {
            md += fmt::format("- compared: {} (short-circuited {}, excluded {})\n- A wins: {:.3f}\n- B wins: {:.3f}\n"
                              "- ties: {:.3f}\n",
                              j.value("compared", 0), j.value("short_circuited", 0), j.value("excluded", 0),
                              j.value("win_rate_a", 0.0), j.value("win_rate_b", 0.0), j.value("tie_rate", 0.0));
        } else {
            md += "```json\n" + j.dump(2) + "\n```\n";
        }
    }
    if (!c.paths.output.empty()) {
        std::ofstream o(c.paths.output, std::ios::binary | std::ios::trunc);
        if (!o) throw Error(ErrorCode::kIo, fmt::format("cannot write {}", c.paths.output));
        o << md;
    } else {
        out << md;
    }
    return kExitOk;
}

void setup_logging(std::ostream& err, bool verbose) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    sink->set_pattern("[%l] %v");
    auto logger = std::make_shared<spdlog::logger>("consjudge", sink);
    logger->set_level(verbose ? spdlog::level::debug : spdlog::level::warn);
    spdlog::set_default_logger(logger);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Judge-consistency data pipelines for LLM judges and RAG generators."};
    app.name(args.empty() ? "consjudge" : args.front());
    app.require_subcommand(1);
    Flags f;

    app.add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--cache-dir", f.cache_dir, "Response cache directory");
    app.add_flag("--no-cache", f.no_cache, "Skip cache reads (responses are still stored)");
    app.add_option("--seed", f.seed, "Run seed");
    app.add_option("--parallelism", f.parallelism, "Concurrent tasks and in-flight requests")
        ->check(CLI::PositiveNumber);
    app.add_flag("--dry-run", f.dry_run, "Print the resolved plan without network calls");
    app.add_flag("--mock", f.mock, "Route every endpoint to the built-in mock");
    app.add_option("--max-skip-rate", f.max_skip_rate, "Exit 3 when the skip rate exceeds this")
        ->check(CLI::Range(0.0, 1.0));
    app.add_option("--tasks", f.tasks, "Tasks JSONL");
    app.add_option("--retrieval", f.retrieval, "Retrieval JSONL");
    app.add_option("--candidates", f.candidates, "Candidate sets JSONL");
    app.add_option("-o,--output", f.output, "Output file");
    app.add_option("--log", f.log, "Log / selections JSONL");
    app.add_option("--stats", f.stats, "Run statistics JSON");
    app.add_option("--templates", f.templates, "Prompt template directory");
    app.add_flag("--overwrite", f.overwrite, "Truncate outputs instead of resuming");
    app.add_flag("-v,--verbose", f.verbose, "Debug logging");

    auto* sample = app.add_subcommand("sample-judge-data", "Sample candidate responses from the generators");
    auto* judge = app.add_subcommand("judge-pipeline", "Build judge preference data from judgment consistency");
    judge->add_flag("--ablate-random-pairs", f.random_pairs, "Pick chosen/rejected judgments at random");
    judge->add_flag("--log-vectors", f.log_vectors, "Write embedding vectors into the judgment log");
    judge->add_flag("--shuffle", f.shuffle, "Shuffle candidate display order per task");
    judge->add_flag("--answer-only-embeddings", f.answer_only, "Embed only the best/worst answer line");
    auto* rag_sample_cmd = app.add_subcommand("rag-sample", "Sample RAG candidates with and without documents");
    auto* rag = app.add_subcommand("rag-pipeline", "Build generator preference data with the judge");
    rag->add_flag("--shuffle", f.shuffle, "Shuffle candidate display order per task");
    auto* analyze = app.add_subcommand("analyze", "Judge agreement matrix and consistency histograms");
    analyze->add_option("--judge-log", f.judge_logs, "name=path of a judgment log or selections file");
    analyze->add_option("--against-metric", f.against_metric, "Add a raw-metric judge: rouge_l, accuracy, string_em");
    auto* compare = app.add_subcommand("compare-judges", "Referee comparison of two judges' selections");
    compare->add_option("--selections-a", f.selections_a, "First judge log or selections file")->required();
    compare->add_option("--selections-b", f.selections_b, "Second judge log or selections file")->required();
    auto* report = app.add_subcommand("emit-report", "Markdown summary of statistics and analysis files");
    report->add_option("--input", f.inputs, "Statistics / analysis JSON files");
    for (auto* sub : {sample, judge, rag_sample_cmd, rag, analyze, compare, report}) sub->fallthrough();

    std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(rest.begin(), rest.end());  // CLI11 consumes a reversed vector
    try {
        app.parse(rest);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n';
        return kExitConfig;
    }
    // The sink refers to `err`; put the previous logger back before it goes away.
    struct RestoreLogger {
        std::shared_ptr<spdlog::logger> prev = spdlog::default_logger();
        ~RestoreLogger() { spdlog::set_default_logger(prev); }
    } restore_logger;
    setup_logging(err, f.verbose);

    try {
        RunConfig c;
        if (!f.config.empty()) {
            json j;
            try {
                std::ifstream in(f.config);
                j = json::parse(in);
            } catch (const json::exception& e) {
                throw Error(ErrorCode::kConfig, fmt::format("{}: {}", f.config, e.what()));
            }
            c = RunConfig::from_json(j);
        }
        apply_flags(c, f);
        if (c.mock) default_mock_endpoints(c);
        if (c.parallelism < 1) throw Error(ErrorCode::kConfig, "parallelism must be at least 1");
        if (c.retries < 1) throw Error(ErrorCode::kConfig, "retries must be at least 1");

        if (*sample) return cmd_sample_judge_data(c, out, err);
        if (*judge) return cmd_judge_pipeline(c, out, err);
        if (*rag_sample_cmd) return cmd_rag_sample(c, out, err);
        if (*rag) return cmd_rag_pipeline(c, out, err);
        if (*analyze) return cmd_analyze(c, f, out);
        if (*compare) return cmd_compare(c, f, out);
        if (*report) return cmd_emit_report(c, f, out);
        return kExitConfig;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.code() == ErrorCode::kConfig || e.code() == ErrorCode::kTemplate ? kExitConfig : kExitFatal;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFatal;
    }
}

}  // namespace consjudge
