// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "consjudge/cli.hpp"
#include "consjudge/consistency.hpp"
#include "consjudge/dataset_io.hpp"
#include "consjudge/judgment_parser.hpp"
#include "consjudge/metrics.hpp"
#include "consjudge/mock_llm.hpp"
#include "consjudge/orchestrator.hpp"

using namespace consjudge;
namespace fs = std::filesystem;

namespace {

int failures = 0;
std::vector<RunStatistics> all_runs;  // every pipeline run, for the conservation check

void report(bool ok, const std::string& name, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
    if (!ok) ++failures;
}

template <typename Fn>
void criterion(const std::string& name, Fn&& fn) {
    try {
        std::string detail;
        const bool ok = fn(detail);
        report(ok, name, detail);
    } catch (const std::exception& e) {
        report(false, name, std::string("exception: ") + e.what());
    }
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << s;
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

int cli(std::vector<std::string> args, std::string* err_text = nullptr) {
    args.insert(args.begin(), "consjudge");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    if (err_text) *err_text = err.str();
    if (code != 0) std::cerr << err.str();
    return code;
}

void record_stats_file(const fs::path& p, const std::string& label) {
    const auto j = read_json_file(p);
    RunStatistics s;
    s.pipeline = label;
    s.input = j.at("input").get<std::size_t>();
    s.emitted = j.at("emitted").get<std::size_t>();
    for (const auto& [k, v] : j.at("skip_reasons").items()) s.skip_reasons[k] = v.get<std::size_t>();
    all_runs.push_back(s);
}

// Naive oracle: mean cosine over all j, straight from the definition.
std::vector<double> oracle_scores(const std::vector<std::vector<double>>& e) {
    std::vector<double> out;
    for (std::size_t i = 0; i < e.size(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < e.size(); ++j) {
            double dot = 0.0, a = 0.0, b = 0.0;
            for (std::size_t d = 0; d < e[i].size(); ++d) {
                dot += e[i][d] * e[j][d];
                a += e[i][d] * e[i][d];
                b += e[j][d] * e[j][d];
            }
            sum += dot / (std::sqrt(a) * std::sqrt(b));
        }
        out.push_back(sum / static_cast<double>(e.size()));
    }
    return out;
}

JudgmentSet dummy_set(std::size_t k) {
    JudgmentSet s;
    const auto aspects = enumerate_hybrid_aspects();
    s.k_configured = k;
    for (std::size_t i = 0; i < k; ++i) {
        Judgment j;
        j.aspect = aspects[i % aspects.size()];
        j.best = 0;
        j.worst = 1;
        j.raw = "r" + std::to_string(i);
        s.judgments.push_back(j);
    }
    return s;
}

// --- criteria -------------------------------------------------------------

bool rouge_golden(std::string& detail) {
    const std::string gt = "Bacillus anthracis";
    const std::vector<std::string> choices{
        "The virulence factors of anthrax are a group of proteins produced by the Bacillus anthracis bacterium "
        "that contribute to its ability to cause disease in humans and animals.",
        "anthracis.",
        "lethal factor, edema factor and antiphagocytic factor.",
        "lethal factor,antiphagocytic factor and other factors.",
    };
    const double golden = rouge_l("anthracis", gt);
    std::vector<double> s;
    for (const auto& c : choices) s.push_back(rouge_l(c, gt));
    const bool ranking = s[1] > s[0] && s[0] > s[2] && s[2] == s[3];
    detail = fmt::format("rouge_l(anthracis)={:.4f} (want 0.667±0.001); A={:.4f} B={:.4f} C={:.4f} D={:.4f}; "
                         "ranking B>A>C=D {}; A in [0.12,0.17] {}",
                         golden, s[0], s[1], s[2], s[3], ranking ? "yes" : "no",
                         (s[0] >= 0.12 && s[0] <= 0.17) ? "yes" : "no");
    return std::abs(golden - 0.667) <= 0.001 && std::abs(s[1] - 0.667) <= 0.001 && ranking && s[0] >= 0.12 &&
           s[0] <= 0.17;
}

bool accuracy_golden(std::string& detail) {
    const std::vector<std::string> choices{
        "According to the information of question, 55% of 40 is 22, which is 2 greater than 4/5 of 25, which "
        "equals 20.",
        "(C), 55% of 40 is greater than 4/5 of 25 by 1.",
        "(C).555% of 44 is smaller than 4/5 of 25 (which is 20) by 2.",
        "55% of 40 is smaller than 4/5 of 25.",
    };
    const std::vector<std::string> gold{"(C)"};
    std::vector<int> v;
    for (const auto& c : choices) v.push_back(accuracy_contains(c, gold));
    detail = fmt::format("(A,B,C,D) = ({},{},{},{}), want (0,1,1,0)", v[0], v[1], v[2], v[3]);
    return v == std::vector<int>{0, 1, 1, 0};
}

bool oracle_equivalence(std::string& detail) {
    std::mt19937_64 rng(20240611);
    std::normal_distribution<double> n(0.0, 1.0);
    double max_err = 0.0;
    std::size_t invariant = 0;
    const std::size_t instances = 1000;
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t k = 2 + rng() % 7;
        const std::size_t dim = 2 + rng() % 63;
        std::vector<std::vector<double>> e(k, std::vector<double>(dim));
        for (auto& v : e)
            for (auto& x : v) x = n(rng);
        std::vector<EmbeddingVector> wrapped;
        for (const auto& v : e) wrapped.push_back({v});
        const auto got = consistency_scores(wrapped);
        const auto want = oracle_scores(e);
        for (std::size_t i = 0; i < k; ++i) max_err = std::max(max_err, std::abs(got[i] - want[i]));
        const auto no_self = consistency_scores(wrapped, false);
        const auto set = dummy_set(k);
        const auto a = select_pair(set, got);
        const auto b = select_pair(set, no_self);
        if (a.chosen_index == b.chosen_index && a.rejected_index == b.rejected_index && a.skipped == b.skipped) {
            ++invariant;
        }
    }
    detail = fmt::format("{} instances, max |lib - oracle| = {:.3g} (tol 1e-9); selection invariant to self-term "
                         "on {}/{}",
                         instances, max_err, invariant, instances);
    return max_err <= 1e-9 && invariant == instances;
}

bool parser_totality(std::string& detail) {
    std::mt19937_64 rng(77);
    const auto aspect = HybridAspect::all_dimensions();
    const std::vector<std::string> pieces{"COT:", "cot", "{", "}", "Best answer:", "Worst answer :", "best",
                                          "worst", "answer", ":", ".", "A", "B", "c", "Z", "7", " ", "\n",
                                          "**", "(", ")", "[", "]", "choice ", "option", "\xE2\x80\x94", "\xFF"};
    std::size_t judgments = 0, failures_seen = 0, aborts = 0;
    for (int i = 0; i < 10000; ++i) {
        std::string s;
        const int mode = i % 3;
        if (mode == 0) {
            const auto len = rng() % 80;
            for (std::size_t j = 0; j < len; ++j) s += static_cast<char>(rng() % 256);
        } else if (mode == 1) {
            const auto len = rng() % 14;
            for (std::size_t j = 0; j < len; ++j) s += pieces[rng() % pieces.size()];
        } else {
            s = format_judgment("reason " + std::to_string(i), rng() % 4, 0, 4);
            const auto edits = 1 + rng() % 4;
            for (std::size_t j = 0; j < edits && !s.empty(); ++j) {
                const auto pos = rng() % s.size();
                switch (rng() % 3) {
                    case 0: s.erase(pos, 1 + rng() % 3); break;
                    case 1: s.insert(pos, pieces[rng() % pieces.size()]); break;
                    default: s[pos] = static_cast<char>(rng() % 256); break;
                }
            }
        }
        const std::size_t m = 2 + rng() % 5;
        try {
            const auto r = parse_judgment(s, m, aspect);
            if (std::holds_alternative<Judgment>(r)) {
                const auto& j = std::get<Judgment>(r);
                if (j.best >= m || j.worst >= m || j.best == j.worst) ++aborts;  // invalid success counts as a failure
                ++judgments;
            } else {
                ++failures_seen;
            }
        } catch (...) {
            ++aborts;
        }
    }

    const std::vector<std::string> words{"alpha", "beta", "gamma", "concise", "wrong", "42", "cites", "the", "source"};
    std::size_t round_trips = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t m = 2 + rng() % 5;
        const std::size_t best = rng() % m;
        std::size_t worst = rng() % (m - 1);
        if (worst >= best) ++worst;
        std::string cot;
        for (std::size_t w = 0, n = 1 + rng() % 12; w < n; ++w) cot += (w ? " " : "") + words[rng() % words.size()];
        const auto text = format_judgment(cot, best, worst, m);
        const auto r = parse_judgment(text, m, aspect);
        if (const auto* j = std::get_if<Judgment>(&r); j && j->best == best && j->worst == worst && j->cot == cot) {
            ++round_trips;
        }
    }
    detail = fmt::format("10000 fuzzed inputs: {} judgments, {} parse failures, {} aborts; round-trip {}/1000",
                         judgments, failures_seen, aborts, round_trips);
    return aborts == 0 && judgments + failures_seen == 10000 && round_trips == 1000;
}

// Writes 50 tasks and retrieval records.
void write_inputs(const fs::path& dir) {
    std::string tasks, retrieval;
    for (int i = 0; i < 50; ++i) {
        nlohmann::ordered_json t;
        t["id"] = fmt::format("task-{:02d}", i);
        t["question"] = fmt::format("Which river flows through city number {}?", i);
        t["answers"] = {fmt::format("River {}", i)};
        tasks += t.dump() + "\n";
        nlohmann::ordered_json r;
        r["query_id"] = t["id"];
        r["docs"] = {fmt::format("City number {} lies on River {}, a long river.", i, i),
                     fmt::format("Travel notes for city {}.", i)};
        retrieval += r.dump() + "\n";
    }
    spit(dir / "tasks.jsonl", tasks);
    spit(dir / "retrieval.jsonl", retrieval);
}

// Leaves output/log as a kill during the write of output line `cut` would:
// output ends in half of that line, the log stops before that task.
void simulate_kill(const fs::path& output, const fs::path& log, std::size_t cut) {
    const auto out_lines = lines_of(slurp(output));
    const auto log_lines = lines_of(slurp(log));
    const auto victim = nlohmann::json::parse(out_lines.at(cut)).at("query_id").get<std::string>();
    std::string out;
    for (std::size_t i = 0; i < cut; ++i) out += out_lines[i] + "\n";
    out += out_lines[cut].substr(0, out_lines[cut].size() / 2);
    spit(output, out);
    std::string lg;
    for (const auto& l : log_lines) {
        if (nlohmann::json::parse(l).at("query_id").get<std::string>() == victim) break;
        lg += l + "\n";
    }
    spit(log, lg);
}

bool end_to_end_determinism(std::string& detail) {
    const auto start = std::chrono::steady_clock::now();
    const auto dir = fs::temp_directory_path() / fmt::format("consjudge-acceptance-{}", std::random_device{}());
    fs::create_directories(dir);
    write_inputs(dir);
    const auto p = [&](const std::string& name) { return (dir / name).string(); };
    const std::vector<std::string> common{"--mock", "--seed", "17", "--parallelism", "6"};
    auto with = [&](std::vector<std::string> extra) {
        auto args = common;
        args.insert(args.end(), extra.begin(), extra.end());
        return args;
    };

    bool ok = true;
    ok &= cli(with({"--tasks", p("tasks.jsonl"), "-o", p("cands.jsonl"), "sample-judge-data"})) == 0;
    ok &= cli(with({"--tasks", p("tasks.jsonl"), "--retrieval", p("retrieval.jsonl"), "-o", p("rag_cands.jsonl"),
                    "rag-sample"})) == 0;
    if (!ok) {
        detail = "sampling stage failed";
        return false;
    }
    record_stats_file(p("cands.jsonl.stats.json"), "sample-judge-data");
    record_stats_file(p("rag_cands.jsonl.stats.json"), "rag-sample");

    std::vector<std::string> notes;
    const auto run_pair = [&](const std::string& name, std::vector<std::string> base, const std::string& log_suffix) {
        // Two clean runs with separate caches, then a killed-and-resumed third run.
        std::string outs[3];
        std::string logs[3];
        for (int r = 0; r < 3; ++r) {
            const auto out = p(fmt::format("{}_{}.jsonl", name, r));
            auto args = with({"--cache-dir", p(fmt::format("cache_{}_{}", name, r)), "-o", out});
            args.insert(args.end(), base.begin(), base.end());
            if (cli(args) != 0) {
                notes.push_back(name + " run failed");
                return false;
            }
            record_stats_file(out + ".stats.json", name);
            if (r == 2) {
                const auto n = lines_of(slurp(out)).size();
                if (n < 2) {
                    notes.push_back(name + " produced too few rows to cut");
                    return false;
                }
                simulate_kill(out, out + log_suffix, n / 2);
                if (cli(args) != 0) {
                    notes.push_back(name + " resume failed");
                    return false;
                }
                record_stats_file(out + ".stats.json", name + " (resumed)");
            }
            outs[r] = slurp(out);
            logs[r] = slurp(out + log_suffix);
        }
        const bool same = outs[0] == outs[1] && logs[0] == logs[1];
        const bool resumed = outs[2] == outs[0] && logs[2] == logs[0];
        notes.push_back(fmt::format("{}: {} rows, rerun identical {}, resume identical {}", name,
                                    lines_of(outs[0]).size(), same ? "yes" : "no", resumed ? "yes" : "no"));
        return same && resumed && !outs[0].empty();
    };
    ok &= run_pair("judge", {"--candidates", p("cands.jsonl"), "judge-pipeline", "--shuffle"}, ".log.jsonl");
    ok &= run_pair("rag",
                   {"--candidates", p("rag_cands.jsonl"), "--retrieval", p("retrieval.jsonl"), "rag-pipeline",
                    "--shuffle"},
                   ".selections.jsonl");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::error_code ec;
    fs::remove_all(dir, ec);
    detail = fmt::format("50 mock tasks; {}; {}; {:.2f} s (limit 30 s)", notes.size() > 0 ? notes[0] : "",
                         notes.size() > 1 ? notes[1] : "", secs);
    return ok && secs < 30.0;
}

bool selection_intent(std::string& detail) {
    const auto aspects = enumerate_hybrid_aspects();
    std::size_t hits = 0;
    const std::size_t trials = 200;
    PromptFactory prompts;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::mt19937_64 rng(1000 + trial);
        MockBehavior b;
        b.seed = trial;
        b.judge_mode = MockJudgeMode::kScripted;
        std::vector<std::size_t> labels{0, 1, 2, 3};
        std::shuffle(labels.begin(), labels.end(), rng);
        const std::pair<char, char> majority{char('A' + labels[0]), char('A' + labels[1])};
        const std::pair<char, char> minority{char('A' + labels[2]), char('A' + labels[3])};
        std::vector<std::size_t> idx(aspects.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        std::set<std::string> majority_names;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto& name = aspects[idx[i]].name();
            b.script[name] = i < 6 ? majority : minority;
            if (i < 6) majority_names.insert(name);
        }
        auto llm = std::make_shared<MockLlm>(b);
        GatewayOptions opts;
        opts.sleep = [](std::chrono::milliseconds) {};
        ModelGateway gateway(llm, opts);
        JudgeTask task;
        task.query = {fmt::format("intent-{}", trial), fmt::format("Question number {}?", trial), ""};
        task.gt.answers = {"Answer"};
        for (std::size_t i = 0; i < 4; ++i) {
            CandidateResponse c;
            c.label_index = i;
            c.text = fmt::format("Response {} to question {}", i, trial);
            task.responses.candidates.push_back(c);
        }
        JudgePipelineConfig cfg;
        cfg.judge = {"http://mock.local/v1", "mock-judge", "", EndpointKind::kChat};
        cfg.embedder = {"http://mock.local/v1", "mock-embedder", "", EndpointKind::kEmbedding};
        cfg.seed = trial;
        cfg.parallelism = 1;
        std::vector<ojson> logs;
        auto stats = judge_consistency_pipeline(gateway, prompts, {task}, cfg,
                                                {nullptr, [&](const ojson& j) { logs.push_back(j); }});
        all_runs.push_back(stats);
        if (logs.size() != 1 || !logs[0].contains("chosen")) continue;
        const auto chosen = logs[0]["chosen"]["aspect"].get<std::string>();
        const auto rejected = logs[0]["rejected"]["aspect"].get<std::string>();
        if (majority_names.count(chosen) && !majority_names.count(rejected)) ++hits;
    }
    const double rate = static_cast<double>(hits) / static_cast<double>(trials);
    detail = fmt::format("chosen from majority and rejected from minority in {}/{} trials ({:.1f}%, need >= 99%)",
                         hits, trials, 100.0 * rate);
    return rate >= 0.99;
}

bool agreement_analytics(std::string& detail) {
    std::mt19937_64 rng(4242);
    const std::size_t n = 10000;
    SelectionVector x{"x", {}}, y{"y", {}};
    std::size_t naive_same = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto id = "q" + std::to_string(i);
        const std::size_t a = rng() % 4;
        const std::size_t b = rng() % 4;
        naive_same += a == b;
        x.selections.push_back({id, a, false});
        y.selections.push_back({id, b, false});
    }
    const double identical = pairwise_agreement(x, x);
    const double uniform = pairwise_agreement(x, y);
    const double monte_carlo = static_cast<double>(naive_same) / static_cast<double>(n);

    std::vector<SelectionVector> judges;
    for (int j = 0; j < 5; ++j) {
        SelectionVector v{"j" + std::to_string(j), {}};
        for (std::size_t i = 0; i < 500; ++i) v.selections.push_back({"q" + std::to_string(i), rng() % 4, rng() % 20 == 0});
        judges.push_back(v);
    }
    const auto m = agreement_matrix(judges);
    double asym = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m.size(); ++j) asym = std::max(asym, std::abs(m[i][j] - m[j][i]));
    detail = fmt::format("identical = {:.4f}; independent uniform over 10000 = {:.4f} (Monte Carlo oracle {:.4f}, "
                         "want 0.25±0.02); max asymmetry {:.3g}",
                         identical, uniform, monte_carlo, asym);
    return identical == 1.0 && std::abs(uniform - 0.25) <= 0.02 && std::abs(uniform - monte_carlo) < 1e-12 &&
           asym <= 1e-12;
}

bool conservation(std::string& detail) {
    std::size_t ok = 0;
    for (const auto& s : all_runs) ok += s.self_check();
    detail = fmt::format("input = emitted + skipped on {}/{} pipeline runs", ok, all_runs.size());
    return !all_runs.empty() && ok == all_runs.size();
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::err);
    criterion("rouge-l golden", rouge_golden);
    criterion("accuracy golden", accuracy_golden);
    criterion("consistency oracle equivalence", oracle_equivalence);
    criterion("parser totality", parser_totality);
    criterion("end-to-end determinism", end_to_end_determinism);
    criterion("consistency-selection intent", selection_intent);
    criterion("agreement analytics", agreement_analytics);
    criterion("conservation accounting", conservation);
    std::cout << (failures == 0 ? "ALL PASS" : fmt::format("{} FAILED", failures)) << std::endl;
    return failures == 0 ? 0 : 1;
}
