#include "consjudge/dataset_io.hpp"

#include <algorithm>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "consjudge/judgment_parser.hpp"
#include "consjudge/text_util.hpp"

namespace consjudge {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot open {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename Fn>
auto with_line_context(const fs::path& path, std::size_t line_no, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.code() == ErrorCode::kIo ? ErrorCode::kIo : ErrorCode::kParse,
                    fmt::format("{} line {}: {}", path.filename().string(), line_no, e.what()));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, fmt::format("{} line {}: {}", path.filename().string(), line_no, e.what()));
    }
}

const ojson& require(const ojson& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw Error(ErrorCode::kParse, fmt::format("missing field '{}'", key));
    return *it;
}

std::string require_string(const ojson& j, const char* key) {
    const auto& v = require(j, key);
    if (!v.is_string()) throw Error(ErrorCode::kParse, fmt::format("field '{}' must be a string", key));
    return v.get<std::string>();
}

void check_version(const ojson& j) {
    auto it = j.find("v");
    if (it != j.end() && *it != kSchemaVersion) {
        throw Error(ErrorCode::kParse, fmt::format("unsupported schema version {}", it->dump()));
    }
}

std::vector<std::string> string_list(const ojson& v, const char* key) {
    if (v.is_string()) return {v.get<std::string>()};
    if (!v.is_array()) throw Error(ErrorCode::kParse, fmt::format("field '{}' must be a list of strings", key));
    std::vector<std::string> out;
    for (const auto& x : v) {
        if (!x.is_string()) throw Error(ErrorCode::kParse, fmt::format("field '{}' must hold strings", key));
        out.push_back(x.get<std::string>());
    }
    return out;
}

TaskRecord task_from_json(const ojson& j) {
    check_version(j);
    TaskRecord t;
    t.query.id = require_string(j, "id");
    t.query.text = require_string(j, "question");
    if (auto it = j.find("dataset"); it != j.end() && it->is_string()) t.query.dataset = it->get<std::string>();
    t.gt.answers = string_list(require(j, "answers"), "answers");
    if (auto it = j.find("aspect_sets"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw Error(ErrorCode::kParse, "field 'aspect_sets' must be a list of lists");
        for (const auto& set : *it) t.gt.aspect_sets.push_back(string_list(set, "aspect_sets"));
    }
    validate_query(t.query);
    validate_ground_truth(t.gt);
    return t;
}

std::string letters(std::size_t index, std::size_t m) { return std::string(1, label_of(index, m)); }

}  // namespace

// ---------------------------------------------------------------------------

void for_each_jsonl(const fs::path& path, const std::function<void(const JsonlLine&)>& fn, bool require_terminated) {
    const auto data = slurp(path);
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < data.size()) {
        ++line_no;
        auto nl = data.find('\n', pos);
        const bool terminated = nl != std::string::npos;
        const auto end = terminated ? nl : data.size();
        std::string_view text(data.data() + pos, end - pos);
        if (!trim(text).empty()) {
            if (!terminated && require_terminated) {
                throw Error(ErrorCode::kParse, fmt::format("{}: truncated record at byte offset {} (line {})",
                                                           path.filename().string(), pos, line_no));
            }
            JsonlLine line;
            line.line_no = line_no;
            line.byte_offset = pos;
            try {
                line.value = ojson::parse(text);
            } catch (const nlohmann::json::parse_error& e) {
                throw Error(ErrorCode::kParse, fmt::format("{} line {} (byte offset {}): malformed JSON: {}",
                                                           path.filename().string(), line_no, pos, e.what()));
            }
            fn(line);
        }
        pos = terminated ? nl + 1 : data.size();
    }
}

JsonlWriter::JsonlWriter(const fs::path& path, bool append) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
    if (!out_) throw Error(ErrorCode::kIo, fmt::format("cannot open {} for writing", path.string()));
}

void JsonlWriter::write(const ojson& value) {
    out_ << value.dump() << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorCode::kIo, "write failed");
}

std::uint64_t truncate_partial_tail(const fs::path& path) {
    if (!fs::exists(path)) return 0;
    const auto data = slurp(path);
    if (data.empty() || data.back() == '\n') return 0;
    const auto nl = data.rfind('\n');
    const std::uint64_t keep = nl == std::string::npos ? 0 : nl + 1;
    fs::resize_file(path, keep);
    spdlog::warn("{}: dropped {} bytes of a partial trailing record", path.string(), data.size() - keep);
    return data.size() - keep;
}

std::set<std::string> existing_query_ids(const fs::path& path) {
    std::set<std::string> ids;
    if (!fs::exists(path)) return ids;
    truncate_partial_tail(path);
    for_each_jsonl(path, [&](const JsonlLine& line) {
        if (auto it = line.value.find("query_id"); it != line.value.end() && it->is_string()) {
            ids.insert(it->get<std::string>());
        } else if (auto id = line.value.find("id"); id != line.value.end() && id->is_string()) {
            ids.insert(id->get<std::string>());
        }
    });
    return ids;
}

// ---------------------------------------------------------------------------

std::vector<TaskRecord> read_tasks(const fs::path& path) {
    std::vector<TaskRecord> out;
    std::unordered_set<std::string> seen;
    for_each_jsonl(path, [&](const JsonlLine& line) {
        auto task = with_line_context(path, line.line_no, [&] { return task_from_json(line.value); });
        if (!seen.insert(task.query.id).second) {
            throw Error(ErrorCode::kParse, fmt::format("{} line {}: duplicate id '{}'", path.filename().string(),
                                                       line.line_no, task.query.id));
        }
        out.push_back(std::move(task));
    });
    return out;
}

std::vector<std::string> RetrievalRecord::texts() const {
    std::vector<std::string> out;
    out.reserve(documents.size());
    for (const auto& d : documents) out.push_back(d.text);
    return out;
}

std::map<std::string, RetrievalRecord> read_retrieval(const fs::path& path, std::vector<std::string>* warnings) {
    std::map<std::string, RetrievalRecord> out;
    auto warn = [&](std::string msg) {
        spdlog::warn("{}", msg);
        if (warnings) warnings->push_back(std::move(msg));
    };
    for_each_jsonl(path, [&](const JsonlLine& line) {
        auto rec = with_line_context(path, line.line_no, [&] {
            const auto& j = line.value;
            check_version(j);
            for (const auto& [key, _] : j.items()) {
                if (key != "v" && key != "query_id" && key != "docs") {
                    warn(fmt::format("{} line {}: ignoring unknown field '{}'", path.filename().string(),
                                     line.line_no, key));
                }
            }
            RetrievalRecord r;
            r.query_id = require_string(j, "query_id");
            const auto& docs = require(j, "docs");
            if (!docs.is_array() || docs.empty()) {
                throw Error(ErrorCode::kParse, fmt::format("query '{}' has no documents", r.query_id));
            }
            for (const auto& d : docs) {
                RetrievalDoc doc;
                if (d.is_string()) {
                    doc.text = d.get<std::string>();
                } else {
                    doc.text = require_string(d, "text");
                    if (auto id = d.find("id"); id != d.end()) doc.id = id->is_string() ? id->get<std::string>() : id->dump();
                }
                if (trim(doc.text).empty()) {
                    throw Error(ErrorCode::kParse, fmt::format("query '{}' has an empty document", r.query_id));
                }
                r.documents.push_back(std::move(doc));
            }
            return r;
        });
        if (out.count(rec.query_id)) {
            warn(fmt::format("{} line {}: duplicate query_id '{}', keeping the last record", path.filename().string(),
                             line.line_no, rec.query_id));
        }
        auto id = rec.query_id;
        out[id] = std::move(rec);
    });
    return out;
}

// ---------------------------------------------------------------------------

ojson judge_task_to_json(const JudgeTask& task) {
    ojson j;
    j["v"] = kSchemaVersion;
    j["id"] = task.query.id;
    j["question"] = task.query.text;
    if (!task.query.dataset.empty()) j["dataset"] = task.query.dataset;
    j["answers"] = task.gt.answers;
    if (!task.gt.aspect_sets.empty()) j["aspect_sets"] = task.gt.aspect_sets;
    auto cands = ojson::array();
    const auto m = task.responses.m();
    for (const auto& c : task.responses.candidates) {
        ojson origin;
        origin["model"] = c.origin.model;
        origin["temperature"] = c.origin.temperature;
        if (c.origin.with_docs) origin["with_docs"] = *c.origin.with_docs;
        origin["ordinal"] = c.origin.ordinal;
        cands.push_back({{"label", letters(c.label_index, m)}, {"text", c.text}, {"origin", std::move(origin)}});
    }
    j["candidates"] = std::move(cands);
    return j;
}

JudgeTask judge_task_from_json(const ojson& j) {
    auto base = task_from_json(j);
    JudgeTask task{std::move(base.query), std::move(base.gt), {}};
    const auto& cands = require(j, "candidates");
    if (!cands.is_array()) throw Error(ErrorCode::kParse, "field 'candidates' must be a list");
    const auto m = cands.size();
    for (std::size_t i = 0; i < m; ++i) {
        const auto& c = cands[i];
        CandidateResponse r;
        const auto& label = require(c, "label");
        if (label.is_string() && label.get<std::string>().size() == 1) {
            r.label_index = index_of(label.get<std::string>()[0], std::min(m, kMaxChoices));
        } else if (label.is_number_unsigned()) {
            r.label_index = label.get<std::size_t>();
        } else {
            throw Error(ErrorCode::kParse, "candidate label must be a letter");
        }
        r.text = require_string(c, "text");
        if (auto o = c.find("origin"); o != c.end() && o->is_object()) {
            if (auto it = o->find("model"); it != o->end()) r.origin.model = it->get<std::string>();
            if (auto it = o->find("temperature"); it != o->end()) r.origin.temperature = it->get<double>();
            if (auto it = o->find("with_docs"); it != o->end() && !it->is_null()) r.origin.with_docs = it->get<bool>();
            if (auto it = o->find("ordinal"); it != o->end()) r.origin.ordinal = it->get<int>();
        }
        task.responses.candidates.push_back(std::move(r));
    }
    validate_response_set(task.responses);
    return task;
}

std::vector<JudgeTask> read_judge_tasks(const fs::path& path) {
    std::vector<JudgeTask> out;
    std::unordered_set<std::string> seen;
    for_each_jsonl(path, [&](const JsonlLine& line) {
        auto task = with_line_context(path, line.line_no, [&] { return judge_task_from_json(line.value); });
        if (!seen.insert(task.query.id).second) {
            throw Error(ErrorCode::kParse, fmt::format("{} line {}: duplicate id '{}'", path.filename().string(),
                                                       line.line_no, task.query.id));
        }
        out.push_back(std::move(task));
    });
    return out;
}

// ---------------------------------------------------------------------------

ojson preference_to_json(const PreferenceRecord& r) {
    ojson j;
    j["v"] = kSchemaVersion;
    j["kind"] = to_string(r.kind);
    j["query_id"] = r.query_id;
    j["prompt"] = r.prompt;
    j["chosen"] = r.chosen;
    j["rejected"] = r.rejected;
    j["meta"] = r.meta;
    return j;
}

PreferenceRecord preference_from_json(const ojson& j) {
    check_version(j);
    PreferenceRecord r;
    r.kind = preference_kind_from_string(require_string(j, "kind"));
    r.query_id = require_string(j, "query_id");
    r.prompt = require_string(j, "prompt");
    r.chosen = require_string(j, "chosen");
    r.rejected = require_string(j, "rejected");
    if (auto it = j.find("meta"); it != j.end()) r.meta = *it;
    validate_preference(r);
    return r;
}

void write_preferences(const std::vector<PreferenceRecord>& records, const fs::path& path) {
    for (const auto& r : records) validate_preference(r);
    JsonlWriter out(path, /*append=*/false);
    for (const auto& r : records) out.write(preference_to_json(r));
}

std::vector<PreferenceRecord> read_preferences(const fs::path& path) {
    std::vector<PreferenceRecord> out;
    for_each_jsonl(
        path,
        [&](const JsonlLine& line) {
            out.push_back(with_line_context(path, line.line_no, [&] { return preference_from_json(line.value); }));
        },
        /*require_terminated=*/true);
    return out;
}

// ---------------------------------------------------------------------------

ojson judgment_log_entry(const JudgmentLogInput& in) {
    if (!in.task || !in.run) throw Error(ErrorCode::kPrecondition, "judgment log entry needs a task and a run");
    const auto& task = *in.task;
    const auto& run = *in.run;
    const auto m = task.responses.m();

    ojson j;
    j["v"] = kSchemaVersion;
    j["query_id"] = task.query.id;
    j["status"] = in.skip_reason.empty() ? "ok" : "skipped";
    if (!in.skip_reason.empty()) j["skip_reason"] = in.skip_reason;
    j["m"] = m;
    j["k_configured"] = run.traces.size();
    j["k_effective"] = run.judgments.k_effective();
    if (!run.display_order.empty()) j["display_order"] = run.display_order;

    const auto candidate = [&](std::size_t pos) {
        return run.display_order.empty() ? pos : run.display_order.at(pos);
    };
    auto entries = ojson::array();
    std::size_t valid = 0;
    for (const auto& t : run.traces) {
        ojson e;
        e["aspect"] = t.aspect.name();
        e["attempts"] = t.attempts;
        if (t.judgment) {
            e["outcome"] = "ok";
            e["best"] = letters(candidate(t.judgment->best), m);
            e["worst"] = letters(candidate(t.judgment->worst), m);
            if (in.embeddings && valid < in.embeddings->size()) {
                const auto& vec = (*in.embeddings)[valid];
                e["embedding_digest"] = sha256_hex(ojson(vec.values).dump());
                if (in.log_vectors) e["embedding"] = vec.values;
            }
            ++valid;
        } else if (!t.gateway_error.empty()) {
            e["outcome"] = "gateway-error";
            e["error"] = t.gateway_error;
        } else {
            e["outcome"] = t.last_failure ? std::string(to_string(*t.last_failure)) : "unparsed";
        }
        entries.push_back(std::move(e));
    }
    j["judgments"] = std::move(entries);

    if (in.report) {
        const auto& r = *in.report;
        auto scores = ojson::array();
        for (const auto& s : r.scores) scores.push_back({{"aspect", s.aspect.name()}, {"score", s.score}});
        j["scores"] = std::move(scores);
        j["selection"] = in.selection_mode;
        if (!r.skipped) {
            const auto& js = run.judgments.judgments;
            j["chosen"] = {{"index", r.chosen_index},
                           {"aspect", js[r.chosen_index].aspect.name()},
                           {"best", letters(candidate(js[r.chosen_index].best), m)}};
            j["rejected"] = {{"index", r.rejected_index},
                             {"aspect", js[r.rejected_index].aspect.name()},
                             {"best", letters(candidate(js[r.rejected_index].best), m)}};
        }
    }
    return j;
}

void write_judgment_log(JsonlWriter& writer, const JudgmentLogInput& in) { writer.write(judgment_log_entry(in)); }

ConsistencyReport replay_report(const ojson& line) {
    check_version(line);
    const auto m = require(line, "m").get<std::size_t>();
    JudgmentSet set;
    set.k_configured = require(line, "k_configured").get<std::size_t>();
    std::vector<EmbeddingVector> vectors;
    bool have_vectors = true;
    for (const auto& e : require(line, "judgments")) {
        if (require_string(e, "outcome") != "ok") continue;
        Judgment j;
        j.aspect = HybridAspect::from_name(require_string(e, "aspect"));
        j.best = index_of(require_string(e, "best").at(0), m);
        j.worst = index_of(require_string(e, "worst").at(0), m);
        const auto& attempts = require(e, "attempts");
        if (!attempts.empty()) j.raw = attempts.back().get<std::string>();
        set.judgments.push_back(std::move(j));
        if (auto v = e.find("embedding"); v != e.end()) {
            vectors.push_back({v->get<std::vector<double>>()});
        } else {
            have_vectors = false;
        }
    }
    if (set.k_effective() < 2) {
        ConsistencyReport r;
        r.skipped = true;
        r.skip_reason = line.value("skip_reason", "insufficient-judgments");
        return r;
    }
    std::vector<double> scores;
    if (have_vectors) {
        scores = consistency_scores(vectors);
    } else {
        for (const auto& s : require(line, "scores")) scores.push_back(require(s, "score").get<double>());
    }
    if (line.value("selection", "consistency") == "random") {
        auto r = select_pair(set, scores);
        r.skipped = false;
        r.skip_reason.clear();
        r.chosen_index = require(line, "chosen").at("index").get<std::size_t>();
        r.rejected_index = require(line, "rejected").at("index").get<std::size_t>();
        return r;
    }
    return select_pair(set, scores);
}

// ---------------------------------------------------------------------------

ojson selection_to_json(const SelectionRecord& s) {
    ojson j;
    j["v"] = kSchemaVersion;
    j["judge"] = s.judge;
    j["query_id"] = s.query_id;
    j["m"] = s.m;
    j["best"] = letters(s.best, s.m);
    j["worst"] = letters(s.worst, s.m);
    j["degenerate"] = s.degenerate;
    j["judgment"] = s.judgment;
    return j;
}

SelectionRecord selection_from_json(const ojson& j) {
    check_version(j);
    SelectionRecord s;
    s.judge = j.value("judge", "");
    s.query_id = require_string(j, "query_id");
    s.m = require(j, "m").get<std::size_t>();
    s.best = index_of(require_string(j, "best").at(0), s.m);
    s.worst = index_of(require_string(j, "worst").at(0), s.m);
    s.degenerate = j.value("degenerate", false);
    s.judgment = j.value("judgment", "");
    return s;
}

std::vector<SelectionRecord> read_selections(const fs::path& path, const std::string& judge_id) {
    std::vector<SelectionRecord> out;
    for_each_jsonl(path, [&](const JsonlLine& line) {
        with_line_context(path, line.line_no, [&] {
            const auto& j = line.value;
            if (j.contains("judgments")) {
                if (j.value("status", "") != "ok" || !j.contains("chosen")) return;
                SelectionRecord s;
                s.judge = judge_id;
                s.query_id = require_string(j, "query_id");
                s.m = require(j, "m").get<std::size_t>();
                const auto idx = j.at("chosen").at("index").get<std::size_t>();
                std::size_t valid = 0;
                for (const auto& e : j.at("judgments")) {
                    if (e.value("outcome", "") != "ok") continue;
                    if (valid++ == idx) {
                        s.best = index_of(require_string(e, "best").at(0), s.m);
                        s.worst = index_of(require_string(e, "worst").at(0), s.m);
                        s.judgment = e.at("attempts").back().get<std::string>();
                    }
                }
                out.push_back(std::move(s));
            } else {
                auto s = selection_from_json(j);
                if (!judge_id.empty()) s.judge = judge_id;
                out.push_back(std::move(s));
            }
        });
    });
    return out;
}

// ---------------------------------------------------------------------------

ojson make_cache_record(const std::string& key, std::string_view kind, const std::string& model,
                        const ojson& request, const ojson& response) {
    ojson j;
    j["v"] = kSchemaVersion;
    j["key"] = key;
    j["kind"] = kind;
    j["model"] = model;
    j["request"] = request;
    j["response"] = response;
    return j;
}

namespace {
fs::path cache_path(const fs::path& dir, const std::string& key) {
    return dir / key.substr(0, 2) / (key + ".json");
}
}  // namespace

std::optional<ojson> read_cache_record(const fs::path& dir, const std::string& key) {
    const auto p = cache_path(dir, key);
    std::error_code ec;
    if (!fs::exists(p, ec)) return std::nullopt;
    try {
        auto j = ojson::parse(slurp(p));
        if (j.value("key", "") != key) return std::nullopt;
        return j;
    } catch (const nlohmann::json::exception&) {
        spdlog::warn("ignoring unreadable cache record {}", p.string());
        return std::nullopt;
    }
}

void write_cache_record(const fs::path& dir, const std::string& key, const ojson& record) {
    const auto p = cache_path(dir, key);
    fs::create_directories(p.parent_path());
    std::random_device rd;
    const auto tmp = p.parent_path() / fmt::format("{}.tmp.{:x}", key, (static_cast<std::uint64_t>(rd()) << 32) | rd());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::kIo, fmt::format("cannot write cache record {}", tmp.string()));
        out << record.dump();
        if (!out.flush()) throw Error(ErrorCode::kIo, fmt::format("cannot write cache record {}", tmp.string()));
    }
    fs::rename(tmp, p);
}

// ---------------------------------------------------------------------------

std::size_t RunStatistics::skipped() const {
    std::size_t n = 0;
    for (const auto& [_, c] : skip_reasons) n += c;
    return n;
}

bool RunStatistics::self_check() const { return input == emitted + skipped(); }

void RunStatistics::skip(const std::string& reason) { ++skip_reasons[reason]; }

double RunStatistics::skip_rate() const {
    std::size_t present = 0;
    if (auto it = skip_reasons.find(std::string(kSkipAlreadyPresent)); it != skip_reasons.end()) present = it->second;
    const auto processed = input - present;
    return processed ? static_cast<double>(skipped() - present) / static_cast<double>(processed) : 0.0;
}

ojson RunStatistics::to_json() const {
    ojson j;
    j["v"] = kSchemaVersion;
    j["pipeline"] = pipeline;
    j["input"] = input;
    j["emitted"] = emitted;
    j["skipped"] = skipped();
    j["skip_reasons"] = ojson::object();
    for (const auto& [k, v] : skip_reasons) j["skip_reasons"][k] = v;
    j["self_check"] = self_check();
    j["wall_time_s"] = wall_time_s;
    j["requests"] = requests;
    j["cache_hit_rate"] = cache_hit_rate;
    for (const auto& [k, v] : extra.items()) j[k] = v;
    return j;
}

void write_json_file(const fs::path& path, const ojson& value) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, fmt::format("cannot write {}", path.string()));
    out << value.dump(2) << '\n';
}

ojson read_json_file(const fs::path& path) {
    try {
        return ojson::parse(slurp(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kParse, fmt::format("{}: {}", path.string(), e.what()));
    }
}

}  // namespace consjudge
