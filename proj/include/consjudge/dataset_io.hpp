#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "consjudge/consistency.hpp"
#include "consjudge/domain.hpp"
#include "consjudge/embedding.hpp"
#include "consjudge/judge_run.hpp"

namespace consjudge {

inline constexpr int kSchemaVersion = 1;
/// Skip reason for tasks found in the output of an earlier run.
inline constexpr std::string_view kSkipAlreadyPresent = "already-present";

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Generic JSONL plumbing

struct JsonlLine {
    std::size_t line_no = 0;      // 1-based
    std::uint64_t byte_offset = 0;
    ojson value;
};

/// Calls `fn` for every non-blank line. Malformed JSON throws kParse naming
/// the line. With `require_terminated`, a final line without '\n' throws kParse
/// naming its byte offset.
void for_each_jsonl(const std::filesystem::path& path, const std::function<void(const JsonlLine&)>& fn,
                    bool require_terminated = false);

/// Single-writer JSONL appender; every line is flushed as it is written.
class JsonlWriter {
public:
    JsonlWriter() = default;
    JsonlWriter(const std::filesystem::path& path, bool append);

    void write(const ojson& value);
    bool is_open() const noexcept { return out_.is_open(); }

private:
    std::ofstream out_;
};

/// Drops a trailing partial line (a crash mid-write) so appends start clean.
/// Returns the number of bytes removed.
std::uint64_t truncate_partial_tail(const std::filesystem::path& path);

/// Query ids already present in an output file (field "query_id" or "id").
/// A missing file yields an empty set; a partial tail line is removed first.
std::set<std::string> existing_query_ids(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Inputs

struct TaskRecord {
    Query query;
    GroundTruth gt;
};

/// {id, question, answers[, aspect_sets][, dataset]} per line.
std::vector<TaskRecord> read_tasks(const std::filesystem::path& path);

struct RetrievalDoc {
    std::string id;
    std::string text;
};

struct RetrievalRecord {
    std::string query_id;
    std::vector<RetrievalDoc> documents;

    std::vector<std::string> texts() const;
};

/// {query_id, docs: [{id, text}]} per line. Duplicate ids: last wins. Unknown
/// fields and duplicates are reported through `warnings` (and the log).
std::map<std::string, RetrievalRecord> read_retrieval(const std::filesystem::path& path,
                                                      std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Candidate sets (a task plus its sampled responses)

ojson judge_task_to_json(const JudgeTask& task);
JudgeTask judge_task_from_json(const ojson& j);
std::vector<JudgeTask> read_judge_tasks(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Preference rows: {v, kind, query_id, prompt, chosen, rejected, meta}

ojson preference_to_json(const PreferenceRecord& r);
PreferenceRecord preference_from_json(const ojson& j);
/// Refuses invalid records (chosen == rejected, empty prompt) before writing anything.
void write_preferences(const std::vector<PreferenceRecord>& records, const std::filesystem::path& path);
std::vector<PreferenceRecord> read_preferences(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Judgment log (audit trail of the judge-consistency pipeline)

struct JudgmentLogInput {
    const JudgeTask* task = nullptr;
    const JudgeRun* run = nullptr;
    const std::vector<EmbeddingVector>* embeddings = nullptr;  // one per valid judgment
    const ConsistencyReport* report = nullptr;
    std::string selection_mode = "consistency";
    std::string skip_reason;  // non-empty for skipped tasks
    bool log_vectors = false;
};

/// Best/worst letters are logged in candidate order (display order undone).
ojson judgment_log_entry(const JudgmentLogInput& in);
void write_judgment_log(JsonlWriter& writer, const JudgmentLogInput& in);

/// Rebuilds the ConsistencyReport of a logged task without network access:
/// from logged vectors when present, otherwise from logged scores.
ConsistencyReport replay_report(const ojson& log_line);

// ---------------------------------------------------------------------------
// Judge selections: {v, judge, query_id, best, worst, degenerate, judgment}

struct SelectionRecord {
    std::string judge;
    std::string query_id;
    std::size_t best = 0;
    std::size_t worst = 0;
    std::size_t m = 0;
    bool degenerate = false;
    std::string judgment;
};

ojson selection_to_json(const SelectionRecord& s);
SelectionRecord selection_from_json(const ojson& j);

/// Reads either a selections file or a judgment log (in which case the
/// chosen judgment's best index is the judge's selection; skipped tasks are
/// left out).
std::vector<SelectionRecord> read_selections(const std::filesystem::path& path, const std::string& judge_id);

// ---------------------------------------------------------------------------
// Cache records, stored as <dir>/<key[0:2]>/<key>.json

ojson make_cache_record(const std::string& key, std::string_view kind, const std::string& model,
                        const ojson& request, const ojson& response);
std::optional<ojson> read_cache_record(const std::filesystem::path& dir, const std::string& key);
/// Write-temp-then-rename; concurrent writers of the same key are harmless.
void write_cache_record(const std::filesystem::path& dir, const std::string& key, const ojson& record);

// ---------------------------------------------------------------------------
// Run statistics

struct RunStatistics {
    std::string pipeline;
    std::size_t input = 0;
    std::size_t emitted = 0;
    std::map<std::string, std::size_t> skip_reasons;
    double wall_time_s = 0.0;
    std::uint64_t requests = 0;
    double cache_hit_rate = 0.0;
    ojson extra = ojson::object();

    std::size_t skipped() const;
    /// input == emitted + skipped
    bool self_check() const;
    void skip(const std::string& reason);
    /// Failure rate among tasks processed in this run ("already-present" excluded).
    double skip_rate() const;
    ojson to_json() const;
};

void write_json_file(const std::filesystem::path& path, const ojson& value);
ojson read_json_file(const std::filesystem::path& path);

}  // namespace consjudge
