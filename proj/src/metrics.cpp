#include "consjudge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "consjudge/text_util.hpp"

namespace consjudge {

namespace {

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

bool contains_tokens(const std::string& padded_response, std::string_view gold) {
    auto g = normalize_text(gold);
    if (g.empty()) return false;
    return padded_response.find(" " + g + " ") != std::string::npos;
}

std::string padded(std::string_view response) { return " " + normalize_text(response) + " "; }

}  // namespace

std::string_view to_string(MetricKind kind) {
    switch (kind) {
        case MetricKind::kRougeL: return "rouge_l";
        case MetricKind::kAccuracyContains: return "accuracy";
        case MetricKind::kStringEM: return "string_em";
    }
    return "";
}

MetricKind metric_kind_from_string(std::string_view s) {
    if (s == "rouge_l" || s == "rouge-l") return MetricKind::kRougeL;
    if (s == "accuracy") return MetricKind::kAccuracyContains;
    if (s == "string_em" || s == "str-em") return MetricKind::kStringEM;
    throw Error(ErrorCode::kInvalidInput, fmt::format("unknown metric '{}'", s));
}

double rouge_l(std::string_view candidate, std::string_view reference) {
    const auto c = normalize_tokens(candidate);
    const auto r = normalize_tokens(reference);
    const auto lcs = lcs_length(c, r);
    if (lcs == 0) return 0.0;
    const double p = static_cast<double>(lcs) / static_cast<double>(c.size());
    const double rec = static_cast<double>(lcs) / static_cast<double>(r.size());
    return 2.0 * p * rec / (p + rec);
}

int accuracy_contains(std::string_view response, std::span<const std::string> golds) {
    if (golds.empty()) throw Error(ErrorCode::kPrecondition, "accuracy needs at least one gold answer");
    const auto resp = padded(response);
    for (const auto& g : golds) {
        if (contains_tokens(resp, g)) return 1;
    }
    return 0;
}

double string_em(std::string_view response, std::span<const std::vector<std::string>> aspect_sets) {
    if (aspect_sets.empty()) throw Error(ErrorCode::kPrecondition, "string_em needs at least one aspect set");
    const auto resp = padded(response);
    std::size_t hits = 0;
    for (const auto& set : aspect_sets) {
        if (set.empty()) throw Error(ErrorCode::kPrecondition, "string_em aspect set has no members");
        if (std::any_of(set.begin(), set.end(), [&](const std::string& g) { return contains_tokens(resp, g); })) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(aspect_sets.size());
}

MetricJudgment metric_judge(const JudgeTask& task, MetricKind kind) {
    validate_response_set(task.responses);
    validate_ground_truth(task.gt);
    std::vector<std::vector<std::string>> sets = task.gt.aspect_sets;
    if (kind == MetricKind::kStringEM && sets.empty()) {
        for (const auto& a : task.gt.answers) sets.push_back({a});
    }

    MetricJudgment out;
    for (const auto& c : task.responses.candidates) {
        switch (kind) {
            case MetricKind::kRougeL: out.scores.push_back(rouge_l(c.text, task.gt.answers.front())); break;
            case MetricKind::kAccuracyContains: out.scores.push_back(accuracy_contains(c.text, task.gt.answers)); break;
            case MetricKind::kStringEM: out.scores.push_back(string_em(c.text, sets)); break;
        }
    }
    for (std::size_t i = 1; i < out.scores.size(); ++i) {
        if (out.scores[i] > out.scores[out.best]) out.best = i;
        if (out.scores[i] < out.scores[out.worst]) out.worst = i;
    }
    if (out.scores[out.best] == out.scores[out.worst]) {
        out.degenerate = true;
        out.best = 0;
        out.worst = 0;
    }
    return out;
}

double pairwise_agreement(const SelectionVector& a, const SelectionVector& b) {
    if (a.selections.size() != b.selections.size()) {
        throw Error(ErrorCode::kPrecondition,
                    fmt::format("judges '{}' and '{}' cover {} vs {} queries", a.judge_id, b.judge_id,
                                a.selections.size(), b.selections.size()));
    }
    std::size_t agree = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < a.selections.size(); ++i) {
        const auto& x = a.selections[i];
        const auto& y = b.selections[i];
        if (x.query_id != y.query_id) {
            throw Error(ErrorCode::kPrecondition,
                        fmt::format("query coverage mismatch at position {}: '{}' vs '{}'", i, x.query_id,
                                    y.query_id));
        }
        if (x.degenerate || y.degenerate) continue;
        ++total;
        if (x.best == y.best) ++agree;
    }
    if (total == 0) {
        throw Error(ErrorCode::kPrecondition,
                    fmt::format("judges '{}' and '{}' have no comparable queries", a.judge_id, b.judge_id));
    }
    return static_cast<double>(agree) / static_cast<double>(total);
}

std::vector<SelectionVector> align_selections(std::span<const SelectionVector> selections) {
    if (selections.empty()) return {};
    std::vector<std::unordered_map<std::string, const Selection*>> index(selections.size());
    for (std::size_t v = 0; v < selections.size(); ++v) {
        for (const auto& s : selections[v].selections) index[v].emplace(s.query_id, &s);
    }
    std::vector<SelectionVector> out(selections.size());
    for (std::size_t v = 0; v < selections.size(); ++v) out[v].judge_id = selections[v].judge_id;
    std::unordered_set<std::string> taken;
    for (const auto& s : selections.front().selections) {
        if (!taken.insert(s.query_id).second) continue;
        bool everywhere = std::all_of(index.begin(), index.end(),
                                      [&](const auto& idx) { return idx.count(s.query_id) > 0; });
        if (!everywhere) continue;
        for (std::size_t v = 0; v < selections.size(); ++v) out[v].selections.push_back(*index[v].at(s.query_id));
    }
    if (out.front().selections.empty()) {
        throw Error(ErrorCode::kPrecondition, "selections share no query ids");
    }
    return out;
}

Matrix agreement_matrix(std::span<const SelectionVector> selections) {
    if (selections.size() < 2) throw Error(ErrorCode::kPrecondition, "agreement matrix needs at least two judges");
    const auto n = selections.size();
    Matrix m(n, std::vector<double>(n, 1.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& a = selections[i].selections;
            const auto& b = selections[j].selections;
            const bool comparable = a.size() == b.size() && [&] {
                for (std::size_t q = 0; q < a.size(); ++q)
                    if (!a[q].degenerate && !b[q].degenerate) return true;
                return false;
            }();
            m[i][j] = m[j][i] = comparable ? pairwise_agreement(selections[i], selections[j])
                                           : std::numeric_limits<double>::quiet_NaN();
        }
    }
    return m;
}

HistogramSpec HistogramSpec::uniform(double lo, double hi, std::size_t bins) {
    if (bins == 0 || !(hi > lo)) throw Error(ErrorCode::kInvalidInput, "invalid histogram range");
    HistogramSpec spec;
    for (std::size_t i = 0; i <= bins; ++i) {
        spec.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins));
    }
    spec.edges.back() = hi;
    return spec;
}

HistogramResult consistency_histogram(std::span<const double> scores, HistogramSpec spec) {
    if (spec.edges.size() < 2) throw Error(ErrorCode::kInvalidInput, "histogram needs at least two edges");
    const auto bins = spec.edges.size() - 1;
    spec.counts.assign(bins, 0);
    double sum = 0.0;
    for (double s : scores) {
        if (!(s >= -1.0 && s <= 1.0)) throw Error(ErrorCode::kRange, fmt::format("score {} outside [-1, 1]", s));
        if (s < spec.edges.front() || s > spec.edges.back()) {
            throw Error(ErrorCode::kRange, fmt::format("score {} outside the histogram range", s));
        }
        auto it = std::upper_bound(spec.edges.begin(), spec.edges.end(), s);
        auto bin = static_cast<std::size_t>(std::distance(spec.edges.begin(), it));
        bin = bin == 0 ? 0 : std::min(bin - 1, bins - 1);
        ++spec.counts[bin];
        sum += s;
    }
    HistogramResult out;
    out.histogram = std::move(spec);
    out.n = scores.size();
    if (!scores.empty()) {
        const double mean = sum / static_cast<double>(scores.size());
        double var = 0.0;
        for (double s : scores) var += (s - mean) * (s - mean);
        out.mean = mean;
        out.stddev = std::sqrt(var / static_cast<double>(scores.size()));
    }
    return out;
}

nlohmann::ordered_json to_json(const HistogramResult& h) {
    nlohmann::ordered_json j;
    j["edges"] = h.histogram.edges;
    j["counts"] = h.histogram.counts;
    j["n"] = h.n;
    j["mean"] = h.mean ? nlohmann::ordered_json(*h.mean) : nlohmann::ordered_json(nullptr);
    j["stddev"] = h.stddev ? nlohmann::ordered_json(*h.stddev) : nlohmann::ordered_json(nullptr);
    return j;
}

nlohmann::ordered_json matrix_to_json(const std::vector<std::string>& labels, const Matrix& m) {
    nlohmann::ordered_json j;
    j["judges"] = labels;
    j["matrix"] = nlohmann::ordered_json::array();
    for (const auto& row : m) {
        auto r = nlohmann::ordered_json::array();
        for (double v : row) r.push_back(std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v));
        j["matrix"].push_back(std::move(r));
    }
    return j;
}

std::string render_matrix_table(const std::vector<std::string>& labels, const Matrix& m) {
    std::size_t w = 6;
    for (const auto& l : labels) w = std::max(w, l.size());
    std::string out = fmt::format("{:<{}}", "", w);
    for (const auto& l : labels) out += fmt::format("  {:>{}}", l, w);
    out += '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
        out += fmt::format("{:<{}}", labels[i], w);
        for (double v : m[i]) {
            out += std::isnan(v) ? fmt::format("  {:>{}}", "n/a", w) : fmt::format("  {:>{}.3f}", v, w);
        }
        out += '\n';
    }
    return out;
}

std::string render_histogram_table(const std::string& title, const HistogramResult& h) {
    std::string out = fmt::format("{} (n={}", title, h.n);
    if (h.mean) out += fmt::format(", mean={:.4f}, std={:.4f}", *h.mean, *h.stddev);
    out += ")\n";
    std::size_t peak = 1;
    for (auto c : h.histogram.counts) peak = std::max(peak, c);
    for (std::size_t i = 0; i < h.histogram.counts.size(); ++i) {
        const auto c = h.histogram.counts[i];
        out += fmt::format("[{:+.2f}, {:+.2f}{} {:>7}  {}\n", h.histogram.edges[i], h.histogram.edges[i + 1],
                           i + 1 == h.histogram.counts.size() ? "]" : ")", c, std::string(c * 40 / peak, '#'));
    }
    return out;
}

}  // namespace consjudge
