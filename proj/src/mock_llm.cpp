#include "consjudge/mock_llm.hpp"

#include <cmath>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>

#include "consjudge/judgment_parser.hpp"
#include "consjudge/text_util.hpp"

namespace consjudge {

namespace {

constexpr std::string_view kQueryMarker = "Here is the query:";

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

std::uint64_t hash_of(std::uint64_t seed, std::string_view a, std::string_view b = {}) {
    return mix64(fnv1a64(b, fnv1a64(a, mix64(seed) ^ 0xcbf29ce484222325ULL)));
}

// SplitMix64 stream with Box-Muller normals.
class HashStream {
public:
    explicit HashStream(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next() { return mix64(state_ += 0x9e3779b97f4a7c15ULL); }
    double normal() {
        const double u1 = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = unit(next());
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

private:
    std::uint64_t state_;
};

std::vector<double> hash_unit_vector(std::uint64_t seed, std::size_t dim) {
    HashStream s(seed);
    std::vector<double> v(dim);
    double n2 = 0.0;
    while (n2 == 0.0) {
        for (auto& x : v) x = s.normal();
        n2 = 0.0;
        for (double x : v) n2 += x * x;
    }
    const double n = std::sqrt(n2);
    for (auto& x : v) x /= n;
    return v;
}

std::optional<std::size_t> extract_letter(std::string_view text, const char* marker) {
    static const std::regex best_re(R"(best\s*answer\s*:?\s*[\{\(\[\*]*\s*([A-Fa-f])\b)", std::regex::icase);
    static const std::regex worst_re(R"(worst\s*answer\s*:?\s*[\{\(\[\*]*\s*([A-Fa-f])\b)", std::regex::icase);
    const auto& re = std::string_view(marker) == "best" ? best_re : worst_re;
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(text.begin(), text.end(), m, re)) return std::nullopt;
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(*m[1].first)));
    return static_cast<std::size_t>(c - 'A');
}

// Candidate texts of a rendered judge or referee prompt, in display order.
std::vector<std::string> extract_choices(std::string_view segment) {
    std::vector<std::string> out;
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // marker start, text start
    for (char letter = 'A'; letter <= 'F'; ++letter) {
        const auto marker = fmt::format("Here is the {} choice:", letter);
        const auto pos = segment.find(marker);
        if (pos == std::string_view::npos) break;
        spans.emplace_back(pos, pos + marker.size());
    }
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const auto end = i + 1 < spans.size() ? spans[i + 1].first : segment.size();
        auto text = segment.substr(spans[i].second, end - spans[i].second);
        while (!text.empty() && (std::isspace(static_cast<unsigned char>(text.back())) || text.back() == ',' ||
                                 text.back() == '.')) {
            text.remove_suffix(1);
        }
        out.emplace_back(text);
    }
    return out;
}

std::string_view between(std::string_view s, std::string_view begin, std::string_view end, bool last = false) {
    const auto b = last ? s.rfind(begin) : s.find(begin);
    if (b == std::string_view::npos) return {};
    const auto start = b + begin.size();
    const auto e = s.find(end, start);
    return s.substr(start, e == std::string_view::npos ? std::string_view::npos : e - start);
}

std::pair<std::size_t, std::size_t> consensus_of(const std::vector<std::string>& choices, std::uint64_t seed) {
    std::size_t best = 0;
    std::size_t worst = 0;
    std::vector<std::uint64_t> h;
    for (const auto& c : choices) h.push_back(hash_of(seed, "quality", c));
    for (std::size_t i = 1; i < h.size(); ++i) {
        if (h[i] > h[best]) best = i;
        if (h[i] < h[worst]) worst = i;
    }
    if (best == worst) worst = (best + 1) % std::max<std::size_t>(choices.size(), 2);
    return {best, worst};
}

HttpResponse json_response(int status, const nlohmann::json& j) { return {status, j.dump()}; }

HttpResponse error_response(int status, std::string_view msg) {
    return json_response(status, {{"error", {{"message", std::string(msg)}}}});
}

}  // namespace

std::string_view to_string(MockJudgeMode mode) {
    switch (mode) {
        case MockJudgeMode::kConsensus: return "consensus";
        case MockJudgeMode::kPositionBias: return "position-bias";
        case MockJudgeMode::kScripted: return "scripted";
    }
    return "";
}

MockJudgeMode mock_judge_mode_from_string(std::string_view s) {
    if (s == "consensus") return MockJudgeMode::kConsensus;
    if (s == "position-bias") return MockJudgeMode::kPositionBias;
    if (s == "scripted") return MockJudgeMode::kScripted;
    throw Error(ErrorCode::kConfig, fmt::format("unknown mock judge mode '{}'", s));
}

MockBehavior MockBehavior::from_json(const nlohmann::json& j) {
    MockBehavior b;
    try {
        b.seed = j.value("seed", b.seed);
        if (j.contains("judge_mode")) b.judge_mode = mock_judge_mode_from_string(j.at("judge_mode").get<std::string>());
        b.dissent_rate = j.value("dissent_rate", b.dissent_rate);
        if (j.contains("aspect_dissent")) b.aspect_dissent = j.at("aspect_dissent").get<std::map<std::string, double>>();
        if (j.contains("script")) {
            for (const auto& [aspect, v] : j.at("script").items()) {
                const auto letters = v.is_array() ? v.get<std::vector<std::string>>() : split(v.get<std::string>(), ',');
                if (letters.size() != 2 || trim(letters[0]).size() != 1 || trim(letters[1]).size() != 1) {
                    throw Error(ErrorCode::kConfig, fmt::format("script entry for '{}' must name two letters", aspect));
                }
                b.script[aspect] = {trim(letters[0])[0], trim(letters[1])[0]};
            }
        }
        if (j.contains("bias_best")) b.bias_best = j.at("bias_best").get<std::string>().at(0);
        if (j.contains("bias_worst")) b.bias_worst = j.at("bias_worst").get<std::string>().at(0);
        b.format_violation_rate = j.value("format_violation_rate", b.format_violation_rate);
        if (j.contains("failing_models")) b.failing_models = j.at("failing_models").get<std::set<std::string>>();
        if (j.contains("table")) b.table = j.at("table").get<std::map<std::string, std::string>>();
        b.embedding_dim = j.value("embedding_dim", b.embedding_dim);
        b.semantic_embeddings = j.value("semantic_embeddings", b.semantic_embeddings);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kConfig, fmt::format("invalid mock settings: {}", e.what()));
    }
    if (b.embedding_dim < 1) throw Error(ErrorCode::kConfig, "mock embedding_dim must be positive");
    return b;
}

MockLlm::MockLlm(MockBehavior behavior) : behavior_(std::move(behavior)) {}

HttpResponse MockLlm::post(const std::string& url, const std::string& body, const HttpHeaders& /*headers*/) {
    const auto scheme = url.find("://");
    const auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    return handle(slash == std::string::npos ? std::string_view{} : std::string_view(url).substr(slash), body);
}

HttpResponse MockLlm::handle(std::string_view path, const std::string& body) {
    ++requests_;
    nlohmann::json req;
    try {
        req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
        return error_response(400, "body is not JSON");
    }
    const auto model = req.value("model", "");
    if (model.empty()) return error_response(400, "model is required");
    if (behavior_.failing_models.count(model)) return error_response(500, "mock failure");

    const auto ends_with = [&](std::string_view s) {
        return path.size() >= s.size() && path.substr(path.size() - s.size()) == s;
    };
    if (ends_with("/chat/completions")) {
        const auto& messages = req.value("messages", nlohmann::json::array());
        if (messages.empty() || !messages.back().contains("content")) return error_response(400, "no messages");
        const auto prompt = messages.back().at("content").get<std::string>();
        std::optional<std::int64_t> seed;
        if (req.contains("seed")) seed = req.at("seed").get<std::int64_t>();
        const auto text = reply(model, prompt, req.value("temperature", 0.0), seed);
        return json_response(200, {{"id", "mock-" + sha256_hex(prompt).substr(0, 12)},
                                   {"object", "chat.completion"},
                                   {"model", model},
                                   {"choices", {{{"index", 0},
                                                 {"message", {{"role", "assistant"}, {"content", text}}},
                                                 {"finish_reason", "stop"}}}}});
    }
    if (ends_with("/embeddings")) {
        const auto& input = req.value("input", nlohmann::json());
        if (!input.is_string()) return error_response(400, "input must be a string");
        const auto vec = embed_rule(input.get<std::string>());
        return json_response(200, {{"object", "list"},
                                   {"model", model},
                                   {"data", {{{"object", "embedding"}, {"index", 0}, {"embedding", vec.values}}}}});
    }
    return error_response(404, "unknown path");
}

std::string MockLlm::reply(const std::string& model, const std::string& prompt, double temperature,
                           std::optional<std::int64_t> seed) const {
    if (!behavior_.table.empty()) {
        if (auto it = behavior_.table.find(sha256_hex(prompt)); it != behavior_.table.end()) return it->second;
    }
    if (prompt.find("Better judgment") != std::string::npos) return referee_reply(prompt);
    if (prompt.find("Best answer") != std::string::npos && prompt.find(kQueryMarker) != std::string::npos) {
        return judge_reply(prompt);
    }
    return generator_reply(model, prompt, temperature, seed);
}

std::string MockLlm::judge_reply(const std::string& prompt) const {
    if (behavior_.format_violation_rate > 0.0 &&
        unit(hash_of(behavior_.seed, "format", prompt)) < behavior_.format_violation_rate) {
        return "These choices are all reasonable and I would rather not rank them.";
    }

    // A repair prompt quotes the original at its end, so read the last task block.
    const std::string_view p(prompt);
    const auto segment = between(p, kQueryMarker, "\nResult:", /*last=*/true);
    const auto choices = extract_choices(segment);
    const auto m = std::max<std::size_t>(choices.size(), 2);

    std::string aspect_display(between(p.substr(p.rfind("You are an excellent") == std::string_view::npos
                                                    ? 0
                                                    : p.rfind("You are an excellent")),
                                       "from the ", " aspect."));
    std::string aspect_name;
    for (char c : aspect_display) {
        if (c != ' ') aspect_name += c;
    }

    if (behavior_.judge_mode == MockJudgeMode::kPositionBias) {
        const auto b = static_cast<std::size_t>(behavior_.bias_best - 'A') % m;
        auto w = static_cast<std::size_t>(behavior_.bias_worst - 'A') % m;
        if (w == b) w = (b + 1) % m;
        return format_judgment(fmt::format("Choice {} reads best and choice {} reads worst", label_of(b, m),
                                           label_of(w, m)),
                               b, w, m);
    }

    if (behavior_.judge_mode == MockJudgeMode::kScripted) {
        if (auto it = behavior_.script.find(aspect_name); it != behavior_.script.end()) {
            const auto b = index_of(it->second.first, m);
            const auto w = index_of(it->second.second, m);
            return format_judgment(fmt::format("Judged on {}, choice {} is strongest and choice {} is weakest",
                                               aspect_display, label_of(b, m), label_of(w, m)),
                                   b, w, m);
        }
    }

    auto [best, worst] = consensus_of(choices, behavior_.seed);
    double rate = behavior_.dissent_rate;
    if (auto it = behavior_.aspect_dissent.find(aspect_name); it != behavior_.aspect_dissent.end()) rate = it->second;
    const auto h = hash_of(behavior_.seed, segment, aspect_name);
    if (unit(h) < rate) {
        HashStream s(h);
        best = (best + 1 + s.next() % (m - 1)) % m;
        worst = (best + 1 + s.next() % (m - 1)) % m;
    }
    return format_judgment(fmt::format("Judged on {}, choice {} is strongest and choice {} is weakest",
                                       aspect_display, label_of(best, m), label_of(worst, m)),
                           best, worst, m);
}

std::string MockLlm::referee_reply(const std::string& prompt) const {
    const std::string_view p(prompt);
    const auto choices = extract_choices(between(p, kQueryMarker, "\nJudgment A:", /*last=*/true));
    const auto truth = consensus_of(choices, behavior_.seed).first;
    const auto a = extract_letter(between(p, "\nJudgment A:", "\nJudgment B:", true), "best");
    const auto b = extract_letter(between(p, "\nJudgment B:", "\nNote:", true), "best");
    const bool a_ok = a && *a == truth;
    const bool b_ok = b && *b == truth;
    std::string verdict = "Tie";
    if (a_ok && !b_ok) verdict = "A";
    if (b_ok && !a_ok) verdict = "B";
    return fmt::format("Reason:{{Only a judgment naming choice {} as best matches the ground truth}}. "
                       "Better judgment:{{{}}}",
                       static_cast<char>('A' + truth), verdict);
}

std::string MockLlm::generator_reply(const std::string& model, const std::string& prompt, double temperature,
                                     std::optional<std::int64_t> seed) const {
    const auto h = hash_of(behavior_.seed, prompt,
                           fmt::format("{}|{}|{}", model, temperature, seed ? std::to_string(*seed) : "-"));
    const auto tag = fmt::format("{:06x}", h & 0xffffff);
    const auto passage = between(prompt, "Passage 1:", "\n");
    if (!passage.empty()) {
        auto words = split(trim(passage), ' ');
        const auto keep = std::min<std::size_t>(words.size(), 6 + h % 6);
        words.resize(keep);
        while (!words.empty() && !words.back().empty() && std::ispunct(static_cast<unsigned char>(words.back().back()))) {
            words.back().pop_back();
            if (words.back().empty()) words.pop_back();
        }
        return fmt::format("According to the passages, {}. ({} sample {})", join(words, " "), model, tag);
    }
    static constexpr std::string_view kGuesses[] = {"it is unclear", "probably the first option",
                                                    "most likely a recent event", "a well known figure",
                                                    "the common answer"};
    const auto question = between(prompt, "Question:", "\n");
    return fmt::format("I think the answer to{} is {}. ({} sample {})", std::string(question),
                       kGuesses[(h >> 24) % std::size(kGuesses)], model, tag);
}

EmbeddingVector MockLlm::embed_rule(std::string_view text) const {
    const auto dim = behavior_.embedding_dim;
    const auto h = hash_of(behavior_.seed, "embed", text);
    if (behavior_.semantic_embeddings && dim >= 40) {
        const auto best = extract_letter(text, "best");
        const auto worst = extract_letter(text, "worst");
        if (best && worst) {
            std::vector<double> v(dim, 0.0);
            v[*best * 6 + *worst] = 1.0;
            const auto noise = hash_unit_vector(h, dim - 36);
            for (std::size_t i = 0; i < noise.size(); ++i) v[36 + i] = 0.2 * noise[i];
            return {std::move(v)};
        }
    }
    return {hash_unit_vector(h, dim)};
}

// ---------------------------------------------------------------------------

struct MockServer::Impl {
    httplib::Server server;
};

MockServer::MockServer(std::shared_ptr<MockLlm> llm) : impl_(std::make_unique<Impl>()) {
    auto handler = [llm](const httplib::Request& req, httplib::Response& res) {
        const auto out = llm->handle(req.path, req.body);
        res.status = out.status;
        res.set_content(out.body, "application/json");
    };
    impl_->server.Post("/v1/chat/completions", handler);
    impl_->server.Post("/v1/embeddings", handler);
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw Error(ErrorCode::kTransport, "mock server could not bind a loopback port");
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

MockServer::~MockServer() {
    impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

std::string MockServer::base_url() const { return fmt::format("http://127.0.0.1:{}/v1", port_); }

}  // namespace consjudge
