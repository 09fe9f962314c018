#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "consjudge/embedding.hpp"
#include "consjudge/gateway.hpp"

namespace consjudge {

enum class MockJudgeMode {
    kConsensus,     // a per-task "true" ranking, with per-aspect dissent
    kPositionBias,  // always the same positions, identical text for every aspect
    kScripted,      // aspect name -> fixed (best, worst)
};

struct MockBehavior {
    std::uint64_t seed = 0;
    MockJudgeMode judge_mode = MockJudgeMode::kConsensus;

    // Consensus mode: probability that an aspect disagrees with the task consensus.
    double dissent_rate = 0.2;
    std::map<std::string, double> aspect_dissent;  // overrides by aspect name

    // Scripted mode: aspect name -> letters. Unlisted aspects fall back to consensus.
    std::map<std::string, std::pair<char, char>> script;

    char bias_best = 'A';
    char bias_worst = 'B';

    // Fraction of judge replies that break the output format (decided per prompt).
    double format_violation_rate = 0.0;
    // Models whose every request gets HTTP 500.
    std::set<std::string> failing_models;

    // Exact replies for prompts, keyed by SHA-256 of the prompt; checked first.
    std::map<std::string, std::string> table;

    std::size_t embedding_dim = 64;
    // Judgments with the same best/worst land close together; others near-orthogonal.
    bool semantic_embeddings = true;

    static MockBehavior from_json(const nlohmann::json& j);
};

std::string_view to_string(MockJudgeMode mode);
MockJudgeMode mock_judge_mode_from_string(std::string_view s);

/// In-process endpoint speaking the OpenAI-compatible wire format.
class MockLlm final : public Transport {
public:
    explicit MockLlm(MockBehavior behavior);

    HttpResponse post(const std::string& url, const std::string& body, const HttpHeaders& headers) override;

    /// Dispatches on the path suffix (/chat/completions or /embeddings).
    HttpResponse handle(std::string_view path, const std::string& body);

    std::string reply(const std::string& model, const std::string& prompt, double temperature,
                      std::optional<std::int64_t> seed) const;
    EmbeddingVector embed_rule(std::string_view text) const;

    std::uint64_t requests() const noexcept { return requests_.load(); }
    const MockBehavior& behavior() const noexcept { return behavior_; }

private:
    std::string judge_reply(const std::string& prompt) const;
    std::string referee_reply(const std::string& prompt) const;
    std::string generator_reply(const std::string& model, const std::string& prompt, double temperature,
                                std::optional<std::int64_t> seed) const;

    MockBehavior behavior_;
    std::atomic<std::uint64_t> requests_{0};
};

/// Loopback HTTP server around a MockLlm; base_url() is usable by HttpTransport.
class MockServer {
public:
    explicit MockServer(std::shared_ptr<MockLlm> llm);
    ~MockServer();
    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    std::string base_url() const;
    int port() const noexcept { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace consjudge
