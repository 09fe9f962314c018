#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "consjudge/embedding.hpp"
#include "consjudge/error.hpp"

namespace consjudge {

enum class EndpointKind { kChat, kEmbedding };

struct ModelEndpoint {
    std::string base_url;     // e.g. "https://api.example.com/v1"
    std::string model_id;
    std::string api_key_env;  // name of the env var holding the bearer token; empty = none
    EndpointKind kind = EndpointKind::kChat;
};

/// Throws kConfig unless base_url is an absolute http(s) URL and model_id is set.
void validate_endpoint(const ModelEndpoint& e);

struct GenerationParams {
    double temperature = 0.0;
    int max_tokens = 512;
    std::optional<std::int64_t> seed;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

/// One POST with a JSON body. Implementations throw Error(kTransport) when
/// the request could not be delivered.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& url, const std::string& body, const HttpHeaders& headers) = 0;
};

/// cpp-httplib backed transport (http and https).
class HttpTransport final : public Transport {
public:
    explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120)) : timeout_(timeout) {}
    HttpResponse post(const std::string& url, const std::string& body, const HttpHeaders& headers) override;

private:
    std::chrono::seconds timeout_;
};

/// Content-address of a request: SHA-256 over the model id, request kind,
/// full input text, generation params and sample ordinal.
std::string cache_key(const ModelEndpoint& e, std::string_view input, const GenerationParams& params, int ordinal);

struct GatewayOptions {
    std::optional<std::filesystem::path> cache_dir;
    bool read_cache = true;  // false = --no-cache: skip lookups, still store
    int permits = 8;
    int max_attempts = 5;
    std::chrono::milliseconds backoff_base{500};
    std::function<void(std::chrono::milliseconds)> sleep;            // defaults to this_thread::sleep_for
    std::function<std::optional<std::string>(const std::string&)> env;  // defaults to getenv
};

struct GatewayStats {
    std::uint64_t requests = 0;      // HTTP attempts actually sent
    std::uint64_t cache_hits = 0;
    std::uint64_t cache_misses = 0;

    double hit_rate() const noexcept {
        const auto total = cache_hits + cache_misses;
        return total ? static_cast<double>(cache_hits) / static_cast<double>(total) : 0.0;
    }
};

/// Thread-safe access to chat and embedding endpoints.
class ModelGateway {
public:
    ModelGateway(std::shared_ptr<Transport> transport, GatewayOptions options = {});

    std::string chat_complete(const ModelEndpoint& endpoint, std::string_view prompt, const GenerationParams& params,
                              int ordinal = 0);

    EmbeddingVector embed(const ModelEndpoint& endpoint, std::string_view text);

    GatewayStats stats() const;

    /// Throws kConfig when the endpoint names an API-key variable that is unset.
    void check_credentials(const ModelEndpoint& endpoint) const;

private:
    std::mutex& key_lock(const std::string& key);
    std::optional<nlohmann::json> cache_lookup(const std::string& key);
    void cache_store(const std::string& key, const nlohmann::ordered_json& record);
    nlohmann::json send_with_retries(const ModelEndpoint& endpoint, const std::string& path,
                                     const std::string& body, const std::string& key);

    std::shared_ptr<Transport> transport_;
    GatewayOptions options_;
    std::counting_semaphore<1024> permits_;

    mutable std::mutex mu_;
    std::unordered_map<std::string, nlohmann::json> memory_cache_;
    std::map<std::string, std::size_t> embedding_dims_;
    // One lock per cache key so concurrent identical requests hit the network once.
    std::unordered_map<std::string, std::unique_ptr<std::mutex>> key_locks_;

    std::atomic<std::uint64_t> requests_{0};
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> misses_{0};
};

}  // namespace consjudge
