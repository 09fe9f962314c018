#include "consjudge/gateway.hpp"

#include <cstdlib>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "consjudge/dataset_io.hpp"
#include "consjudge/text_util.hpp"

namespace consjudge {

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // begins with '/', or empty
};

ParsedUrl parse_url(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) {
        throw Error(ErrorCode::kConfig, fmt::format("'{}' is not an absolute URL", url));
    }
    const auto scheme = to_lower_ascii(url.substr(0, scheme_end));
    if (scheme != "http" && scheme != "https") {
        throw Error(ErrorCode::kConfig, fmt::format("unsupported URL scheme in '{}'", url));
    }
    const auto host_begin = scheme_end + 3;
    const auto slash = url.find('/', host_begin);
    const auto host = url.substr(host_begin, slash == std::string_view::npos ? std::string_view::npos : slash - host_begin);
    if (host.empty()) throw Error(ErrorCode::kConfig, fmt::format("URL '{}' has no host", url));
    ParsedUrl out;
    out.origin = scheme + "://" + std::string(host);
    if (slash != std::string_view::npos) out.path = std::string(url.substr(slash));
    return out;
}

std::string join_url(const std::string& base, std::string_view suffix) {
    std::string out = base;
    while (!out.empty() && out.back() == '/') out.pop_back();
    out += suffix;
    return out;
}

std::string_view kind_name(EndpointKind k) { return k == EndpointKind::kChat ? "chat" : "embedding"; }

bool retryable(int status) { return status == 429 || status >= 500; }

std::chrono::milliseconds backoff_delay(std::chrono::milliseconds base, int attempt) {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    const auto exp = base * (1LL << std::min(attempt, 16));
    std::uniform_int_distribution<long long> jitter(0, std::max<long long>(base.count(), 0));
    return exp + std::chrono::milliseconds(jitter(rng));
}

}  // namespace

void validate_endpoint(const ModelEndpoint& e) {
    parse_url(e.base_url);
    if (trim(e.model_id).empty()) throw Error(ErrorCode::kConfig, "endpoint model_id must not be empty");
}

HttpResponse HttpTransport::post(const std::string& url, const std::string& body, const HttpHeaders& headers) {
    const auto parsed = parse_url(url);
    httplib::Client client(parsed.origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(parsed.path.empty() ? "/" : parsed.path, h, body, "application/json");
    if (!res) {
        throw Error(ErrorCode::kTransport, fmt::format("POST {} failed: {}", url, httplib::to_string(res.error())));
    }
    return {res->status, res->body};
}

std::string cache_key(const ModelEndpoint& e, std::string_view input, const GenerationParams& params, int ordinal) {
    ojson j;
    j["model"] = e.model_id;
    j["kind"] = kind_name(e.kind);
    j["input"] = std::string(input);
    if (e.kind == EndpointKind::kChat) {
        j["temperature"] = params.temperature;
        j["max_tokens"] = params.max_tokens;
        j["seed"] = params.seed ? ojson(*params.seed) : ojson(nullptr);
        j["ordinal"] = ordinal;
    }
    return sha256_hex(j.dump());
}

ModelGateway::ModelGateway(std::shared_ptr<Transport> transport, GatewayOptions options)
    : transport_(std::move(transport)),
      options_(std::move(options)),
      permits_(std::clamp(options_.permits, 1, 1024)) {
    if (!transport_) throw Error(ErrorCode::kPrecondition, "gateway needs a transport");
    if (options_.max_attempts < 1) throw Error(ErrorCode::kConfig, "max_attempts must be at least 1");
    if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    if (!options_.env) {
        options_.env = [](const std::string& name) -> std::optional<std::string> {
            const char* v = std::getenv(name.c_str());
            if (!v) return std::nullopt;
            return std::string(v);
        };
    }
}

GatewayStats ModelGateway::stats() const { return {requests_.load(), hits_.load(), misses_.load()}; }

void ModelGateway::check_credentials(const ModelEndpoint& endpoint) const {
    if (endpoint.api_key_env.empty()) return;
    const auto v = options_.env(endpoint.api_key_env);
    if (!v || v->empty()) {
        throw Error(ErrorCode::kConfig, fmt::format("environment variable {} (API key for model '{}') is not set",
                                                    endpoint.api_key_env, endpoint.model_id));
    }
}

std::mutex& ModelGateway::key_lock(const std::string& key) {
    std::lock_guard lock(mu_);
    auto& slot = key_locks_[key];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

std::optional<nlohmann::json> ModelGateway::cache_lookup(const std::string& key) {
    if (!options_.read_cache) return std::nullopt;
    {
        std::lock_guard lock(mu_);
        if (auto it = memory_cache_.find(key); it != memory_cache_.end()) return it->second;
    }
    if (!options_.cache_dir) return std::nullopt;
    auto rec = read_cache_record(*options_.cache_dir, key);
    if (!rec || !rec->contains("response")) return std::nullopt;
    auto response = nlohmann::json::parse(rec->at("response").dump());
    std::lock_guard lock(mu_);
    memory_cache_[key] = response;
    return response;
}

void ModelGateway::cache_store(const std::string& key, const nlohmann::ordered_json& record) {
    {
        std::lock_guard lock(mu_);
        memory_cache_[key] = nlohmann::json::parse(record.at("response").dump());
    }
    if (options_.cache_dir) write_cache_record(*options_.cache_dir, key, record);
}

nlohmann::json ModelGateway::send_with_retries(const ModelEndpoint& endpoint, const std::string& path,
                                               const std::string& body, const std::string& key) {
    HttpHeaders headers{{"Content-Type", "application/json"}};
    if (!endpoint.api_key_env.empty()) {
        check_credentials(endpoint);
        headers.emplace_back("Authorization", "Bearer " + *options_.env(endpoint.api_key_env));
    }
    const auto url = join_url(endpoint.base_url, path);
    std::string last_error;
    int last_status = 0;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
        if (attempt > 1) options_.sleep(backoff_delay(options_.backoff_base, attempt - 2));
        HttpResponse res;
        try {
            permits_.acquire();
            struct Release {
                std::counting_semaphore<1024>& s;
                ~Release() { s.release(); }
            } release{permits_};
            ++requests_;
            res = transport_->post(url, body, headers);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::kTransport) throw;
            last_error = e.what();
            last_status = 0;
            spdlog::debug("request {} attempt {} failed: {}", key.substr(0, 12), attempt, last_error);
            continue;
        }
        if (res.status >= 200 && res.status < 300) {
            try {
                return nlohmann::json::parse(res.body);
            } catch (const nlohmann::json::parse_error& e) {
                throw Error(ErrorCode::kMalformedResponse,
                            fmt::format("{} returned invalid JSON: {}", url, e.what()));
            }
        }
        last_status = res.status;
        last_error = fmt::format("HTTP {}", res.status);
        if (!retryable(res.status)) {
            throw Error(ErrorCode::kHttpStatus,
                        fmt::format("{} returned HTTP {}: {}", url, res.status, res.body.substr(0, 200)));
        }
        spdlog::debug("request {} attempt {} got HTTP {}", key.substr(0, 12), attempt, res.status);
    }
    const auto msg = fmt::format("{} failed after {} attempts: {}", url, options_.max_attempts, last_error);
    if (last_status == 429) throw Error(ErrorCode::kRateLimited, msg);
    if (last_status != 0) throw Error(ErrorCode::kHttpStatus, msg);
    throw Error(ErrorCode::kTransport, msg);
}

std::string ModelGateway::chat_complete(const ModelEndpoint& endpoint, std::string_view prompt,
                                        const GenerationParams& params, int ordinal) {
    if (endpoint.kind != EndpointKind::kChat) {
        throw Error(ErrorCode::kPrecondition, fmt::format("model '{}' is not a chat endpoint", endpoint.model_id));
    }
    if (!(params.temperature >= 0.0 && params.temperature <= 2.0)) {
        throw Error(ErrorCode::kRange, fmt::format("temperature {} outside [0, 2]", params.temperature));
    }
    if (params.max_tokens < 1) throw Error(ErrorCode::kRange, "max_tokens must be positive");

    const auto key = cache_key(endpoint, prompt, params, ordinal);
    std::lock_guard key_guard(key_lock(key));
    if (auto hit = cache_lookup(key)) {
        ++hits_;
        return hit->at("content").get<std::string>();
    }
    ++misses_;

    ojson request;
    request["model"] = endpoint.model_id;
    request["messages"] = ojson::array({{{"role", "user"}, {"content", std::string(prompt)}}});
    request["temperature"] = params.temperature;
    request["max_tokens"] = params.max_tokens;
    if (params.seed) request["seed"] = *params.seed + ordinal;

    const auto reply = send_with_retries(endpoint, "/chat/completions", request.dump(), key);
    std::string content;
    try {
        const auto& c = reply.at("choices").at(0).at("message").at("content");
        if (!c.is_string()) throw Error(ErrorCode::kMalformedResponse, "content is not a string");
        content = c.get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::kMalformedResponse,
                    fmt::format("model '{}' response has no choices[0].message.content", endpoint.model_id));
    }
    if (content.empty()) {
        throw Error(ErrorCode::kMalformedResponse, fmt::format("model '{}' returned an empty completion", endpoint.model_id));
    }
    request["ordinal"] = ordinal;
    cache_store(key, make_cache_record(key, "chat", endpoint.model_id, request, ojson{{"content", content}}));
    return content;
}

EmbeddingVector ModelGateway::embed(const ModelEndpoint& endpoint, std::string_view text) {
    if (endpoint.kind != EndpointKind::kEmbedding) {
        throw Error(ErrorCode::kPrecondition,
                    fmt::format("model '{}' is not an embedding endpoint", endpoint.model_id));
    }
    if (text.empty()) throw Error(ErrorCode::kPrecondition, "cannot embed empty text");

    const auto key = cache_key(endpoint, text, GenerationParams{}, 0);
    EmbeddingVector vec;
    {
        std::lock_guard key_guard(key_lock(key));
        if (auto hit = cache_lookup(key)) {
            ++hits_;
            vec.values = hit->at("embedding").get<std::vector<double>>();
        } else {
            ++misses_;
            ojson request;
            request["model"] = endpoint.model_id;
            request["input"] = std::string(text);
            const auto reply = send_with_retries(endpoint, "/embeddings", request.dump(), key);
            try {
                vec.values = reply.at("data").at(0).at("embedding").get<std::vector<double>>();
            } catch (const nlohmann::json::exception&) {
                throw Error(ErrorCode::kMalformedResponse,
                            fmt::format("model '{}' response has no data[0].embedding", endpoint.model_id));
            }
            if (vec.values.empty() || !(vec.norm() > 0.0)) {
                throw Error(ErrorCode::kDegenerateEmbedding,
                            fmt::format("model '{}' returned a zero-norm embedding", endpoint.model_id));
            }
            cache_store(key, make_cache_record(key, "embedding", endpoint.model_id, request,
                                               ojson{{"embedding", vec.values}}));
        }
    }
    if (!(vec.norm() > 0.0)) {
        throw Error(ErrorCode::kDegenerateEmbedding,
                    fmt::format("model '{}' returned a zero-norm embedding", endpoint.model_id));
    }
    std::lock_guard lock(mu_);
    auto [it, inserted] = embedding_dims_.emplace(endpoint.model_id, vec.dim());
    if (!inserted && it->second != vec.dim()) {
        throw Error(ErrorCode::kDimensionMismatch,
                    fmt::format("model '{}' returned dimension {} after earlier vectors of dimension {}",
                                endpoint.model_id, vec.dim(), it->second));
    }
    return vec;
}

}  // namespace consjudge
