#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <openssl/evp.h>

#include "httplib.h"
#include "json.hpp"
#include "tablebench/error.hpp"
#include "tablebench/formats.hpp"
#include "tablebench/normalize.hpp"
#include "tablebench/rng.hpp"
#include "tablebench/taskgen.hpp"

namespace tablebench {

// ---------------------------------------------------------------------------
// Requests
// ---------------------------------------------------------------------------

struct CompletionRequest {
    std::string prompt;
    int n = 15;
    double temperature = 0.0;
    int max_tokens = 256;
    std::string model;
};

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Replay cache
// ---------------------------------------------------------------------------

/// Append-only JSONL cache of request-key -> completions. Writes are
/// serialized; the file can be shared between a recording run and later
/// replay runs.
class CompletionCache {
public:
    explicit CompletionCache(std::string path) : path_(std::move(path)) {
        std::ifstream in(path_);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                nlohmann::json j = nlohmann::json::parse(line);
                entries_[j.at("key").get<std::string>()] =
                    j.at("completions").get<std::vector<std::string>>();
            } catch (const nlohmann::json::exception&) {
                continue;  // tolerate a torn trailing line
            }
        }
    }

    /// Stable key over everything that identifies a request.
    static std::string request_key(const CompletionRequest& req) {
        nlohmann::json j{{"prompt", req.prompt},
                         {"n", req.n},
                         {"temperature", req.temperature},
                         {"max_tokens", req.max_tokens},
                         {"model", req.model}};
        return sha256_hex(j.dump());
    }

    std::optional<std::vector<std::string>> lookup(const std::string& key) const {
        std::lock_guard lock(mu_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void append(const std::string& key, const std::vector<std::string>& completions) {
        std::lock_guard lock(mu_);
        if (entries_.count(key)) return;
        entries_[key] = completions;
        std::ofstream out(path_, std::ios::app);
        nlohmann::json j{{"key", key}, {"completions", completions}};
        out << j.dump() << "\n";
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

private:
    std::string path_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::vector<std::string>> entries_;
};

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// Uniform completion interface. Oracle backends consult the task instance's
/// own answer key, which makes desk-scale end-to-end verification possible
/// without a live endpoint.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual bool deterministic() const { return true; }
    virtual std::vector<std::string> complete(const CompletionRequest& req,
                                              const TaskInstance* ctx) = 0;
};

/// Answers every request correctly from the instance's answer key.
class PerfectOracleBackend final : public Backend {
public:
    std::string id() const override { return "perfect_oracle"; }

    std::vector<std::string> complete(const CompletionRequest& req,
                                      const TaskInstance* ctx) override {
        if (!ctx) throw Error("oracle backend needs the task instance");
        return std::vector<std::string>(static_cast<std::size_t>(req.n), oracle_answer(*ctx));
    }

    static std::string oracle_answer(const TaskInstance& inst) {
        if (inst.answer.is_fact()) {
            if (inst.answer.accept_set.empty()) throw Error("instance has an empty accept set");
            return *inst.answer.accept_set.begin();
        }
        return serialize(*inst.answer.gold_table, *inst.answer.required_format);
    }
};

/// Flips a seeded fraction of answers to wrong values: round(rate * n)
/// completions per request are corrupted, deterministically per instance.
class CorruptOracleBackend final : public Backend {
public:
    CorruptOracleBackend(double rate, std::uint64_t seed) : rate_(rate), seed_(seed) {}

    std::string id() const override { return "corrupt_oracle(" + std::to_string(rate_) + ")"; }

    std::vector<std::string> complete(const CompletionRequest& req,
                                      const TaskInstance* ctx) override {
        if (!ctx) throw Error("oracle backend needs the task instance");
        const std::size_t n = static_cast<std::size_t>(req.n);
        std::vector<std::string> out(n, PerfectOracleBackend::oracle_answer(*ctx));
        for (std::size_t i : corrupted_indices(*ctx, n)) out[i] = wrong_answer(*ctx);
        return out;
    }

    /// The deterministic corruption schedule for an instance; exposed so
    /// tests can compute exact expected scores from it.
    std::vector<std::size_t> corrupted_indices(const TaskInstance& inst, std::size_t n) const {
        Rng rng(seed_combine(seed_, inst.id));
        const auto k = static_cast<std::size_t>(std::llround(rate_ * static_cast<double>(n)));
        return rng.sample_without_replacement(n, std::min(k, n));
    }

    static std::string wrong_answer(const TaskInstance& inst) {
        if (!inst.answer.is_fact()) return "";  // unparseable: scores zero
        std::string candidate = *inst.answer.accept_set.begin() + "-wrong";
        while (inst.answer.accept_set.count(normalize_answer(candidate))) candidate += "x";
        return candidate;
    }

    double rate() const { return rate_; }

private:
    double rate_;
    std::uint64_t seed_;
};

/// Replays recorded completions; a prompt that was never recorded is an error.
class ReplayBackend final : public Backend {
public:
    explicit ReplayBackend(std::shared_ptr<CompletionCache> cache) : cache_(std::move(cache)) {}

    std::string id() const override { return "replay"; }

    std::vector<std::string> complete(const CompletionRequest& req,
                                      const TaskInstance*) override {
        auto hit = cache_->lookup(CompletionCache::request_key(req));
        if (!hit) throw CacheMissError("replay cache has no entry for this request");
        return *hit;
    }

private:
    std::shared_ptr<CompletionCache> cache_;
};

// ---------------------------------------------------------------------------
// HTTP backend (OpenAI-compatible completions endpoint)
// ---------------------------------------------------------------------------

struct BackendConfig {
    std::string kind = "perfect_oracle";  // http | replay | perfect_oracle | corrupt_oracle
    double corrupt_rate = 0.2;
    std::uint64_t seed = 0;
    std::string url;                      // scheme://host[:port]
    std::string path = "/v1/completions";
    std::string model = "text-davinci-003";
    std::string api_key_env = "OPENAI_API_KEY";
    std::string cache_path;               // record (non-replay) or replay source
    int max_retries = 5;
    int backoff_ms = 500;
    int timeout_s = 60;
    std::int64_t tokens_per_minute = 0;   // 0 = unlimited
    int max_in_flight = 4;
};

/// Minute-window token budget shared by all worker threads.
class TokenBudget {
public:
    explicit TokenBudget(std::int64_t per_minute) : per_minute_(per_minute) {}

    void acquire(std::int64_t tokens) {
        if (per_minute_ <= 0) return;
        using clock = std::chrono::steady_clock;
        std::unique_lock lock(mu_);
        while (true) {
            auto now = clock::now();
            if (window_start_.time_since_epoch().count() == 0 ||
                now - window_start_ >= std::chrono::seconds(60)) {
                window_start_ = now;
                used_ = 0;
            }
            if (used_ + tokens <= per_minute_ || used_ == 0) {
                used_ += tokens;
                return;
            }
            auto wake = window_start_ + std::chrono::seconds(60);
            lock.unlock();
            std::this_thread::sleep_until(wake);
            lock.lock();
        }
    }

private:
    std::int64_t per_minute_;
    std::int64_t used_ = 0;
    std::chrono::steady_clock::time_point window_start_{};
    std::mutex mu_;
};

class HttpBackend final : public Backend {
public:
    explicit HttpBackend(BackendConfig cfg)
        : cfg_(std::move(cfg)), budget_(cfg_.tokens_per_minute) {
        if (cfg_.url.empty()) throw ConfigError("http backend requires a url");
    }

    std::string id() const override { return "http:" + cfg_.model; }
    bool deterministic() const override { return false; }

    std::vector<std::string> complete(const CompletionRequest& req,
                                      const TaskInstance*) override {
        nlohmann::json body{{"model", req.model.empty() ? cfg_.model : req.model},
                            {"prompt", req.prompt},
                            {"n", req.n},
                            {"temperature", req.temperature},
                            {"max_tokens", req.max_tokens}};
        const std::string payload = body.dump();
        httplib::Headers headers;
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);

        budget_.acquire(token_estimate(req.prompt) +
                        static_cast<std::int64_t>(req.n) * req.max_tokens);

        int last_status = 0;
        std::string last_error = "no response";
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(cfg_.backoff_ms << (attempt - 1)));
            httplib::Client cli(cfg_.url);
            cli.set_connection_timeout(cfg_.timeout_s, 0);
            cli.set_read_timeout(cfg_.timeout_s, 0);
            auto res = cli.Post(cfg_.path, headers, payload, "application/json");
            if (!res) {
                last_status = 0;
                last_error = "connection failed: " + httplib::to_string(res.error());
                continue;
            }
            last_status = res->status;
            if (res->status == 401 || res->status == 403)
                throw ConfigError("endpoint rejected credentials (status " +
                                  std::to_string(res->status) + ")");
            if (res->status == 429 || res->status >= 500) {
                last_error = "status " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw TransportError(res->status,
                                     "unexpected status " + std::to_string(res->status));
            return parse_choices(res->body, req.n);
        }
        throw TransportError(last_status, "retry budget exhausted: " + last_error);
    }

private:
    static std::vector<std::string> parse_choices(const std::string& body, int n) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(200, std::string("malformed response body: ") + e.what());
        }
        if (!j.contains("choices") || !j["choices"].is_array())
            throw TransportError(200, "response has no choices array");
        std::vector<std::string> out;
        for (const auto& choice : j["choices"])
            out.push_back(choice.value("text", ""));
        if (out.size() != static_cast<std::size_t>(n))
            throw TransportError(200, "expected " + std::to_string(n) + " completions, got " +
                                          std::to_string(out.size()));
        return out;
    }

    BackendConfig cfg_;
    TokenBudget budget_;
};

/// Records every request/response pair into the cache; cache hits
/// short-circuit the inner backend.
class CachingBackend final : public Backend {
public:
    CachingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<CompletionCache> cache)
        : inner_(std::move(inner)), cache_(std::move(cache)) {}

    std::string id() const override { return inner_->id(); }
    bool deterministic() const override { return inner_->deterministic(); }

    std::vector<std::string> complete(const CompletionRequest& req,
                                      const TaskInstance* ctx) override {
        const std::string key = CompletionCache::request_key(req);
        if (auto hit = cache_->lookup(key)) return *hit;
        std::vector<std::string> completions = inner_->complete(req, ctx);
        cache_->append(key, completions);
        return completions;
    }

private:
    std::shared_ptr<Backend> inner_;
    std::shared_ptr<CompletionCache> cache_;
};

inline std::shared_ptr<Backend> make_backend(const BackendConfig& cfg) {
    std::shared_ptr<Backend> backend;
    if (cfg.kind == "perfect_oracle") {
        backend = std::make_shared<PerfectOracleBackend>();
    } else if (cfg.kind == "corrupt_oracle") {
        backend = std::make_shared<CorruptOracleBackend>(cfg.corrupt_rate, cfg.seed);
    } else if (cfg.kind == "replay") {
        if (cfg.cache_path.empty()) throw ConfigError("replay backend requires cache_path");
        return std::make_shared<ReplayBackend>(std::make_shared<CompletionCache>(cfg.cache_path));
    } else if (cfg.kind == "http") {
        backend = std::make_shared<HttpBackend>(cfg);
    } else {
        throw ConfigError("unknown backend kind \"" + cfg.kind + "\"");
    }
    if (!cfg.cache_path.empty())
        backend = std::make_shared<CachingBackend>(
            std::move(backend), std::make_shared<CompletionCache>(cfg.cache_path));
    return backend;
}

}  // namespace tablebench
