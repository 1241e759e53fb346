#pragma once
// Chat-completion backends behind one interface: an HTTP endpoint speaking
// the common JSON wire shape, and a deterministic scripted mock for tests
// and offline demos. Every call lands in a RunLog for budget accounting.

#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgforge/error.hpp"
#include "kgforge/net.hpp"
#include "kgforge/protocol.hpp"

namespace kgforge {

struct CompletionRequest {
    std::string prompt;
    int max_tokens = 256;
    double temperature = 0.7;
    TemplateId tag = TemplateId::extract_entities;  // calling stage, for accounting
};

struct LogEntry {
    TemplateId tag;
    std::string prompt;
    std::string response;
    double latency_ms = 0.0;
};

// Append-only, internally synchronized. One log per pipeline run.
class RunLog {
public:
    void append(LogEntry entry) {
        std::lock_guard<std::mutex> lock(mutex_);
        entries_.push_back(std::move(entry));
    }

    std::vector<LogEntry> entries() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return entries_;
    }

    size_t count(TemplateId tag) const {
        std::lock_guard<std::mutex> lock(mutex_);
        size_t n = 0;
        for (const LogEntry& e : entries_) {
            if (e.tag == tag) ++n;
        }
        return n;
    }

    size_t total() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return entries_.size();
    }

private:
    mutable std::mutex mutex_;
    std::vector<LogEntry> entries_;
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string complete_text(const CompletionRequest& request) = 0;

    // Runs the request and records it. All pipeline code goes through here.
    std::string complete(const CompletionRequest& request, RunLog* log) {
        auto t0 = std::chrono::steady_clock::now();
        std::string response = complete_text(request);
        auto t1 = std::chrono::steady_clock::now();
        if (log) {
            double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            log->append({request.tag, request.prompt, response, ms});
        }
        return response;
    }
};

// --- HTTP backend ------------------------------------------------------------

struct HttpBackendConfig {
    std::string base_url;  // e.g. https://api.example.com/v1
    std::string api_key;
    std::string model;
    int max_retries = 2;
    int backoff_ms = 250;
    int timeout_s = 60;

    static std::optional<HttpBackendConfig> from_env() {
        const char* base = std::getenv("KGFORGE_LLM_BASE_URL");
        if (!base || !*base) return std::nullopt;
        HttpBackendConfig cfg;
        cfg.base_url = base;
        if (const char* key = std::getenv("KGFORGE_LLM_API_KEY")) cfg.api_key = key;
        if (const char* model = std::getenv("KGFORGE_LLM_MODEL")) cfg.model = model;
        return cfg;
    }
};

// POSTs {model, messages, max_tokens, temperature} to <base>/chat/completions
// and reads choices[0].message.content. Transient failures (network, 429,
// 5xx) retry with exponential backoff; anything else fails immediately.
class HttpBackend : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
        if (config_.base_url.empty()) {
            throw Error(ErrorKind::config, "LLM base URL missing (KGFORGE_LLM_BASE_URL)");
        }
        if (config_.model.empty()) {
            throw Error(ErrorKind::config, "LLM model name missing (KGFORGE_LLM_MODEL)");
        }
    }

    std::string complete_text(const CompletionRequest& request) override {
        nlohmann::json payload = {
            {"model", config_.model},
            {"messages", {{{"role", "user"}, {"content", request.prompt}}}},
            {"max_tokens", request.max_tokens},
            {"temperature", request.temperature},
        };
        std::string body = payload.dump();
        BaseUrl url = split_base_url(config_.base_url);
        std::string path = url.path + "/chat/completions";

        std::string raw = with_retries(
            config_.max_retries, config_.backoff_ms,
            [&](std::string& last_error) -> std::optional<std::string> {
                httplib::Client client(url.host);
                client.set_connection_timeout(config_.timeout_s);
                client.set_read_timeout(config_.timeout_s);
                httplib::Headers headers;
                if (!config_.api_key.empty()) {
                    headers.emplace("Authorization", "Bearer " + config_.api_key);
                }
                auto res = client.Post(path, headers, body, "application/json");
                if (!res) {
                    last_error = "connection failed: " + httplib::to_string(res.error());
                    return std::nullopt;
                }
                if (is_transient_status(res->status)) {
                    last_error = "HTTP " + std::to_string(res->status);
                    return std::nullopt;
                }
                if (res->status != 200) {
                    throw Error(ErrorKind::backend,
                                "LLM endpoint returned HTTP " + std::to_string(res->status) +
                                    ": " + res->body);
                }
                return res->body;
            });

        nlohmann::json doc = nlohmann::json::parse(raw, nullptr, false);
        if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty() ||
            !doc["choices"][0].contains("message")) {
            throw Error(ErrorKind::backend, "unexpected completion payload: " + raw);
        }
        return doc["choices"][0]["message"].value("content", std::string{});
    }

private:
    HttpBackendConfig config_;
};

// --- mock backend ------------------------------------------------------------

struct TranscriptEntry {
    std::string match;  // a template id name (tag match) or a prompt substring
    std::string response;
    bool once = false;
};

struct Transcript {
    std::vector<TranscriptEntry> entries;

    static Transcript from_json(const std::string& text) {
        nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
        if (doc.is_discarded() || !doc.is_array()) {
            throw Error(ErrorKind::io, "transcript must be a JSON array of entries");
        }
        Transcript t;
        for (const nlohmann::json& item : doc) {
            if (!item.is_object() || !item.contains("match") || !item.contains("response")) {
                throw Error(ErrorKind::io, "transcript entry needs match and response fields");
            }
            TranscriptEntry e;
            e.match = item["match"].get<std::string>();
            e.response = item["response"].get<std::string>();
            e.once = item.value("once", false);
            t.entries.push_back(std::move(e));
        }
        return t;
    }

    static Transcript from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw Error(ErrorKind::io, "cannot open transcript: " + path);
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        return from_json(ss.str());
    }
};

// Deterministic scripted backend. Entries are checked in order; a matcher
// equal to a template id name matches the request tag, anything else matches
// as a prompt substring. once entries are consumed. A run that needs an
// entry the transcript does not have fails loudly.
class MockBackend : public LlmBackend {
public:
    explicit MockBackend(Transcript transcript) : transcript_(std::move(transcript)) {}

    std::string complete_text(const CompletionRequest& request) override {
        std::lock_guard<std::mutex> lock(mutex_);
        for (size_t i = 0; i < transcript_.entries.size(); ++i) {
            const TranscriptEntry& e = transcript_.entries[i];
            bool hit = false;
            if (auto id = template_id_from_string(e.match)) {
                hit = (*id == request.tag);
            } else {
                hit = contains(request.prompt, e.match);
            }
            if (!hit) continue;
            std::string response = e.response;
            if (e.once) transcript_.entries.erase(transcript_.entries.begin() + i);
            return response;
        }
        throw Error(ErrorKind::backend, "no matching transcript entry for tag " +
                                            to_string(request.tag));
    }

private:
    std::mutex mutex_;
    Transcript transcript_;
};

}  // namespace kgforge
