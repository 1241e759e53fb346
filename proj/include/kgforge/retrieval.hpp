#pragma once
// External document retrieval: pluggable providers (wikipedia, web search,
// local corpus), blank-line paragraph splitting, and BM25 ranking over the
// per-query candidate pool.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "kgforge/error.hpp"
#include "kgforge/graph.hpp"
#include "kgforge/net.hpp"
#include "kgforge/text.hpp"

namespace kgforge {

enum class DocSource { wikipedia, web_search, local_corpus };

inline std::string to_string(DocSource s) {
    switch (s) {
        case DocSource::wikipedia: return "wikipedia";
        case DocSource::web_search: return "web_search";
        case DocSource::local_corpus: return "local_corpus";
    }
    return "local_corpus";
}

struct Document {
    DocSource source = DocSource::local_corpus;
    std::string locator;  // URL or file path
    std::string title;
    std::string body;
};

struct Paragraph {
    size_t doc_index = 0;  // position of the document in the fetched list
    size_t index = 0;      // ordinal within the document
    std::string text;
};

// Search query for a triplet: the three fields joined by single spaces.
inline std::string build_query(const Triplet& t) {
    return t.subject + " " + t.relation + " " + t.object;
}

// Splits on blank-line boundaries. Runs of segments shorter than 20
// characters merge into the next full-size segment; trailing shorts with no
// such segment stand alone.
inline std::vector<Paragraph> split_paragraphs(const Document& doc, size_t doc_index = 0) {
    if (doc.body.empty()) {
        throw Error(ErrorKind::precondition, "split_paragraphs: document body is empty");
    }
    std::vector<std::string> segments;
    std::string current;
    for (const std::string& line : split_lines(doc.body)) {
        if (trim(line).empty()) {
            if (!current.empty()) {
                segments.push_back(trim(current));
                current.clear();
            }
        } else {
            if (!current.empty()) current += "\n";
            current += line;
        }
    }
    if (!current.empty()) segments.push_back(trim(current));

    constexpr size_t kMinLen = 20;
    std::vector<std::string> merged;
    std::vector<std::string> carry;
    for (std::string& seg : segments) {
        if (seg.size() < kMinLen) {
            carry.push_back(std::move(seg));
        } else {
            carry.push_back(std::move(seg));
            merged.push_back(join(carry, "\n"));
            carry.clear();
        }
    }
    for (std::string& seg : carry) merged.push_back(std::move(seg));

    std::vector<Paragraph> out;
    out.reserve(merged.size());
    for (size_t i = 0; i < merged.size(); ++i) {
        out.push_back({doc_index, i, std::move(merged[i])});
    }
    return out;
}

inline std::vector<Paragraph> split_all(const std::vector<Document>& docs) {
    std::vector<Paragraph> pool;
    for (size_t d = 0; d < docs.size(); ++d) {
        if (docs[d].body.empty()) continue;
        for (Paragraph& p : split_paragraphs(docs[d], d)) pool.push_back(std::move(p));
    }
    return pool;
}

// --- BM25 --------------------------------------------------------------------

struct CorpusStats {
    size_t n_docs = 0;                       // paragraphs in the pool
    double avg_len = 0.0;                    // mean token count
    std::map<std::string, size_t> doc_freq;  // term -> paragraphs containing it

    static CorpusStats build(const std::vector<std::vector<std::string>>& tokenized) {
        CorpusStats stats;
        stats.n_docs = tokenized.size();
        size_t total = 0;
        for (const auto& tokens : tokenized) {
            total += tokens.size();
            std::set<std::string> unique(tokens.begin(), tokens.end());
            for (const std::string& t : unique) stats.doc_freq[t]++;
        }
        stats.avg_len = stats.n_docs ? static_cast<double>(total) / stats.n_docs : 0.0;
        return stats;
    }
};

struct ScoredParagraph {
    Paragraph paragraph;
    double score = 0.0;
};

inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;

// Okapi BM25 with the non-negative IDF variant ln(1 + (N-df+0.5)/(df+0.5)).
// Returns the k highest-scoring paragraphs, ties broken by (document order,
// paragraph index). Fewer than k candidates -> all of them.
inline std::vector<ScoredParagraph> bm25_rank(const std::string& query,
                                              const std::vector<Paragraph>& paragraphs, int k) {
    if (k < 1) {
        throw Error(ErrorKind::precondition, "bm25_rank: k must be >= 1");
    }
    if (paragraphs.empty()) {
        throw Error(ErrorKind::precondition, "bm25_rank: no paragraphs to rank");
    }
    std::vector<std::vector<std::string>> tokenized;
    tokenized.reserve(paragraphs.size());
    for (const Paragraph& p : paragraphs) tokenized.push_back(tokenize(p.text));
    CorpusStats stats = CorpusStats::build(tokenized);

    std::vector<std::string> terms = tokenize(query);
    double n = static_cast<double>(stats.n_docs);

    std::vector<ScoredParagraph> scored;
    scored.reserve(paragraphs.size());
    for (size_t i = 0; i < paragraphs.size(); ++i) {
        std::map<std::string, size_t> tf;
        for (const std::string& t : tokenized[i]) tf[t]++;
        double len = static_cast<double>(tokenized[i].size());
        double score = 0.0;
        for (const std::string& term : terms) {
            auto it = tf.find(term);
            if (it == tf.end()) continue;
            double f = static_cast<double>(it->second);
            double df = static_cast<double>(stats.doc_freq.at(term));
            double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
            score += idf * (f * (kBm25K1 + 1.0)) /
                     (f + kBm25K1 * (1.0 - kBm25B + kBm25B * len / stats.avg_len));
        }
        scored.push_back({paragraphs[i], score});
    }

    std::stable_sort(scored.begin(), scored.end(),
                     [](const ScoredParagraph& a, const ScoredParagraph& b) {
                         return a.score > b.score;
                     });
    if (scored.size() > static_cast<size_t>(k)) scored.resize(static_cast<size_t>(k));
    return scored;
}

// --- providers ---------------------------------------------------------------

class SearchProvider {
public:
    virtual ~SearchProvider() = default;
    virtual std::string name() const = 0;
    // Zero results is an empty list, not an error.
    virtual std::vector<Document> fetch(const std::string& query) = 0;
};

// Offline provider over a directory of UTF-8 text files (filename stem =
// document title). Files are scored by distinct query-term overlap against
// title + body; only overlapping files are returned, best first.
class LocalCorpusProvider : public SearchProvider {
public:
    explicit LocalCorpusProvider(std::string dir) : dir_(std::move(dir)) {
        if (!std::filesystem::is_directory(dir_)) {
            throw Error(ErrorKind::config, "local corpus directory not found: " + dir_);
        }
    }

    std::string name() const override { return "local_corpus"; }

    std::vector<Document> fetch(const std::string& query) override {
        std::vector<std::string> terms = tokenize(query);
        std::set<std::string> unique_terms(terms.begin(), terms.end());

        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());

        std::vector<std::pair<size_t, Document>> hits;
        for (const auto& path : files) {
            std::ifstream in(path, std::ios::binary);
            if (!in) continue;
            std::ostringstream ss;
            ss << in.rdbuf();
            Document doc{DocSource::local_corpus, path.string(), path.stem().string(), ss.str()};
            std::vector<std::string> doc_tokens = tokenize(doc.title + " " + doc.body);
            std::set<std::string> vocab(doc_tokens.begin(), doc_tokens.end());
            size_t overlap = 0;
            for (const std::string& t : unique_terms) {
                if (vocab.count(t)) ++overlap;
            }
            if (overlap > 0) hits.emplace_back(overlap, std::move(doc));
        }
        std::stable_sort(hits.begin(), hits.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        std::vector<Document> out;
        out.reserve(hits.size());
        for (auto& [_, doc] : hits) out.push_back(std::move(doc));
        return out;
    }

private:
    std::string dir_;
};

// MediaWiki search + plain-text extracts for the top title matches.
class WikipediaProvider : public SearchProvider {
public:
    explicit WikipediaProvider(std::string base_url = {}, int max_titles = 3)
        : base_url_(std::move(base_url)), max_titles_(max_titles) {
        if (base_url_.empty()) {
            if (const char* env = std::getenv("KGFORGE_WIKI_BASE_URL")) base_url_ = env;
        }
        if (base_url_.empty()) base_url_ = "https://en.wikipedia.org";
    }

    std::string name() const override { return "wikipedia"; }

    std::vector<Document> fetch(const std::string& query) override {
        BaseUrl url = split_base_url(base_url_);
        std::string path = url.path +
                           "/w/api.php?action=query&format=json&generator=search&gsrsearch=" +
                           httplib::detail::encode_url(query) +
                           "&gsrlimit=" + std::to_string(max_titles_) +
                           "&prop=extracts&explaintext=1&exlimit=" + std::to_string(max_titles_);
        std::string raw = with_retries(2, 250, [&](std::string& last_error) -> std::optional<std::string> {
            httplib::Client client(url.host);
            client.set_connection_timeout(20);
            client.set_read_timeout(20);
            client.set_follow_location(true);
            auto res = client.Get(path);
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
                            "wikipedia returned HTTP " + std::to_string(res->status));
            }
            return res->body;
        });

        nlohmann::json doc = nlohmann::json::parse(raw, nullptr, false);
        std::vector<Document> out;
        if (doc.is_discarded() || !doc.contains("query") || !doc["query"].contains("pages")) {
            return out;  // no results
        }
        // Pages arrive keyed by page id; order by search index for determinism.
        std::vector<std::pair<int, Document>> pages;
        for (const auto& [_, page] : doc["query"]["pages"].items()) {
            Document d;
            d.source = DocSource::wikipedia;
            d.title = page.value("title", std::string{});
            d.body = page.value("extract", std::string{});
            d.locator = base_url_ + "/wiki/" + d.title;
            if (!d.body.empty()) pages.emplace_back(page.value("index", 0), std::move(d));
        }
        std::sort(pages.begin(), pages.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (auto& [_, d] : pages) out.push_back(std::move(d));
        return out;
    }

private:
    std::string base_url_;
    int max_titles_;
};

// Generic JSON search API: POST {"q": query, "num": n} with an X-API-KEY
// header, organic/results array with title/snippet(/link) fields.
class WebSearchProvider : public SearchProvider {
public:
    WebSearchProvider(std::string base_url = {}, std::string api_key = {}, int max_results = 5)
        : base_url_(std::move(base_url)), api_key_(std::move(api_key)), max_results_(max_results) {
        if (base_url_.empty()) {
            if (const char* env = std::getenv("KGFORGE_SEARCH_BASE_URL")) base_url_ = env;
        }
        if (api_key_.empty()) {
            if (const char* env = std::getenv("KGFORGE_SEARCH_API_KEY")) api_key_ = env;
        }
        if (base_url_.empty()) {
            throw Error(ErrorKind::config,
                        "web search base URL missing (KGFORGE_SEARCH_BASE_URL)");
        }
        if (api_key_.empty()) {
            throw Error(ErrorKind::config, "web search API key missing (KGFORGE_SEARCH_API_KEY)");
        }
    }

    std::string name() const override { return "web_search"; }

    std::vector<Document> fetch(const std::string& query) override {
        BaseUrl url = split_base_url(base_url_);
        nlohmann::json payload = {{"q", query}, {"num", max_results_}};
        std::string body = payload.dump();
        std::string raw = with_retries(2, 250, [&](std::string& last_error) -> std::optional<std::string> {
            httplib::Client client(url.host);
            client.set_connection_timeout(20);
            client.set_read_timeout(20);
            httplib::Headers headers{{"X-API-KEY", api_key_}};
            auto res = client.Post(url.path + "/search", headers, body, "application/json");
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
                            "web search returned HTTP " + std::to_string(res->status));
            }
            return res->body;
        });

        nlohmann::json doc = nlohmann::json::parse(raw, nullptr, false);
        std::vector<Document> out;
        if (doc.is_discarded()) return out;
        const nlohmann::json* items = nullptr;
        if (doc.contains("organic") && doc["organic"].is_array()) items = &doc["organic"];
        else if (doc.contains("results") && doc["results"].is_array()) items = &doc["results"];
        if (!items) return out;
        for (const nlohmann::json& item : *items) {
            if (out.size() >= static_cast<size_t>(max_results_)) break;
            Document d;
            d.source = DocSource::web_search;
            d.title = item.value("title", std::string{});
            d.locator = item.value("link", item.value("url", std::string{}));
            d.body = item.value("snippet", item.value("content", std::string{}));
            if (!d.body.empty()) out.push_back(std::move(d));
        }
        return out;
    }

private:
    std::string base_url_;
    std::string api_key_;
    int max_results_;
};

using ProviderList = std::vector<std::shared_ptr<SearchProvider>>;

// Fetches from every provider in order and pools the documents.
inline std::vector<Document> fetch_all(const ProviderList& providers, const std::string& query) {
    std::vector<Document> docs;
    for (const auto& provider : providers) {
        std::vector<Document> batch = provider->fetch(query);
        for (Document& d : batch) docs.push_back(std::move(d));
    }
    return docs;
}

}  // namespace kgforge
