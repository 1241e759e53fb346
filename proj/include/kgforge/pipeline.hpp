#pragma once
// The four-stage pipeline: seed-graph initialization from the question,
// breadth-first internal expansion to depth D, S external retrieval steps
// (correct / expand selected triplets), answering restricted to the graph.
// Plus the TextRAG baseline and an internal-only mode that skips retrieval.

#include <chrono>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kgforge/error.hpp"
#include "kgforge/graph.hpp"
#include "kgforge/llm.hpp"
#include "kgforge/protocol.hpp"
#include "kgforge/retrieval.hpp"
#include "kgforge/text.hpp"

namespace kgforge {

enum class Mode { internal_only, external };

inline std::string to_string(Mode m) {
    return m == Mode::internal_only ? "internal_only" : "external";
}

inline std::optional<Mode> mode_from_string(std::string_view s) {
    if (s == "internal_only") return Mode::internal_only;
    if (s == "external") return Mode::external;
    return std::nullopt;
}

struct PipelineConfig {
    int depth_d = 3;                   // expansion depth D
    int retrieval_steps_s = 5;         // retrieval budget S
    int top_k = 3;                     // BM25 paragraphs per query
    Mode mode = Mode::external;
    int max_parse_retries = 2;         // total attempts per parse-sensitive call
    int expansion_cap_per_entity = 5;
    int max_tokens = 256;
    double temperature = 0.7;
    int workers = 1;                   // eval-level parallelism
    int runs = 1;                      // eval-level repetitions

    int attempts() const { return max_parse_retries < 1 ? 1 : max_parse_retries; }

    void validate() const {
        if (depth_d < 0) throw Error(ErrorKind::config, "depth_d must be >= 0");
        if (retrieval_steps_s < 0) throw Error(ErrorKind::config, "retrieval_steps_s must be >= 0");
        if (top_k < 1) throw Error(ErrorKind::config, "top_k must be >= 1");
        if (expansion_cap_per_entity < 1)
            throw Error(ErrorKind::config, "expansion_cap_per_entity must be >= 1");
        if (workers < 1) throw Error(ErrorKind::config, "workers must be >= 1");
        if (runs < 1) throw Error(ErrorKind::config, "runs must be >= 1");
    }
};

// `key = value` lines, '#' comments. Unknown keys are rejected so typos do
// not silently fall back to defaults.
struct ConfigFile {
    PipelineConfig pipeline;
    std::vector<std::string> providers;  // local_corpus | wikipedia | web_search
    std::string corpus_dir;

    static ConfigFile parse(const std::string& text) {
        ConfigFile out;
        int line_no = 0;
        for (const std::string& raw : split_lines(text)) {
            ++line_no;
            std::string line = trim(raw);
            if (line.empty() || line[0] == '#') continue;
            size_t eq = line.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorKind::config,
                            "config line " + std::to_string(line_no) + ": expected key = value");
            }
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            auto as_int = [&](int& slot) {
                try {
                    slot = std::stoi(value);
                } catch (const std::exception&) {
                    throw Error(ErrorKind::config,
                                "config line " + std::to_string(line_no) + ": bad integer for " + key);
                }
            };
            if (key == "depth_d") as_int(out.pipeline.depth_d);
            else if (key == "retrieval_steps_s") as_int(out.pipeline.retrieval_steps_s);
            else if (key == "top_k") as_int(out.pipeline.top_k);
            else if (key == "max_parse_retries") as_int(out.pipeline.max_parse_retries);
            else if (key == "expansion_cap_per_entity") as_int(out.pipeline.expansion_cap_per_entity);
            else if (key == "workers") as_int(out.pipeline.workers);
            else if (key == "runs") as_int(out.pipeline.runs);
            else if (key == "mode") {
                auto m = mode_from_string(value);
                if (!m) throw Error(ErrorKind::config, "unknown mode: " + value);
                out.pipeline.mode = *m;
            } else if (key == "providers") {
                out.providers.clear();
                std::string cur;
                for (char c : value + ",") {
                    if (c == ',') {
                        std::string name = trim(cur);
                        if (!name.empty()) out.providers.push_back(name);
                        cur.clear();
                    } else {
                        cur.push_back(c);
                    }
                }
            } else if (key == "corpus_dir") {
                out.corpus_dir = value;
            } else {
                throw Error(ErrorKind::config,
                            "config line " + std::to_string(line_no) + ": unknown key " + key);
            }
        }
        return out;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorKind::io, "cannot open config: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }
};

// --- run record ----------------------------------------------------------------

enum class ActionOutcome { applied_correct, applied_expand, skipped_no_context, skipped_parse_failure };

inline std::string to_string(ActionOutcome o) {
    switch (o) {
        case ActionOutcome::applied_correct: return "applied_correct";
        case ActionOutcome::applied_expand: return "applied_expand";
        case ActionOutcome::skipped_no_context: return "skipped_no_context";
        case ActionOutcome::skipped_parse_failure: return "skipped_parse_failure";
    }
    return "skipped_parse_failure";
}

struct RetrievalAction {
    int step = 0;
    ActionOutcome outcome = ActionOutcome::skipped_parse_failure;
    std::optional<ActionKind> action;
    std::optional<Triplet> target;
    std::string query;
    std::vector<std::string> paragraphs;       // chosen paragraph texts, rank order
    std::vector<Triplet> resulting_triplets;   // replacement or newly merged triplets
};

struct RunRecord {
    std::string question;
    std::string method = "kg";  // kg | textrag
    Mode mode = Mode::external;
    std::string final_answer;
    bool on_graph = false;
    KnowledgeGraph g0, g1, gstar;
    std::vector<std::string> seed_entities;
    std::vector<RetrievalAction> actions;
    std::string context;  // TextRAG retrieved context
    std::map<std::string, double> stage_ms;
    std::map<std::string, size_t> llm_calls;  // per stage tag
    size_t prompt_chars = 0;
    size_t response_chars = 0;
    bool aborted = false;
    std::string error;
    std::shared_ptr<RunLog> log = std::make_shared<RunLog>();

    void finish_accounting() {
        llm_calls.clear();
        prompt_chars = 0;
        response_chars = 0;
        for (const LogEntry& e : log->entries()) {
            llm_calls[to_string(e.tag)]++;
            prompt_chars += e.prompt.size();
            response_chars += e.response.size();
        }
    }
};

// --- pipeline -------------------------------------------------------------------

class Pipeline {
public:
    Pipeline(const PromptLibrary& prompts, PipelineConfig config, LlmBackend& backend,
             ProviderList providers = {})
        : prompts_(prompts), config_(std::move(config)), backend_(backend),
          providers_(std::move(providers)) {
        config_.validate();
        if (config_.mode == Mode::external && providers_.empty()) {
            throw Error(ErrorKind::config, "external mode requires at least one search provider");
        }
    }

    struct InitResult {
        KnowledgeGraph graph;
        std::vector<std::string> seeds;  // every extracted entity, isolated ones included
    };

    // Stage A: seed graph from the question. Entities come from the Step-1
    // numbered list, relations from the Step-2 arrow lines; isolated entities
    // survive in the seed set.
    InitResult initialize_graph(const std::string& question, RunLog* log) {
        if (trim(question).empty()) {
            throw Error(ErrorKind::precondition, "question is empty");
        }
        std::string last_error;
        for (int attempt = 0; attempt < config_.attempts(); ++attempt) {
            std::string prompt = prompts_.render(TemplateId::extract_entities,
                                                 {{"question", question}});
            std::string response = complete(TemplateId::extract_entities, prompt, log);
            auto entities = parse_entity_list(response);
            if (!entities) {
                last_error = entities.error().message;
                continue;
            }
            InitResult out;
            out.graph = KnowledgeGraph(question, Stage::G0);
            out.seeds = entities.value();
            for (const TripletFields& f : parse_triplet_lines(response)) {
                auto t = Triplet::try_make(f.subject, f.relation, f.object, Provenance::question);
                if (t) out.graph.add(*t);
            }
            return out;
        }
        throw Error(ErrorKind::backend,
                    "initialization parsed zero entities after " +
                        std::to_string(config_.attempts()) + " attempts: " + last_error);
    }

    // The entity universe a frontier may draw from: triplet entities plus
    // isolated seeds, minus already-visited ones.
    static std::vector<std::string> unvisited_entities(const KnowledgeGraph& graph,
                                                       const std::vector<std::string>& seeds,
                                                       const Frontier& frontier) {
        std::vector<std::string> out;
        std::set<std::string> seen;
        auto push = [&](const std::string& name) {
            std::string k = norm_key(name);
            if (frontier.is_visited(name)) return;
            if (seen.insert(k).second) out.push_back(name);
        };
        for (const std::string& s : seeds) push(s);
        for (const std::string& e : graph.entities()) push(e);
        return out;
    }

    // Stage B helper: asks which entities are unclear and crucial. The reply
    // is intersected with the candidates (the model cannot invent frontier
    // members); a parse failure after retries falls back to all candidates.
    std::vector<std::string> filter_frontier(const std::string& question,
                                             const std::vector<std::string>& candidates,
                                             RunLog* log) {
        std::string entity_list = format_entity_list(candidates);
        for (int attempt = 0; attempt < config_.attempts(); ++attempt) {
            std::string prompt = prompts_.render(
                TemplateId::filter_entities, {{"question", question}, {"entities", entity_list}});
            std::string response = complete(TemplateId::filter_entities, prompt, log);
            auto parsed = parse_entity_list(response);
            if (!parsed) continue;
            std::map<std::string, const std::string*> by_key;
            for (const std::string& c : candidates) by_key.emplace(norm_key(c), &c);
            std::vector<std::string> kept;
            for (const std::string& name : parsed.value()) {
                auto it = by_key.find(norm_key(name));
                if (it != by_key.end()) kept.push_back(*it->second);
            }
            return kept;
        }
        return candidates;
    }

    // Stage B: breadth-first expansion, one filter per depth, at most
    // expansion_cap_per_entity subject-anchored triplets per frontier entity.
    KnowledgeGraph expand_graph(const std::string& question, const KnowledgeGraph& g0,
                                const std::vector<std::string>& seeds, RunLog* log) {
        KnowledgeGraph graph = g0;
        Frontier frontier;
        for (int depth = 1; depth <= config_.depth_d; ++depth) {
            std::vector<std::string> candidates = unvisited_entities(graph, seeds, frontier);
            if (candidates.empty()) break;
            std::vector<std::string> selected = filter_frontier(question, candidates, log);
            if (selected.empty()) break;
            for (const std::string& entity : selected) frontier.push(entity, depth);

            while (auto entry = frontier.pop()) {
                frontier.mark_visited(entry->entity);
                std::vector<Triplet> found = expand_entity(question, entry->entity, log);
                for (Triplet& t : found) graph.add(std::move(t));
            }
        }
        graph.set_stage(Stage::G1);
        return graph;
    }

    // One expansion call: keeps triplets whose subject matches the source
    // entity, capped. Zero survivors counts as a soft failure and retries;
    // after that the entity is skipped.
    std::vector<Triplet> expand_entity(const std::string& question, const std::string& entity,
                                       RunLog* log) {
        for (int attempt = 0; attempt < config_.attempts(); ++attempt) {
            std::string prompt = prompts_.render(TemplateId::expand_entity,
                                                 {{"source entity", entity},
                                                  {"question", question},
                                                  {"sentence text", ""}});
            std::string response = complete(TemplateId::expand_entity, prompt, log);
            std::vector<Triplet> kept;
            for (const TripletFields& f : parse_triplet_lines(response)) {
                if (norm_key(f.subject) != norm_key(entity)) continue;
                auto t = Triplet::try_make(f.subject, f.relation, f.object, Provenance::internal);
                if (!t) continue;
                kept.push_back(*t);
                if (kept.size() >= static_cast<size_t>(config_.expansion_cap_per_entity)) break;
            }
            if (!kept.empty()) return kept;
        }
        return {};
    }

    // Stage C: up to S select-retrieve-refine steps. A failed selection
    // still consumes budget; zero retrieved paragraphs skips the refine call
    // and marks nothing.
    KnowledgeGraph refine_with_retrieval(const std::string& question, const KnowledgeGraph& g1,
                                         std::vector<RetrievalAction>& actions, RunLog* log) {
        KnowledgeGraph graph = g1;
        for (int step = 1; step <= config_.retrieval_steps_s; ++step) {
            if (graph.empty() || graph.all_searched()) break;

            RetrievalAction record;
            record.step = step;

            std::optional<ParsedAction> selection = select_action(question, graph, log);
            if (!selection) {
                record.outcome = ActionOutcome::skipped_parse_failure;
                actions.push_back(std::move(record));
                continue;
            }
            Triplet target = graph.triplets()[static_cast<size_t>(selection->graph_index)];
            record.action = selection->action;
            record.target = target;
            record.query = build_query(target);

            std::vector<Document> docs = fetch_all(providers_, record.query);
            std::vector<Paragraph> pool = split_all(docs);
            if (pool.empty()) {
                record.outcome = ActionOutcome::skipped_no_context;
                actions.push_back(std::move(record));
                continue;
            }
            std::vector<ScoredParagraph> ranked = bm25_rank(record.query, pool, config_.top_k);
            std::vector<std::string> texts;
            for (const ScoredParagraph& sp : ranked) texts.push_back(sp.paragraph.text);
            record.paragraphs = texts;
            std::string context = join(texts, "\n\n");

            if (selection->action == ActionKind::correct) {
                std::optional<Triplet> corrected = correct_triplet(target, context, log);
                if (!corrected) {
                    record.outcome = ActionOutcome::skipped_parse_failure;
                    actions.push_back(std::move(record));
                    continue;
                }
                graph.replace(target, *corrected);
                record.outcome = ActionOutcome::applied_correct;
                record.resulting_triplets = {
                    graph.triplets()[static_cast<size_t>(graph.find(*corrected) >= 0
                                                             ? graph.find(*corrected)
                                                             : graph.find(target))]};
            } else {
                std::vector<Triplet> additions = expand_triplet(question, target, context, log);
                for (const Triplet& t : additions) {
                    if (graph.add(t)) record.resulting_triplets.push_back(t);
                }
                graph.mark_searched(target);
                record.outcome = ActionOutcome::applied_expand;
            }
            actions.push_back(std::move(record));
        }
        graph.set_stage(Stage::Gstar);
        return graph;
    }

    std::optional<ParsedAction> select_action(const std::string& question,
                                              const KnowledgeGraph& graph, RunLog* log) {
        for (int attempt = 0; attempt < config_.attempts(); ++attempt) {
            std::string prompt = prompts_.render(
                TemplateId::select_action,
                {{"question", question}, {"Graph", graph.render_for_prompt()}});
            std::string response = complete(TemplateId::select_action, prompt, log);
            auto parsed = parse_action_selection(response, graph);
            if (parsed) return parsed.value();
        }
        return std::nullopt;
    }

    // Correction must yield exactly one triplet.
    std::optional<Triplet> correct_triplet(const Triplet& target, const std::string& context,
                                           RunLog* log) {
        for (int attempt = 0; attempt < config_.attempts(); ++attempt) {
            std::string prompt = prompts_.render(TemplateId::correct_triplet,
                                                 {{"head", target.subject},
                                                  {"relation", target.relation},
                                                  {"tail", target.object},
                                                  {"retrieved context", context}});
            std::string response = complete(TemplateId::correct_triplet, prompt, log);
            std::vector<TripletFields> fields = parse_triplet_lines(response);
            if (fields.size() != 1) continue;
            auto t = Triplet::try_make(fields[0].subject, fields[0].relation, fields[0].object,
                                       Provenance::external_corrected, true);
            if (t) return t;
        }
        return std::nullopt;
    }

    // Expansion may legally return nothing ("return an empty response").
    std::vector<Triplet> expand_triplet(const std::string& question, const Triplet& target,
                                        const std::string& context, RunLog* log) {
        std::string prompt = prompts_.render(TemplateId::expand_triplet,
                                             {{"head", target.subject},
                                              {"relation", target.relation},
                                              {"tail", target.object},
                                              {"question", question},
                                              {"retrieved context", context}});
        std::string response = complete(TemplateId::expand_triplet, prompt, log);
        std::vector<Triplet> out;
        for (const TripletFields& f : parse_triplet_lines(response)) {
            auto t = Triplet::try_make(f.subject, f.relation, f.object,
                                       Provenance::external_expanded);
            if (!t) continue;
            out.push_back(*t);
            if (out.size() >= 3) break;  // UP TO 3 new triplets
        }
        return out;
    }

    // Stage D: answer restricted to the graph. Whether the answer names a
    // graph entity is observable, not enforceable; it is recorded.
    struct AnswerResult {
        std::string answer;
        bool on_graph = false;
    };

    AnswerResult answer_on_graph(const std::string& question, const KnowledgeGraph& gstar,
                                 RunLog* log) {
        if (gstar.empty()) {
            throw Error(ErrorKind::precondition, "answer_on_graph: graph is empty");
        }
        std::string answer;
        for (int attempt = 0; attempt < config_.attempts(); ++attempt) {
            std::string prompt = prompts_.render(
                TemplateId::answer_on_graph,
                {{"question", question}, {"graph str", gstar.render_for_prompt()}});
            std::string response = complete(TemplateId::answer_on_graph, prompt, log);
            auto parsed = parse_final_answer(response);
            if (parsed) {
                answer = parsed.value();
                break;
            }
        }
        return {answer, !answer.empty() && gstar.has_entity(answer)};
    }

    // Full pipeline. A stage-level failure is captured in the record
    // (aborted + error) together with whatever was built so far.
    RunRecord run_question(const std::string& question) {
        RunRecord record;
        record.question = question;
        record.mode = config_.mode;
        RunLog* log = record.log.get();
        try {
            auto t0 = now();
            InitResult init = initialize_graph(question, log);
            record.g0 = init.graph;
            record.seed_entities = init.seeds;
            record.stage_ms["initialize"] = elapsed_ms(t0);

            auto t1 = now();
            record.g1 = expand_graph(question, record.g0, record.seed_entities, log);
            record.stage_ms["expand"] = elapsed_ms(t1);

            auto t2 = now();
            if (config_.mode == Mode::external && !record.g1.empty()) {
                record.gstar = refine_with_retrieval(question, record.g1, record.actions, log);
            } else {
                record.gstar = record.g1;
                record.gstar.set_stage(Stage::Gstar);
            }
            record.stage_ms["refine"] = elapsed_ms(t2);

            auto t3 = now();
            if (!record.gstar.empty()) {
                AnswerResult ans = answer_on_graph(question, record.gstar, log);
                record.final_answer = ans.answer;
                record.on_graph = ans.on_graph;
            } else {
                record.final_answer.clear();
                record.error = "graph is empty at answer stage";
            }
            record.stage_ms["answer"] = elapsed_ms(t3);
        } catch (const Error& e) {
            record.aborted = true;
            record.error = e.what();
        }
        record.finish_accounting();
        return record;
    }

    // TextRAG baseline: rank paragraphs for the raw question, stuff them into
    // one prompt. Zero paragraphs leaves the context empty (the prompt also
    // permits the model's own knowledge).
    RunRecord answer_text_rag(const std::string& question) {
        if (providers_.empty()) {
            throw Error(ErrorKind::config, "textrag requires at least one search provider");
        }
        RunRecord record;
        record.question = question;
        record.method = "textrag";
        record.mode = config_.mode;
        RunLog* log = record.log.get();
        try {
            auto t0 = now();
            std::vector<Document> docs = fetch_all(providers_, question);
            std::vector<Paragraph> pool = split_all(docs);
            if (!pool.empty()) {
                std::vector<ScoredParagraph> ranked = bm25_rank(question, pool, config_.top_k);
                std::vector<std::string> texts;
                for (const ScoredParagraph& sp : ranked) texts.push_back(sp.paragraph.text);
                record.context = join(texts, "\n\n");
            }
            record.stage_ms["retrieve"] = elapsed_ms(t0);

            auto t1 = now();
            for (int attempt = 0; attempt < config_.attempts(); ++attempt) {
                std::string prompt = prompts_.render(
                    TemplateId::text_rag,
                    {{"question", question}, {"retrieved docs", record.context}});
                std::string response = complete(TemplateId::text_rag, prompt, log);
                auto parsed = parse_final_answer(response);
                if (parsed) {
                    record.final_answer = parsed.value();
                    break;
                }
            }
            record.stage_ms["answer"] = elapsed_ms(t1);
        } catch (const Error& e) {
            record.aborted = true;
            record.error = e.what();
        }
        record.finish_accounting();
        return record;
    }

    const PipelineConfig& config() const { return config_; }

private:
    static std::chrono::steady_clock::time_point now() { return std::chrono::steady_clock::now(); }
    static double elapsed_ms(std::chrono::steady_clock::time_point start) {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    }

    std::string complete(TemplateId tag, const std::string& prompt, RunLog* log) {
        CompletionRequest request;
        request.prompt = prompt;
        request.max_tokens = config_.max_tokens;
        request.temperature = config_.temperature;
        request.tag = tag;
        return backend_.complete(request, log);
    }

    // JSON-style list, matching the filter prompt's few-shot examples.
    static std::string format_entity_list(const std::vector<std::string>& entities) {
        std::string out = "[";
        for (size_t i = 0; i < entities.size(); ++i) {
            if (i) out += ", ";
            out += nlohmann::json(entities[i]).dump();
        }
        out += "]";
        return out;
    }

    const PromptLibrary& prompts_;
    PipelineConfig config_;
    LlmBackend& backend_;
    ProviderList providers_;
};

}  // namespace kgforge
