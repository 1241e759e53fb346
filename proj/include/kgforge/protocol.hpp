#pragma once
// Prompt templates and the output grammars the prompts demand.
//
// Templates are plain-text files, one per id, with [name] placeholders.
// Parsers are total: any UTF-8 input yields a value or a typed ParseError.

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kgforge/error.hpp"
#include "kgforge/graph.hpp"
#include "kgforge/text.hpp"

namespace kgforge {

enum class TemplateId {
    extract_entities,
    filter_entities,
    expand_entity,
    select_action,
    correct_triplet,
    expand_triplet,
    answer_on_graph,
    text_rag,
    judge,
};

inline constexpr std::array<TemplateId, 9> kAllTemplates = {
    TemplateId::extract_entities, TemplateId::filter_entities, TemplateId::expand_entity,
    TemplateId::select_action,    TemplateId::correct_triplet, TemplateId::expand_triplet,
    TemplateId::answer_on_graph,  TemplateId::text_rag,        TemplateId::judge,
};

inline std::string to_string(TemplateId id) {
    switch (id) {
        case TemplateId::extract_entities: return "extract_entities";
        case TemplateId::filter_entities: return "filter_entities";
        case TemplateId::expand_entity: return "expand_entity";
        case TemplateId::select_action: return "select_action";
        case TemplateId::correct_triplet: return "correct_triplet";
        case TemplateId::expand_triplet: return "expand_triplet";
        case TemplateId::answer_on_graph: return "answer_on_graph";
        case TemplateId::text_rag: return "text_rag";
        case TemplateId::judge: return "judge";
    }
    return "extract_entities";
}

inline std::optional<TemplateId> template_id_from_string(std::string_view s) {
    for (TemplateId id : kAllTemplates) {
        if (to_string(id) == s) return id;
    }
    return std::nullopt;
}

// Placeholders each template declares. Bracketed text outside this set
// ([Trajectory], [KG], format examples like [relation1]) is literal.
inline const std::vector<std::string>& placeholders_of(TemplateId id) {
    static const std::map<TemplateId, std::vector<std::string>> table = {
        {TemplateId::extract_entities, {"question"}},
        {TemplateId::filter_entities, {"question", "entities"}},
        {TemplateId::expand_entity, {"source entity", "question", "sentence text"}},
        {TemplateId::select_action, {"question", "Graph"}},
        {TemplateId::correct_triplet, {"head", "relation", "tail", "retrieved context"}},
        {TemplateId::expand_triplet, {"head", "relation", "tail", "question", "retrieved context"}},
        {TemplateId::answer_on_graph, {"question", "graph str"}},
        {TemplateId::text_rag, {"question", "retrieved docs"}},
        {TemplateId::judge, {"question", "prediction", "ground_truth"}},
    };
    return table.at(id);
}

struct PromptTemplate {
    TemplateId id;
    std::string body;
};

using Bindings = std::map<std::string, std::string>;

// Substitutes every declared [placeholder] of the template with its binding.
// Positions come from the original body, so binding values are never
// rescanned. Missing binding -> error naming the placeholder.
inline std::string render(const PromptTemplate& tpl, const Bindings& bindings) {
    struct Hit {
        size_t pos;
        size_t len;
        const std::string* value;
    };
    std::vector<Hit> hits;
    for (const std::string& name : placeholders_of(tpl.id)) {
        auto it = bindings.find(name);
        if (it == bindings.end()) {
            throw Error(ErrorKind::precondition, "render(" + to_string(tpl.id) +
                                                     "): missing binding for placeholder [" +
                                                     name + "]");
        }
        std::string token = "[" + name + "]";
        size_t pos = 0;
        while ((pos = tpl.body.find(token, pos)) != std::string::npos) {
            hits.push_back({pos, token.size(), &it->second});
            pos += token.size();
        }
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.pos < b.pos; });
    std::string out;
    out.reserve(tpl.body.size());
    size_t cursor = 0;
    for (const Hit& h : hits) {
        out.append(tpl.body, cursor, h.pos - cursor);
        out.append(*h.value);
        cursor = h.pos + h.len;
    }
    out.append(tpl.body, cursor, std::string::npos);
    return out;
}

// Loads the nine templates from a directory of <id>.txt files.
class PromptLibrary {
public:
    static PromptLibrary load(const std::string& dir) {
        PromptLibrary lib;
        for (TemplateId id : kAllTemplates) {
            std::string path = dir + "/" + to_string(id) + ".txt";
            std::ifstream in(path, std::ios::binary);
            if (!in) {
                throw Error(ErrorKind::io, "prompt template not found: " + path);
            }
            std::ostringstream ss;
            ss << in.rdbuf();
            std::string body = ss.str();
            if (!body.empty() && body.back() == '\n') body.pop_back();
            lib.templates_[id] = PromptTemplate{id, std::move(body)};
        }
        return lib;
    }

    const PromptTemplate& get(TemplateId id) const {
        auto it = templates_.find(id);
        if (it == templates_.end()) {
            throw Error(ErrorKind::precondition, "unknown template id");
        }
        return it->second;
    }

    std::string render(TemplateId id, const Bindings& bindings) const {
        return kgforge::render(get(id), bindings);
    }

private:
    std::map<TemplateId, PromptTemplate> templates_;
};

// --- parsing helpers ---------------------------------------------------------

namespace detail {

inline bool is_trajectory_line(std::string_view t) {
    return starts_with_ci(t, "[trajectory]") || starts_with_ci(t, "[tratectory]");
}

// Strips one leading "N." enumerator (digits, dot, whitespace) if present.
inline std::string strip_enumeration(std::string_view t) {
    size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i > 0 && i < t.size() && t[i] == '.') {
        size_t j = i + 1;
        if (j == t.size() || is_space(t[j])) {
            return trim(t.substr(j));
        }
    }
    return std::string(t);
}

// Strips one matching pair of surrounding square brackets.
inline std::string strip_brackets(std::string_view t) {
    std::string s = trim(t);
    if (s.size() >= 2 && s.front() == '[' && s.back() == ']') {
        return trim(std::string_view(s).substr(1, s.size() - 2));
    }
    return s;
}

inline std::string strip_searched_suffix(std::string_view t) {
    std::string s = trim(t);
    std::string low = lower(s);
    const std::string marker = "[searched]";
    if (low.size() >= marker.size() &&
        low.compare(low.size() - marker.size(), marker.size(), marker) == 0) {
        return trim(std::string_view(s).substr(0, s.size() - marker.size()));
    }
    return s;
}

struct RawTriplet {
    std::string subject;
    std::string relation;
    std::string object;
};

// Single line in either grammar: `A --[r]--> B` or `A -> r -> B`, optional
// leading enumeration, optional surrounding brackets per field, optional
// trailing [searched] marker. nullopt when the line is not a triplet.
inline std::optional<RawTriplet> parse_triplet_line(std::string_view line) {
    std::string t = strip_searched_suffix(strip_enumeration(trim(line)));
    if (t.empty()) return std::nullopt;

    std::string subject, relation, object;
    size_t open = t.find("--[");
    size_t close = t.find("]-->");
    if (open != std::string::npos && close != std::string::npos && close > open) {
        subject = t.substr(0, open);
        relation = t.substr(open + 3, close - (open + 3));
        object = t.substr(close + 4);
    } else {
        size_t a = t.find("->");
        if (a == std::string::npos) return std::nullopt;
        size_t b = t.find("->", a + 2);
        if (b == std::string::npos) return std::nullopt;
        if (t.find("->", b + 2) != std::string::npos) return std::nullopt;  // too many fields
        subject = t.substr(0, a);
        relation = t.substr(a + 2, b - (a + 2));
        object = t.substr(b + 2);
    }
    RawTriplet out{strip_brackets(subject), strip_brackets(relation), strip_brackets(object)};
    if (out.subject.empty() || out.relation.empty() || out.object.empty()) return std::nullopt;
    return out;
}

}  // namespace detail

// --- parse_entity_list -------------------------------------------------------

// Extracts `N. name` entries, in order; several enumerators may share one
// line ("Entity: 1. year 2. park"). [Trajectory] lines and triplet lines are
// ignored so the Step-1 and Step-2 halves of one response separate cleanly.
// Case-insensitive dedup keeps the first surface form.
inline ParseResult<std::vector<std::string>> parse_entity_list(std::string_view text) {
    std::vector<std::string> names;
    std::set<std::string> seen;
    for (const std::string& raw : split_lines(text)) {
        std::string line = trim(raw);
        if (line.empty() || detail::is_trajectory_line(line)) continue;
        if (contains(line, "->") || contains(line, "--[")) continue;

        // Enumerator positions: digits followed by '.' then whitespace, at
        // the start of the line or after whitespace.
        std::vector<std::pair<size_t, size_t>> marks;  // (start of digits, pos after '.')
        for (size_t i = 0; i < line.size(); ++i) {
            if (!std::isdigit(static_cast<unsigned char>(line[i]))) continue;
            if (i > 0 && !is_space(line[i - 1])) continue;
            size_t j = i;
            while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
            if (j < line.size() && line[j] == '.' && (j + 1 == line.size() || is_space(line[j + 1]))) {
                marks.emplace_back(i, j + 1);
                i = j;
            }
        }
        for (size_t m = 0; m < marks.size(); ++m) {
            size_t begin = marks[m].second;
            size_t end = (m + 1 < marks.size()) ? marks[m + 1].first : line.size();
            if (end < begin) continue;
            std::string name = detail::strip_brackets(trim(std::string_view(line).substr(begin, end - begin)));
            if (name.empty()) continue;
            std::string k = norm_key(name);
            if (seen.insert(k).second) names.push_back(name);
        }
    }
    if (names.empty()) {
        return ParseError{ParseErrorKind::no_entities, "no entities parsed"};
    }
    return names;
}

// --- parse_triplet_lines -----------------------------------------------------

struct TripletFields {
    std::string subject;
    std::string relation;
    std::string object;

    bool operator==(const TripletFields& o) const {
        return subject == o.subject && relation == o.relation && object == o.object;
    }
};

// Both line grammars the prompts induce; lines with any empty field are
// dropped, order preserved, duplicates (triplet equality) removed. An empty
// list is a legal result.
inline std::vector<TripletFields> parse_triplet_lines(std::string_view text) {
    std::vector<TripletFields> out;
    std::set<std::string> seen;
    for (const std::string& raw : split_lines(text)) {
        std::string line = trim(raw);
        if (line.empty() || detail::is_trajectory_line(line)) continue;
        auto parsed = detail::parse_triplet_line(line);
        if (!parsed) continue;
        std::string k = norm_key(parsed->subject) + "\x1f" + norm_key(parsed->relation) + "\x1f" +
                        norm_key(parsed->object);
        if (!seen.insert(k).second) continue;
        out.push_back({parsed->subject, parsed->relation, parsed->object});
    }
    return out;
}

// --- parse_action_selection --------------------------------------------------

enum class ActionKind { correct, expand };

inline std::string to_string(ActionKind a) {
    return a == ActionKind::correct ? "correct" : "expand";
}

struct ParsedAction {
    ActionKind action;
    TripletFields target;   // as written by the model
    int graph_index = -1;   // resolved position in the provided graph
};

// Locates the Action:/Triplet: lines, maps correct|enhance -> correct and
// expand -> expand, and resolves the triplet against the graph. Resolution
// must land on an existing, unsearched triplet; each failure mode is its own
// ParseErrorKind so the pipeline can re-prompt or fall back.
inline ParseResult<ParsedAction> parse_action_selection(std::string_view text,
                                                        const KnowledgeGraph& graph) {
    std::optional<std::string> action_rest, triplet_rest;
    for (const std::string& raw : split_lines(text)) {
        std::string line = trim(raw);
        if (!action_rest && starts_with_ci(line, "action:")) {
            action_rest = trim(std::string_view(line).substr(7));
        } else if (!triplet_rest && starts_with_ci(line, "triplet:")) {
            triplet_rest = trim(std::string_view(line).substr(8));
        }
    }
    if (!action_rest || !triplet_rest) {
        return ParseError{ParseErrorKind::missing_lines, "no Action:/Triplet: lines found"};
    }

    std::string token = detail::strip_brackets(*action_rest);
    while (!token.empty() &&
           std::ispunct(static_cast<unsigned char>(token.back()))) {
        token.pop_back();
    }
    token = norm_key(token);
    ActionKind action;
    if (token == "correct" || token == "enhance") {
        action = ActionKind::correct;
    } else if (token == "expand") {
        action = ActionKind::expand;
    } else {
        return ParseError{ParseErrorKind::unknown_action, "unknown action token: " + *action_rest};
    }

    auto fields = detail::parse_triplet_line(*triplet_rest);
    if (!fields) {
        return ParseError{ParseErrorKind::missing_lines,
                          "Triplet: line is not a triplet: " + *triplet_rest};
    }
    auto probe = Triplet::try_make(fields->subject, fields->relation, fields->object);
    if (!probe) {
        return ParseError{ParseErrorKind::triplet_not_found,
                          "selected triplet has invalid fields: " + *triplet_rest};
    }
    int idx = graph.find(*probe);
    if (idx < 0) {
        return ParseError{ParseErrorKind::triplet_not_found,
                          "selected triplet is not in the graph: " + probe->render()};
    }
    if (graph.triplets()[static_cast<size_t>(idx)].searched) {
        return ParseError{ParseErrorKind::triplet_searched,
                          "selected triplet is already searched: " + probe->render()};
    }
    return ParsedAction{action, {fields->subject, fields->relation, fields->object}, idx};
}

// --- parse_verdict -----------------------------------------------------------

// Last non-empty line, punctuation and quotes stripped, must be yes or no.
inline ParseResult<bool> parse_verdict(std::string_view text) {
    std::vector<std::string> lines = split_lines(text);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        std::string line = trim(*it);
        if (line.empty()) continue;
        std::string cleaned;
        for (char c : line) {
            unsigned char u = static_cast<unsigned char>(c);
            if (u < 0x80 && std::ispunct(u)) continue;
            cleaned.push_back(c);
        }
        cleaned = norm_key(cleaned);
        if (cleaned == "yes") return true;
        if (cleaned == "no") return false;
        return ParseError{ParseErrorKind::bad_verdict, "unparseable verdict: " + line};
    }
    return ParseError{ParseErrorKind::bad_verdict, "unparseable verdict: empty response"};
}

// --- parse_final_answer ------------------------------------------------------

// Prefers the last `Final Answer:` line; otherwise the last non-empty line
// (the answer-on-graph prompt asks for a bare entity).
inline ParseResult<std::string> parse_final_answer(std::string_view text) {
    std::vector<std::string> lines = split_lines(text);
    const std::string label = "final answer:";
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        std::string line = trim(*it);
        if (starts_with_ci(line, label)) {
            std::string rest = trim(std::string_view(line).substr(label.size()));
            if (!rest.empty()) return rest;
        }
    }
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        std::string line = trim(*it);
        if (!line.empty()) return line;
    }
    return ParseError{ParseErrorKind::empty_text, "empty model output"};
}

}  // namespace kgforge
