#pragma once
// Knowledge-graph data model: Triplet, KnowledgeGraph, Frontier, plus the
// canonical prompt rendering, JSON (de)serialization and DOT export.
//
// Triplet equality is case-insensitive and whitespace-collapsed on all three
// fields; provenance and the searched flag never participate. A graph never
// holds two triplets equal under that relation.

#include <deque>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kgforge/error.hpp"
#include "kgforge/text.hpp"

namespace kgforge {

enum class Provenance { question, internal, external_corrected, external_expanded };

inline std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::question: return "question";
        case Provenance::internal: return "internal";
        case Provenance::external_corrected: return "external-corrected";
        case Provenance::external_expanded: return "external-expanded";
    }
    return "question";
}

inline std::optional<Provenance> provenance_from_string(std::string_view s) {
    if (s == "question") return Provenance::question;
    if (s == "internal") return Provenance::internal;
    if (s == "external-corrected") return Provenance::external_corrected;
    if (s == "external-expanded") return Provenance::external_expanded;
    return std::nullopt;
}

enum class Stage { G0, G1, Gstar };

inline std::string to_string(Stage s) {
    switch (s) {
        case Stage::G0: return "G0";
        case Stage::G1: return "G1";
        case Stage::Gstar: return "Gstar";
    }
    return "G0";
}

inline std::optional<Stage> stage_from_string(std::string_view s) {
    if (s == "G0") return Stage::G0;
    if (s == "G1") return Stage::G1;
    if (s == "Gstar") return Stage::Gstar;
    return std::nullopt;
}

struct Triplet {
    std::string subject;
    std::string relation;
    std::string object;
    Provenance provenance = Provenance::question;
    bool searched = false;

    // Empty when valid; otherwise the reason the field set is unusable.
    static std::string validate_fields(std::string_view subject, std::string_view relation,
                                       std::string_view object) {
        auto check = [](std::string_view name, std::string_view v) -> std::string {
            if (trim(v).empty()) return std::string(name) + " is empty";
            if (v.find('\n') != std::string_view::npos || v.find('\r') != std::string_view::npos)
                return std::string(name) + " contains a newline";
            if (v.find("--[") != std::string_view::npos)
                return std::string(name) + " contains \"--[\"";
            if (v.find("]-->") != std::string_view::npos)
                return std::string(name) + " contains \"]-->\"";
            return {};
        };
        if (auto m = check("subject", subject); !m.empty()) return m;
        if (auto m = check("relation", relation); !m.empty()) return m;
        if (auto m = check("object", object); !m.empty()) return m;
        return {};
    }

    // Validating constructor; fields are stored trimmed.
    static Triplet make(std::string_view subject, std::string_view relation,
                        std::string_view object, Provenance provenance = Provenance::question,
                        bool searched = false) {
        std::string why = validate_fields(subject, relation, object);
        if (!why.empty()) {
            throw Error(ErrorKind::precondition,
                        "malformed triplet (" + why + "): (" + std::string(subject) + ", " +
                            std::string(relation) + ", " + std::string(object) + ")");
        }
        return Triplet{trim(subject), trim(relation), trim(object), provenance, searched};
    }

    static std::optional<Triplet> try_make(std::string_view subject, std::string_view relation,
                                           std::string_view object,
                                           Provenance provenance = Provenance::question,
                                           bool searched = false) {
        if (!validate_fields(subject, relation, object).empty()) return std::nullopt;
        return Triplet{trim(subject), trim(relation), trim(object), provenance, searched};
    }

    std::string key() const {
        return norm_key(subject) + "\x1f" + norm_key(relation) + "\x1f" + norm_key(object);
    }

    bool same_fact(const Triplet& other) const { return key() == other.key(); }

    std::string render() const {
        std::string line = subject + " --[" + relation + "]--> " + object;
        if (searched) line += " [searched]";
        return line;
    }

    // Field-for-field identity (serialization round-trip checks), not the
    // dedup relation.
    bool operator==(const Triplet& o) const {
        return subject == o.subject && relation == o.relation && object == o.object &&
               provenance == o.provenance && searched == o.searched;
    }
};

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    explicit KnowledgeGraph(std::string question, Stage stage = Stage::G0)
        : question_(std::move(question)), stage_(stage) {}

    const std::string& question() const { return question_; }
    Stage stage() const { return stage_; }
    void set_stage(Stage s) { stage_ = s; }

    const std::vector<Triplet>& triplets() const { return triplets_; }
    size_t size() const { return triplets_.size(); }
    bool empty() const { return triplets_.empty(); }

    bool contains(const Triplet& t) const { return find(t) >= 0; }

    // Index under triplet equality, -1 when absent.
    int find(const Triplet& t) const {
        std::string k = t.key();
        for (size_t i = 0; i < triplets_.size(); ++i) {
            if (triplets_[i].key() == k) return static_cast<int>(i);
        }
        return -1;
    }

    // Adds the triplet unless an equal one exists. Existing flags stay as
    // they are. Returns true when inserted.
    bool add(Triplet t) {
        std::string why = Triplet::validate_fields(t.subject, t.relation, t.object);
        if (!why.empty()) {
            throw Error(ErrorKind::precondition,
                        "malformed triplet (" + why + "): (" + t.subject + ", " + t.relation +
                            ", " + t.object + ")");
        }
        if (contains(t)) return false;
        triplets_.push_back(std::move(t));
        return true;
    }

    // Union under triplet equality; duplicates dropped silently, insertion
    // order of survivors preserved. Returns the number inserted.
    size_t merge(const std::vector<Triplet>& incoming) {
        size_t n = 0;
        for (const Triplet& t : incoming) {
            if (add(t)) ++n;
        }
        return n;
    }

    // Replaces `old_one` (which must be present) with `corrected` at the same
    // position, provenance external-corrected and searched set. When the
    // correction states the same fact, the original triplet is kept and only
    // marked searched. When the correction collides with a different existing
    // triplet, the target is kept and marked searched instead of introducing
    // a duplicate; either way the triplet count is unchanged.
    void replace(const Triplet& old_one, const Triplet& corrected) {
        int idx = find(old_one);
        if (idx < 0) {
            throw Error(ErrorKind::precondition,
                        "replace_triplet: no such triplet in graph: " + old_one.render());
        }
        std::string why =
            Triplet::validate_fields(corrected.subject, corrected.relation, corrected.object);
        if (!why.empty()) {
            throw Error(ErrorKind::precondition,
                        "malformed correction (" + why + "): " + corrected.render());
        }
        Triplet& target = triplets_[static_cast<size_t>(idx)];
        if (corrected.key() == target.key()) {
            target.searched = true;
            return;
        }
        int other = find(corrected);
        if (other >= 0 && other != idx) {
            target.searched = true;
            return;
        }
        Triplet replacement = corrected;
        replacement.provenance = Provenance::external_corrected;
        replacement.searched = true;
        target = std::move(replacement);
    }

    void mark_searched(const Triplet& t) {
        int idx = find(t);
        if (idx < 0) {
            throw Error(ErrorKind::precondition,
                        "mark_searched: no such triplet in graph: " + t.render());
        }
        triplets_[static_cast<size_t>(idx)].searched = true;
    }

    bool all_searched() const {
        for (const Triplet& t : triplets_) {
            if (!t.searched) return false;
        }
        return true;
    }

    // Entity surface forms (subjects then objects), first surface form per
    // normalized key, insertion order.
    std::vector<std::string> entities() const {
        std::vector<std::string> names;
        std::set<std::string> seen;
        auto push = [&](const std::string& name) {
            std::string k = norm_key(name);
            if (seen.insert(k).second) names.push_back(name);
        };
        for (const Triplet& t : triplets_) {
            push(t.subject);
            push(t.object);
        }
        return names;
    }

    bool has_entity(std::string_view name) const {
        std::string k = norm_key(name);
        for (const Triplet& t : triplets_) {
            if (norm_key(t.subject) == k || norm_key(t.object) == k) return true;
        }
        return false;
    }

    // One `Subject --[Relation]--> Object` line per triplet, insertion order,
    // " [searched]" suffix on searched triplets.
    std::string render_for_prompt() const {
        if (triplets_.empty()) {
            throw Error(ErrorKind::precondition, "cannot render empty graph");
        }
        std::vector<std::string> lines;
        lines.reserve(triplets_.size());
        for (const Triplet& t : triplets_) lines.push_back(t.render());
        return join(lines, "\n");
    }

    bool operator==(const KnowledgeGraph& o) const {
        return question_ == o.question_ && stage_ == o.stage_ && triplets_ == o.triplets_;
    }

private:
    std::string question_;
    Stage stage_ = Stage::G0;
    std::vector<Triplet> triplets_;
};

// --- serialization ---------------------------------------------------------

inline std::string serialize(const KnowledgeGraph& g) {
    nlohmann::json doc;
    doc["question"] = g.question();
    doc["stage"] = to_string(g.stage());
    nlohmann::json arr = nlohmann::json::array();
    for (const Triplet& t : g.triplets()) {
        arr.push_back({{"subject", t.subject},
                       {"relation", t.relation},
                       {"object", t.object},
                       {"provenance", to_string(t.provenance)},
                       {"searched", t.searched}});
    }
    doc["triplets"] = std::move(arr);
    return doc.dump(2) + "\n";
}

inline KnowledgeGraph deserialize(std::string_view bytes) {
    nlohmann::json doc = nlohmann::json::parse(bytes, nullptr, false);
    if (doc.is_discarded()) {
        throw Error(ErrorKind::io, "graph file is not valid JSON");
    }
    if (!doc.is_object() || !doc.contains("question") || !doc.contains("stage") ||
        !doc.contains("triplets")) {
        throw Error(ErrorKind::io, "graph file missing question/stage/triplets");
    }
    if (!doc["question"].is_string() || !doc["stage"].is_string() || !doc["triplets"].is_array()) {
        throw Error(ErrorKind::io, "graph file has wrong field types");
    }
    auto stage = stage_from_string(doc["stage"].get<std::string>());
    if (!stage) {
        throw Error(ErrorKind::io, "unknown stage value: " + doc["stage"].get<std::string>());
    }
    KnowledgeGraph g(doc["question"].get<std::string>(), *stage);
    for (const nlohmann::json& item : doc["triplets"]) {
        for (const char* field : {"subject", "relation", "object", "provenance"}) {
            if (!item.contains(field) || !item[field].is_string()) {
                throw Error(ErrorKind::io, std::string("triplet missing field: ") + field);
            }
        }
        if (!item.contains("searched") || !item["searched"].is_boolean()) {
            throw Error(ErrorKind::io, "triplet missing field: searched");
        }
        auto prov = provenance_from_string(item["provenance"].get<std::string>());
        if (!prov) {
            throw Error(ErrorKind::io,
                        "unknown provenance value: " + item["provenance"].get<std::string>());
        }
        auto t = Triplet::try_make(item["subject"].get<std::string>(),
                                   item["relation"].get<std::string>(),
                                   item["object"].get<std::string>(), *prov,
                                   item["searched"].get<bool>());
        if (!t) {
            throw Error(ErrorKind::io, "triplet violates field invariants: " +
                                           item["subject"].get<std::string>());
        }
        if (!g.add(*t)) {
            throw Error(ErrorKind::io, "duplicate triplet in graph file: " + t->render());
        }
    }
    return g;
}

// --- DOT export ------------------------------------------------------------

inline std::string dot_escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

// One directed edge per triplet; searched edges styled bold. Node identity is
// the normalized entity key; the label keeps the first surface form seen.
inline std::string to_dot(const KnowledgeGraph& g) {
    std::string out = "digraph kg {\n";
    std::vector<std::pair<std::string, std::string>> nodes;  // key -> id
    auto node_id = [&](const std::string& name) -> std::string {
        std::string k = norm_key(name);
        for (const auto& [key, id] : nodes) {
            if (key == k) return id;
        }
        std::string id = "n" + std::to_string(nodes.size());
        nodes.emplace_back(k, id);
        out += "  " + id + " [label=\"" + dot_escape(name) + "\"];\n";
        return id;
    };
    std::string edges;
    for (const Triplet& t : g.triplets()) {
        std::string s = node_id(t.subject);
        std::string o = node_id(t.object);
        edges += "  " + s + " -> " + o + " [label=\"" + dot_escape(t.relation) + "\"";
        if (t.searched) edges += ", style=bold";
        edges += "];\n";
    }
    out += edges;
    out += "}\n";
    return out;
}

// --- frontier ---------------------------------------------------------------

// Breadth-first expansion queue. Entries are unique, never previously
// visited, and depths are non-decreasing front to back.
class Frontier {
public:
    struct Entry {
        std::string entity;
        int depth = 0;
    };

    bool push(std::string_view entity, int depth) {
        std::string k = norm_key(entity);
        if (visited_.count(k)) return false;
        for (const Entry& e : entries_) {
            if (norm_key(e.entity) == k) return false;
        }
        if (!entries_.empty() && depth < entries_.back().depth) {
            throw Error(ErrorKind::precondition,
                        "frontier depths must be non-decreasing (breadth-first order)");
        }
        entries_.push_back({std::string(trim(entity)), depth});
        return true;
    }

    std::optional<Entry> pop() {
        if (entries_.empty()) return std::nullopt;
        Entry e = entries_.front();
        entries_.pop_front();
        return e;
    }

    void mark_visited(std::string_view entity) { visited_.insert(norm_key(entity)); }
    bool is_visited(std::string_view entity) const { return visited_.count(norm_key(entity)) > 0; }

    bool empty() const { return entries_.empty(); }
    size_t size() const { return entries_.size(); }
    const std::deque<Entry>& entries() const { return entries_; }

private:
    std::deque<Entry> entries_;
    std::set<std::string> visited_;
};

}  // namespace kgforge
