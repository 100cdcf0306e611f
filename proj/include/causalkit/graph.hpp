#pragma once

// Directed acyclic graph over named variables. Every mutation keeps the
// graph acyclic; a rejected insertion reports the directed path it would
// have closed into a cycle.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "causalkit/error.hpp"

namespace causalkit {

using Edge = std::pair<std::string, std::string>;  // (parent, child)

/// Inserting parent -> child would close a cycle. `path()` is the existing
/// directed path child -> ... -> parent.
class CycleError : public Error {
public:
    explicit CycleError(std::vector<std::string> path)
        : Error("CycleError", "edge would create a cycle through [" + join(path) + "]"), path_(std::move(path)) {}

    const std::vector<std::string>& path() const { return path_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string s;
        for (std::size_t i = 0; i < p.size(); ++i) s += (i ? "," : "") + p[i];
        return s;
    }
    std::vector<std::string> path_;
};

class Dag {
public:
    Dag() = default;

    explicit Dag(const std::vector<std::string>& nodes) {
        for (const auto& n : nodes) add_node(n);
    }

    Dag(const std::vector<std::string>& nodes, const std::vector<Edge>& edges) : Dag(nodes) {
        for (const auto& [p, c] : edges) add_edge(p, c);
    }

    void add_node(const std::string& name) {
        if (name.empty()) throw InvalidStructure("node names must be non-empty");
        if (index_.count(name)) throw DuplicateNode("node '" + name + "' declared twice");
        index_.emplace(name, nodes_.size());
        nodes_.push_back(name);
        parents_.emplace_back();
        children_.emplace_back();
    }

    const std::vector<std::string>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }
    bool has_node(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw UnknownNode("unknown node '" + name + "'");
        return it->second;
    }

    /// Edges in insertion order.
    const std::vector<Edge>& edges() const { return edges_; }
    std::size_t edge_count() const { return edges_.size(); }

    bool has_edge(const std::string& parent, const std::string& child) const {
        const auto& ps = parents_[index_of(child)];
        return std::find(ps.begin(), ps.end(), index_of(parent)) != ps.end();
    }

    /// Parents in insertion order; empty for roots.
    std::vector<std::string> parents(const std::string& node) const { return names(parents_[index_of(node)]); }
    std::vector<std::string> children(const std::string& node) const { return names(children_[index_of(node)]); }

    const std::vector<std::size_t>& parent_indices(std::size_t node) const { return parents_.at(node); }
    const std::vector<std::size_t>& child_indices(std::size_t node) const { return children_.at(node); }

    /// Directed path from -> ... -> to, if one exists (BFS, so shortest; neighbours in insertion order).
    std::optional<std::vector<std::string>> find_path(const std::string& from, const std::string& to) const {
        const auto src = index_of(from);
        const auto dst = index_of(to);
        std::vector<std::size_t> prev(nodes_.size(), npos);
        std::vector<bool> seen(nodes_.size(), false);
        std::queue<std::size_t> frontier;
        frontier.push(src);
        seen[src] = true;
        while (!frontier.empty()) {
            const auto u = frontier.front();
            frontier.pop();
            if (u == dst) {
                std::vector<std::string> path;
                for (auto v = dst; v != npos; v = prev[v]) path.push_back(nodes_[v]);
                std::reverse(path.begin(), path.end());
                return path;
            }
            for (auto v : children_[u]) {
                if (!seen[v]) {
                    seen[v] = true;
                    prev[v] = u;
                    frontier.push(v);
                }
            }
        }
        return std::nullopt;
    }

    bool would_create_cycle(const std::string& parent, const std::string& child) const {
        return parent == child || find_path(child, parent).has_value();
    }

    /// Adds parent -> child. Throws SelfLoop, UnknownNode or CycleError and leaves the graph unchanged.
    /// Adding an existing edge is a no-op.
    void add_edge(const std::string& parent, const std::string& child) {
        const auto p = index_of(parent);
        const auto c = index_of(child);
        if (p == c) throw SelfLoop("self-loop on '" + parent + "'");
        if (has_edge(parent, child)) return;
        if (auto path = find_path(child, parent)) throw CycleError(std::move(*path));
        parents_[c].push_back(p);
        children_[p].push_back(c);
        edges_.emplace_back(parent, child);
    }

    void remove_edge(const std::string& parent, const std::string& child) {
        const auto p = index_of(parent);
        const auto c = index_of(child);
        auto& ps = parents_[c];
        auto it = std::find(ps.begin(), ps.end(), p);
        if (it == ps.end()) throw InvalidStructure("no edge " + parent + " -> " + child);
        ps.erase(it);
        auto& cs = children_[p];
        cs.erase(std::find(cs.begin(), cs.end(), c));
        edges_.erase(std::find(edges_.begin(), edges_.end(), Edge{parent, child}));
    }

    /// Replaces parent -> child with child -> parent; throws CycleError (graph unchanged) if that closes a cycle.
    void reverse_edge(const std::string& parent, const std::string& child) {
        remove_edge(parent, child);
        try {
            add_edge(child, parent);
        } catch (...) {
            add_edge(parent, child);
            throw;
        }
    }

    /// Kahn's algorithm; among ready nodes the earliest-declared goes first,
    /// so an edgeless graph yields declaration order.
    std::vector<std::string> topological_order() const {
        std::vector<std::size_t> indegree(nodes_.size());
        for (std::size_t v = 0; v < nodes_.size(); ++v) indegree[v] = parents_[v].size();
        std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
        for (std::size_t v = 0; v < nodes_.size(); ++v) {
            if (indegree[v] == 0) ready.push(v);
        }
        std::vector<std::string> order;
        order.reserve(nodes_.size());
        while (!ready.empty()) {
            const auto u = ready.top();
            ready.pop();
            order.push_back(nodes_[u]);
            for (auto v : children_[u]) {
                if (--indegree[v] == 0) ready.push(v);
            }
        }
        return order;
    }

    /// Same edges, compared as sets (insertion order ignored).
    bool same_structure(const Dag& other) const {
        if (nodes_ != other.nodes_) return false;
        auto a = edges_;
        auto b = other.edges_;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        return a == b;
    }

    bool operator==(const Dag& other) const { return nodes_ == other.nodes_ && edges_ == other.edges_; }

private:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::vector<std::string> names(const std::vector<std::size_t>& idx) const {
        std::vector<std::string> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(nodes_[i]);
        return out;
    }

    std::vector<std::string> nodes_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<std::size_t>> parents_;
    std::vector<std::vector<std::size_t>> children_;
    std::vector<Edge> edges_;
};

/// Value-returning insertion.
inline Dag with_edge(Dag dag, const std::string& parent, const std::string& child) {
    dag.add_edge(parent, child);
    return dag;
}

// ---------------------------------------------------------------------------
// Structure files

enum class Provenance { expert, bic, miic, llm, manual };

inline std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::expert: return "expert";
        case Provenance::bic: return "bic";
        case Provenance::miic: return "miic";
        case Provenance::llm: return "llm";
        case Provenance::manual: return "manual";
    }
    return "manual";
}

inline Provenance provenance_from_string(const std::string& s) {
    if (s == "expert") return Provenance::expert;
    if (s == "bic") return Provenance::bic;
    if (s == "miic") return Provenance::miic;
    if (s == "llm") return Provenance::llm;
    if (s == "manual") return Provenance::manual;
    throw InvalidStructure("unknown provenance '" + s + "'");
}

struct StructureFile {
    std::string name;
    Provenance provenance = Provenance::manual;
    Dag dag;
};

inline nlohmann::json dag_to_json(const Dag& dag) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [p, c] : dag.edges()) edges.push_back({{"parent", p}, {"child", c}});
    return {{"nodes", dag.nodes()}, {"edges", edges}};
}

/// Any defect (unknown endpoint, cycle, duplicate node) fails loudly with InvalidStructure.
inline Dag dag_from_json(const nlohmann::json& j) {
    try {
        Dag dag(j.at("nodes").get<std::vector<std::string>>());
        for (const auto& e : j.at("edges")) dag.add_edge(e.at("parent").get<std::string>(), e.at("child").get<std::string>());
        return dag;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidStructure(std::string("malformed structure: ") + e.what());
    } catch (const Error& e) {
        throw InvalidStructure("invalid structure: " + e.name() + ": " + e.what());
    }
}

inline nlohmann::json to_json(const StructureFile& s) {
    auto j = dag_to_json(s.dag);
    j["name"] = s.name;
    j["provenance"] = to_string(s.provenance);
    return j;
}

inline StructureFile structure_from_json(const nlohmann::json& j) {
    StructureFile s;
    try {
        s.name = j.at("name").get<std::string>();
        s.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw InvalidStructure(std::string("malformed structure: ") + e.what());
    }
    s.dag = dag_from_json(j);
    return s;
}

inline StructureFile load_structure(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidStructure("'" + path + "' is not valid JSON: " + e.what());
    }
    return structure_from_json(j);
}

// ---------------------------------------------------------------------------
// DOT export

struct DotWeights {
    std::optional<std::map<std::string, double>> nodes;
    std::optional<std::map<Edge, double>> edges;
};

inline constexpr double kMinPenwidth = 0.5;
inline constexpr double kMaxPenwidth = 4.0;

/// Edge penwidth = 0.5 + 3.5 * w / max(w); all-zero weights give 0.5.
inline double penwidth_for(double weight, double max_weight) {
    if (max_weight <= 0.0) return kMinPenwidth;
    return kMinPenwidth + (kMaxPenwidth - kMinPenwidth) * std::clamp(weight / max_weight, 0.0, 1.0);
}

/// Graphviz DOT. Node weights are mapped min..max onto fill saturation 0..1
/// (white to red); edge weights set penwidth via `penwidth_for`.
inline std::string to_dot(const Dag& dag, const DotWeights& weights = {}) {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", v);
        return std::string(buf);
    };
    auto escape = [](const std::string& s) {
        std::string out;
        for (char ch : s) {
            if (ch == '"' || ch == '\\') out += '\\';
            out += ch;
        }
        return out;
    };
    auto quote = [&](const std::string& s) { return "\"" + escape(s) + "\""; };

    double node_lo = 0.0, node_hi = 0.0;
    if (weights.nodes) {
        bool first = true;
        for (const auto& n : dag.nodes()) {
            auto it = weights.nodes->find(n);
            if (it == weights.nodes->end()) throw MissingWeight("no weight for node '" + n + "'");
            node_lo = first ? it->second : std::min(node_lo, it->second);
            node_hi = first ? it->second : std::max(node_hi, it->second);
            first = false;
        }
    }
    double edge_hi = 0.0;
    if (weights.edges) {
        for (const auto& e : dag.edges()) {
            auto it = weights.edges->find(e);
            if (it == weights.edges->end()) throw MissingWeight("no weight for edge " + e.first + " -> " + e.second);
            edge_hi = std::max(edge_hi, it->second);
        }
    }

    std::ostringstream out;
    out << "digraph G {\n";
    for (const auto& n : dag.nodes()) {
        out << "  " << quote(n);
        if (weights.nodes) {
            const double w = weights.nodes->at(n);
            const double t = node_hi > node_lo ? (w - node_lo) / (node_hi - node_lo) : 0.0;
            out << " [style=filled, fillcolor=" << quote("0.000 " + fmt(t) + " 1.000")
                << ", label=\"" << escape(n) << "\\n" << fmt(w) << "\"]";
        }
        out << ";\n";
    }
    for (const auto& e : dag.edges()) {
        out << "  " << quote(e.first) << " -> " << quote(e.second);
        if (weights.edges) {
            const double w = weights.edges->at(e);
            out << " [penwidth=" << fmt(penwidth_for(w, edge_hi)) << ", label=" << quote(fmt(w)) << "]";
        }
        out << ";\n";
    }
    out << "}\n";
    return out.str();
}

}  // namespace causalkit
