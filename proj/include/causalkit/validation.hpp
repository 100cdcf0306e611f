#pragma once

// Structure validation and comparison: per-edge path regression, node
// entropies from posterior marginals, arc mutual information, and the
// cross-method summary table.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "causalkit/bayesnet.hpp"
#include "causalkit/data.hpp"
#include "causalkit/discovery.hpp"
#include "causalkit/error.hpp"
#include "causalkit/graph.hpp"
#include "causalkit/stats.hpp"

namespace causalkit {

struct PathEntry {
    std::string child;
    std::string parent;
    double estimate = 0.0;
    double std_error = 0.0;
    double t_stat = 0.0;
    double p_value = 1.0;
    bool significant = false;
};

struct PathReport {
    double alpha = 0.05;
    std::vector<PathEntry> entries;

    const PathEntry* find(const std::string& child, const std::string& parent) const {
        for (const auto& e : entries) {
            if (e.child == child && e.parent == parent) return &e;
        }
        return nullptr;
    }
};

/// Ordinal codes 0..k-1 (level order) of one column.
inline Eigen::VectorXd ordinal_column(const DataTable& data, const std::string& name) {
    const auto col = data.column(data.column_index(name));
    Eigen::VectorXd v(static_cast<Eigen::Index>(col.size()));
    for (std::size_t r = 0; r < col.size(); ++r) v[static_cast<Eigen::Index>(r)] = col[r];
    return v;
}

/// Regresses child on parents (ordinal codes, with intercept) and returns one entry per parent.
inline std::vector<PathEntry> regress_family(const DataTable& data, const std::string& child,
                                             const std::vector<std::string>& parents, double alpha) {
    const auto n = data.n_rows();
    if (n <= parents.size() + 1) {
        throw TooFewRows("'" + child + "' has " + std::to_string(parents.size()) + " parents but only " +
                         std::to_string(n) + " rows");
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(parents.size()));
    for (std::size_t k = 0; k < parents.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = ordinal_column(data, parents[k]);
    const auto y = ordinal_column(data, child);

    stats::OlsFit fit;
    try {
        fit = stats::ols(x, y);
    } catch (const stats::SingularDesign&) {
        throw RankDeficient("design matrix for '" + child + "' is singular");
    }
    std::vector<PathEntry> out;
    for (std::size_t k = 0; k < parents.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k + 1);
        PathEntry e;
        e.child = child;
        e.parent = parents[k];
        e.estimate = fit.coefficients[i];
        e.std_error = fit.std_errors[i];
        if (e.std_error > 0.0) {
            e.t_stat = e.estimate / e.std_error;
        } else {
            e.t_stat = e.estimate == 0.0 ? 0.0 : std::copysign(INFINITY, e.estimate);
        }
        e.p_value = stats::student_t_two_sided_p(e.t_stat, static_cast<double>(fit.dof));
        e.significant = e.p_value < alpha;
        out.push_back(e);
    }
    return out;
}

/// One OLS per child with parents: child ~ intercept + parents, ordinal encoding,
/// two-sided t-test on n - p - 1 degrees of freedom.
inline PathReport sem_validate(const DataTable& data, const Dag& dag, double alpha = 0.05) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    for (const auto& node : dag.nodes()) {
        if (!data.has_column(node)) throw NodeNotInData("node '" + node + "' is not a data column");
    }
    PathReport report;
    report.alpha = alpha;
    for (const auto& child : dag.nodes()) {
        const auto parents = dag.parents(child);
        if (parents.empty()) continue;
        auto entries = regress_family(data, child, parents, alpha);
        report.entries.insert(report.entries.end(), entries.begin(), entries.end());
    }
    return report;
}

// ---------------------------------------------------------------------------
// Entropy

struct EntropyReport {
    std::vector<std::string> nodes;   // declaration order
    std::map<std::string, double> per_node;  // bits
    stats::Summary summary;
};

inline EntropyReport make_entropy_report(const std::vector<std::string>& nodes, const std::map<std::string, double>& h) {
    EntropyReport rep;
    rep.nodes = nodes;
    rep.per_node = h;
    std::vector<double> values;
    for (const auto& n : nodes) values.push_back(h.at(n));
    rep.summary = stats::summarize(values);
    return rep;
}

/// Entropy in bits of every node's posterior marginal under `evidence`.
inline EntropyReport node_entropies(const BayesNet& bn, const Evidence& evidence = {}) {
    std::map<std::string, double> h;
    for (const auto& post : all_marginals(bn, evidence)) h[post.node] = stats::entropy_bits(post.distribution);
    return make_entropy_report(bn.nodes(), h);
}

/// Raw-frequency variant: entropy of each node's empirical marginal in the data.
inline EntropyReport empirical_entropies(const DataTable& data, const Dag& dag) {
    std::map<std::string, double> h;
    for (const auto& node : dag.nodes()) h[node] = entropy(data, node);
    return make_entropy_report(dag.nodes(), h);
}

/// Pairwise empirical MI (bits) for every edge.
inline std::map<Edge, double> arc_mutual_information(const DataTable& data, const Dag& dag) {
    std::map<Edge, double> out;
    for (const auto& e : dag.edges()) out[e] = mutual_information(data, e.first, e.second);
    return out;
}

// ---------------------------------------------------------------------------
// Method comparison

inline const std::vector<std::string>& summary_statistic_names() {
    static const std::vector<std::string> names{"Mean", "Min", "25%", "50%", "75%", "Max"};
    return names;
}

inline std::vector<double> summary_values(const stats::Summary& s) {
    return {s.mean, s.min, s.q25, s.median, s.q75, s.max};
}

struct ComparisonRow {
    std::string statistic;
    std::vector<double> values;          // one per label, in input order
    std::vector<std::string> argmin;     // every label attaining the minimum
};

struct ComparisonTable {
    std::vector<std::string> labels;
    std::vector<ComparisonRow> rows;

    const ComparisonRow& row(const std::string& statistic) const {
        for (const auto& r : rows) {
            if (r.statistic == statistic) return r;
        }
        throw ConfigError("no statistic '" + statistic + "'");
    }
};

/// Six summary statistics per label and, per statistic, the labels attaining
/// the minimum (ties within 1e-12 are all reported).
inline ComparisonTable compare_methods(const std::vector<std::pair<std::string, EntropyReport>>& reports) {
    if (reports.size() < 2) throw ConfigError("compare needs at least two reports");
    ComparisonTable table;
    for (const auto& [label, _] : reports) table.labels.push_back(label);
    const auto& names = summary_statistic_names();
    for (std::size_t s = 0; s < names.size(); ++s) {
        ComparisonRow row;
        row.statistic = names[s];
        for (const auto& [_, rep] : reports) row.values.push_back(summary_values(rep.summary)[s]);
        const double lo = *std::min_element(row.values.begin(), row.values.end());
        for (std::size_t i = 0; i < row.values.size(); ++i) {
            if (row.values[i] - lo <= 1e-12) row.argmin.push_back(table.labels[i]);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

inline std::string lpad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace detail

inline nlohmann::json to_json(const PathReport& r) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : r.entries) {
        entries.push_back({{"child", e.child},
                           {"parent", e.parent},
                           {"estimate", e.estimate},
                           {"std_error", e.std_error},
                           {"t_stat", std::isfinite(e.t_stat) ? nlohmann::json(e.t_stat) : nlohmann::json(nullptr)},
                           {"p_value", e.p_value},
                           {"significant", e.significant}});
    }
    return {{"alpha", r.alpha}, {"entries", entries}};
}

/// Aligned columns: child, parent, estimate, p-value; non-significant rows are marked '*'.
inline std::string to_text(const PathReport& r) {
    std::size_t wc = 10, wp = 12;
    for (const auto& e : r.entries) {
        wc = std::max(wc, e.child.size());
        wp = std::max(wp, e.parent.size());
    }
    std::ostringstream out;
    out << detail::pad("Child node", wc) << " | " << detail::pad("Parents node", wp) << " | "
        << detail::lpad("Estimate", 9) << " | " << detail::lpad("p-value", 7) << "\n";
    out << std::string(wc + wp + 28, '-') << "\n";
    for (const auto& e : r.entries) {
        out << detail::pad(e.child, wc) << " | " << detail::pad(e.parent, wp) << " | "
            << detail::lpad(detail::fixed(e.estimate), 9) << " | " << detail::lpad(detail::fixed(e.p_value), 7)
            << (e.significant ? "" : " *") << "\n";
    }
    out << "* p-value >= " << detail::fixed(r.alpha, 2) << "\n";
    return out.str();
}

inline nlohmann::json to_json(const EntropyReport& r) {
    nlohmann::json per_node = nlohmann::json::object();
    for (const auto& [k, v] : r.per_node) per_node[k] = v;
    const auto& s = r.summary;
    return {{"nodes", r.nodes},
            {"per_node", per_node},
            {"summary", {{"mean", s.mean}, {"min", s.min}, {"q25", s.q25}, {"median", s.median}, {"q75", s.q75}, {"max", s.max}}}};
}

inline EntropyReport entropy_report_from_json(const nlohmann::json& j) {
    try {
        EntropyReport r;
        r.nodes = j.at("nodes").get<std::vector<std::string>>();
        r.per_node = j.at("per_node").get<std::map<std::string, double>>();
        const auto& s = j.at("summary");
        r.summary = {s.at("mean").get<double>(), s.at("min").get<double>(),    s.at("q25").get<double>(),
                     s.at("median").get<double>(), s.at("q75").get<double>(), s.at("max").get<double>()};
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed entropy report: ") + e.what());
    }
}

inline std::string to_text(const EntropyReport& r) {
    std::size_t w = 4;
    for (const auto& n : r.nodes) w = std::max(w, n.size());
    std::ostringstream out;
    out << detail::pad("Node", w) << " | " << detail::lpad("Entropy", 7) << "\n";
    out << std::string(w + 10, '-') << "\n";
    for (const auto& n : r.nodes) out << detail::pad(n, w) << " | " << detail::lpad(detail::fixed(r.per_node.at(n)), 7) << "\n";
    const auto& names = summary_statistic_names();
    const auto values = summary_values(r.summary);
    out << std::string(w + 10, '-') << "\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
        out << detail::pad(names[i], w) << " | " << detail::lpad(detail::fixed(values[i]), 7) << "\n";
    }
    return out.str();
}

inline nlohmann::json to_json(const ComparisonTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) rows.push_back({{"statistic", r.statistic}, {"values", r.values}, {"argmin", r.argmin}});
    return {{"labels", t.labels}, {"rows", rows}};
}

/// Statistic rows by label columns; the minimum of each row is marked '*'.
inline std::string to_text(const ComparisonTable& t) {
    std::size_t w = 10;
    for (const auto& l : t.labels) w = std::max(w, l.size() + 2);
    std::ostringstream out;
    out << detail::pad("", 6);
    for (const auto& l : t.labels) out << detail::lpad(l, w);
    out << "\n";
    for (const auto& r : t.rows) {
        out << detail::pad(r.statistic, 6);
        for (std::size_t i = 0; i < r.values.size(); ++i) {
            const bool best = std::find(r.argmin.begin(), r.argmin.end(), t.labels[i]) != r.argmin.end();
            out << detail::lpad(detail::fixed(r.values[i]) + (best ? "*" : " "), w);
        }
        out << "\n";
    }
    out << "* lowest value in row\n";
    return out.str();
}

}  // namespace causalkit
