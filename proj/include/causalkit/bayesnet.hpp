#pragma once

// Discrete Bayesian networks: CPT estimation with additive smoothing and
// exact posterior marginals by variable elimination.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causalkit/data.hpp"
#include "causalkit/discovery.hpp"
#include "causalkit/error.hpp"
#include "causalkit/graph.hpp"

namespace causalkit {

/// P(child | parents). Row index is the parent configuration in mixed radix
/// (last parent fastest); each row is a distribution over child levels.
struct Cpt {
    std::string child;
    std::vector<std::string> parents;
    std::size_t child_levels = 0;
    std::vector<std::size_t> parent_dims;
    std::vector<double> table;  // rows() x child_levels

    std::size_t rows() const {
        return std::accumulate(parent_dims.begin(), parent_dims.end(), std::size_t{1}, std::multiplies<>());
    }

    double operator()(std::size_t row, std::size_t level) const { return table[row * child_levels + level]; }

    std::vector<double> row(std::size_t r) const {
        return {table.begin() + static_cast<std::ptrdiff_t>(r * child_levels),
                table.begin() + static_cast<std::ptrdiff_t>((r + 1) * child_levels)};
    }

    void validate() const {
        if (table.size() != rows() * child_levels) throw InvalidModel("CPT for '" + child + "' has wrong size");
        for (std::size_t r = 0; r < rows(); ++r) {
            double total = 0.0;
            for (std::size_t x = 0; x < child_levels; ++x) {
                const double p = (*this)(r, x);
                if (!(p >= 0.0)) throw InvalidModel("CPT for '" + child + "' has a negative entry");
                total += p;
            }
            if (std::fabs(total - 1.0) > 1e-9) throw InvalidModel("CPT row for '" + child + "' does not sum to 1");
        }
    }
};

using Evidence = std::map<std::string, std::string>;

struct Posterior {
    std::string node;
    std::vector<std::string> levels;
    std::vector<double> distribution;
};

enum class EliminationOrder { min_degree, topological };

class BayesNet {
public:
    BayesNet() = default;

    /// `variables` must list every DAG node (any order); one CPT per node with
    /// parents equal to the DAG's parent list.
    BayesNet(Dag dag, const std::vector<Variable>& variables, std::vector<Cpt> cpts) : dag_(std::move(dag)) {
        levels_.resize(dag_.size());
        std::vector<bool> have_levels(dag_.size(), false);
        for (const auto& v : variables) {
            if (!dag_.has_node(v.name)) continue;
            const auto i = dag_.index_of(v.name);
            if (v.levels.empty()) throw InvalidModel("node '" + v.name + "' has no levels");
            levels_[i] = v.levels;
            have_levels[i] = true;
        }
        for (std::size_t i = 0; i < dag_.size(); ++i) {
            if (!have_levels[i]) throw InvalidModel("no levels for node '" + dag_.nodes()[i] + "'");
        }
        cpts_.resize(dag_.size());
        std::vector<bool> have_cpt(dag_.size(), false);
        for (auto& cpt : cpts) {
            const auto i = dag_.index_of(cpt.child);
            if (cpt.parents != dag_.parents(cpt.child)) {
                throw InvalidModel("CPT parents for '" + cpt.child + "' differ from the structure");
            }
            if (cpt.child_levels != levels_[i].size()) throw InvalidModel("CPT for '" + cpt.child + "' has wrong width");
            for (std::size_t k = 0; k < cpt.parents.size(); ++k) {
                if (cpt.parent_dims[k] != levels_[dag_.index_of(cpt.parents[k])].size()) {
                    throw InvalidModel("CPT for '" + cpt.child + "' has wrong parent dimensions");
                }
            }
            cpt.validate();
            have_cpt[i] = true;
            cpts_[i] = std::move(cpt);
        }
        for (std::size_t i = 0; i < dag_.size(); ++i) {
            if (!have_cpt[i]) throw InvalidModel("no CPT for node '" + dag_.nodes()[i] + "'");
        }
    }

    const Dag& dag() const { return dag_; }
    std::size_t size() const { return dag_.size(); }
    const std::vector<std::string>& nodes() const { return dag_.nodes(); }
    const std::vector<std::string>& levels(const std::string& node) const { return levels_[dag_.index_of(node)]; }
    const std::vector<std::string>& levels(std::size_t i) const { return levels_.at(i); }
    const Cpt& cpt(const std::string& node) const { return cpts_[dag_.index_of(node)]; }
    const Cpt& cpt(std::size_t i) const { return cpts_.at(i); }

    /// Level index for a label; exact match first, then a unique case-insensitive match.
    std::size_t level_index(const std::string& node, const std::string& label) const {
        if (!dag_.has_node(node)) throw UnknownNode("unknown node '" + node + "'");
        const auto& lv = levels(node);
        if (auto it = std::find(lv.begin(), lv.end(), label); it != lv.end()) {
            return static_cast<std::size_t>(it - lv.begin());
        }
        auto lower = [](std::string s) {
            for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            return s;
        };
        std::size_t found = lv.size();
        for (std::size_t i = 0; i < lv.size(); ++i) {
            if (lower(lv[i]) == lower(label)) {
                if (found != lv.size()) throw UnknownLevel("ambiguous level '" + label + "' for '" + node + "'");
                found = i;
            }
        }
        if (found == lv.size()) throw UnknownLevel("'" + label + "' is not a level of '" + node + "'");
        return found;
    }

    /// Joint probability of a full assignment (one level index per node, DAG order).
    double joint(const std::vector<std::size_t>& assignment) const {
        double p = 1.0;
        for (std::size_t i = 0; i < dag_.size(); ++i) {
            std::size_t row = 0;
            const auto& pa = dag_.parent_indices(i);
            for (auto j : pa) row = row * levels_[j].size() + assignment[j];
            p *= cpts_[i](row, assignment[i]);
        }
        return p;
    }

private:
    Dag dag_;
    std::vector<std::vector<std::string>> levels_;
    std::vector<Cpt> cpts_;
};

/// P(x | pa) = (N(x, pa) + s) / (N(pa) + s r). With s = 0 an unobserved
/// parent configuration is an error.
inline BayesNet fit_cpts(const DataTable& data, const Dag& dag, double smoothing = 1.0) {
    if (smoothing < 0.0) throw ConfigError("smoothing must be >= 0");
    std::vector<Variable> vars;
    std::vector<Cpt> cpts;
    for (const auto& node : dag.nodes()) {
        if (!data.has_column(node)) throw NodeNotInData("node '" + node + "' is not a data column");
        vars.push_back(data.variable(data.column_index(node)));
    }
    for (const auto& node : dag.nodes()) {
        Cpt cpt;
        cpt.child = node;
        cpt.parents = dag.parents(node);
        auto scope = cpt.parents;
        scope.push_back(node);
        const auto counts = contingency(data, scope);
        cpt.child_levels = counts.dims.back();
        cpt.parent_dims.assign(counts.dims.begin(), counts.dims.end() - 1);
        const std::size_t r = cpt.child_levels;
        cpt.table.resize(counts.cell_count());
        for (std::size_t row = 0; row < cpt.rows(); ++row) {
            std::size_t n_pa = 0;
            for (std::size_t x = 0; x < r; ++x) n_pa += counts.counts[row * r + x];
            const double denom = static_cast<double>(n_pa) + smoothing * static_cast<double>(r);
            if (denom == 0.0) {
                throw ZeroCountNoSmoothing("node '" + node + "': parent configuration " + std::to_string(row) +
                                           " is unobserved and smoothing is 0");
            }
            for (std::size_t x = 0; x < r; ++x) {
                cpt.table[row * r + x] = (static_cast<double>(counts.counts[row * r + x]) + smoothing) / denom;
            }
        }
        cpts.push_back(std::move(cpt));
    }
    return BayesNet(dag, vars, std::move(cpts));
}

// ---------------------------------------------------------------------------
// Factors and variable elimination

/// Table over a sorted set of variable ids; flat index is mixed radix, last variable fastest.
struct Factor {
    std::vector<std::size_t> vars;
    std::vector<std::size_t> dims;
    std::vector<double> values;

    bool contains(std::size_t v) const { return std::binary_search(vars.begin(), vars.end(), v); }
};

namespace detail {

inline Factor cpt_factor(const BayesNet& bn, std::size_t node) {
    const auto& dag = bn.dag();
    const auto& cpt = bn.cpt(node);
    const auto& pa = dag.parent_indices(node);

    std::vector<std::size_t> scope(pa.begin(), pa.end());
    scope.push_back(node);
    Factor f;
    f.vars = scope;
    std::sort(f.vars.begin(), f.vars.end());
    for (auto v : f.vars) f.dims.push_back(bn.levels(v).size());
    f.values.assign(cpt.table.size(), 0.0);

    // Walk every assignment in factor order and look up the CPT entry.
    std::vector<std::size_t> assign(f.vars.size(), 0);
    for (std::size_t idx = 0; idx < f.values.size(); ++idx) {
        std::size_t row = 0;
        for (auto p : pa) {
            const auto pos = static_cast<std::size_t>(std::lower_bound(f.vars.begin(), f.vars.end(), p) - f.vars.begin());
            row = row * bn.levels(p).size() + assign[pos];
        }
        const auto self = static_cast<std::size_t>(std::lower_bound(f.vars.begin(), f.vars.end(), node) - f.vars.begin());
        f.values[idx] = cpt(row, assign[self]);
        for (std::size_t k = f.vars.size(); k-- > 0;) {
            if (++assign[k] < f.dims[k]) break;
            assign[k] = 0;
        }
    }
    return f;
}

inline Factor multiply(const Factor& a, const Factor& b) {
    Factor out;
    std::set_union(a.vars.begin(), a.vars.end(), b.vars.begin(), b.vars.end(), std::back_inserter(out.vars));
    std::size_t size = 1;
    for (auto v : out.vars) {
        const auto ia = std::lower_bound(a.vars.begin(), a.vars.end(), v);
        const std::size_t d = (ia != a.vars.end() && *ia == v)
                                  ? a.dims[static_cast<std::size_t>(ia - a.vars.begin())]
                                  : b.dims[static_cast<std::size_t>(std::lower_bound(b.vars.begin(), b.vars.end(), v) - b.vars.begin())];
        out.dims.push_back(d);
        size *= d;
    }
    out.values.resize(size);

    // Strides of a and b expressed over the output variables (0 where absent).
    auto strides_for = [&](const Factor& f) {
        std::vector<std::size_t> own(f.vars.size());
        std::size_t s = 1;
        for (std::size_t k = f.vars.size(); k-- > 0;) {
            own[k] = s;
            s *= f.dims[k];
        }
        std::vector<std::size_t> st(out.vars.size(), 0);
        for (std::size_t k = 0; k < out.vars.size(); ++k) {
            auto it = std::lower_bound(f.vars.begin(), f.vars.end(), out.vars[k]);
            if (it != f.vars.end() && *it == out.vars[k]) st[k] = own[static_cast<std::size_t>(it - f.vars.begin())];
        }
        return st;
    };
    const auto sa = strides_for(a);
    const auto sb = strides_for(b);

    std::vector<std::size_t> assign(out.vars.size(), 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t idx = 0; idx < size; ++idx) {
        out.values[idx] = a.values[ia] * b.values[ib];
        for (std::size_t k = out.vars.size(); k-- > 0;) {
            if (++assign[k] < out.dims[k]) {
                ia += sa[k];
                ib += sb[k];
                break;
            }
            ia -= sa[k] * (out.dims[k] - 1);
            ib -= sb[k] * (out.dims[k] - 1);
            assign[k] = 0;
        }
    }
    return out;
}

// Keeps only entries where `var` takes `value` (when keep_only) or sums `var` out.
inline Factor collapse(const Factor& f, std::size_t var, std::optional<std::size_t> value) {
    const auto pos = static_cast<std::size_t>(std::lower_bound(f.vars.begin(), f.vars.end(), var) - f.vars.begin());
    Factor out;
    for (std::size_t k = 0; k < f.vars.size(); ++k) {
        if (k == pos) continue;
        out.vars.push_back(f.vars[k]);
        out.dims.push_back(f.dims[k]);
    }
    std::size_t inner = 1;
    for (std::size_t k = pos + 1; k < f.vars.size(); ++k) inner *= f.dims[k];
    const std::size_t d = f.dims[pos];
    const std::size_t outer = f.values.size() / (inner * d);
    out.values.assign(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t x = 0; x < d; ++x) {
            if (value && x != *value) continue;
            for (std::size_t i = 0; i < inner; ++i) out.values[o * inner + i] += f.values[(o * d + x) * inner + i];
        }
    }
    return out;
}

inline Factor restrict_to(const Factor& f, std::size_t var, std::size_t value) { return collapse(f, var, value); }
inline Factor sum_out(const Factor& f, std::size_t var) { return collapse(f, var, std::nullopt); }

inline std::map<std::size_t, std::size_t> resolve_evidence(const BayesNet& bn, const Evidence& evidence) {
    std::map<std::size_t, std::size_t> out;
    for (const auto& [name, label] : evidence) {
        if (!bn.dag().has_node(name)) throw UnknownNode("unknown node '" + name + "'");
        out[bn.dag().index_of(name)] = bn.level_index(name, label);
    }
    return out;
}

// Eliminates every variable except `keep` from the evidence-restricted CPT
// factors and returns the (unnormalized) product over `keep`.
inline Factor eliminate_all_but(const BayesNet& bn, const std::map<std::size_t, std::size_t>& evidence,
                                std::optional<std::size_t> keep, EliminationOrder order) {
    std::vector<Factor> factors;
    for (std::size_t i = 0; i < bn.size(); ++i) {
        auto f = cpt_factor(bn, i);
        for (const auto& [var, value] : evidence) {
            if (f.contains(var)) f = restrict_to(f, var, value);
        }
        factors.push_back(std::move(f));
    }

    std::set<std::size_t> pending;
    for (std::size_t i = 0; i < bn.size(); ++i) {
        if (!evidence.count(i) && (!keep || i != *keep)) pending.insert(i);
    }

    std::vector<std::size_t> topo;
    for (const auto& name : bn.dag().topological_order()) topo.push_back(bn.dag().index_of(name));

    while (!pending.empty()) {
        std::size_t var = *pending.begin();
        if (order == EliminationOrder::min_degree) {
            // Fewest neighbours in the current interaction graph; ties by node name.
            std::size_t best_degree = static_cast<std::size_t>(-1);
            for (auto v : pending) {
                std::set<std::size_t> nb;
                for (const auto& f : factors) {
                    if (f.contains(v)) nb.insert(f.vars.begin(), f.vars.end());
                }
                nb.erase(v);
                if (nb.size() < best_degree ||
                    (nb.size() == best_degree && bn.nodes()[v] < bn.nodes()[var])) {
                    best_degree = nb.size();
                    var = v;
                }
            }
        } else {
            for (auto v : topo) {
                if (pending.count(v)) {
                    var = v;
                    break;
                }
            }
        }
        pending.erase(var);

        std::vector<Factor> rest;
        std::optional<Factor> product;
        for (auto& f : factors) {
            if (f.contains(var)) {
                product = product ? multiply(*product, f) : std::move(f);
            } else {
                rest.push_back(std::move(f));
            }
        }
        if (product) rest.push_back(sum_out(*product, var));
        factors = std::move(rest);
    }

    Factor result{{}, {}, {1.0}};
    for (const auto& f : factors) result = multiply(result, f);
    return result;
}

}  // namespace detail

/// Probability of the evidence under the network.
inline double evidence_probability(const BayesNet& bn, const Evidence& evidence) {
    const auto ev = detail::resolve_evidence(bn, evidence);
    return detail::eliminate_all_but(bn, ev, std::nullopt, EliminationOrder::min_degree).values.at(0);
}

/// Exact posterior marginal of `target` by variable elimination. An evidence
/// node returns the indicator of its observed level.
inline Posterior posterior(const BayesNet& bn, const std::string& target, const Evidence& evidence = {},
                           EliminationOrder order = EliminationOrder::min_degree) {
    const auto t = bn.dag().index_of(target);
    const auto ev = detail::resolve_evidence(bn, evidence);
    Posterior post{target, bn.levels(t), {}};

    if (auto it = ev.find(t); it != ev.end()) {
        if (!(evidence_probability(bn, evidence) > 0.0)) {
            throw InconsistentEvidence("evidence has probability zero under the network");
        }
        post.distribution.assign(bn.levels(t).size(), 0.0);
        post.distribution[it->second] = 1.0;
        return post;
    }

    const auto f = detail::eliminate_all_but(bn, ev, t, order);
    const double z = std::accumulate(f.values.begin(), f.values.end(), 0.0);
    if (!(z > 0.0)) throw InconsistentEvidence("evidence has probability zero under the network");
    post.distribution.reserve(f.values.size());
    for (double v : f.values) post.distribution.push_back(v / z);
    return post;
}

/// Posterior for every node, in DAG declaration order.
inline std::vector<Posterior> all_marginals(const BayesNet& bn, const Evidence& evidence = {}) {
    std::vector<Posterior> out;
    for (const auto& node : bn.nodes()) out.push_back(posterior(bn, node, evidence));
    return out;
}

/// Parses "k=v,k=v". Whitespace around keys and values is trimmed.
inline Evidence parse_evidence(const std::string& text) {
    Evidence ev;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find(',', start);
        if (end == std::string::npos) end = text.size();
        const auto item = detail::trim(std::string_view(text).substr(start, end - start));
        if (!item.empty()) {
            const auto eq = item.find('=');
            if (eq == std::string::npos) throw ConfigError("evidence item '" + item + "' is not key=value");
            ev[detail::trim(item.substr(0, eq))] = detail::trim(item.substr(eq + 1));
        }
        start = end + 1;
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Model files: {"structure": {...}, "level_names": {...}, "cpts": {...}}

inline nlohmann::json to_json(const BayesNet& bn) {
    nlohmann::json levels = nlohmann::json::object();
    nlohmann::json cpts = nlohmann::json::object();
    for (std::size_t i = 0; i < bn.size(); ++i) {
        const auto& name = bn.nodes()[i];
        levels[name] = bn.levels(i);
        const auto& cpt = bn.cpt(i);
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < cpt.rows(); ++r) rows.push_back(cpt.row(r));
        cpts[name] = {{"parents", cpt.parents}, {"table", rows}};
    }
    return {{"structure", dag_to_json(bn.dag())}, {"level_names", levels}, {"cpts", cpts}};
}

inline BayesNet bayesnet_from_json(const nlohmann::json& j) {
    try {
        Dag dag = dag_from_json(j.at("structure"));
        std::vector<Variable> vars;
        for (const auto& node : dag.nodes()) {
            vars.push_back({node, j.at("level_names").at(node).get<std::vector<std::string>>()});
        }
        std::vector<Cpt> cpts;
        for (const auto& node : dag.nodes()) {
            const auto& c = j.at("cpts").at(node);
            Cpt cpt;
            cpt.child = node;
            cpt.parents = c.at("parents").get<std::vector<std::string>>();
            cpt.child_levels = j.at("level_names").at(node).size();
            for (const auto& p : cpt.parents) cpt.parent_dims.push_back(j.at("level_names").at(p).size());
            for (const auto& row : c.at("table")) {
                if (row.size() != cpt.child_levels) throw InvalidModel("CPT row width mismatch for '" + node + "'");
                for (const auto& v : row) cpt.table.push_back(v.get<double>());
            }
            cpts.push_back(std::move(cpt));
        }
        return BayesNet(std::move(dag), vars, std::move(cpts));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidModel(std::string("malformed model: ") + e.what());
    }
}

inline BayesNet load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidModel("'" + path + "' is not valid JSON: " + e.what());
    }
    return bayesnet_from_json(j);
}

}  // namespace causalkit
