#pragma once

// Data-driven structure learning over a categorical DataTable:
// empirical (conditional) mutual information, an MIIC-style skeleton that
// prunes pairs by conditional independence, the BIC score, and greedy
// hill climbing over add / delete / reverse moves.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causalkit/data.hpp"
#include "causalkit/error.hpp"
#include "causalkit/graph.hpp"
#include "causalkit/stats.hpp"

namespace causalkit {

/// Dense joint counts over a list of columns. The flat index is mixed radix
/// with the last variable varying fastest.
struct ContingencyCounts {
    std::vector<std::string> variables;
    std::vector<std::size_t> dims;
    std::vector<std::size_t> counts;
    std::size_t total = 0;

    std::size_t cell_count() const { return counts.size(); }
};

inline ContingencyCounts contingency(const DataTable& data, const std::vector<std::string>& variables) {
    ContingencyCounts t;
    t.variables = variables;
    std::vector<std::size_t> cols;
    std::size_t cells = 1;
    for (const auto& v : variables) {
        cols.push_back(data.column_index(v));
        t.dims.push_back(data.level_count(cols.back()));
        cells *= t.dims.back();
    }
    t.counts.assign(cells, 0);
    for (std::size_t r = 0; r < data.n_rows(); ++r) {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < cols.size(); ++i) idx = idx * t.dims[i] + data.at(r, cols[i]);
        ++t.counts[idx];
    }
    t.total = data.n_rows();
    return t;
}

/// Empirical entropy of one column, in bits.
inline double entropy(const DataTable& data, const std::string& x) {
    const auto t = contingency(data, {x});
    std::vector<double> p;
    for (auto c : t.counts) p.push_back(static_cast<double>(c) / static_cast<double>(t.total));
    return stats::entropy_bits(p);
}

namespace detail {

// I(X;Y) in bits from an |X| x |Y| row-major count block.
inline double mi_from_counts(const std::size_t* counts, std::size_t nx, std::size_t ny) {
    std::vector<double> row(nx, 0.0), col(ny, 0.0);
    double n = 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) {
            const auto c = static_cast<double>(counts[i * ny + j]);
            row[i] += c;
            col[j] += c;
            n += c;
        }
    }
    if (n == 0.0) return 0.0;
    double mi = 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) {
            const auto c = static_cast<double>(counts[i * ny + j]);
            if (c > 0.0) mi += c / n * std::log2(c * n / (row[i] * col[j]));
        }
    }
    return std::max(mi, 0.0);
}

}  // namespace detail

/// Empirical mutual information I(X;Y) in bits.
inline double mutual_information(const DataTable& data, const std::string& x, const std::string& y) {
    const auto t = contingency(data, {x, y});
    return detail::mi_from_counts(t.counts.data(), t.dims[0], t.dims[1]);
}

/// I(X;Y|Z) = sum_z p(z) I(X;Y | Z=z), in bits. Empty strata carry zero weight.
inline double conditional_mutual_information(const DataTable& data, const std::string& x, const std::string& y,
                                             const std::vector<std::string>& given) {
    for (const auto& z : given) {
        if (z == x || z == y) throw UnknownColumn("conditioning set must exclude '" + x + "' and '" + y + "'");
    }
    if (given.empty()) return mutual_information(data, x, y);

    std::vector<std::string> vars = given;
    vars.push_back(x);
    vars.push_back(y);
    const auto t = contingency(data, vars);
    const std::size_t nx = t.dims[t.dims.size() - 2];
    const std::size_t ny = t.dims.back();
    const std::size_t block = nx * ny;
    const std::size_t strata = t.cell_count() / block;

    double cmi = 0.0;
    std::size_t covered = 0;
    for (std::size_t z = 0; z < strata; ++z) {
        const std::size_t* counts = t.counts.data() + z * block;
        std::size_t nz = 0;
        for (std::size_t k = 0; k < block; ++k) nz += counts[k];
        if (nz == 0) continue;
        covered += nz;
        cmi += static_cast<double>(nz) / static_cast<double>(t.total) * detail::mi_from_counts(counts, nx, ny);
    }
    if (covered == 0) throw ConditioningTooSparse("every conditioning stratum is empty");
    return std::max(cmi, 0.0);
}

// ---------------------------------------------------------------------------
// MIIC-style skeleton

struct SkeletonOptions {
    double mi_threshold = 0.01;            // bits
    std::size_t max_condition_size = 2;
    double latent_margin = 0.02;           // bits of MI gained under conditioning
};

/// A pair whose dependence grows by more than the latent margin when
/// conditioning on a single third variable, after discounting the extra
/// chance bias of the conditional estimate.
struct LatentFlag {
    std::string x;
    std::string y;
    std::string via;
    double marginal_mi = 0.0;
    double conditional_mi = 0.0;
};

struct Skeleton {
    std::vector<std::string> nodes;
    std::vector<std::pair<std::string, std::string>> edges;  // (a, b) with a declared before b
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> separating_sets;
    std::vector<LatentFlag> latent_flags;

    bool adjacent(const std::string& a, const std::string& b) const {
        return std::any_of(edges.begin(), edges.end(), [&](const auto& e) {
            return (e.first == a && e.second == b) || (e.first == b && e.second == a);
        });
    }
};

namespace detail {

// Calls fn on every size-k subset of items in lexicographic order; stops when fn returns true.
inline bool for_each_subset(const std::vector<std::size_t>& items, std::size_t k,
                            const std::function<bool(const std::vector<std::size_t>&)>& fn) {
    if (k > items.size()) return false;
    std::vector<std::size_t> pick(k);
    for (std::size_t i = 0; i < k; ++i) pick[i] = i;
    while (true) {
        std::vector<std::size_t> subset;
        for (auto i : pick) subset.push_back(items[i]);
        if (fn(subset)) return true;
        std::size_t i = k;
        while (i > 0 && pick[i - 1] == items.size() - k + i - 1) --i;
        if (i == 0) return false;
        ++pick[i - 1];
        for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
    }
}

}  // namespace detail

/// Starts from the complete undirected graph and removes X - Y when I(X;Y) <= threshold
/// or when some Z drawn from the current neighbours of X or Y, |Z| <= max_condition_size,
/// gives I(X;Y|Z) <= threshold. Each level uses the adjacency frozen at the start of
/// that level, so the result does not depend on pair order.
inline Skeleton miic_skeleton(const DataTable& data, const SkeletonOptions& opts = {}) {
    if (opts.mi_threshold < 0.0) throw ConfigError("mi_threshold must be >= 0");
    const auto names = data.names();
    const std::size_t n = names.size();
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, true));
    for (std::size_t i = 0; i < n; ++i) adj[i][i] = false;

    Skeleton sk;
    sk.nodes = names;

    std::vector<std::vector<double>> marginal(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            marginal[i][j] = marginal[j][i] = mutual_information(data, names[i], names[j]);
            if (marginal[i][j] <= opts.mi_threshold) {
                adj[i][j] = adj[j][i] = false;
                sk.separating_sets[{names[i], names[j]}] = {};
            }
        }
    }

    for (std::size_t level = 1; level <= opts.max_condition_size; ++level) {
        const auto frozen = adj;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (!frozen[i][j]) continue;
                std::vector<std::size_t> candidates;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k != i && k != j && (frozen[i][k] || frozen[j][k])) candidates.push_back(k);
                }
                detail::for_each_subset(candidates, level, [&](const std::vector<std::size_t>& z) {
                    std::vector<std::string> given;
                    for (auto k : z) given.push_back(names[k]);
                    if (conditional_mutual_information(data, names[i], names[j], given) <= opts.mi_threshold) {
                        adj[i][j] = adj[j][i] = false;
                        sk.separating_sets[{names[i], names[j]}] = given;
                        return true;
                    }
                    return false;
                });
            }
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (adj[i][j]) sk.edges.emplace_back(names[i], names[j]);
            std::optional<LatentFlag> best;
            for (std::size_t k = 0; k < n; ++k) {
                if (k == i || k == j) continue;
                const double cmi = conditional_mutual_information(data, names[i], names[j], {names[k]});
                // Plug-in CMI over rz strata carries (rz - 1) times more chance bias than MI.
                const double excess_bias = double(data.level_count(i) - 1) * double(data.level_count(j) - 1) *
                                           double(data.level_count(k) - 1) /
                                           (2.0 * double(data.n_rows()) * std::numbers::ln2);
                if (cmi - marginal[i][j] - excess_bias > opts.latent_margin &&
                    (!best || cmi > best->conditional_mi)) {
                    best = LatentFlag{names[i], names[j], names[k], marginal[i][j], cmi};
                }
            }
            if (best) sk.latent_flags.push_back(*best);
        }
    }
    return sk;
}

inline nlohmann::json skeleton_to_json(const Skeleton& sk) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [a, b] : sk.edges) edges.push_back({a, b});
    nlohmann::json sepsets = nlohmann::json::array();
    for (const auto& [pair, given] : sk.separating_sets) {
        sepsets.push_back({{"pair", {pair.first, pair.second}}, {"given", given}});
    }
    nlohmann::json flags = nlohmann::json::array();
    for (const auto& f : sk.latent_flags) {
        flags.push_back({{"x", f.x}, {"y", f.y}, {"via", f.via}, {"marginal_mi", f.marginal_mi},
                         {"conditional_mi", f.conditional_mi}});
    }
    return {{"nodes", sk.nodes}, {"edges", edges}, {"separating_sets", sepsets}, {"latent_flags", flags}};
}

// ---------------------------------------------------------------------------
// BIC

struct ScoredStructure {
    Dag dag;
    double score = 0.0;           // BIC, lower is better
    double log_likelihood = 0.0;  // natural log
    std::size_t k = 0;            // free parameters
    std::size_t n = 0;            // sample size
};

struct FamilyScore {
    double log_likelihood = 0.0;
    std::size_t k = 0;
};

/// Log-likelihood and parameter count of one node given its parents:
/// sum over (pa, x) of N(x, pa) ln P(x | pa), P(x | pa) = (N(x, pa) + s) / (N(pa) + s r).
inline FamilyScore family_score(const DataTable& data, const std::string& child,
                                const std::vector<std::string>& parents, double smoothing) {
    if (smoothing < 0.0) throw ConfigError("smoothing must be >= 0");
    std::vector<std::string> vars = parents;
    vars.push_back(child);
    for (const auto& v : vars) {
        if (!data.has_column(v)) throw NodeNotInData("node '" + v + "' is not a data column");
    }
    const auto t = contingency(data, vars);
    const std::size_t r = t.dims.back();
    const std::size_t q = t.cell_count() / r;
    FamilyScore fs;
    fs.k = (r - 1) * q;
    for (std::size_t pa = 0; pa < q; ++pa) {
        std::size_t n_pa = 0;
        for (std::size_t x = 0; x < r; ++x) n_pa += t.counts[pa * r + x];
        const double denom = static_cast<double>(n_pa) + smoothing * static_cast<double>(r);
        for (std::size_t x = 0; x < r; ++x) {
            const auto c = t.counts[pa * r + x];
            if (c == 0) continue;
            fs.log_likelihood += static_cast<double>(c) * std::log((static_cast<double>(c) + smoothing) / denom);
        }
    }
    return fs;
}

inline double bic_from(double log_likelihood, std::size_t k, std::size_t n) {
    return -2.0 * log_likelihood + static_cast<double>(k) * std::log(static_cast<double>(n));
}

inline double family_bic(const DataTable& data, const std::string& child, const std::vector<std::string>& parents,
                         double smoothing) {
    const auto fs = family_score(data, child, parents, smoothing);
    return bic_from(fs.log_likelihood, fs.k, data.n_rows());
}

/// BIC = -2 ln L + k ln n; decomposes into a sum of per-node family terms.
inline ScoredStructure bic_score(const DataTable& data, const Dag& dag, double smoothing = 1.0) {
    ScoredStructure s;
    s.dag = dag;
    s.n = data.n_rows();
    for (const auto& node : dag.nodes()) {
        const auto fs = family_score(data, node, dag.parents(node), smoothing);
        s.log_likelihood += fs.log_likelihood;
        s.k += fs.k;
    }
    s.score = bic_from(s.log_likelihood, s.k, s.n);
    return s;
}

// ---------------------------------------------------------------------------
// Hill climbing

struct HillClimbOptions {
    std::size_t max_iters = 1000;
    double smoothing = 1.0;
    /// When set, only these unordered pairs may carry an edge.
    std::optional<std::set<std::pair<std::string, std::string>>> allowed_pairs;
};

enum class MoveKind { add = 0, remove = 1, reverse = 2 };

struct Move {
    MoveKind kind = MoveKind::add;
    std::string parent;
    std::string child;
    double delta = 0.0;  // change in BIC
};

namespace detail {

class FamilyCache {
public:
    FamilyCache(const DataTable& data, double smoothing) : data_(data), smoothing_(smoothing) {}

    double operator()(const std::string& child, std::vector<std::string> parents) {
        std::sort(parents.begin(), parents.end());
        auto key = std::make_pair(child, parents);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        const double v = family_bic(data_, child, parents, smoothing_);
        cache_.emplace(std::move(key), v);
        return v;
    }

private:
    const DataTable& data_;
    double smoothing_;
    std::map<std::pair<std::string, std::vector<std::string>>, double> cache_;
};

inline std::vector<std::string> without(std::vector<std::string> v, const std::string& x) {
    v.erase(std::remove(v.begin(), v.end(), x), v.end());
    return v;
}

inline std::vector<std::string> with(std::vector<std::string> v, const std::string& x) {
    v.push_back(x);
    return v;
}

}  // namespace detail

/// Every legal single-edge move on `dag` with its BIC delta, ordered by
/// (parent, child) lexicographically and then add < remove < reverse.
inline std::vector<Move> candidate_moves(const DataTable& data, const Dag& dag, double smoothing,
                                         const std::optional<std::set<std::pair<std::string, std::string>>>& allowed = {},
                                         detail::FamilyCache* cache = nullptr) {
    std::optional<detail::FamilyCache> local;
    if (!cache) cache = &local.emplace(data, smoothing);
    auto nodes = dag.nodes();
    std::sort(nodes.begin(), nodes.end());
    auto permitted = [&](const std::string& a, const std::string& b) {
        if (!allowed) return true;
        return allowed->count({a, b}) || allowed->count({b, a});
    };

    std::vector<Move> moves;
    for (const auto& p : nodes) {
        for (const auto& c : nodes) {
            if (p == c) continue;
            const auto pc = dag.parents(c);
            if (dag.has_edge(p, c)) {
                const double old_c = (*cache)(c, pc);
                const double del = (*cache)(c, detail::without(pc, p)) - old_c;
                moves.push_back({MoveKind::remove, p, c, del});
                Dag trial = dag;
                trial.remove_edge(p, c);
                if (!trial.would_create_cycle(c, p)) {
                    const auto pp = dag.parents(p);
                    const double rev = del + (*cache)(p, detail::with(pp, c)) - (*cache)(p, pp);
                    moves.push_back({MoveKind::reverse, p, c, rev});
                }
            } else if (!dag.has_edge(c, p) && permitted(p, c) && !dag.would_create_cycle(p, c)) {
                const double add = (*cache)(c, detail::with(pc, p)) - (*cache)(c, pc);
                moves.push_back({MoveKind::add, p, c, add});
            }
        }
    }
    return moves;
}

inline void apply_move(Dag& dag, const Move& m) {
    switch (m.kind) {
        case MoveKind::add: dag.add_edge(m.parent, m.child); break;
        case MoveKind::remove: dag.remove_edge(m.parent, m.child); break;
        case MoveKind::reverse: dag.reverse_edge(m.parent, m.child); break;
    }
}

/// Greedy search: repeatedly applies the single best improving move until none
/// improves the score or `max_iters` moves were applied. Ties keep the first
/// move in `candidate_moves` order.
inline ScoredStructure hill_climb(const DataTable& data, const Dag& init, const HillClimbOptions& opts = {}) {
    constexpr double min_improvement = 1e-9;
    Dag dag = init;
    detail::FamilyCache cache(data, opts.smoothing);
    for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
        const auto moves = candidate_moves(data, dag, opts.smoothing, opts.allowed_pairs, &cache);
        const Move* best = nullptr;
        for (const auto& m : moves) {
            if (m.delta < -min_improvement && (!best || m.delta < best->delta - 1e-12)) best = &m;
        }
        if (!best) break;
        apply_move(dag, *best);
    }
    return bic_score(data, dag, opts.smoothing);
}

/// Skeleton-restricted search: hill climbing from the empty graph where only
/// skeleton pairs may be connected. Orients the MIIC-style skeleton by BIC.
inline ScoredStructure orient_skeleton(const DataTable& data, const Skeleton& sk, const HillClimbOptions& base = {}) {
    HillClimbOptions opts = base;
    opts.allowed_pairs = std::set<std::pair<std::string, std::string>>(sk.edges.begin(), sk.edges.end());
    return hill_climb(data, Dag(sk.nodes), opts);
}

}  // namespace causalkit
