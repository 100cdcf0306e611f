#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace causalkit;

namespace {

std::vector<std::string> numbered(int k) {
    std::vector<std::string> v;
    for (int i = 0; i < k; ++i) v.push_back(std::to_string(i));
    return v;
}

// Columns of small non-negative integers whose level index equals the value.
DataTable integer_table(const std::vector<std::string>& names, const std::vector<std::vector<int>>& rows) {
    std::map<std::string, std::vector<std::string>> levels;
    std::vector<int> hi(names.size(), 0);
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) hi[c] = std::max(hi[c], r[c]);
    }
    for (std::size_t c = 0; c < names.size(); ++c) levels[names[c]] = numbered(hi[c] + 1);
    std::vector<std::vector<std::string>> labels;
    for (const auto& r : rows) {
        std::vector<std::string> l;
        for (int v : r) l.push_back(std::to_string(v));
        labels.push_back(l);
    }
    return DataTable::from_labels(names, labels, levels);
}

EntropyReport summary_only(std::vector<double> v) {
    EntropyReport r;
    r.summary = {v[0], v[1], v[2], v[3], v[4], v[5]};
    return r;
}

}  // namespace

TEST(Regression, NoiseFreeLine) {
    std::vector<std::vector<int>> rows;
    for (int i = 0; i < 50; ++i) rows.push_back({i % 25, 2 * (i % 25)});
    const auto t = integer_table({"X", "Y"}, rows);
    const auto report = sem_validate(t, Dag({"X", "Y"}, {{"X", "Y"}}));
    ASSERT_EQ(report.entries.size(), 1u);
    EXPECT_NEAR(report.entries[0].estimate, 2.0, 1e-9);
    EXPECT_LT(report.entries[0].p_value, 1e-12);
    EXPECT_TRUE(report.entries[0].significant);
}

TEST(Regression, NullPValuesLookUniform) {
    std::vector<double> ps;
    for (int seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        std::uniform_int_distribution<int> u(0, 9);
        std::vector<std::vector<int>> rows;
        for (int i = 0; i < 10000; ++i) rows.push_back({u(rng), u(rng)});
        const auto e = regress_family(integer_table({"X", "Y"}, rows), "Y", {"X"}, 0.05).front();
        EXPECT_LT(std::fabs(e.estimate), 0.05);
        ps.push_back(e.p_value);
    }
    // Kolmogorov-Smirnov distance to Uniform(0, 1); 0.163 is the 1% critical value at n = 100.
    std::sort(ps.begin(), ps.end());
    double d = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        d = std::max({d, std::fabs(ps[i] - static_cast<double>(i) / 100.0), std::fabs(static_cast<double>(i + 1) / 100.0 - ps[i])});
    }
    EXPECT_LT(d, 0.163);
}

TEST(Regression, MoreNoiseMeansLargerPValues) {
    double previous = -1.0;
    for (int scale : {1, 2, 4, 8}) {
        double mean_p = 0.0;
        for (int seed = 0; seed < 60; ++seed) {
            std::mt19937_64 rng(2000 + seed);
            std::uniform_int_distribution<int> ux(0, 4), noise(0, scale);
            std::vector<std::vector<int>> rows;
            for (int i = 0; i < 30; ++i) {
                const int x = ux(rng);
                rows.push_back({x, x + noise(rng)});
            }
            mean_p += regress_family(integer_table({"X", "Y"}, rows), "Y", {"X"}, 0.05).front().p_value / 60.0;
        }
        EXPECT_GT(mean_p, previous) << "scale " << scale;
        previous = mean_p;
    }
}

TEST(Regression, Errors) {
    const auto t = integer_table({"A", "B", "C"}, {{0, 0, 1}, {1, 1, 0}, {2, 2, 1}, {1, 1, 1}, {0, 0, 0}});
    EXPECT_THROW(regress_family(t, "C", {"A", "B"}, 0.05), RankDeficient);
    const auto tiny = integer_table({"A", "B"}, {{0, 1}, {1, 0}});
    EXPECT_THROW(regress_family(tiny, "B", {"A"}, 0.05), TooFewRows);
    EXPECT_THROW(sem_validate(t, Dag({"A", "Z"}, {{"A", "Z"}})), NodeNotInData);
    EXPECT_THROW(sem_validate(t, Dag({"A", "B"}), 1.5), ConfigError);
}

TEST(PathReportText, MarksNonSignificantEntries) {
    PathReport r;
    r.entries = {{"Quality_of_Sleep", "Physical_Activity", 0.0137, 0.02, 0.5, 0.5989, false},
                 {"Quality_of_Sleep", "Sleep_Duration", 0.9, 0.01, 90, 0.0, true}};
    const auto text = to_text(r);
    EXPECT_NE(text.find("0.5989 *"), std::string::npos);
    EXPECT_EQ(text.find("0.0000 *"), std::string::npos);
}

TEST(Entropy, UniformAndDegenerateNodes) {
    const BayesNet u4(Dag({"U"}), {{"U", {"a", "b", "c", "d"}}}, {{"U", {}, 4, {}, {0.25, 0.25, 0.25, 0.25}}});
    EXPECT_DOUBLE_EQ(node_entropies(u4).per_node.at("U"), 2.0);
    const BayesNet deg(Dag({"D"}), {{"D", {"a", "b"}}}, {{"D", {}, 2, {}, {1.0, 0.0}}});
    EXPECT_DOUBLE_EQ(node_entropies(deg).per_node.at("D"), 0.0);
}

TEST(Entropy, BoundedByLogLevelsOnFittedNetworks) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        const auto truth = testutil::random_network(rng, 6, 4);
        const auto t = testutil::sample(truth, 120, rng);
        const auto bn = fit_cpts(t, truth.dag());
        const auto rep = node_entropies(bn);
        for (std::size_t i = 0; i < bn.size(); ++i) {
            const double h = rep.per_node.at(bn.nodes()[i]);
            EXPECT_GE(h, 0.0);
            EXPECT_LE(h, std::log2(static_cast<double>(bn.levels(i).size())) + 1e-12);
        }
    }
}

TEST(Entropy, UniformCptsReachTheBound) {
    // Every CPT row uniform: every marginal is uniform whatever the structure.
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const auto base = testutil::random_network(rng, 5, 4);
        std::vector<Variable> vars;
        std::vector<Cpt> cpts;
        for (std::size_t i = 0; i < base.size(); ++i) {
            vars.push_back({base.nodes()[i], base.levels(i)});
            auto cpt = base.cpt(i);
            std::fill(cpt.table.begin(), cpt.table.end(), 1.0 / static_cast<double>(cpt.child_levels));
            cpts.push_back(cpt);
        }
        const BayesNet bn(base.dag(), vars, cpts);
        const auto rep = node_entropies(bn);
        for (std::size_t i = 0; i < bn.size(); ++i) {
            EXPECT_NEAR(rep.per_node.at(bn.nodes()[i]), std::log2(static_cast<double>(bn.levels(i).size())), 1e-9);
        }
    }
}

TEST(Entropy, DeterministicChildGivenParentsIsZero) {
    Dag d({"A", "B", "C"}, {{"A", "C"}, {"B", "C"}});
    // C = A and B.
    std::vector<Cpt> cpts{{"A", {}, 2, {}, {0.4, 0.6}},
                          {"B", {}, 2, {}, {0.5, 0.5}},
                          {"C", {"A", "B"}, 2, {2, 2}, {1, 0, 1, 0, 1, 0, 0, 1}}};
    const BayesNet bn(d, {{"A", {"0", "1"}}, {"B", {"0", "1"}}, {"C", {"0", "1"}}}, cpts);
    for (const auto& a : {"0", "1"}) {
        for (const auto& b : {"0", "1"}) {
            EXPECT_DOUBLE_EQ(node_entropies(bn, {{"A", a}, {"B", b}}).per_node.at("C"), 0.0);
        }
    }
}

TEST(ArcWeights, IndependentIdenticalAndBruteForce) {
    const auto same = integer_table({"X", "Y"}, {{0, 0}, {1, 1}, {2, 2}, {1, 1}});
    const Dag xy({"X", "Y"}, {{"X", "Y"}});
    EXPECT_NEAR(arc_mutual_information(same, xy).at({"X", "Y"}), entropy(same, "X"), 1e-12);
    const auto indep = integer_table({"X", "Y"}, {{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    EXPECT_NEAR(arc_mutual_information(indep, xy).at({"X", "Y"}), 0.0, 1e-12);

    const auto t = preprocess(testutil::fixture("fixtures/data/synthetic_sleep.csv"),
                              PreprocessConfig::load(testutil::fixture("configs/sleep_health.json")));
    const auto s = load_structure(testutil::fixture("fixtures/structures/sleep_llm.json"));
    const auto w = arc_mutual_information(t, s.dag);
    ASSERT_EQ(w.size(), 12u);
    for (const auto& [e, mi] : w) {
        // Two-variable sum straight from the rows.
        const auto a = t.column_index(e.first), b = t.column_index(e.second);
        std::map<std::pair<int, int>, double> pab;
        std::map<int, double> pa, pb;
        const double n = static_cast<double>(t.n_rows());
        for (std::size_t r = 0; r < t.n_rows(); ++r) {
            pab[{static_cast<int>(t.at(r, a)), static_cast<int>(t.at(r, b))}] += 1 / n;
            pa[static_cast<int>(t.at(r, a))] += 1 / n;
            pb[static_cast<int>(t.at(r, b))] += 1 / n;
        }
        double oracle = 0.0;
        for (const auto& [k, p] : pab) oracle += p * std::log2(p / (pa[k.first] * pb[k.second]));
        EXPECT_GE(mi, 0.0);
        EXPECT_NEAR(mi, oracle, 1e-9);
    }
}

TEST(Compare, IdenticalReportsTieEverywhere) {
    const auto r = summary_only({1, 2, 3, 4, 5, 6});
    const auto table = compare_methods({{"A", r}, {"B", r}, {"C", r}});
    for (const auto& row : table.rows) EXPECT_EQ(row.argmin, (std::vector<std::string>{"A", "B", "C"}));
}

TEST(Compare, ReferenceSummaryValues) {
    const auto table = compare_methods({{"LLM", summary_only({1.4237, 0.8897, 1.1654, 1.2884, 1.4882, 2.9855})},
                                        {"BIC", summary_only({1.4770, 0.9119, 1.1919, 1.3226, 1.5410, 3.0144})},
                                        {"Expert", summary_only({1.4773, 0.9282, 1.1473, 1.2075, 1.5555, 3.2357})}});
    EXPECT_EQ(table.row("Mean").argmin, (std::vector<std::string>{"LLM"}));
    EXPECT_EQ(table.row("Min").argmin, (std::vector<std::string>{"LLM"}));
    EXPECT_EQ(table.row("50%").argmin, (std::vector<std::string>{"Expert"}));
    const auto text = to_text(table);
    EXPECT_NE(text.find("1.4237*"), std::string::npos);
    EXPECT_NE(text.find("1.2075*"), std::string::npos);
}

TEST(Compare, SingleNodeReportSummaryIsThatValue) {
    const auto rep = make_entropy_report({"X"}, {{"X", 0.75}});
    for (double v : summary_values(rep.summary)) EXPECT_DOUBLE_EQ(v, 0.75);
    EXPECT_THROW(compare_methods({{"only", rep}}), ConfigError);
}

TEST(Compare, ArgminInvariantUnderLabelPrefix) {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(0, 3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::pair<std::string, EntropyReport>> plain, prefixed;
        for (const auto* l : {"x", "y", "z"}) {
            const auto r = summary_only({u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)});
            plain.emplace_back(l, r);
            prefixed.emplace_back(std::string("method-") + l, r);
        }
        const auto a = compare_methods(plain), b = compare_methods(prefixed);
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            ASSERT_EQ(a.rows[i].argmin.size(), b.rows[i].argmin.size());
            for (std::size_t k = 0; k < a.rows[i].argmin.size(); ++k) {
                EXPECT_EQ("method-" + a.rows[i].argmin[k], b.rows[i].argmin[k]);
            }
        }
    }
}

TEST(EntropyReportJson, RoundTrip) {
    const auto rep = make_entropy_report({"A", "B"}, {{"A", 0.5}, {"B", 1.5}});
    const auto back = entropy_report_from_json(nlohmann::json::parse(to_json(rep).dump()));
    EXPECT_EQ(back.nodes, rep.nodes);
    EXPECT_EQ(back.per_node, rep.per_node);
    EXPECT_EQ(summary_values(back.summary), summary_values(rep.summary));
}
