#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace causalkit;
using testutil::fixture;
using testutil::read_file;

namespace {

PromptContext sleep_context() {
    auto ctx = prompt_context_from_json(nlohmann::json::parse(read_file(fixture("fixtures/llm/context_sleep.json"))));
    ctx.n_rows = 400;
    ctx.n_cols = 13;
    return ctx;
}

PromptContext abc_context() {
    PromptContext ctx;
    ctx.domain_topic = "toy systems";
    ctx.dataset_name = "Toy";
    ctx.n_rows = 10;
    ctx.n_cols = 3;
    ctx.variables = {"A", "B", "C"};
    ctx.discovery_method = "BIC";
    return ctx;
}

std::size_t count_lines_starting(const std::string& text, const std::string& prefix) {
    std::size_t n = 0;
    for (const auto& line : detail::split_lines(text)) n += line.rfind(prefix, 0) == 0;
    return n;
}

ElicitationTranscript replay() {
    FileReplayTransport proposer(fixture("fixtures/llm/proposer_round1.txt"));
    FileReplayTransport verifier(fixture("fixtures/llm/verifier_round2.txt"));
    return run_protocol(sleep_context(), proposer, verifier);
}

}  // namespace

TEST(ProposalPrompt, ThreeVariablesNoSeeds) {
    const auto p = render_proposal_prompt(abc_context());
    for (const auto* v : {"A", "B", "C"}) EXPECT_NE(p.find(std::string(v)), std::string::npos);
    EXPECT_EQ(p.find("(e.g.,"), std::string::npos);
}

TEST(ProposalPrompt, SleepContextCarriesShapeMethodAndNames) {
    const auto ctx = sleep_context();
    const auto p = render_proposal_prompt(ctx);
    EXPECT_NE(p.find("400"), std::string::npos);
    EXPECT_NE(p.find("BIC"), std::string::npos);
    for (const auto& v : ctx.variables) EXPECT_NE(p.find(v), std::string::npos) << v;
    for (const auto& s : ctx.seed_relationships) EXPECT_NE(p.find(seed_line(s)), std::string::npos);
    EXPECT_NE(p.find("ANSWER FORMAT"), std::string::npos);
    EXPECT_EQ(p, render_proposal_prompt(ctx));
}

TEST(ProposalPrompt, EmptyVariableListRejected) {
    auto ctx = abc_context();
    ctx.variables.clear();
    EXPECT_THROW(render_proposal_prompt(ctx), EmptyVariableList);
}

TEST(VerificationPrompt, OneLinePerClaim) {
    const auto ctx = abc_context();
    const auto one = render_verification_prompt(ctx, {make_claim(ctx, "A", "B", "because")});
    EXPECT_EQ(count_lines_starting(one, "[1] "), 1u);
    EXPECT_EQ(count_lines_starting(one, "[2] "), 0u);
    EXPECT_NE(one.find("[1] A \xE2\x86\x92 B: because"), std::string::npos);
    EXPECT_THROW(render_verification_prompt(ctx, {}), NoClaims);

    const auto ctx2 = sleep_context();
    const auto claims = parse_claims(read_file(fixture("fixtures/llm/proposer_round1.txt")), ctx2).claims;
    ASSERT_EQ(claims.size(), 12u);
    const auto twelve = render_verification_prompt(ctx2, claims);
    for (int i = 1; i <= 12; ++i) EXPECT_EQ(count_lines_starting(twelve, "[" + std::to_string(i) + "] "), 1u);
    EXPECT_EQ(count_lines_starting(twelve, "[13]"), 0u);
}

TEST(Claims, ConstructionRejectsUnknownAndSelf) {
    const auto ctx = abc_context();
    EXPECT_THROW(make_claim(ctx, "A", "Z", ""), InvalidClaim);
    EXPECT_THROW(make_claim(ctx, "A", "A", ""), InvalidClaim);
}

TEST(ParseClaims, DirectedLine) {
    const auto ctx = sleep_context();
    const auto r = parse_claims("Sleep_Duration -> Stress_Level :: less sleep raises stress", ctx);
    ASSERT_EQ(r.claims.size(), 1u);
    EXPECT_EQ(r.claims[0].parent, "Sleep_Duration");
    EXPECT_EQ(r.claims[0].child, "Stress_Level");
    EXPECT_EQ(r.claims[0].rationale, "less sleep raises stress");
    EXPECT_EQ(r.claims[0].direction, DirectionConfidence::directed);
}

TEST(ParseClaims, BidirectionalWithSpacedNames) {
    const auto r = parse_claims("Heart Rate <-> Stress Level", sleep_context());
    ASSERT_EQ(r.claims.size(), 1u);
    EXPECT_EQ(r.claims[0].parent, "Heart_Rate");
    EXPECT_EQ(r.claims[0].child, "Stress_Level");
    EXPECT_EQ(r.claims[0].direction, DirectionConfidence::bidirectional);
}

TEST(ParseClaims, UnknownVariableBecomesDiagnostic) {
    const auto r = parse_claims_lenient("Happiness -> Stress_Level", sleep_context());
    EXPECT_TRUE(r.claims.empty());
    ASSERT_EQ(r.diagnostics.size(), 1u);
    EXPECT_EQ(r.diagnostics[0].line, 1u);
    EXPECT_THROW(parse_claims("Happiness -> Stress_Level", sleep_context()), NoClaimsFound);
}

TEST(ParseClaims, RenderParseRoundTrip) {
    std::mt19937_64 rng(51);
    const std::vector<std::string> pool{"Age", "Body_Mass", "Daily_Steps", "Heart_Rate", "Mood", "Sleep_Hours", "Zeta"};
    const std::vector<std::string> words{"more", "less", "raises", "lowers", "sleep", "stress", "strongly"};
    PromptContext ctx = abc_context();
    ctx.variables = pool;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<EdgeClaim> claims;
        std::set<std::pair<std::string, std::string>> used;
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1), len(0, 5);
        std::bernoulli_distribution bidi(0.2);
        for (int k = 0; k < 8; ++k) {
            const auto a = pool[pick(rng)], b = pool[pick(rng)];
            if (a == b || used.count({a, b}) || used.count({b, a})) continue;
            used.insert({a, b});
            std::string why;
            for (std::size_t w = len(rng); w > 0; --w) why += (why.empty() ? "" : " ") + words[pick(rng) % words.size()];
            claims.push_back(make_claim(ctx, a, b, why,
                                        bidi(rng) ? DirectionConfidence::bidirectional : DirectionConfidence::directed));
        }
        std::string response = "Here is my analysis of the variables.\n\n";
        for (const auto& c : claims) {
            response += "- " + c.parent + (c.direction == DirectionConfidence::bidirectional ? " <-> " : " -> ") +
                        c.child + (c.rationale.empty() ? "" : " :: " + c.rationale) + "\n";
        }
        const auto parsed = parse_claims_lenient(response, ctx);
        EXPECT_EQ(parsed.claims, claims);
        EXPECT_EQ(parsed.diagnostics.size(), 1u);  // the prose line
    }
}

TEST(ParseVerdicts, FixtureVerdictsAndConfounders) {
    const auto ctx = sleep_context();
    const auto claims = parse_claims(read_file(fixture("fixtures/llm/proposer_round1.txt")), ctx).claims;
    const auto v = parse_verdicts(read_file(fixture("fixtures/llm/verifier_round2.txt")), ctx, claims);
    ASSERT_EQ(v.verdicts.size(), 12u);
    EXPECT_EQ(v.verdicts[2].verdict, Verdict::revised);
    EXPECT_EQ(*v.verdicts[2].revised_direction, Edge("Sleep_Duration", "Stress_Level"));
    EXPECT_EQ(*v.verdicts[4].revised_direction, Edge("Heart_Rate", "Stress_Level"));
    EXPECT_EQ(v.confounders.size(), 3u);
}

TEST(ParseVerdicts, BadLinesAreDiagnosed) {
    const auto ctx = abc_context();
    const std::vector<EdgeClaim> claims{make_claim(ctx, "A", "B", "")};
    const auto v = parse_verdicts("[1] revised :: no direction\n[7] confirmed\n[1] confirmed :: fine\n[1] rejected\n",
                                  ctx, claims);
    ASSERT_EQ(v.verdicts.size(), 1u);
    EXPECT_EQ(v.verdicts[0].verdict, Verdict::confirmed);
    EXPECT_EQ(v.diagnostics.size(), 3u);
}

TEST(Protocol, ScriptedTwelveClaimReplay) {
    const auto tr = replay();
    EXPECT_EQ(tr.proposed_count, 12u);
    EXPECT_EQ(tr.confirmed_count, 10u);
    EXPECT_TRUE(tr.complete);
    EXPECT_EQ(tr.final_dag.edge_count(), 12u);
    const auto expected = load_structure(fixture("fixtures/structures/sleep_llm.json"));
    EXPECT_TRUE(tr.final_dag.same_structure(expected.dag));
    EXPECT_TRUE(tr.final_dag.has_edge("Heart_Rate", "Stress_Level"));
    ASSERT_EQ(tr.resolutions.size(), 2u);
    for (const auto& r : tr.resolutions) EXPECT_EQ(r.rule_applied, "verifier_priority");
    EXPECT_EQ(tr.confounders.size(), 3u);
}

TEST(Protocol, TranscriptIsByteStable) {
    const auto a = to_json(replay()).dump(2);
    const auto b = to_json(replay()).dump(2);
    EXPECT_EQ(a, b);
    const auto golden = fixture("fixtures/golden/transcript_sleep.json");
    if (std::getenv("CAUSALKIT_UPDATE_GOLDEN")) testutil::write_file(golden, a + "\n");
    EXPECT_EQ(a + "\n", read_file(golden));
}

TEST(Protocol, NoInventedEdges) {
    const auto tr = replay();
    for (const auto& [p, c] : tr.final_dag.edges()) {
        bool backed = false;
        for (const auto& v : tr.verdicts) {
            if (v.verdict == Verdict::rejected) continue;
            const auto& claim = tr.round1_claims[v.claim_index];
            backed = backed || (claim.parent == p && claim.child == c) || (claim.parent == c && claim.child == p);
        }
        EXPECT_TRUE(backed) << p << " -> " << c;
    }
}

TEST(Protocol, VerifierConfirmingAllKeepsProposedEdges) {
    const auto ctx = abc_context();
    ScriptedTransport proposer({"A -> B :: x\nB -> C :: y\n"});
    ScriptedTransport verifier({"[1] confirmed :: ok\n[2] confirmed :: ok\n"});
    const auto tr = run_protocol(ctx, proposer, verifier);
    EXPECT_TRUE(tr.final_dag.same_structure(Dag({"A", "B", "C"}, {{"A", "B"}, {"B", "C"}})));
    EXPECT_EQ(tr.confirmed_count, 2u);
    ASSERT_EQ(verifier.prompts().size(), 1u);
    EXPECT_NE(verifier.prompts()[0].find("[2] B \xE2\x86\x92 C: y"), std::string::npos);
}

TEST(Protocol, RoundOneParseFailureKeepsPartialTranscript) {
    ScriptedTransport proposer({"I cannot determine any relationships."});
    ScriptedTransport verifier({"unused"});
    try {
        run_protocol(abc_context(), proposer, verifier);
        FAIL() << "expected ParseFailure";
    } catch (const ParseFailure& e) {
        EXPECT_EQ(e.round(), 1);
        EXPECT_EQ(e.name(), "ParseFailure");
        EXPECT_EQ(e.partial().round1_raw, "I cannot determine any relationships.");
        EXPECT_FALSE(e.partial().complete);
        EXPECT_TRUE(verifier.prompts().empty());
    }
}

TEST(Protocol, RoundTwoTransportFailureKeepsRoundOne) {
    ScriptedTransport proposer({"A -> B"});
    ScriptedTransport verifier([](const std::string&) -> std::string { throw TransportFailure("HTTP 503"); });
    try {
        run_protocol(abc_context(), proposer, verifier);
        FAIL() << "expected TransportError";
    } catch (const TransportError& e) {
        EXPECT_EQ(e.round(), 2);
        EXPECT_EQ(e.partial().round1_claims.size(), 1u);
        EXPECT_NE(std::string(e.what()).find("HTTP 503"), std::string::npos);
    }
}

TEST(Resolution, VerifierDirectionWins) {
    const auto r = resolve_bidirectional({"A", "B"}, {}, {{"A", "B", Edge{"B", "A"}, 0}}, ResolutionPolicy::verifier_priority());
    ASSERT_EQ(r.resolutions.size(), 1u);
    EXPECT_EQ(*r.resolutions[0].chosen, Edge("B", "A"));
    EXPECT_EQ(r.resolutions[0].rule_applied, "verifier_priority");
    EXPECT_TRUE(r.dag.has_edge("B", "A"));
}

TEST(Resolution, MissingDirectionNeedsDataOrManualEntry) {
    const std::vector<BidirectionalItem> items{{"A", "B", std::nullopt, 0}};
    EXPECT_THROW(resolve_bidirectional({"A", "B"}, {}, items, ResolutionPolicy::verifier_priority()), UnresolvedPair);
    EXPECT_THROW(resolve_bidirectional({"A", "B"}, {}, items, ResolutionPolicy::manual_map({})), UnresolvedPair);
    const auto r = resolve_bidirectional({"A", "B"}, {}, items, ResolutionPolicy::manual_map({{{"B", "A"}, {"A", "B"}}}));
    EXPECT_EQ(r.resolutions[0].rule_applied, "manual");
    EXPECT_TRUE(r.dag.has_edge("A", "B"));
}

TEST(Resolution, SemEstimatePicksLargerSlope) {
    // B = 2A exactly, so |slope of B on A| = 2 > |slope of A on B| = 0.5.
    std::vector<std::vector<std::string>> rows;
    for (int i = 0; i < 20; ++i) rows.push_back({std::to_string(i % 4), std::to_string(2 * (i % 4))});
    const auto t = DataTable::from_labels({"A", "B"}, rows, {{"A", {"0", "1", "2", "3"}},
                                                             {"B", {"0", "1", "2", "3", "4", "5", "6"}}});
    const auto r = resolve_bidirectional({"A", "B"}, {}, {{"B", "A", std::nullopt, 0}}, ResolutionPolicy::sem_estimate(t));
    EXPECT_EQ(*r.resolutions[0].chosen, Edge("A", "B"));
    EXPECT_EQ(r.resolutions[0].rule_applied, "sem_estimate");
}

TEST(Resolution, ThreeCycleFlipsLowestTierEdge) {
    // Confirmed A -> B and B -> C outrank the revised C -> A, which is flipped.
    const std::vector<AcceptedEdge> directed{{{"C", "A"}, EdgeTier::revised, 0},
                                             {{"A", "B"}, EdgeTier::confirmed, 1},
                                             {{"B", "C"}, EdgeTier::confirmed, 2}};
    const auto r = resolve_bidirectional({"A", "B", "C"}, directed, {}, ResolutionPolicy::verifier_priority());
    EXPECT_TRUE(r.dag.same_structure(Dag({"A", "B", "C"}, {{"A", "B"}, {"B", "C"}, {"A", "C"}})));
    ASSERT_EQ(r.resolutions.size(), 1u);
    EXPECT_EQ(r.resolutions[0].rule_applied, "cycle_repair");
    EXPECT_EQ(*r.resolutions[0].chosen, Edge("A", "C"));
    EXPECT_NE(r.resolutions[0].note.find("A -> B -> C -> A"), std::string::npos);
}

TEST(Resolution, ResolvedPairRepairedInItsOwnRecord) {
    // Pair B <-> A resolved to A -> B collides with confirmed B -> A: dropped, one record.
    const auto r = resolve_bidirectional({"A", "B"}, {{{"B", "A"}, EdgeTier::confirmed, 0}},
                                         {{"B", "A", Edge{"A", "B"}, 1}}, ResolutionPolicy::verifier_priority());
    ASSERT_EQ(r.resolutions.size(), 1u);
    EXPECT_FALSE(r.resolutions[0].chosen.has_value());
    EXPECT_NE(r.resolutions[0].note.find("dropped"), std::string::npos);
    EXPECT_EQ(r.dag.edge_count(), 1u);
}

TEST(Transports, FileReplaySequence) {
    const auto dir = testutil::scratch_dir("replay");
    const auto path = testutil::write_file(dir / "r.json", R"(["one", "two"])");
    FileReplayTransport t(path);
    EXPECT_EQ(t.complete(""), "one");
    EXPECT_EQ(t.complete(""), "two");
    EXPECT_EQ(t.complete(""), "two");
    EXPECT_THROW(FileReplayTransport("/nonexistent.txt"), MissingFile);
}

TEST(ContextJson, RoundTrip) {
    const auto ctx = sleep_context();
    const auto back = prompt_context_from_json(to_json(ctx));
    EXPECT_EQ(render_proposal_prompt(back), render_proposal_prompt(ctx));
}
