#pragma once

// Two-round LLM expert elicitation. A proposer model is asked for causal
// relationships among the dataset variables; a verifier model confirms,
// rejects or revises each one and names confounders. Bidirectional claims
// are resolved to a single direction and the result is repaired into a DAG.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causalkit/data.hpp"
#include "causalkit/error.hpp"
#include "causalkit/graph.hpp"
#include "causalkit/validation.hpp"

namespace causalkit {

struct SeedRelationship {
    std::string parent;
    std::string child;
    std::string description;
};

/// Everything the proposal and verification templates need.
struct PromptContext {
    std::string domain_topic;
    std::string dataset_name;
    std::string dataset_details;   // free text; defaults to the dataset name and shape
    std::string relevant_factors;  // free text; defaults to a generic list
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<std::string> variables;
    std::string discovery_method;
    std::vector<SeedRelationship> seed_relationships;

    void validate() const {
        if (variables.empty()) throw EmptyVariableList("the prompt context lists no variables");
        for (const auto& s : seed_relationships) {
            for (const auto* v : {&s.parent, &s.child}) {
                if (std::find(variables.begin(), variables.end(), *v) == variables.end()) {
                    throw InvalidClaim("seed relationship references unknown variable '" + *v + "'");
                }
            }
        }
    }

    bool has_variable(const std::string& v) const {
        return std::find(variables.begin(), variables.end(), v) != variables.end();
    }
};

enum class DirectionConfidence { directed, bidirectional };
enum class ClaimSource { proposer, verifier };

struct EdgeClaim {
    std::string parent;
    std::string child;
    std::string rationale;
    DirectionConfidence direction = DirectionConfidence::directed;
    ClaimSource source = ClaimSource::proposer;

    bool operator==(const EdgeClaim&) const = default;
};

/// Validated construction: parent != child, both listed in the context.
inline EdgeClaim make_claim(const PromptContext& ctx, std::string parent, std::string child, std::string rationale,
                            DirectionConfidence direction = DirectionConfidence::directed,
                            ClaimSource source = ClaimSource::proposer) {
    if (parent == child) throw InvalidClaim("claim relates '" + parent + "' to itself");
    for (const auto* v : {&parent, &child}) {
        if (!ctx.has_variable(*v)) throw InvalidClaim("claim references unknown variable '" + *v + "'");
    }
    return {std::move(parent), std::move(child), std::move(rationale), direction, source};
}

enum class Verdict { confirmed, rejected, revised };

inline std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::confirmed: return "confirmed";
        case Verdict::rejected: return "rejected";
        case Verdict::revised: return "revised";
    }
    return "rejected";
}

struct Confounder {
    std::string name;
    std::string rationale;
};

/// Verifier's judgement of round-1 claim `claim_index` (0-based).
struct VerificationVerdict {
    std::size_t claim_index = 0;
    Verdict verdict = Verdict::rejected;
    std::optional<Edge> revised_direction;  // present iff verdict == revised
    std::string rationale;
};

struct Diagnostic {
    std::size_t line = 0;  // 1-based line in the response
    std::string text;
    std::string reason;
};

struct ClaimParse {
    std::vector<EdgeClaim> claims;
    std::vector<Diagnostic> diagnostics;
};

struct VerdictParse {
    std::vector<VerificationVerdict> verdicts;
    std::vector<Confounder> confounders;
    std::vector<Diagnostic> diagnostics;
};

// ---------------------------------------------------------------------------
// Prompt rendering

namespace detail {

inline std::string join_names(const std::vector<std::string>& v, const std::string& sep = ", ") {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    return out;
}

inline std::string or_default(const std::string& s, const std::string& fallback) { return s.empty() ? fallback : s; }

}  // namespace detail

inline std::string seed_line(const SeedRelationship& s) {
    return s.parent + " -> " + s.child + " (e.g., " + s.description + ").";
}

/// Line used for one claim in the verification prompt.
inline std::string claim_line(std::size_t index, const EdgeClaim& c) {
    const char* arrow = c.direction == DirectionConfidence::bidirectional ? " \xE2\x86\x94 " : " \xE2\x86\x92 ";
    return "[" + std::to_string(index + 1) + "] " + c.parent + arrow + c.child + ": " + c.rationale;
}

inline std::string render_proposal_prompt(const PromptContext& ctx) {
    ctx.validate();
    const auto details = detail::or_default(
        ctx.dataset_details, "the " + ctx.dataset_name + " (" + std::to_string(ctx.n_rows) + " rows, " +
                                 std::to_string(ctx.n_cols) + " columns)");
    const auto factors = detail::or_default(ctx.relevant_factors, "demographic, behavioural and physiological factors");
    std::ostringstream p;
    p << "You are an expert in causal inference and domain knowledge in " << ctx.domain_topic
      << ". Your task is to analyze and interpret the causal relationships between variables in the "
      << ctx.dataset_name << ", leveraging both statistical results and domain expertise. The dataset comprises "
      << ctx.n_rows << " rows and " << ctx.n_cols << " columns and includes the following variables: "
      << detail::join_names(ctx.variables) << ".\n\n";
    p << "Using " << ctx.discovery_method << ", causal discovery has been conducted on " << details
      << ". The results suggest potential direct causal relationships between certain variables, such as:\n";
    for (const auto& s : ctx.seed_relationships) p << seed_line(s) << "\n";
    p << "\nYour task is to:\n"
      << "- Interpret the statistically suggested causal relationships from a domain knowledge perspective.\n"
      << "- Assess the plausibility of these relationships in the context of " << ctx.domain_topic << ".\n"
      << "- Provide a reasoned explanation for why these relationships may or may not be natural or expected, "
         "considering relevant factors such as "
      << factors << ".\n\n"
      << "Your response should be detailed, evidence-based, and grounded in expert knowledge of the domain. "
         "Consider the interplay between variables and provide a nuanced interpretation of the causal discovery "
         "results.\n\n";
    p << "ANSWER FORMAT\n"
      << "After your discussion, list every causal relationship you consider plausible, one per line, exactly as:\n"
      << "Parent -> Child :: one-sentence rationale\n"
      << "Write Parent <-> Child for a relationship you judge to act in both directions. "
      << "Use only these variable names: " << detail::join_names(ctx.variables) << ".\n";
    return p.str();
}

inline std::string render_verification_prompt(const PromptContext& ctx, const std::vector<EdgeClaim>& claims) {
    if (claims.empty()) throw NoClaims("nothing to verify");
    std::ostringstream p;
    p << "You are an expert in causal inference and domain knowledge in " << ctx.domain_topic
      << ". Your task is to verify and critically evaluate the causal relationships proposed by another expert.\n\n";
    p << "The first expert proposed the following causal relationships:\n";
    for (std::size_t i = 0; i < claims.size(); ++i) p << claim_line(i, claims[i]) << "\n";
    p << "\nYour task is to:\n"
      << "- Assess the Plausibility. Evaluate whether each proposed relationship is plausible based on your domain "
         "knowledge.\n"
      << "- Identify Confounding Factors. Highlight any potential confounding factors or alternative explanations "
         "that could influence the observed relationships.\n"
      << "- If a relationship seems incorrect or incomplete, suggest corrections or additional relationships that "
         "should be considered.\n\n";
    p << "ANSWER FORMAT\n"
      << "Give one verdict line per numbered relationship, exactly as one of:\n"
      << "[n] confirmed :: reason\n"
      << "[n] rejected :: reason\n"
      << "[n] revised Parent -> Child :: reason\n"
      << "Use 'revised' to correct a direction or to pick one direction for a two-way relationship.\n"
      << "Then list each confounding factor not present in the data on its own line as:\n"
      << "CONFOUNDER: name :: variables it may influence\n";
    return p.str();
}

// ---------------------------------------------------------------------------
// Response parsing

namespace detail {

inline std::string normalize_variable(std::string s) {
    std::string out;
    for (char ch : s) {
        const auto uc = static_cast<unsigned char>(ch);
        if (ch == ' ' || ch == '-' || ch == '_') {
            if (!out.empty() && out.back() != '_') out += '_';
        } else if (std::isalnum(uc) || uc >= 0x80) {
            out += static_cast<char>(std::tolower(uc));
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

inline std::optional<std::string> match_variable(const std::string& raw, const std::vector<std::string>& variables) {
    const auto key = normalize_variable(raw);
    if (key.empty()) return std::nullopt;
    for (const auto& v : variables) {
        if (normalize_variable(v) == key) return v;
    }
    return std::nullopt;
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

// Drops list markers ("-", "*", "1.", "2)") and markdown emphasis around a line.
inline std::string strip_markup(std::string s) {
    s = trim(s);
    static const std::regex bullet(R"(^(?:[-*+]|\xE2\x80\xA2|\d+[.)])\s+)");
    s = std::regex_replace(s, bullet, "", std::regex_constants::format_first_only);
    s.erase(std::remove(s.begin(), s.end(), '`'), s.end());
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '*' && i + 1 < s.size() && s[i + 1] == '*') {
            ++i;
            continue;
        }
        out += s[i];
    }
    return trim(out);
}

struct ArrowSplit {
    std::string left;
    std::string right;
    DirectionConfidence direction;
};

inline std::optional<ArrowSplit> split_arrow(const std::string& s) {
    struct Token {
        const char* text;
        DirectionConfidence dir;
    };
    static const Token tokens[] = {{"<->", DirectionConfidence::bidirectional},
                                   {"\xE2\x86\x94", DirectionConfidence::bidirectional},
                                   {"->", DirectionConfidence::directed},
                                   {"\xE2\x86\x92", DirectionConfidence::directed}};
    for (const auto& t : tokens) {
        const auto pos = s.find(t.text);
        if (pos != std::string::npos) {
            return ArrowSplit{trim(s.substr(0, pos)), trim(s.substr(pos + std::string(t.text).size())), t.dir};
        }
    }
    return std::nullopt;
}

// Splits "head :: tail"; tail empty when the separator is absent.
inline std::pair<std::string, std::string> split_rationale(const std::string& s) {
    const auto pos = s.find("::");
    if (pos == std::string::npos) return {trim(s), ""};
    return {trim(s.substr(0, pos)), trim(s.substr(pos + 2))};
}

}  // namespace detail

/// Extracts "A -> B", "A → B" and "A <-> B" lines (optional ":: rationale").
/// Variable names match case-insensitively with spaces, hyphens and underscores
/// treated alike. Every other non-empty line is returned as a diagnostic.
inline ClaimParse parse_claims_lenient(const std::string& response, const PromptContext& ctx) {
    ClaimParse out;
    const auto lines = detail::split_lines(response);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto text = detail::strip_markup(lines[i]);
        if (text.empty()) continue;
        const auto [head, rationale] = detail::split_rationale(text);
        const auto arrow = detail::split_arrow(head);
        if (!arrow) {
            out.diagnostics.push_back({i + 1, lines[i], "no relationship arrow"});
            continue;
        }
        const auto parent = detail::match_variable(arrow->left, ctx.variables);
        const auto child = detail::match_variable(arrow->right, ctx.variables);
        if (!parent || !child) {
            out.diagnostics.push_back(
                {i + 1, lines[i], "unknown variable '" + (!parent ? arrow->left : arrow->right) + "'"});
            continue;
        }
        if (*parent == *child) {
            out.diagnostics.push_back({i + 1, lines[i], "self-relationship"});
            continue;
        }
        const bool duplicate = std::any_of(out.claims.begin(), out.claims.end(), [&](const EdgeClaim& c) {
            const bool same = c.parent == *parent && c.child == *child;
            const bool mirrored = c.parent == *child && c.child == *parent &&
                                  (c.direction == DirectionConfidence::bidirectional ||
                                   arrow->direction == DirectionConfidence::bidirectional);
            return same || mirrored;
        });
        if (duplicate) {
            out.diagnostics.push_back({i + 1, lines[i], "duplicate relationship"});
            continue;
        }
        out.claims.push_back(make_claim(ctx, *parent, *child, rationale, arrow->direction, ClaimSource::proposer));
    }
    return out;
}

/// As `parse_claims_lenient`, but zero claims is NoClaimsFound.
inline ClaimParse parse_claims(const std::string& response, const PromptContext& ctx) {
    auto out = parse_claims_lenient(response, ctx);
    if (out.claims.empty()) throw NoClaimsFound("no relationship lines could be parsed");
    return out;
}

/// Parses "[n] confirmed|rejected|revised [Parent -> Child] :: reason" and
/// "CONFOUNDER: name :: rationale" lines. Unparsed non-empty lines become diagnostics.
inline VerdictParse parse_verdicts(const std::string& response, const PromptContext& ctx,
                                   const std::vector<EdgeClaim>& claims) {
    static const std::regex verdict_re(R"(^\[?\s*(\d+)\s*\]?\s*[.):-]?\s*(confirmed|rejected|revised)\b\s*:?\s*(.*)$)",
                                       std::regex::icase);
    static const std::regex confounder_re(R"(^confounder\s*:\s*(.*)$)", std::regex::icase);
    VerdictParse out;
    std::vector<bool> seen(claims.size(), false);
    const auto lines = detail::split_lines(response);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto text = detail::strip_markup(lines[i]);
        if (text.empty()) continue;
        std::smatch m;
        if (std::regex_match(text, m, confounder_re)) {
            auto [name, why] = detail::split_rationale(m[1].str());
            if (name.empty()) {
                out.diagnostics.push_back({i + 1, lines[i], "confounder without a name"});
            } else {
                out.confounders.push_back({name, why});
            }
            continue;
        }
        if (!std::regex_match(text, m, verdict_re)) {
            out.diagnostics.push_back({i + 1, lines[i], "not a verdict line"});
            continue;
        }
        const auto number = std::stoul(m[1].str());
        if (number == 0 || number > claims.size()) {
            out.diagnostics.push_back({i + 1, lines[i], "no relationship numbered " + m[1].str()});
            continue;
        }
        const std::size_t index = number - 1;
        if (seen[index]) {
            out.diagnostics.push_back({i + 1, lines[i], "second verdict for relationship " + m[1].str()});
            continue;
        }
        std::string word = m[2].str();
        for (auto& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        const auto [head, why] = detail::split_rationale(m[3].str());
        VerificationVerdict v;
        v.claim_index = index;
        v.rationale = why.empty() ? head : why;
        if (word == "confirmed") {
            v.verdict = Verdict::confirmed;
        } else if (word == "rejected") {
            v.verdict = Verdict::rejected;
        } else {
            v.verdict = Verdict::revised;
            const auto arrow = detail::split_arrow(head);
            std::optional<std::string> parent, child;
            if (arrow && arrow->direction == DirectionConfidence::directed) {
                parent = detail::match_variable(arrow->left, ctx.variables);
                child = detail::match_variable(arrow->right, ctx.variables);
            }
            if (!parent || !child || *parent == *child) {
                out.diagnostics.push_back({i + 1, lines[i], "revised verdict without a valid Parent -> Child"});
                continue;
            }
            v.revised_direction = Edge{*parent, *child};
        }
        seen[index] = true;
        out.verdicts.push_back(std::move(v));
    }
    std::sort(out.verdicts.begin(), out.verdicts.end(),
              [](const auto& a, const auto& b) { return a.claim_index < b.claim_index; });
    return out;
}

// ---------------------------------------------------------------------------
// Bidirectional resolution and cycle repair

/// Lower tiers are re-examined first when the accepted edges form a cycle.
enum class EdgeTier { resolved_bidirectional = 0, revised = 1, confirmed = 2 };

struct AcceptedEdge {
    Edge edge;
    EdgeTier tier = EdgeTier::confirmed;
    std::size_t claim_index = 0;
};

struct BidirectionalItem {
    std::string a;  // as written by the proposer: a <-> b
    std::string b;
    std::optional<Edge> verifier_direction;
    std::size_t claim_index = 0;
};

struct ResolutionPolicy {
    enum class Kind { verifier_priority, sem_estimate, manual };
    Kind kind = Kind::verifier_priority;
    /// Pair (either order) -> chosen (parent, child); consulted by `manual`.
    std::map<std::pair<std::string, std::string>, Edge> manual;
    /// Needed by `sem_estimate`; `verifier_priority` falls back to it when set.
    const DataTable* data = nullptr;

    static ResolutionPolicy verifier_priority(const DataTable* data = nullptr) { return {Kind::verifier_priority, {}, data}; }
    static ResolutionPolicy sem_estimate(const DataTable& data) { return {Kind::sem_estimate, {}, &data}; }
    static ResolutionPolicy manual_map(std::map<std::pair<std::string, std::string>, Edge> m) {
        return {Kind::manual, std::move(m), nullptr};
    }
};

inline std::string to_string(ResolutionPolicy::Kind k) {
    switch (k) {
        case ResolutionPolicy::Kind::verifier_priority: return "verifier_priority";
        case ResolutionPolicy::Kind::sem_estimate: return "sem_estimate";
        case ResolutionPolicy::Kind::manual: return "manual";
    }
    return "manual";
}

struct Resolution {
    std::pair<std::string, std::string> pair;
    std::optional<Edge> chosen;  // empty when the edge was dropped
    std::string rule_applied;    // verifier_priority | sem_estimate | manual | cycle_repair
    std::string note;
};

struct ResolutionResult {
    std::vector<Resolution> resolutions;
    Dag dag;
};

namespace detail {

inline Edge sem_direction(const DataTable& data, const std::string& a, const std::string& b) {
    const double b_on_a = std::fabs(regress_family(data, b, {a}, 0.05).front().estimate);
    const double a_on_b = std::fabs(regress_family(data, a, {b}, 0.05).front().estimate);
    // child-on-parent slope; the larger magnitude wins, ties keep the proposer's order.
    return a_on_b > b_on_a ? Edge{b, a} : Edge{a, b};
}

inline std::string edge_text(const Edge& e) { return e.first + " -> " + e.second; }

}  // namespace detail

/// Assigns one direction to every bidirectional pair, then inserts all edges in
/// descending tier (then claim order). An insertion that would close a cycle is
/// flipped, or dropped if the flip also fails; each action is logged. Every
/// bidirectional pair yields exactly one Resolution record.
inline ResolutionResult resolve_bidirectional(const std::vector<std::string>& nodes,
                                              const std::vector<AcceptedEdge>& directed,
                                              const std::vector<BidirectionalItem>& bidirectional,
                                              const ResolutionPolicy& policy) {
    ResolutionResult result;
    std::vector<AcceptedEdge> all = directed;
    std::map<std::size_t, std::size_t> record_of_claim;

    for (const auto& item : bidirectional) {
        Resolution rec;
        rec.pair = {item.a, item.b};
        const auto pair_text = item.a + " <-> " + item.b;
        auto use_sem = [&]() {
            if (!policy.data) throw UnresolvedPair(pair_text + ": sem_estimate needs a data table");
            rec.chosen = detail::sem_direction(*policy.data, item.a, item.b);
            rec.rule_applied = "sem_estimate";
        };
        switch (policy.kind) {
            case ResolutionPolicy::Kind::verifier_priority:
                if (item.verifier_direction) {
                    rec.chosen = item.verifier_direction;
                    rec.rule_applied = "verifier_priority";
                } else if (policy.data) {
                    use_sem();
                } else {
                    throw UnresolvedPair(pair_text + ": the verifier gave no direction and no data was supplied");
                }
                break;
            case ResolutionPolicy::Kind::sem_estimate: use_sem(); break;
            case ResolutionPolicy::Kind::manual: {
                auto it = policy.manual.find({item.a, item.b});
                if (it == policy.manual.end()) it = policy.manual.find({item.b, item.a});
                if (it == policy.manual.end()) throw UnresolvedPair(pair_text + ": missing from the manual map");
                const auto& e = it->second;
                const bool matches = (e.first == item.a && e.second == item.b) || (e.first == item.b && e.second == item.a);
                if (!matches) throw UnresolvedPair(pair_text + ": manual entry names a different pair");
                rec.chosen = e;
                rec.rule_applied = "manual";
                break;
            }
        }
        rec.note = "chose " + detail::edge_text(*rec.chosen);
        record_of_claim[item.claim_index] = result.resolutions.size();
        result.resolutions.push_back(rec);
        all.push_back({*rec.chosen, EdgeTier::resolved_bidirectional, item.claim_index});
    }

    std::stable_sort(all.begin(), all.end(), [](const AcceptedEdge& x, const AcceptedEdge& y) {
        if (x.tier != y.tier) return static_cast<int>(x.tier) > static_cast<int>(y.tier);
        return x.claim_index < y.claim_index;
    });

    Dag dag(nodes);
    for (const auto& e : all) {
        const auto& [p, c] = e.edge;
        if (dag.has_edge(p, c)) continue;
        if (!dag.would_create_cycle(p, c)) {
            dag.add_edge(p, c);
            continue;
        }
        const bool from_pair = e.tier == EdgeTier::resolved_bidirectional && record_of_claim.count(e.claim_index);
        Resolution* rec = nullptr;
        if (from_pair) {
            rec = &result.resolutions[record_of_claim[e.claim_index]];
        } else {
            result.resolutions.push_back({{p, c}, e.edge, "cycle_repair", ""});
            rec = &result.resolutions.back();
        }
        const auto path = dag.find_path(c, p);
        const auto cycle = detail::join_names(*path, " -> ") + " -> " + c;
        if (!dag.has_edge(c, p) && !dag.would_create_cycle(c, p)) {
            dag.add_edge(c, p);
            rec->chosen = Edge{c, p};
            rec->note += std::string(rec->note.empty() ? "" : "; ") + "flipped " + detail::edge_text(e.edge) +
                         " to avoid cycle " + cycle;
        } else {
            rec->chosen.reset();
            rec->note += std::string(rec->note.empty() ? "" : "; ") + "dropped " + detail::edge_text(e.edge) +
                         " to avoid cycle " + cycle;
        }
    }
    result.dag = std::move(dag);
    return result;
}

// ---------------------------------------------------------------------------
// Transports

/// A transport-level failure (network, HTTP status, malformed envelope).
struct TransportFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Text in, text out. Implementations used concurrently must be thread-safe.
class Transport {
public:
    virtual ~Transport() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

/// Programmatic responses: either a fixed queue or a callback.
class ScriptedTransport : public Transport {
public:
    explicit ScriptedTransport(std::vector<std::string> responses) : responses_(std::move(responses)) {}
    explicit ScriptedTransport(std::function<std::string(const std::string&)> fn) : fn_(std::move(fn)) {}

    std::string complete(const std::string& prompt) override {
        prompts_.push_back(prompt);
        if (fn_) return fn_(prompt);
        if (next_ >= responses_.size()) throw TransportFailure("scripted transport has no response left");
        return responses_[next_++];
    }

    const std::vector<std::string>& prompts() const { return prompts_; }

private:
    std::vector<std::string> responses_;
    std::function<std::string(const std::string&)> fn_;
    std::size_t next_ = 0;
    std::vector<std::string> prompts_;
};

/// Replays canned responses from a file. A `.json` file holding an array of
/// strings is served in order (last one repeats); any other file is returned whole.
class FileReplayTransport : public Transport {
public:
    explicit FileReplayTransport(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw MissingFile("cannot open '" + path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        const auto text = buf.str();
        if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
            try {
                responses_ = nlohmann::json::parse(text).get<std::vector<std::string>>();
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("'" + path + "' must hold a JSON array of strings: " + e.what());
            }
            if (responses_.empty()) throw ConfigError("'" + path + "' holds no responses");
        } else {
            responses_.push_back(text);
        }
    }

    std::string complete(const std::string&) override {
        const auto i = std::min(next_, responses_.size() - 1);
        ++next_;
        return responses_[i];
    }

private:
    std::vector<std::string> responses_;
    std::size_t next_ = 0;
};

// ---------------------------------------------------------------------------
// Protocol

struct ClaimDecision {
    std::size_t claim_index = 0;
    std::string action;  // accepted | revised | rejected | no_verdict | to_resolution
    std::string detail;
};

struct ElicitationTranscript {
    PromptContext context;
    std::string round1_prompt;
    std::string round1_raw;
    std::vector<EdgeClaim> round1_claims;
    std::vector<Diagnostic> round1_diagnostics;
    std::string round2_prompt;
    std::string round2_raw;
    std::vector<VerificationVerdict> verdicts;
    std::vector<Confounder> confounders;
    std::vector<Diagnostic> round2_diagnostics;
    std::vector<ClaimDecision> decisions;
    std::string resolution_policy;
    std::vector<Resolution> resolutions;
    Dag final_dag;
    std::size_t confirmed_count = 0;
    std::size_t proposed_count = 0;
    bool complete = false;
};

/// Failure during a protocol run. `partial()` holds the transcript up to the failure.
class ProtocolError : public Error {
public:
    ProtocolError(std::string name, int round, const std::string& message, ElicitationTranscript partial)
        : Error(std::move(name), "round " + std::to_string(round) + ": " + message),
          round_(round),
          partial_(std::make_shared<ElicitationTranscript>(std::move(partial))) {}

    int round() const { return round_; }
    const ElicitationTranscript& partial() const { return *partial_; }

private:
    int round_;
    std::shared_ptr<const ElicitationTranscript> partial_;
};

class TransportError : public ProtocolError {
public:
    TransportError(int round, const std::string& cause, ElicitationTranscript partial)
        : ProtocolError("TransportError", round, cause, std::move(partial)) {}
};

class ParseFailure : public ProtocolError {
public:
    ParseFailure(int round, const std::string& cause, ElicitationTranscript partial)
        : ProtocolError("ParseFailure", round, cause, std::move(partial)) {}
};

/// Proposal round, verification round, then resolution. Rejected claims and
/// directed claims without a verdict are dropped; revised claims take the
/// verifier's direction; bidirectional claims that are not rejected go to
/// `resolve_bidirectional`. `confirmed_count` counts directed claims the
/// verifier confirmed or revised.
inline ElicitationTranscript run_protocol(const PromptContext& ctx, Transport& proposer, Transport& verifier,
                                          const ResolutionPolicy& policy = {}) {
    ctx.validate();
    ElicitationTranscript tr;
    tr.context = ctx;
    tr.resolution_policy = to_string(policy.kind);

    tr.round1_prompt = render_proposal_prompt(ctx);
    try {
        tr.round1_raw = proposer.complete(tr.round1_prompt);
    } catch (const std::exception& e) {
        throw TransportError(1, e.what(), tr);
    }
    auto round1 = parse_claims_lenient(tr.round1_raw, ctx);
    tr.round1_claims = round1.claims;
    tr.round1_diagnostics = round1.diagnostics;
    tr.proposed_count = tr.round1_claims.size();
    if (tr.round1_claims.empty()) throw ParseFailure(1, "no relationship lines could be parsed", tr);

    tr.round2_prompt = render_verification_prompt(ctx, tr.round1_claims);
    try {
        tr.round2_raw = verifier.complete(tr.round2_prompt);
    } catch (const std::exception& e) {
        throw TransportError(2, e.what(), tr);
    }
    auto round2 = parse_verdicts(tr.round2_raw, ctx, tr.round1_claims);
    tr.verdicts = round2.verdicts;
    tr.confounders = round2.confounders;
    tr.round2_diagnostics = round2.diagnostics;
    if (tr.verdicts.empty()) throw ParseFailure(2, "no verdict lines could be parsed", tr);

    std::map<std::size_t, const VerificationVerdict*> verdict_of;
    for (const auto& v : tr.verdicts) verdict_of[v.claim_index] = &v;

    std::vector<AcceptedEdge> directed;
    std::vector<BidirectionalItem> bidirectional;
    for (std::size_t i = 0; i < tr.round1_claims.size(); ++i) {
        const auto& c = tr.round1_claims[i];
        const auto it = verdict_of.find(i);
        const VerificationVerdict* v = it == verdict_of.end() ? nullptr : it->second;
        if (c.direction == DirectionConfidence::bidirectional) {
            if (v && v->verdict == Verdict::rejected) {
                tr.decisions.push_back({i, "rejected", v->rationale});
                continue;
            }
            bidirectional.push_back({c.parent, c.child, v ? v->revised_direction : std::nullopt, i});
            tr.decisions.push_back({i, "to_resolution", v ? to_string(v->verdict) : "no verdict"});
            continue;
        }
        if (!v) {
            tr.decisions.push_back({i, "no_verdict", "dropped"});
            continue;
        }
        switch (v->verdict) {
            case Verdict::confirmed:
                directed.push_back({{c.parent, c.child}, EdgeTier::confirmed, i});
                tr.decisions.push_back({i, "accepted", detail::edge_text({c.parent, c.child})});
                ++tr.confirmed_count;
                break;
            case Verdict::revised:
                directed.push_back({*v->revised_direction, EdgeTier::revised, i});
                tr.decisions.push_back({i, "revised", detail::edge_text(*v->revised_direction)});
                ++tr.confirmed_count;
                break;
            case Verdict::rejected: tr.decisions.push_back({i, "rejected", v->rationale}); break;
        }
    }

    auto resolved = resolve_bidirectional(ctx.variables, directed, bidirectional, policy);
    tr.resolutions = std::move(resolved.resolutions);
    tr.final_dag = std::move(resolved.dag);
    tr.complete = true;
    return tr;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const PromptContext& c) {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& s : c.seed_relationships) {
        seeds.push_back({{"parent", s.parent}, {"child", s.child}, {"description", s.description}});
    }
    return {{"domain_topic", c.domain_topic},       {"dataset_name", c.dataset_name},
            {"dataset_details", c.dataset_details}, {"relevant_factors", c.relevant_factors},
            {"n_rows", c.n_rows},                   {"n_cols", c.n_cols},
            {"variables", c.variables},             {"discovery_method", c.discovery_method},
            {"seed_relationships", seeds}};
}

/// Reads a context file. `n_rows`, `n_cols` and `variables` are optional here
/// and are usually filled from the data table.
inline PromptContext prompt_context_from_json(const nlohmann::json& j) {
    try {
        PromptContext c;
        c.domain_topic = j.at("domain_topic").get<std::string>();
        c.dataset_name = j.at("dataset_name").get<std::string>();
        c.dataset_details = j.value("dataset_details", std::string());
        c.relevant_factors = j.value("relevant_factors", std::string());
        c.n_rows = j.value("n_rows", std::size_t{0});
        c.n_cols = j.value("n_cols", std::size_t{0});
        c.variables = j.value("variables", std::vector<std::string>{});
        c.discovery_method = j.value("discovery_method", std::string("BIC"));
        if (j.contains("seed_relationships")) {
            for (const auto& s : j.at("seed_relationships")) {
                c.seed_relationships.push_back({s.at("parent").get<std::string>(), s.at("child").get<std::string>(),
                                                s.value("description", std::string())});
            }
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed prompt context: ") + e.what());
    }
}

inline nlohmann::json to_json(const ElicitationTranscript& t) {
    auto diags = [](const std::vector<Diagnostic>& ds) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& d : ds) a.push_back({{"line", d.line}, {"text", d.text}, {"reason", d.reason}});
        return a;
    };
    nlohmann::json claims = nlohmann::json::array();
    for (const auto& c : t.round1_claims) {
        claims.push_back({{"parent", c.parent},
                          {"child", c.child},
                          {"rationale", c.rationale},
                          {"direction_confidence",
                           c.direction == DirectionConfidence::bidirectional ? "bidirectional" : "directed"},
                          {"source", c.source == ClaimSource::proposer ? "proposer" : "verifier"}});
    }
    nlohmann::json verdicts = nlohmann::json::array();
    for (const auto& v : t.verdicts) {
        nlohmann::json jv = {{"claim", v.claim_index + 1}, {"verdict", to_string(v.verdict)}, {"rationale", v.rationale}};
        jv["revised_direction"] = v.revised_direction
                                      ? nlohmann::json{{"parent", v.revised_direction->first}, {"child", v.revised_direction->second}}
                                      : nlohmann::json(nullptr);
        verdicts.push_back(jv);
    }
    nlohmann::json confounders = nlohmann::json::array();
    for (const auto& c : t.confounders) confounders.push_back({{"name", c.name}, {"rationale", c.rationale}});
    nlohmann::json decisions = nlohmann::json::array();
    for (const auto& d : t.decisions) decisions.push_back({{"claim", d.claim_index + 1}, {"action", d.action}, {"detail", d.detail}});
    nlohmann::json resolutions = nlohmann::json::array();
    for (const auto& r : t.resolutions) {
        resolutions.push_back({{"pair", {r.pair.first, r.pair.second}},
                               {"chosen", r.chosen ? nlohmann::json{{"parent", r.chosen->first}, {"child", r.chosen->second}}
                                                   : nlohmann::json(nullptr)},
                               {"rule_applied", r.rule_applied},
                               {"note", r.note}});
    }
    return {{"context", to_json(t.context)},
            {"round1", {{"prompt", t.round1_prompt}, {"response", t.round1_raw}, {"claims", claims}, {"diagnostics", diags(t.round1_diagnostics)}}},
            {"round2",
             {{"prompt", t.round2_prompt},
              {"response", t.round2_raw},
              {"verdicts", verdicts},
              {"confounders", confounders},
              {"diagnostics", diags(t.round2_diagnostics)}}},
            {"decisions", decisions},
            {"resolution_policy", t.resolution_policy},
            {"resolutions", resolutions},
            {"final_structure", dag_to_json(t.final_dag)},
            {"confirmed_count", t.confirmed_count},
            {"proposed_count", t.proposed_count},
            {"complete", t.complete}};
}

}  // namespace causalkit
