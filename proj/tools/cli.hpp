#pragma once

// Command-line front end: preprocess | learn | elicit | validate | metrics | query | compare.
// Exit status: 0 success, 1 domain error (one "error: <Name>: <message>" line on
// the error stream), 2 usage error.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "causalkit/causalkit.hpp"
#include "causalkit/http_transport.hpp"

namespace causalkit::cli {

namespace fs = std::filesystem;

class Outputs {
public:
    /// With an output directory, relative paths resolve inside it and paths
    /// escaping it are rejected; without one, paths are used as given.
    std::string resolve(const std::string& path) const {
        if (root_.empty()) return path;
        const auto root = fs::weakly_canonical(fs::absolute(root_));
        const fs::path p(path);
        const auto full = fs::weakly_canonical(p.is_absolute() ? p : root / p);
        const auto rel = full.lexically_relative(root);
        if (rel.empty() || *rel.begin() == "..") {
            throw ConfigError("output '" + path + "' lies outside the output directory '" + root_ + "'");
        }
        return full.string();
    }

    void write(const std::string& path, const std::string& content) const {
        const auto target = resolve(path);
        if (const auto dir = fs::path(target).parent_path(); !dir.empty()) fs::create_directories(dir);
        std::ofstream out(target, std::ios::binary);
        if (!out) throw ConfigError("cannot write '" + target + "'");
        out << content;
    }

    void write_json(const std::string& path, const nlohmann::json& j) const { write(path, j.dump(2) + "\n"); }

    std::string root_;
};

inline DataTable load_table(const std::string& data, const std::string& bins) {
    const auto cfg = bins.empty() ? PreprocessConfig{} : PreprocessConfig::load(bins);
    return preprocess(data, cfg);
}

inline std::string percent(double p) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * p << "%";
    return s.str();
}

inline std::unique_ptr<Transport> make_transport(const std::string& spec) {
    if (spec.rfind("mock:", 0) == 0) return std::make_unique<FileReplayTransport>(spec.substr(5));
    return std::make_unique<HttpChatTransport>(HttpTransportConfig::load(spec));
}

inline std::pair<std::string, std::string> split_label(const std::string& item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) return {fs::path(item).stem().string(), item};
    return {item.substr(0, eq), item.substr(eq + 1)};
}

inline nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

struct Metrics {
    EntropyReport entropy;
    std::map<Edge, double> arc_mi;
    BayesNet model;
};

inline Metrics compute_metrics(const DataTable& table, const Dag& dag, double smoothing, bool raw_frequency) {
    Metrics m;
    m.model = fit_cpts(table, dag, smoothing);
    m.entropy = raw_frequency ? empirical_entropies(table, dag) : node_entropies(m.model);
    m.arc_mi = arc_mutual_information(table, dag);
    return m;
}

inline nlohmann::json metrics_json(const std::string& label, const Metrics& m) {
    nlohmann::json arcs = nlohmann::json::array();
    for (const auto& [e, w] : m.arc_mi) arcs.push_back({{"parent", e.first}, {"child", e.second}, {"mutual_information", w}});
    return {{"label", label}, {"entropy", to_json(m.entropy)}, {"arc_mutual_information", arcs}};
}

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"causalkit: causal structure learning, LLM elicitation, validation and inference"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI config file with shared settings");
    Outputs outputs;
    app.add_option("--output-dir", outputs.root_, "Directory that all outputs are written under");

    // Shared option holders.
    std::string data, bins, out_path, structure, model, format = "json", method = "bic";
    double smoothing = 1.0, alpha = 0.05, mi_threshold = 0.01;
    std::size_t max_cond = 2, max_iters = 1000;

    auto add_data = [&](CLI::App* sub, bool required) {
        auto* o = sub->add_option("--data", data, "Raw CSV file")->check(CLI::ExistingFile);
        if (required) o->required();
        sub->add_option("--bins", bins, "Preprocessing/binning config (JSON)")->check(CLI::ExistingFile);
    };
    auto add_smoothing = [&](CLI::App* sub) {
        sub->add_option("--smoothing", smoothing, "Additive pseudo-count")->check(CLI::NonNegativeNumber);
    };

    auto* pre = app.add_subcommand("preprocess", "Clean and discretize a CSV; writes the labelled table as CSV");
    add_data(pre, true);
    pre->add_option("--out", out_path, "Output CSV")->required();

    auto* learn = app.add_subcommand("learn", "Learn a structure from data");
    add_data(learn, true);
    learn->add_option("--method", method, "bic | miic")->check(CLI::IsMember({"bic", "miic"}));
    learn->add_option("--out", out_path, "Structure JSON")->required();
    add_smoothing(learn);
    learn->add_option("--mi-threshold", mi_threshold, "Pruning threshold in bits")->check(CLI::NonNegativeNumber);
    learn->add_option("--max-cond", max_cond, "Largest conditioning set");
    learn->add_option("--max-iters", max_iters, "Hill-climbing move budget");
    std::string skeleton_out;
    learn->add_option("--skeleton-out", skeleton_out, "With --method miic, also write the skeleton JSON");

    std::string context, proposer, verifier, transcript, policy = "verifier_priority", manual;
    auto* elicit = app.add_subcommand("elicit", "Two-round LLM elicitation");
    add_data(elicit, false);
    elicit->add_option("--context", context, "Prompt context (JSON)")->required()->check(CLI::ExistingFile);
    elicit->add_option("--proposer", proposer, "Transport config JSON or mock:<file>")->required();
    elicit->add_option("--verifier", verifier, "Transport config JSON or mock:<file>")->required();
    elicit->add_option("--out", out_path, "Structure JSON")->required();
    elicit->add_option("--transcript", transcript, "Transcript JSON")->required();
    elicit->add_option("--policy", policy, "verifier_priority | sem_estimate | manual")
        ->check(CLI::IsMember({"verifier_priority", "sem_estimate", "manual"}));
    elicit->add_option("--manual", manual, "JSON list of {parent, child} choices for the manual policy")
        ->check(CLI::ExistingFile);

    auto* validate = app.add_subcommand("validate", "Per-edge regression of a structure against data");
    add_data(validate, true);
    validate->add_option("--structure", structure, "Structure JSON")->required()->check(CLI::ExistingFile);
    validate->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
    validate->add_option("--out", out_path, "Report JSON (stdout table when omitted)");

    std::string model_out, label;
    bool raw_frequency = false;
    auto* metrics = app.add_subcommand("metrics", "Node entropies and arc mutual information");
    add_data(metrics, true);
    metrics->add_option("--structure", structure, "Structure JSON")->required()->check(CLI::ExistingFile);
    metrics->add_option("--format", format, "json | table | dot")->check(CLI::IsMember({"json", "table", "dot"}));
    metrics->add_option("--out", out_path, "Output file (stdout when omitted)");
    metrics->add_option("--model-out", model_out, "Also write the fitted model JSON");
    metrics->add_option("--label", label, "Label recorded in the report");
    metrics->add_flag("--raw-frequency", raw_frequency, "Entropy of empirical marginals instead of model posteriors");
    add_smoothing(metrics);

    std::string evidence_text, target;
    bool all = false;
    auto* query = app.add_subcommand("query", "Posterior marginals from a fitted model");
    query->add_option("--model", model, "Model JSON")->required()->check(CLI::ExistingFile);
    query->add_option("--evidence", evidence_text, "k=v,k=v");
    auto* target_opt = query->add_option("--target", target, "Node to query");
    query->add_flag("--all", all, "All marginals")->excludes(target_opt);

    std::vector<std::string> reports, structures;
    auto* compare = app.add_subcommand("compare", "Compare entropy summaries across methods");
    compare->add_option("--report", reports, "label=path of an entropy or metrics report JSON");
    compare->add_option("--structure", structures, "label=path of a structure JSON (needs --data)");
    add_data(compare, false);
    add_smoothing(compare);
    compare->add_option("--format", format, "table | json")->check(CLI::IsMember({"table", "json"}));
    compare->add_option("--out", out_path, "Output file (stdout when omitted)");

    std::vector<const char*> argv{"causalkit"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        if (query->parsed() && !all && target.empty()) throw CLI::RequiredError("--target or --all");
        if (compare->parsed() && reports.size() + structures.size() < 2) {
            throw CLI::ValidationError("compare", "needs at least two --report or --structure inputs");
        }
        if (compare->parsed() && !structures.empty() && data.empty()) throw CLI::RequiredError("--data");
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "usage error: " << e.what() << "\n" << app.help();
        return 2;
    }

    auto emit = [&](const std::string& content) {
        if (out_path.empty()) {
            out << content;
        } else {
            outputs.write(out_path, content);
        }
    };

    try {
        if (pre->parsed()) {
            const auto table = load_table(data, bins);
            std::ostringstream csv;
            const auto names = table.names();
            for (std::size_t i = 0; i < names.size(); ++i) csv << (i ? "," : "") << names[i];
            csv << "\n";
            for (const auto& row : table.decode()) {
                for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
                csv << "\n";
            }
            outputs.write(out_path, csv.str());
            out << "rows " << table.n_rows() << ", columns " << table.n_cols() << "\n";
        } else if (learn->parsed()) {
            const auto table = load_table(data, bins);
            HillClimbOptions hc;
            hc.max_iters = max_iters;
            hc.smoothing = smoothing;
            ScoredStructure scored;
            StructureFile file;
            if (method == "bic") {
                scored = hill_climb(table, Dag(table.names()), hc);
                file.provenance = Provenance::bic;
            } else {
                SkeletonOptions so;
                so.mi_threshold = mi_threshold;
                so.max_condition_size = max_cond;
                const auto sk = miic_skeleton(table, so);
                if (!skeleton_out.empty()) outputs.write_json(skeleton_out, skeleton_to_json(sk));
                scored = orient_skeleton(table, sk, hc);
                file.provenance = Provenance::miic;
                for (const auto& f : sk.latent_flags) {
                    out << "latent-suspect " << f.x << " - " << f.y << " via " << f.via << "\n";
                }
            }
            file.name = fs::path(data).stem().string() + "-" + method;
            file.dag = scored.dag;
            outputs.write_json(out_path, to_json(file));
            out << "edges " << scored.dag.edge_count() << ", BIC " << std::setprecision(10) << scored.score << "\n";
        } else if (elicit->parsed()) {
            auto ctx = prompt_context_from_json(read_json(context));
            std::optional<DataTable> table;
            if (!data.empty()) {
                table = load_table(data, bins);
                if (ctx.variables.empty()) ctx.variables = table->names();
                if (ctx.n_rows == 0) ctx.n_rows = table->n_rows();
                if (ctx.n_cols == 0) ctx.n_cols = table->n_cols();
            }
            ResolutionPolicy pol = ResolutionPolicy::verifier_priority(table ? &*table : nullptr);
            if (policy == "sem_estimate") {
                if (!table) throw ConfigError("--policy sem_estimate needs --data");
                pol = ResolutionPolicy::sem_estimate(*table);
            } else if (policy == "manual") {
                std::map<std::pair<std::string, std::string>, Edge> choices;
                if (!manual.empty()) {
                    for (const auto& c : read_json(manual)) {
                        Edge e{c.at("parent").get<std::string>(), c.at("child").get<std::string>()};
                        choices[{e.first, e.second}] = e;
                    }
                }
                pol = ResolutionPolicy::manual_map(std::move(choices));
            }
            auto prop = make_transport(proposer);
            auto ver = make_transport(verifier);
            ElicitationTranscript tr;
            try {
                tr = run_protocol(ctx, *prop, *ver, pol);
            } catch (const ProtocolError& e) {
                outputs.write_json(transcript, to_json(e.partial()));
                throw;
            }
            outputs.write_json(transcript, to_json(tr));
            outputs.write_json(out_path, to_json(StructureFile{ctx.dataset_name + "-llm", Provenance::llm, tr.final_dag}));
            out << "confirmed " << tr.confirmed_count << " of " << tr.proposed_count << ", final edges "
                << tr.final_dag.edge_count() << "\n";
        } else if (validate->parsed()) {
            const auto table = load_table(data, bins);
            const auto s = load_structure(structure);
            const auto report = sem_validate(table, s.dag, alpha);
            if (out_path.empty()) {
                out << to_text(report);
            } else {
                outputs.write_json(out_path, to_json(report));
            }
        } else if (metrics->parsed()) {
            const auto table = load_table(data, bins);
            const auto s = load_structure(structure);
            const auto m = compute_metrics(table, s.dag, smoothing, raw_frequency);
            if (!model_out.empty()) outputs.write_json(model_out, to_json(m.model));
            if (format == "json") {
                emit(metrics_json(label.empty() ? s.name : label, m).dump(2) + "\n");
            } else if (format == "table") {
                emit(to_text(m.entropy));
            } else {
                emit(to_dot(s.dag, DotWeights{m.entropy.per_node, m.arc_mi}));
            }
        } else if (query->parsed()) {
            const auto bn = load_model(model);
            const auto evidence = parse_evidence(evidence_text);
            std::vector<Posterior> posts;
            if (all) {
                posts = all_marginals(bn, evidence);
            } else {
                posts.push_back(posterior(bn, target, evidence));
            }
            for (const auto& p : posts) {
                out << p.node << ":";
                for (std::size_t i = 0; i < p.levels.size(); ++i) out << " " << p.levels[i] << "=" << percent(p.distribution[i]);
                out << "\n";
            }
        } else if (compare->parsed()) {
            std::vector<std::pair<std::string, EntropyReport>> inputs;
            for (const auto& item : reports) {
                const auto [lbl, path] = split_label(item);
                const auto j = read_json(path);
                inputs.emplace_back(lbl, entropy_report_from_json(j.contains("entropy") ? j.at("entropy") : j));
            }
            if (!structures.empty()) {
                const auto table = load_table(data, bins);
                for (const auto& item : structures) {
                    const auto [lbl, path] = split_label(item);
                    inputs.emplace_back(lbl, compute_metrics(table, load_structure(path).dag, smoothing, false).entropy);
                }
            }
            const auto table = compare_methods(inputs);
            emit(format == "json" ? to_json(table).dump(2) + "\n" : to_text(table));
        }
    } catch (const Error& e) {
        err << "error: " << e.name() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: InternalError: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace causalkit::cli
