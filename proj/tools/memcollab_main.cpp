// memcollab command-line interface: build a contrast-derived memory bank,
// classify tasks, retrieve/solve with task-aware memory, evaluate, analyze.

#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "memcollab/agent.hpp"
#include "memcollab/backend.hpp"
#include "memcollab/core.hpp"
#include "memcollab/distill.hpp"
#include "memcollab/evalkit.hpp"
#include "memcollab/prompts.hpp"
#include "memcollab/retrieval.hpp"
#include "memcollab/taxonomy.hpp"
#include "memcollab/util.hpp"
#include "memcollab/verify.hpp"

namespace {

using namespace memcollab;

struct CommonOptions {
    std::string assets = PromptSet::default_asset_root().string();
    std::string backends_path;
    long seed = 42;
    bool seed_set = false;
    int workers = static_cast<int>(std::thread::hardware_concurrency());

    std::string interpreter = "python3";
    double timeout = 10.0;
    std::string workdir_root;

    SandboxConfig sandbox() const {
        SandboxConfig cfg;
        cfg.interpreter_command = interpreter;
        cfg.timeout_seconds = timeout;
        if (!workdir_root.empty()) cfg.workdir_root = workdir_root;
        return cfg;
    }

    BackendRegistry registry() const {
        return BackendRegistry::from_config_file(
            backends_path, seed_set ? std::optional<long>(seed) : std::nullopt);
    }

    PromptSet prompts() const { return PromptSet::load(assets); }
};

void add_common(CLI::App* cmd, CommonOptions& options, bool needs_backends) {
    cmd->add_option("--assets", options.assets, "Asset directory (prompts, schemes)")
        ->capture_default_str();
    auto* backends =
        cmd->add_option("--backends", options.backends_path, "Backend config JSON file");
    if (needs_backends) backends->required();
    cmd->add_option("--seed", options.seed, "Seed sent with live requests")
        ->capture_default_str()
        ->each([&options](const std::string&) { options.seed_set = true; });
    cmd->add_option("--workers", options.workers, "Worker thread bound")->capture_default_str();
    cmd->add_option("--interpreter", options.interpreter, "Sandbox interpreter command")
        ->capture_default_str();
    cmd->add_option("--timeout", options.timeout, "Sandbox timeout in seconds")
        ->capture_default_str();
    cmd->add_option("--workdir-root", options.workdir_root, "Root for sandbox scratch dirs");
}

void emit(const nlohmann::json& payload, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << payload.dump(2) << "\n";
    } else {
        util::write_file(out_path, payload.dump(2) + "\n");
    }
}

Task load_query(const std::string& path) {
    nlohmann::json record = nlohmann::json::parse(util::read_file(path), nullptr, false);
    if (record.is_discarded()) throw SchemaError(1, "query file is not valid JSON");
    return task_from_json(record, 1);
}

RetrievalMode mode_from_string(const std::string& mode) {
    if (mode == "tfidf") return RetrievalMode::tfidf;
    if (mode == "llm_select") return RetrievalMode::llm_select;
    throw Error("unknown retrieval mode: " + mode);
}

std::string error_type_name(const Error& e) {
    if (dynamic_cast<const OverlapError*>(&e)) return "OverlapError";
    if (dynamic_cast<const SchemaError*>(&e)) return "SchemaError";
    if (dynamic_cast<const IoError*>(&e)) return "IoError";
    if (dynamic_cast<const InvariantViolation*>(&e)) return "InvariantViolation";
    if (dynamic_cast<const NoRuleMatched*>(&e)) return "NoRuleMatched";
    if (dynamic_cast<const RateLimited*>(&e)) return "RateLimited";
    if (dynamic_cast<const TransportError*>(&e)) return "TransportError";
    if (dynamic_cast<const MalformedResponse*>(&e)) return "MalformedResponse";
    if (dynamic_cast<const EpisodeError*>(&e)) return "EpisodeError";
    if (dynamic_cast<const BackendError*>(&e)) return "BackendError";
    if (dynamic_cast<const SandboxError*>(&e)) return "SandboxError";
    if (dynamic_cast<const UnverifiedTrajectory*>(&e)) return "UnverifiedTrajectory";
    if (dynamic_cast<const NoConstraintsFound*>(&e)) return "NoConstraintsFound";
    if (dynamic_cast<const EmptyBank*>(&e)) return "EmptyBank";
    if (dynamic_cast<const DimensionMismatch*>(&e)) return "DimensionMismatch";
    if (dynamic_cast<const NotNormalized*>(&e)) return "NotNormalized";
    if (dynamic_cast<const DomainError*>(&e)) return "DomainError";
    if (dynamic_cast<const RunFailure*>(&e)) return "RunFailure";
    return "Error";
}

nlohmann::json retrieval_to_json(const RetrievalResult& result) {
    nlohmann::json ranked = nlohmann::json::array();
    for (const auto& r : result.ranked)
        ranked.push_back({{"source_task_id", r.source_task_id}, {"score", r.score}});
    nlohmann::json entry_ids = nlohmann::json::array();
    for (const auto& entry : result.entries) entry_ids.push_back(entry.id);
    return {{"ranked_tasks", ranked}, {"entry_ids", entry_ids}};
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int run_build_memory(const CommonOptions& common, const std::string& dataset_path,
                     const std::string& bank_path, const std::string& weak_id,
                     const std::string& strong_id, const std::string& scheme_path, int k,
                     int max_turns, bool reuse_labels, bool keep_both_incorrect,
                     bool retry_contrast, const std::string& report_path) {
    auto registry = common.registry();
    auto prompts = common.prompts();
    auto scheme = CategoryScheme::from_file(scheme_path);
    auto dataset = load_dataset(dataset_path);

    BuildOptions options;
    options.max_entries_per_task = k;
    options.max_turns = max_turns;
    options.skip_when_both_incorrect = !keep_both_incorrect;
    options.retry_contrast_once = retry_contrast;
    options.reuse_labels = reuse_labels;
    options.workers = common.workers;
    options.log = [](const std::string& note) { std::cerr << "[build] " << note << "\n"; };

    AgentSpec weak{weak_id, registry.get(weak_id)};
    AgentSpec strong{strong_id, registry.get(strong_id)};

    BuildResult result =
        build_memory(dataset, weak, strong, scheme, prompts, common.sandbox(), options);
    save_bank(result.bank, bank_path);

    nlohmann::json report = {
        {"schema", 1},
        {"tasks_processed", result.report.tasks_processed},
        {"skipped", result.report.skipped},
        {"failed", result.report.failed},
        {"entries_added", result.report.entries_added},
        {"bank", bank_path},
        {"notes", result.report.notes},
    };
    emit(report, report_path);
    return 0;
}

int run_classify(const CommonOptions& common, const std::string& dataset_path,
                 const std::string& agent_id, const std::string& scheme_path, bool reuse_labels,
                 const std::string& out_path) {
    auto registry = common.registry();
    auto prompts = common.prompts();
    auto scheme = CategoryScheme::from_file(scheme_path);
    auto dataset = load_dataset(dataset_path);
    auto backend = registry.get(agent_id);

    std::vector<nlohmann::json> labels(dataset.size());
    util::parallel_for(dataset.size(), common.workers, [&](std::size_t i) {
        auto [category, subcategory] = classify_task(dataset[i], *backend, scheme, prompts,
                                                     ClassifyOptions{reuse_labels});
        labels[i] = {{"id", dataset[i].id}, {"category", category}, {"subcategory", subcategory}};
    });

    if (out_path.empty()) {
        for (const auto& record : labels) std::cout << record.dump() << "\n";
    } else {
        util::write_jsonl(out_path, labels);
    }
    return 0;
}

int run_retrieve(const CommonOptions& common, const std::string& bank_path,
                 const std::string& train_path, const std::string& query_path, int p, int k,
                 const std::string& mode, const std::string& agent_id,
                 const std::string& scheme_path, bool reuse_labels, const std::string& out_path) {
    MemoryBank bank = load_bank(bank_path, k);
    auto train = load_dataset(train_path);
    TfidfIndex index = build_index(bank, train);
    auto prompts = common.prompts();

    Task query = load_query(query_path);
    std::string category, subcategory;
    std::shared_ptr<Backend> backend;
    const bool labels_carried = reuse_labels && query.category && query.subcategory;
    if (!labels_carried || mode == "llm_select") {
        if (agent_id.empty())
            throw Error("this retrieve invocation needs --agent (and --backends)");
        backend = common.registry().get(agent_id);
    }
    if (labels_carried) {
        category = *query.category;
        subcategory = *query.subcategory;
    } else {
        if (scheme_path.empty())
            throw Error("query has no labels; pass --scheme (or --reuse-labels)");
        auto scheme = CategoryScheme::from_file(scheme_path);
        std::tie(category, subcategory) = classify_task(query, *backend, scheme, prompts);
    }
    query.category = category;
    query.subcategory = subcategory;

    RetrievalResult result = retrieve(query, bank, index, p, mode_from_string(mode),
                                      backend ? backend.get() : nullptr, &prompts);
    nlohmann::json trail = retrieval_to_json(result);
    trail["schema"] = 1;
    trail["query_id"] = query.id;
    trail["category"] = category;
    trail["subcategory"] = subcategory;
    emit(trail, out_path);
    return 0;
}

int run_solve(const CommonOptions& common, const std::string& bank_path,
              const std::string& train_path, const std::string& query_path,
              const std::string& agent_id, const std::string& scheme_path, int p, int k,
              const std::string& mode, int max_turns, bool reuse_labels,
              const std::string& out_path) {
    auto registry = common.registry();
    auto prompts = common.prompts();
    auto scheme = CategoryScheme::from_file(scheme_path);
    auto backend = registry.get(agent_id);

    MemoryBank bank = load_bank(bank_path, k);
    TfidfIndex index;
    if (!bank.empty()) {
        if (train_path.empty()) throw Error("--bank needs --train to resolve source task texts");
        index = build_index(bank, load_dataset(train_path));
    }

    Task query = load_query(query_path);
    EpisodeConfig episode{agent_id, agent_id, max_turns, "", common.sandbox()};

    SolveOptions options;
    options.p = p;
    options.mode = mode_from_string(mode);
    options.classify.reuse_labels = reuse_labels;
    Solution solution = solve(query, bank, index, episode, *backend, scheme, prompts, options);

    indicate(solution.trajectory, query, common.sandbox());

    nlohmann::json payload = {
        {"schema", 1},
        {"trajectory", trajectory_to_json(solution.trajectory)},
        {"retrieval", retrieval_to_json(solution.retrieval)},
        {"category", solution.query_category},
        {"subcategory", solution.query_subcategory},
    };
    emit(payload, out_path);
    return 0;
}

int run_eval(const CommonOptions& common, const std::string& dataset_path,
             const std::string& agent_id, const std::string& scheme_path,
             const std::string& bank_path, const std::string& train_path, bool memory, int p,
             int k, const std::string& mode, int max_turns, bool reuse_labels,
             const std::string& report_path, const std::string& trajectories_path) {
    auto registry = common.registry();
    auto prompts = common.prompts();
    auto scheme = CategoryScheme::from_file(scheme_path);
    auto dataset = load_dataset(dataset_path);
    auto backend = registry.get(agent_id);

    std::optional<MemoryBank> bank;
    TfidfIndex index;
    if (!bank_path.empty()) {
        bank = load_bank(bank_path, k);
        if (!bank->empty()) {
            if (train_path.empty())
                throw Error("--bank needs --train to resolve source task texts");
            index = build_index(*bank, load_dataset(train_path));
        }
    }
    if (memory && !bank) throw Error("--memory needs --bank");

    EpisodeConfig episode{agent_id, agent_id, max_turns, "", common.sandbox()};
    EvalOptions options;
    options.memory = memory;
    options.p = p;
    options.retrieval_mode = mode_from_string(mode);
    options.classify.reuse_labels = reuse_labels;
    options.workers = common.workers;
    options.log = [](const std::string& note) { std::cerr << "[eval] " << note << "\n"; };

    EvalOutcome outcome = evaluate(dataset, episode, *backend, bank ? &*bank : nullptr,
                                   &index, scheme, prompts, options);

    if (!trajectories_path.empty()) save_trajectories(outcome.trajectories, trajectories_path);
    emit(report_to_json(outcome.report), report_path);
    return 0;
}

int run_analyze_jsd(const CommonOptions& common, const std::string& trajectories_path,
                    const std::string& dataset_path, const std::string& agent_id,
                    const std::string& out_path) {
    auto registry = common.registry();
    auto prompts = common.prompts();
    auto trajectories = load_trajectories(trajectories_path);
    auto dataset = load_dataset(dataset_path);
    auto backend = registry.get(agent_id);

    auto distributions = annotate_errors(trajectories, dataset, *backend, prompts);
    JsdMatrix matrix = jsd_matrix(distributions);

    nlohmann::json payload = jsd_matrix_to_json(matrix);
    nlohmann::json dists = nlohmann::json::array();
    for (const auto& dist : distributions)
        dists.push_back({{"category", dist.category}, {"counts", dist.counts}, {"probs", dist.probs}});
    payload["distributions"] = dists;
    emit(payload, out_path);
    return 0;
}

int run_analyze_contraction(int b_max, int d_max, const std::string& out_path) {
    nlohmann::json rows = nlohmann::json::array();
    for (int b = 1; b <= b_max; ++b) {
        for (int k = 0; k <= b; ++k) {
            for (int d = 0; d <= d_max; ++d) {
                rows.push_back({{"b", b}, {"k", k}, {"d", d}, {"rho", contraction_ratio(b, k, d)}});
            }
        }
    }
    emit({{"schema", 1}, {"rows", rows}}, out_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrast-derived agent memory toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read flags from a config file ([subcommand] sections)");

    // One CommonOptions per subcommand keeps flag wiring straightforward.
    CommonOptions build_common, classify_common, retrieve_common, solve_common, eval_common,
        analyze_common;

    // build-memory
    auto* build = app.add_subcommand("build-memory", "Distill a memory bank from agent pairs");
    std::string build_dataset, build_bank, build_weak, build_strong, build_report;
    std::string build_scheme = (PromptSet::default_asset_root() / "schemes/math.json").string();
    int build_k = 3, build_max_turns = 6;
    bool build_reuse = false, build_keep_both = false, build_retry = false;
    build->add_option("--dataset", build_dataset, "Training dataset JSONL")->required();
    build->add_option("--bank", build_bank, "Output bank path")->required();
    build->add_option("--weak", build_weak, "Weak agent backend id")->required();
    build->add_option("--strong", build_strong, "Strong agent backend id")->required();
    build->add_option("--scheme", build_scheme, "Category scheme JSON")->capture_default_str();
    build->add_option("--k", build_k, "Max memory entries per task")->capture_default_str();
    build->add_option("--max-turns", build_max_turns, "Episode turn cap")->capture_default_str();
    build->add_flag("--reuse-labels", build_reuse, "Trust dataset-provided category labels");
    build->add_flag("--keep-both-incorrect", build_keep_both,
                    "Distill even when both trajectories are incorrect");
    build->add_flag("--retry-contrast", build_retry, "One retry when no constraints parse");
    build->add_option("--report", build_report, "Write the build report here (default stdout)");
    add_common(build, build_common, true);

    // classify
    auto* classify = app.add_subcommand("classify", "Label tasks with (category, subcategory)");
    std::string classify_dataset, classify_agent, classify_out;
    std::string classify_scheme = (PromptSet::default_asset_root() / "schemes/math.json").string();
    bool classify_reuse = false;
    classify->add_option("--dataset", classify_dataset, "Dataset JSONL")->required();
    classify->add_option("--agent", classify_agent, "Classifier backend id")->required();
    classify->add_option("--scheme", classify_scheme, "Category scheme JSON")->capture_default_str();
    classify->add_flag("--reuse-labels", classify_reuse, "Trust dataset-provided labels");
    classify->add_option("--out", classify_out, "Output JSONL (default stdout)");
    add_common(classify, classify_common, true);

    // retrieve
    auto* retrieve_cmd = app.add_subcommand("retrieve", "Audit trail for one query");
    std::string retrieve_bank, retrieve_train, retrieve_query, retrieve_agent, retrieve_scheme,
        retrieve_out;
    std::string retrieve_mode = "tfidf";
    int retrieve_p = 3, retrieve_k = 3;
    bool retrieve_reuse = false;
    retrieve_cmd->add_option("--bank", retrieve_bank, "Memory bank JSONL")->required();
    retrieve_cmd->add_option("--train", retrieve_train, "Bank source dataset JSONL")->required();
    retrieve_cmd->add_option("--query", retrieve_query, "Query task JSON file")->required();
    retrieve_cmd->add_option("--p", retrieve_p, "Retrieval count")->capture_default_str();
    retrieve_cmd->add_option("--k", retrieve_k, "Bank entries-per-task cap")->capture_default_str();
    retrieve_cmd->add_option("--mode", retrieve_mode, "tfidf | llm_select")->capture_default_str();
    retrieve_cmd->add_option("--agent", retrieve_agent, "Classifier backend id");
    retrieve_cmd->add_option("--scheme", retrieve_scheme, "Category scheme JSON");
    retrieve_cmd->add_flag("--reuse-labels", retrieve_reuse, "Trust labels on the query record");
    retrieve_cmd->add_option("--out", retrieve_out, "Output file (default stdout)");
    add_common(retrieve_cmd, retrieve_common, false);

    // solve
    auto* solve_cmd = app.add_subcommand("solve", "Memory-guided solution for one query");
    std::string solve_bank, solve_train, solve_query, solve_agent, solve_out;
    std::string solve_scheme = (PromptSet::default_asset_root() / "schemes/math.json").string();
    std::string solve_mode = "tfidf";
    int solve_p = 3, solve_k = 3, solve_max_turns = 6;
    bool solve_reuse = false;
    solve_cmd->add_option("--bank", solve_bank, "Memory bank JSONL")->required();
    solve_cmd->add_option("--train", solve_train, "Bank source dataset JSONL");
    solve_cmd->add_option("--query", solve_query, "Query task JSON file")->required();
    solve_cmd->add_option("--agent", solve_agent, "Agent backend id")->required();
    solve_cmd->add_option("--scheme", solve_scheme, "Category scheme JSON")->capture_default_str();
    solve_cmd->add_option("--p", solve_p, "Retrieval count")->capture_default_str();
    solve_cmd->add_option("--k", solve_k, "Bank entries-per-task cap")->capture_default_str();
    solve_cmd->add_option("--mode", solve_mode, "tfidf | llm_select")->capture_default_str();
    solve_cmd->add_option("--max-turns", solve_max_turns, "Episode turn cap")->capture_default_str();
    solve_cmd->add_flag("--reuse-labels", solve_reuse, "Trust labels on the query record");
    solve_cmd->add_option("--out", solve_out, "Output file (default stdout)");
    add_common(solve_cmd, solve_common, true);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Accuracy / turns report over a dataset");
    std::string eval_dataset, eval_agent, eval_bank, eval_train, eval_report, eval_trajectories;
    std::string eval_scheme = (PromptSet::default_asset_root() / "schemes/math.json").string();
    std::string eval_mode = "tfidf";
    int eval_p = 3, eval_k = 3, eval_max_turns = 6;
    bool eval_memory = false, eval_reuse = false;
    eval_cmd->add_option("--dataset", eval_dataset, "Evaluation dataset JSONL")->required();
    eval_cmd->add_option("--agent", eval_agent, "Agent backend id")->required();
    eval_cmd->add_option("--scheme", eval_scheme, "Category scheme JSON")->capture_default_str();
    eval_cmd->add_option("--bank", eval_bank, "Memory bank JSONL");
    eval_cmd->add_option("--train", eval_train, "Bank source dataset JSONL");
    eval_cmd->add_flag("--memory", eval_memory, "Memory-guided mode (default vanilla)");
    eval_cmd->add_option("--p", eval_p, "Retrieval count")->capture_default_str();
    eval_cmd->add_option("--k", eval_k, "Bank entries-per-task cap")->capture_default_str();
    eval_cmd->add_option("--mode", eval_mode, "tfidf | llm_select")->capture_default_str();
    eval_cmd->add_option("--max-turns", eval_max_turns, "Episode turn cap")->capture_default_str();
    eval_cmd->add_flag("--reuse-labels", eval_reuse, "Trust dataset-provided labels");
    eval_cmd->add_option("--report", eval_report, "Report path (default stdout)");
    eval_cmd->add_option("--trajectories-out", eval_trajectories, "Dump trajectories JSONL");
    add_common(eval_cmd, eval_common, true);

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Error-distribution and contraction analyses");
    analyze->require_subcommand(1);
    auto* jsd_cmd = analyze->add_subcommand("jsd", "Pairwise JSD between task categories");
    std::string jsd_trajectories, jsd_dataset, jsd_agent, jsd_out;
    jsd_cmd->add_option("--trajectories", jsd_trajectories, "Trajectories JSONL (from eval)")
        ->required();
    jsd_cmd->add_option("--dataset", jsd_dataset, "Dataset JSONL with category labels")->required();
    jsd_cmd->add_option("--agent", jsd_agent, "Annotation backend id")->required();
    jsd_cmd->add_option("--out", jsd_out, "Output file (default stdout)");
    add_common(jsd_cmd, analyze_common, true);

    auto* contraction_cmd = analyze->add_subcommand("contraction", "Search-space contraction table");
    int contraction_b_max = 8, contraction_d_max = 6;
    std::string contraction_out;
    contraction_cmd->add_option("--b-max", contraction_b_max, "Max branching factor")
        ->capture_default_str();
    contraction_cmd->add_option("--d-max", contraction_d_max, "Max depth")->capture_default_str();
    contraction_cmd->add_option("--out", contraction_out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (build->parsed())
            return run_build_memory(build_common, build_dataset, build_bank, build_weak,
                                    build_strong, build_scheme, build_k, build_max_turns,
                                    build_reuse, build_keep_both, build_retry, build_report);
        if (classify->parsed())
            return run_classify(classify_common, classify_dataset, classify_agent, classify_scheme,
                                classify_reuse, classify_out);
        if (retrieve_cmd->parsed())
            return run_retrieve(retrieve_common, retrieve_bank, retrieve_train, retrieve_query,
                                retrieve_p, retrieve_k, retrieve_mode, retrieve_agent,
                                retrieve_scheme, retrieve_reuse, retrieve_out);
        if (solve_cmd->parsed())
            return run_solve(solve_common, solve_bank, solve_train, solve_query, solve_agent,
                             solve_scheme, solve_p, solve_k, solve_mode, solve_max_turns,
                             solve_reuse, solve_out);
        if (eval_cmd->parsed())
            return run_eval(eval_common, eval_dataset, eval_agent, eval_scheme, eval_bank,
                            eval_train, eval_memory, eval_p, eval_k, eval_mode, eval_max_turns,
                            eval_reuse, eval_report, eval_trajectories);
        if (jsd_cmd->parsed())
            return run_analyze_jsd(analyze_common, jsd_trajectories, jsd_dataset, jsd_agent,
                                   jsd_out);
        if (contraction_cmd->parsed())
            return run_analyze_contraction(contraction_b_max, contraction_d_max, contraction_out);
    } catch (const memcollab::Error& e) {
        nlohmann::json record = {{"error", {{"type", error_type_name(e)}, {"message", e.what()}}}};
        std::cerr << record.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        nlohmann::json record = {{"error", {{"type", "exception"}, {"message", e.what()}}}};
        std::cerr << record.dump() << "\n";
        return 1;
    }
    return 2;
}
