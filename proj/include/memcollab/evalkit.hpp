#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "memcollab/retrieval.hpp"

namespace memcollab {

struct PerTaskResult {
    std::string task_id;
    bool correct = false;
    int turns = 0;
    std::string mode;  // "vanilla" or "memory"
    std::string note;  // error note when the episode failed
};

struct EvalReport {
    std::vector<PerTaskResult> per_task;
    std::optional<double> accuracy;   // unset only for an empty dataset
    std::optional<double> avg_turns;  // ditto
    std::string mode;
    bool empty() const { return per_task.empty(); }
};

nlohmann::json report_to_json(const EvalReport& report);

struct EvalOptions {
    bool memory = false;  // memory-guided (solve) vs vanilla (run_episode)
    int p = 3;
    RetrievalMode retrieval_mode = RetrievalMode::tfidf;
    ClassifyOptions classify;
    int workers = 1;
    std::function<void(const std::string&)> log;
};

struct EvalOutcome {
    EvalReport report;
    std::vector<Trajectory> trajectories;  // one per task, dataset order
};

// Runs the agent over the dataset in the requested mode and verifies each
// trajectory. `bank`/`index` may be null for vanilla runs. Throws
// OverlapError when dataset ids intersect the bank's source task ids.
EvalOutcome evaluate(const std::vector<Task>& dataset, const EpisodeConfig& episode,
                     Backend& backend, const MemoryBank* bank, const TfidfIndex* index,
                     const CategoryScheme& scheme, const PromptSet& prompts,
                     const EvalOptions& options = {});

struct ErrorDistribution {
    std::string category;
    std::map<std::string, int> counts;    // error type -> count
    std::map<std::string, double> probs;  // normalized, sums to 1
};

// One backend call per incorrect trajectory yields an error-type label from
// the fixed label set; out-of-set or failed annotations bin as "other".
// Distributions are grouped by task category; categories with no incorrect
// trajectories are omitted.
std::vector<ErrorDistribution> annotate_errors(const std::vector<Trajectory>& trajectories,
                                               const std::vector<Task>& tasks, Backend& backend,
                                               const PromptSet& prompts);

// Jensen-Shannon divergence, base-2 logs, range [0,1]. Inputs must be
// same-length probability vectors (sum 1 +/- 1e-9, entries >= 0).
double jsd(const std::vector<double>& p, const std::vector<double>& q);

struct JsdMatrix {
    std::vector<std::string> categories;
    std::vector<std::string> error_types;           // union, sorted
    std::vector<std::vector<double>> values;        // symmetric, zero diagonal
};

nlohmann::json jsd_matrix_to_json(const JsdMatrix& matrix);

// Pairwise JSD between categories, aligned over the union of error types
// (missing types padded with zero). Requires >= 2 distributions.
JsdMatrix jsd_matrix(const std::vector<ErrorDistribution>& distributions);

// Search-space contraction ratio (1 - k/b)^d for branching factor b, pruned
// branches k, depth d. Throws DomainError outside 0 <= k <= b, b >= 1, d >= 0.
double contraction_ratio(int branching, int pruned, int depth);

}  // namespace memcollab
