#include "memcollab/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "memcollab/distill.hpp"
#include "memcollab/util.hpp"
#include "memcollab/verify.hpp"

namespace memcollab {

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json per_task = nlohmann::json::array();
    for (const auto& r : report.per_task) {
        nlohmann::json record = {{"task_id", r.task_id},
                                 {"correct", r.correct},
                                 {"turns", r.turns},
                                 {"mode", r.mode}};
        if (!r.note.empty()) record["note"] = r.note;
        per_task.push_back(std::move(record));
    }
    return {
        {"schema", 1},
        {"mode", report.mode},
        {"empty", report.empty()},
        {"accuracy", report.accuracy ? nlohmann::json(*report.accuracy) : nlohmann::json()},
        {"avg_turns", report.avg_turns ? nlohmann::json(*report.avg_turns) : nlohmann::json()},
        {"per_task", per_task},
    };
}

EvalOutcome evaluate(const std::vector<Task>& dataset, const EpisodeConfig& episode,
                     Backend& backend, const MemoryBank* bank, const TfidfIndex* index,
                     const CategoryScheme& scheme, const PromptSet& prompts,
                     const EvalOptions& options) {
    const bool memory_mode = options.memory && bank != nullptr;

    if (bank) {
        // The evaluation set must be disjoint from the bank's source tasks.
        std::set<std::string> sources = bank->source_task_ids();
        for (const auto& task : dataset) {
            if (sources.count(task.id))
                throw OverlapError("task " + task.id + " is also a bank source task");
        }
    }

    EvalOutcome outcome;
    outcome.report.mode = memory_mode ? "memory" : "vanilla";
    outcome.report.per_task.resize(dataset.size());
    outcome.trajectories.resize(dataset.size());
    if (dataset.empty()) return outcome;

    static const TfidfIndex empty_index;

    auto run_one = [&](std::size_t i) {
        const Task& task = dataset[i];
        PerTaskResult& row = outcome.report.per_task[i];
        row.task_id = task.id;
        row.mode = outcome.report.mode;
        Trajectory trajectory;
        try {
            if (memory_mode) {
                SolveOptions solve_options;
                solve_options.p = options.p;
                solve_options.mode = options.retrieval_mode;
                solve_options.classify = options.classify;
                Solution solution = solve(task, *bank, index ? *index : empty_index, episode,
                                          backend, scheme, prompts, solve_options);
                trajectory = std::move(solution.trajectory);
            } else {
                trajectory = run_episode(task, episode, backend, prompts);
            }
            indicate(trajectory, task, episode.sandbox);
            row.correct = *trajectory.correct;
            row.turns = trajectory.turns;
        } catch (const EpisodeError& e) {
            trajectory = e.partial;
            trajectory.correct = false;
            row.correct = false;
            row.turns = trajectory.turns;
            row.note = e.what();
        }
        if (!row.note.empty() && options.log) options.log(row.note);
        outcome.trajectories[i] = std::move(trajectory);
    };

    util::parallel_for(dataset.size(), options.workers, run_one);

    double correct = 0.0;
    double turns = 0.0;
    for (const auto& row : outcome.report.per_task) {
        correct += row.correct ? 1.0 : 0.0;
        turns += row.turns;
    }
    outcome.report.accuracy = correct / static_cast<double>(dataset.size());
    outcome.report.avg_turns = turns / static_cast<double>(dataset.size());
    return outcome;
}

// ---------------------------------------------------------------------------
// Error annotation
// ---------------------------------------------------------------------------

std::vector<ErrorDistribution> annotate_errors(const std::vector<Trajectory>& trajectories,
                                               const std::vector<Task>& tasks, Backend& backend,
                                               const PromptSet& prompts) {
    std::map<std::string, const Task*> task_by_id;
    for (const auto& task : tasks) task_by_id[task.id] = &task;

    std::string label_list;
    for (const auto& label : prompts.error_types) {
        if (!label_list.empty()) label_list += "\n";
        label_list += "- " + label;
    }

    std::map<std::string, std::map<std::string, int>> counts_by_category;
    for (const auto& trajectory : trajectories) {
        if (!trajectory.correct.has_value() || *trajectory.correct) continue;
        auto it = task_by_id.find(trajectory.task_id);
        if (it == task_by_id.end()) continue;
        const Task& task = *it->second;
        const std::string category = task.category.value_or(kUnclassified);

        std::string label = "other";
        try {
            const std::string prompt =
                fill(prompts.annotate_error, {{"LABELS", label_list},
                                              {"TASK", task.text},
                                              {"TRAJECTORY", serialize_trajectory(trajectory)}});
            ChatRequest request;
            request.messages.push_back({Role::user, prompt});
            ChatResponse response = backend.complete(request);
            const std::string reply = util::to_lower(util::trim(response.content));
            for (const auto& candidate : prompts.error_types) {
                if (util::to_lower(candidate) == reply) {
                    label = candidate;
                    break;
                }
            }
        } catch (const BackendError&) {
            // Bin annotation failures as "other".
        }
        counts_by_category[category][label] += 1;
    }

    std::vector<ErrorDistribution> distributions;
    for (const auto& [category, counts] : counts_by_category) {
        ErrorDistribution dist;
        dist.category = category;
        dist.counts = counts;
        double total = 0.0;
        for (const auto& [_, count] : counts) total += count;
        for (const auto& [label, count] : counts) dist.probs[label] = count / total;
        distributions.push_back(std::move(dist));
    }
    return distributions;
}

// ---------------------------------------------------------------------------
// Jensen-Shannon divergence
// ---------------------------------------------------------------------------

double jsd(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size())
        throw DimensionMismatch("distributions have different lengths: " +
                                std::to_string(p.size()) + " vs " + std::to_string(q.size()));
    auto check = [](const std::vector<double>& v, const char* name) {
        double sum = 0.0;
        for (double x : v) {
            if (x < 0.0) throw NotNormalized(std::string(name) + " has a negative entry");
            sum += x;
        }
        if (std::fabs(sum - 1.0) > 1e-9)
            throw NotNormalized(std::string(name) + " sums to " + std::to_string(sum));
    };
    check(p, "P");
    check(q, "Q");

    // JSD(P,Q) = 1/2 KL(P||M) + 1/2 KL(Q||M), M = (P+Q)/2, base-2 logs.
    // 0 * log(0/x) contributes nothing. Each index contributes one term so
    // the sum is bitwise symmetric in (P,Q).
    double divergence = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double m = 0.5 * (p[i] + q[i]);
        double term = 0.0;
        if (p[i] > 0.0) term += 0.5 * p[i] * std::log2(p[i] / m);
        if (q[i] > 0.0) term += 0.5 * q[i] * std::log2(q[i] / m);
        divergence += term;
    }
    return divergence;
}

JsdMatrix jsd_matrix(const std::vector<ErrorDistribution>& distributions) {
    if (distributions.size() < 2)
        throw DomainError("jsd matrix needs at least 2 distributions");

    JsdMatrix matrix;
    std::set<std::string> type_union;
    for (const auto& dist : distributions) {
        matrix.categories.push_back(dist.category);
        for (const auto& [label, _] : dist.probs) type_union.insert(label);
    }
    matrix.error_types.assign(type_union.begin(), type_union.end());

    // Align every distribution over the union, padding missing types with 0.
    std::vector<std::vector<double>> aligned;
    for (const auto& dist : distributions) {
        std::vector<double> row;
        row.reserve(matrix.error_types.size());
        for (const auto& label : matrix.error_types) {
            auto it = dist.probs.find(label);
            row.push_back(it == dist.probs.end() ? 0.0 : it->second);
        }
        aligned.push_back(std::move(row));
    }

    const std::size_t n = distributions.size();
    matrix.values.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double value = jsd(aligned[i], aligned[j]);
            matrix.values[i][j] = value;
            matrix.values[j][i] = value;
        }
    }
    return matrix;
}

nlohmann::json jsd_matrix_to_json(const JsdMatrix& matrix) {
    return {
        {"schema", 1},
        {"categories", matrix.categories},
        {"error_types", matrix.error_types},
        {"matrix", matrix.values},
    };
}

double contraction_ratio(int branching, int pruned, int depth) {
    if (branching < 1) throw DomainError("branching factor must be >= 1");
    if (pruned < 0 || pruned > branching)
        throw DomainError("pruned branches must satisfy 0 <= k <= b");
    if (depth < 0) throw DomainError("depth must be >= 0");

    const double base = 1.0 - static_cast<double>(pruned) / static_cast<double>(branching);
    double ratio = 1.0;
    for (int i = 0; i < depth; ++i) ratio *= base;
    return ratio;
}

}  // namespace memcollab
