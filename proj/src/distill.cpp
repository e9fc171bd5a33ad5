#include "memcollab/distill.hpp"

#include <regex>
#include <sstream>

#include "memcollab/util.hpp"

namespace memcollab {

ContrastPair select_preference(const Trajectory& tau_weak, const Trajectory& tau_strong) {
    if (!tau_weak.correct.has_value() || !tau_strong.correct.has_value())
        throw UnverifiedTrajectory("both trajectories must be verified before pairing");
    if (tau_weak.task_id != tau_strong.task_id)
        throw InvariantViolation("trajectories are for different tasks");
    if (tau_weak.agent_id == tau_strong.agent_id)
        throw InvariantViolation("contrast pair needs distinct agents");

    ContrastPair pair;
    pair.task_id = tau_weak.task_id;
    if (*tau_weak.correct) {
        pair.preferred = tau_weak;
        pair.unpreferred = tau_strong;
        pair.preferred_from = PreferredFrom::weak;
    } else {
        pair.preferred = tau_strong;
        pair.unpreferred = tau_weak;
        pair.preferred_from = PreferredFrom::strong;
    }
    return pair;
}

// ---------------------------------------------------------------------------
// Constraint parsing
// ---------------------------------------------------------------------------

ParsedConstraints parse_constraints(const std::string& distilled_text, int max_entries) {
    if (max_entries < 1) throw InvariantViolation("max_entries must be >= 1");

    // "When {T}, enforce {I}" with an optional "; avoid {V}" tail. Bullets,
    // numbering, and stray whitespace around the separators are tolerated.
    static const std::regex line_pattern(
        R"(^\s*(?:[-*+]\s+|\(?\d+[.)]\s*)*when\s+(.*?)\s*,\s*enforce\s+(.*?)(?:\s*;\s*avoid\s+(.*?))?\s*$)",
        std::regex::icase);

    ParsedConstraints parsed;
    std::istringstream in(distilled_text);
    std::string line;
    while (std::getline(in, line)) {
        if (util::trim(line).empty()) continue;
        std::smatch match;
        if (std::regex_match(line, match, line_pattern) && !match[1].str().empty() &&
            !match[2].str().empty()) {
            if (static_cast<int>(parsed.items.size()) < max_entries) {
                parsed.items.push_back(
                    {util::trim(match[1]), util::trim(match[2]), util::trim(match[3])});
            }
        } else {
            parsed.skipped_lines.push_back(line);
        }
    }
    if (parsed.items.empty())
        throw NoConstraintsFound("no lines matched the constraint grammar (" +
                                 std::to_string(parsed.skipped_lines.size()) + " skipped)");
    return parsed;
}

// ---------------------------------------------------------------------------
// Trajectory serialization for the contrast prompt
// ---------------------------------------------------------------------------

namespace {

const char* step_tag(StepKind kind) {
    switch (kind) {
        case StepKind::reasoning: return "[REASONING]";
        case StepKind::code: return "[CODE]";
        case StepKind::execution_feedback: return "[FEEDBACK]";
        case StepKind::final_answer: return "[ANSWER]";
    }
    return "[REASONING]";
}

}  // namespace

std::string serialize_trajectory(const Trajectory& trajectory, std::size_t budget_chars) {
    std::vector<std::string> blocks;
    blocks.reserve(trajectory.steps.size());
    for (const auto& step : trajectory.steps) {
        blocks.push_back(std::string(step_tag(step.kind)) + "\n" + step.text);
    }
    if (blocks.empty()) return "(no steps)";

    std::string full;
    for (const auto& block : blocks) {
        if (!full.empty()) full += "\n\n";
        full += block;
    }
    if (full.size() <= budget_chars) return full;

    // Middle truncation: the first and last steps carry setup and conclusion.
    const std::string marker = "\n\n[... truncated ...]\n\n";
    std::size_t keep = budget_chars > marker.size() ? (budget_chars - marker.size()) / 2 : 0;
    return full.substr(0, keep) + marker + full.substr(full.size() - keep);
}

// ---------------------------------------------------------------------------
// build_memory
// ---------------------------------------------------------------------------

namespace {

struct TaskOutcome {
    std::vector<MemoryEntry> entries;
    bool skipped = false;
    bool failed = false;
    std::string note;
};

std::string contrast_user_message(const ContrastPair& pair, std::size_t budget) {
    return "[PREFERRED TRAJECTORY]\n" + serialize_trajectory(pair.preferred, budget) +
           "\n\n[UNPREFERRED TRAJECTORY]\n" + serialize_trajectory(pair.unpreferred, budget);
}

}  // namespace

BuildResult build_memory(const std::vector<Task>& dataset, const AgentSpec& weak,
                         const AgentSpec& strong, const CategoryScheme& scheme,
                         const PromptSet& prompts, const SandboxConfig& sandbox,
                         const BuildOptions& options) {
    BuildResult result{MemoryBank(options.max_entries_per_task), {}};
    result.report.tasks_processed = static_cast<int>(dataset.size());
    if (dataset.empty()) return result;

    std::vector<TaskOutcome> outcomes(dataset.size());

    auto process_task = [&](std::size_t i) {
        const Task& task = dataset[i];
        TaskOutcome& outcome = outcomes[i];
        try {
            EpisodeConfig weak_cfg{weak.agent_id, weak.backend->id(), options.max_turns, "", sandbox};
            EpisodeConfig strong_cfg{strong.agent_id, strong.backend->id(), options.max_turns, "",
                                     sandbox};
            Trajectory tau_weak = run_episode(task, weak_cfg, *weak.backend, prompts);
            Trajectory tau_strong = run_episode(task, strong_cfg, *strong.backend, prompts);
            indicate(tau_weak, task, sandbox);
            indicate(tau_strong, task, sandbox);

            ContrastPair pair = select_preference(tau_weak, tau_strong);
            if (options.skip_when_both_incorrect && !*pair.preferred.correct) {
                outcome.skipped = true;
                outcome.note = task.id + ": both trajectories incorrect, no memory distilled";
                return;
            }

            // The contrast call runs on the strong agent's backbone.
            ChatRequest contrast_request;
            contrast_request.messages.push_back({Role::system, prompts.contrast});
            contrast_request.messages.push_back(
                {Role::user, contrast_user_message(pair, options.context_budget_chars)});

            ParsedConstraints constraints;
            int attempts = options.retry_contrast_once ? 2 : 1;
            for (int attempt = 0;; ++attempt) {
                try {
                    ChatResponse response = strong.backend->complete(contrast_request);
                    constraints =
                        parse_constraints(response.content, options.max_entries_per_task);
                    break;
                } catch (const NoConstraintsFound&) {
                    if (attempt + 1 >= attempts) {
                        outcome.skipped = true;
                        outcome.note = task.id + ": contrast output carried no constraints";
                        return;
                    }
                }
            }

            auto [category, subcategory] =
                classify_task(task, *strong.backend, scheme, prompts,
                              ClassifyOptions{options.reuse_labels});

            int ordinal = 0;
            for (const auto& draft : constraints.items) {
                MemoryEntry entry;
                entry.id = task.id + "#" + std::to_string(++ordinal);
                entry.source_task_id = task.id;
                entry.trigger = draft.trigger;
                entry.invariant = draft.invariant;
                entry.violation = draft.violation;
                entry.category = category;
                entry.subcategory = subcategory;
                entry.raw = entry.render();
                outcome.entries.push_back(std::move(entry));
            }
        } catch (const Error& e) {
            outcome.skipped = true;
            outcome.failed = true;
            outcome.note = task.id + ": " + e.what();
        }
    };

    util::parallel_for(dataset.size(), options.workers, process_task);

    // Appends are serialized through the single writer, in dataset order.
    for (auto& outcome : outcomes) {
        if (!outcome.note.empty()) {
            result.report.notes.push_back(outcome.note);
            if (options.log) options.log(outcome.note);
        }
        if (outcome.skipped) {
            result.report.skipped += 1;
            if (outcome.failed) result.report.failed += 1;
            continue;
        }
        for (auto& entry : outcome.entries) {
            result.bank.append(entry);
            result.report.entries_added += 1;
        }
    }

    if (result.report.failed * 2 > static_cast<int>(dataset.size()))
        throw RunFailure("more than half of the tasks failed (" +
                         std::to_string(result.report.failed) + "/" +
                         std::to_string(dataset.size()) + ")");
    return result;
}

}  // namespace memcollab
