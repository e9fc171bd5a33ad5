#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "memcollab/agent.hpp"
#include "memcollab/backend.hpp"
#include "memcollab/core.hpp"
#include "memcollab/taxonomy.hpp"
#include "memcollab/verify.hpp"

namespace memcollab {

enum class PreferredFrom { weak, strong };

struct ContrastPair {
    std::string task_id;
    Trajectory preferred;
    Trajectory unpreferred;
    PreferredFrom preferred_from = PreferredFrom::strong;
};

// Preference rule: the weak agent's trajectory is preferred iff it is
// correct; otherwise the strong agent's is, including the degenerate case
// where both are incorrect. Throws UnverifiedTrajectory when either
// trajectory has not been verified.
ContrastPair select_preference(const Trajectory& tau_weak, const Trajectory& tau_strong);

struct ConstraintDraft {
    std::string trigger;
    std::string invariant;
    std::string violation;  // may be empty
};

struct ParsedConstraints {
    std::vector<ConstraintDraft> items;       // at most K, in order of appearance
    std::vector<std::string> skipped_lines;  // non-empty lines that missed the grammar
};

// Scans model output for lines of the form "When {T}, enforce {I}" with an
// optional "; avoid {V}" tail. Bullet/numbering prefixes are stripped.
// Throws NoConstraintsFound when nothing parses.
ParsedConstraints parse_constraints(const std::string& distilled_text, int max_entries);

// Step-tagged plain-text rendering of a trajectory for the contrast prompt.
// Over-budget serializations are truncated from the middle, keeping the head
// and tail steps.
std::string serialize_trajectory(const Trajectory& trajectory, std::size_t budget_chars = 8000);

struct AgentSpec {
    std::string agent_id;
    std::shared_ptr<Backend> backend;
};

struct BuildOptions {
    int max_entries_per_task = 3;  // K
    int max_turns = 6;
    bool skip_when_both_incorrect = true;
    bool retry_contrast_once = false;
    bool reuse_labels = false;
    std::size_t context_budget_chars = 8000;
    int workers = 1;
    std::function<void(const std::string&)> log;  // optional, per-task notes
};

struct BuildReport {
    int tasks_processed = 0;
    int skipped = 0;  // no entries: both-incorrect, parse miss, or failure
    int failed = 0;   // subset of skipped caused by backend/sandbox errors
    int entries_added = 0;
    std::vector<std::string> notes;
};

struct BuildResult {
    MemoryBank bank;
    BuildReport report;
};

// The full construction pipeline: run both agents on every task, verify,
// select the preferred trajectory, contrast through the strong agent's
// backend, parse constraints, classify the source task, and aggregate into a
// bank. Raises RunFailure when more than half of the tasks fail outright.
BuildResult build_memory(const std::vector<Task>& dataset, const AgentSpec& weak,
                         const AgentSpec& strong, const CategoryScheme& scheme,
                         const PromptSet& prompts, const SandboxConfig& sandbox,
                         const BuildOptions& options = {});

}  // namespace memcollab
