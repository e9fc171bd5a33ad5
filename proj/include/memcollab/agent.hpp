#pragma once

#include <string>
#include <vector>

#include "memcollab/backend.hpp"
#include "memcollab/core.hpp"
#include "memcollab/prompts.hpp"
#include "memcollab/verify.hpp"

namespace memcollab {

struct EpisodeConfig {
    std::string agent_id;
    std::string backend_id;
    int max_turns = 6;
    std::string memory_context;  // empty -> vanilla inference
    SandboxConfig sandbox;
};

// Backend failure mid-episode, with the partial trajectory attached.
struct EpisodeError : Error {
    Trajectory partial;
    EpisodeError(const std::string& what, Trajectory partial_trajectory);
};

// Deterministic context block: a fixed guidance header followed by one line
// per entry, "When {trigger}, enforce {invariant}; avoid {violation}", in
// retrieval-rank order. Empty input renders to the empty string.
std::string render_memory_context(const std::vector<MemoryEntry>& entries);

// The first user message of an episode: memory context (when present)
// followed by the task statement. With an empty context this is exactly the
// task text, so memory is purely additive to the outbound prompt.
std::string initial_user_message(const Task& task, const std::string& memory_context);

// Drives one agent on one task: model call, response parsing, code execution
// feedback, repeat. Turn = one model call. Sandbox failures are recorded as
// execution feedback and the episode continues; backend failures raise
// EpisodeError carrying the partial trajectory.
Trajectory run_episode(const Task& task, const EpisodeConfig& config, Backend& backend,
                       const PromptSet& prompts);

// (reasoning | code execution_feedback)* final_answer? with strictly
// increasing indices. Every produced trajectory satisfies this.
bool step_grammar_ok(const Trajectory& trajectory);

// Response parsing, exposed for tests.
// First "FINAL ANSWER:" line, payload trimmed.
std::optional<std::string> extract_final_answer(const std::string& content);
// First fenced code block body (``` ... ```).
std::optional<std::string> extract_first_code_block(const std::string& content);

}  // namespace memcollab
