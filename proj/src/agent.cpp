#include "memcollab/agent.hpp"

#include <sstream>

#include "memcollab/util.hpp"

namespace memcollab {

namespace {

constexpr const char* kFinalAnswerMarker = "FINAL ANSWER:";
constexpr const char* kContextHeader =
    "Guidance distilled from related past tasks. Treat each item as soft guidance on how to "
    "reason; none of it is the final answer.";
constexpr const char* kContinueNudge =
    "Continue. When you are confident, reply with FINAL ANSWER: <answer> on its own line.";

std::string feedback_message(const std::string& detail) {
    return "Execution output:\n" + detail +
           "\n\nContinue solving. When you are confident, reply with FINAL ANSWER: <answer> on "
           "its own line.";
}

}  // namespace

EpisodeError::EpisodeError(const std::string& what, Trajectory partial_trajectory)
    : Error(what), partial(std::move(partial_trajectory)) {}

std::string render_memory_context(const std::vector<MemoryEntry>& entries) {
    if (entries.empty()) return "";
    std::string context = kContextHeader;
    for (const auto& entry : entries) {
        context += "\n- " + entry.render();
    }
    return context;
}

std::string initial_user_message(const Task& task, const std::string& memory_context) {
    if (memory_context.empty()) return task.text;
    return memory_context + "\n\n" + task.text;
}

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

namespace {

// Offset of the first line whose trimmed text starts with the marker, or npos.
std::size_t find_final_answer(const std::string& content) {
    std::size_t line_start = 0;
    while (line_start <= content.size()) {
        std::size_t line_end = content.find('\n', line_start);
        std::string line = content.substr(
            line_start, line_end == std::string::npos ? std::string::npos : line_end - line_start);
        if (util::starts_with(util::trim(line), kFinalAnswerMarker)) return line_start;
        if (line_end == std::string::npos) break;
        line_start = line_end + 1;
    }
    return std::string::npos;
}

// Offset of the first line-anchored ``` fence with a matching closer, or npos.
std::size_t find_code_fence(const std::string& content) {
    std::size_t pos = 0;
    while (pos <= content.size()) {
        std::size_t fence = content.find("```", pos);
        if (fence == std::string::npos) return std::string::npos;
        bool at_line_start = fence == 0 || content[fence - 1] == '\n';
        if (at_line_start) {
            std::size_t body_start = content.find('\n', fence);
            if (body_start == std::string::npos) return std::string::npos;
            std::size_t closer = content.find("\n```", body_start);
            if (closer != std::string::npos) return fence;
        }
        pos = fence + 3;
    }
    return std::string::npos;
}

}  // namespace

std::optional<std::string> extract_final_answer(const std::string& content) {
    std::size_t at = find_final_answer(content);
    if (at == std::string::npos) return std::nullopt;
    std::size_t line_end = content.find('\n', at);
    std::string line = content.substr(
        at, line_end == std::string::npos ? std::string::npos : line_end - at);
    line = util::trim(line);
    return util::trim(line.substr(std::string(kFinalAnswerMarker).size()));
}

std::optional<std::string> extract_first_code_block(const std::string& content) {
    std::size_t fence = find_code_fence(content);
    if (fence == std::string::npos) return std::nullopt;
    std::size_t body_start = content.find('\n', fence);
    std::size_t closer = content.find("\n```", body_start);
    return content.substr(body_start + 1, closer - body_start - 1);
}

// ---------------------------------------------------------------------------
// Episode loop
// ---------------------------------------------------------------------------

Trajectory run_episode(const Task& task, const EpisodeConfig& config, Backend& backend,
                       const PromptSet& prompts) {
    if (config.max_turns < 1) throw InvariantViolation("max_turns must be >= 1");

    Trajectory trajectory;
    trajectory.task_id = task.id;
    trajectory.agent_id = config.agent_id;
    trajectory.terminated_by = Termination::error;

    std::vector<ChatMessage> messages;
    messages.push_back({Role::system, prompts.system_for(task.suite)});
    messages.push_back({Role::user, initial_user_message(task, config.memory_context)});

    auto session = backend.open_session();
    int next_index = 0;
    auto push_step = [&](StepKind kind, std::string text) {
        trajectory.steps.push_back({kind, std::move(text), next_index++});
    };

    while (trajectory.turns < config.max_turns) {
        ChatRequest request;
        request.messages = messages;

        trajectory.turns += 1;  // turn = one model call, counted on every exit path
        ChatResponse response;
        try {
            response = session->complete(request);
        } catch (const Error& e) {
            throw EpisodeError(std::string("backend failure on turn ") +
                                   std::to_string(trajectory.turns) + ": " + e.what(),
                               trajectory);
        }

        const std::string& content = response.content;
        messages.push_back({Role::assistant, content});

        // Earliest of the final-answer marker and a fenced code block decides.
        std::size_t answer_at = find_final_answer(content);
        std::size_t fence_at = find_code_fence(content);

        if (answer_at != std::string::npos &&
            (fence_at == std::string::npos || answer_at < fence_at)) {
            push_step(StepKind::final_answer, *extract_final_answer(content));
            trajectory.terminated_by = Termination::answer;
            return trajectory;
        }

        if (fence_at != std::string::npos) {
            std::string code = *extract_first_code_block(content);
            push_step(StepKind::code, code);
            std::string detail;
            try {
                RunResult run = run_program(code, config.sandbox);
                detail = run.timed_out ? "timeout" : run.output;
            } catch (const SandboxError& e) {
                // Tool feedback, not episode failure.
                detail = std::string("sandbox error: ") + e.what();
            }
            push_step(StepKind::execution_feedback, detail);
            messages.push_back({Role::user, feedback_message(detail)});
            continue;
        }

        push_step(StepKind::reasoning, content);
        messages.push_back({Role::user, kContinueNudge});
    }

    trajectory.terminated_by = Termination::max_turns;
    return trajectory;
}

bool step_grammar_ok(const Trajectory& trajectory) {
    int expected_index = 0;
    for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
        const Step& step = trajectory.steps[i];
        if (step.index != expected_index++) return false;
        switch (step.kind) {
            case StepKind::reasoning:
                break;
            case StepKind::code:
                break;
            case StepKind::execution_feedback:
                // Only ever follows a code step.
                if (i == 0 || trajectory.steps[i - 1].kind != StepKind::code) return false;
                break;
            case StepKind::final_answer:
                if (i + 1 != trajectory.steps.size()) return false;
                break;
        }
        // A code step must be followed by its execution feedback.
        if (step.kind == StepKind::code &&
            (i + 1 >= trajectory.steps.size() ||
             trajectory.steps[i + 1].kind != StepKind::execution_feedback))
            return false;
    }
    if (trajectory.terminated_by == Termination::answer) {
        if (trajectory.steps.empty() || trajectory.steps.back().kind != StepKind::final_answer)
            return false;
    }
    return !(!trajectory.steps.empty() && trajectory.turns < 1);
}

}  // namespace memcollab
