#include "doctest.h"

#include "json.hpp"

#include "memcollab/agent.hpp"
#include "testutil.hpp"

using namespace memcollab;

namespace {

PromptSet test_prompts() { return PromptSet::load(TEST_ASSET_DIR); }

Task math_task(const std::string& id, const std::string& text, const std::string& answer) {
    Task task;
    task.id = id;
    task.suite = Suite::math;
    task.text = text;
    task.gold.answer = answer;
    return task;
}

EpisodeConfig episode_config(int max_turns = 6, std::string memory_context = "") {
    EpisodeConfig config;
    config.agent_id = "agent";
    config.backend_id = "mock";
    config.max_turns = max_turns;
    config.memory_context = std::move(memory_context);
    return config;
}

MemoryEntry entry_with(const std::string& trigger, const std::string& invariant,
                       const std::string& violation) {
    MemoryEntry entry;
    entry.id = "e";
    entry.source_task_id = "t";
    entry.trigger = trigger;
    entry.invariant = invariant;
    entry.violation = violation;
    entry.category = "Algebra";
    entry.subcategory = "Linear Equations";
    entry.raw = entry.render();
    return entry;
}

}  // namespace

TEST_SUITE("agent") {

TEST_CASE("render_memory_context: empty list means vanilla inference") {
    CHECK(render_memory_context({}) == "");
}

TEST_CASE("render_memory_context: one entry under the fixed header") {
    auto entry = entry_with("T", "I", "V");
    std::string context = render_memory_context({entry});
    auto newline = context.find('\n');
    REQUIRE(newline != std::string::npos);
    CHECK(context.substr(newline) == "\n- When T, enforce I; avoid V");
    CHECK(context.find("guidance") != std::string::npos);

    entry.violation = "";
    CHECK(render_memory_context({entry}).substr(newline) == "\n- When T, enforce I");
}

TEST_CASE("render_memory_context: order-preserving, bodies are line permutations") {
    auto e1 = entry_with("T1", "I1", "V1");
    auto e2 = entry_with("T2", "I2", "V2");
    std::string forward = render_memory_context({e1, e2});
    std::string backward = render_memory_context({e2, e1});
    CHECK(forward != backward);
    CHECK(forward.find("- When T1") < forward.find("- When T2"));
    CHECK(backward.find("- When T2") < backward.find("- When T1"));

    auto sorted_lines = [](std::string s) {
        std::vector<std::string> lines;
        std::size_t start = 0;
        while (start <= s.size()) {
            auto end = s.find('\n', start);
            lines.push_back(s.substr(start, end == std::string::npos ? std::string::npos
                                                                     : end - start));
            if (end == std::string::npos) break;
            start = end + 1;
        }
        std::sort(lines.begin(), lines.end());
        return lines;
    };
    CHECK(sorted_lines(forward) == sorted_lines(backward));
}

TEST_CASE("run_episode: immediate final answer") {
    MockBackend mock("m", {{"", "FINAL ANSWER: 4", false, false}});
    auto prompts = test_prompts();
    Trajectory t = run_episode(math_task("t1", "what is 2+2", "4"), episode_config(), mock, prompts);

    CHECK(t.turns == 1);
    CHECK(t.terminated_by == Termination::answer);
    REQUIRE(t.steps.size() == 1);
    CHECK(t.steps[0].kind == StepKind::final_answer);
    CHECK(t.steps[0].text == "4");
    CHECK(step_grammar_ok(t));
}

TEST_CASE("run_episode: scripted code turn then answer from feedback") {
    // Turn 1 emits code computing 6*7; the sandbox oracle produces "42",
    // which the turn-2 rule reads back.
    MockBackend mock("m", {
        {"multiply", "Let me compute it.\n```python\nprint(6*7)\n```", true, false},
        {"Execution output", "FINAL ANSWER: 42", false, false},
    });
    auto prompts = test_prompts();
    Trajectory t = run_episode(math_task("t1", "multiply 6 by 7", "42"), episode_config(), mock,
                               prompts);

    CHECK(t.turns == 2);
    CHECK(t.terminated_by == Termination::answer);
    REQUIRE(t.steps.size() == 3);
    CHECK(t.steps[0].kind == StepKind::code);
    CHECK(t.steps[0].text == "print(6*7)");
    CHECK(t.steps[1].kind == StepKind::execution_feedback);
    CHECK(t.steps[1].text.find("42") != std::string::npos);
    CHECK(t.steps[2].kind == StepKind::final_answer);
    CHECK(t.steps[2].text == "42");
    CHECK(step_grammar_ok(t));
}

TEST_CASE("run_episode: never answers, capped at max_turns") {
    MockBackend mock("m", {{"", "still thinking", false, false}});
    auto prompts = test_prompts();
    Trajectory t = run_episode(math_task("t1", "hard", "?"), episode_config(3), mock, prompts);

    CHECK(t.turns == 3);
    CHECK(t.terminated_by == Termination::max_turns);
    CHECK(t.steps.size() == 3);
    for (const auto& step : t.steps) CHECK(step.kind == StepKind::reasoning);
    CHECK(step_grammar_ok(t));
    CHECK(mock.request_log().size() == 3);  // turns == backend calls
}

TEST_CASE("run_episode: backend error carries the partial trajectory") {
    MockBackend mock("m", {{"hard", "working on it", true, false}});
    auto prompts = test_prompts();
    try {
        run_episode(math_task("t1", "hard", "?"), episode_config(5), mock, prompts);
        FAIL("expected EpisodeError");
    } catch (const EpisodeError& e) {
        CHECK(e.partial.turns == 2);  // second call raised NoRuleMatched
        CHECK(e.partial.turns == static_cast<int>(mock.request_log().size()));
        CHECK(e.partial.terminated_by == Termination::error);
        REQUIRE(e.partial.steps.size() == 1);
        CHECK(e.partial.steps[0].kind == StepKind::reasoning);
        CHECK(step_grammar_ok(e.partial));
    }
}

TEST_CASE("run_episode: sandbox failure becomes execution feedback, episode continues") {
    EpisodeConfig config = episode_config();
    config.sandbox.interpreter_command = "definitely-not-an-interpreter-xyz";
    MockBackend mock("m", {
        {"task", "```python\nprint(1)\n```", true, false},
        {"sandbox error", "FINAL ANSWER: recovered", false, false},
    });
    auto prompts = test_prompts();
    Trajectory t = run_episode(math_task("t1", "task", "?"), config, mock, prompts);

    CHECK(t.turns == 2);
    CHECK(t.terminated_by == Termination::answer);
    REQUIRE(t.steps.size() == 3);
    CHECK(t.steps[1].kind == StepKind::execution_feedback);
    CHECK(t.steps[1].text.find("sandbox error") != std::string::npos);
}

TEST_CASE("memory context is purely additive to the first user message") {
    Task task = math_task("t1", "solve the thing", "1");

    CHECK(initial_user_message(task, "") == "solve the thing");

    std::string context = render_memory_context({entry_with("T", "I", "V")});
    CHECK(initial_user_message(task, context) == context + "\n\nsolve the thing");

    // Byte-identical outbound prompts for empty context vs vanilla run.
    MockBackend vanilla("a", {{"", "FINAL ANSWER: 1", false, false}});
    MockBackend empty_ctx("b", {{"", "FINAL ANSWER: 1", false, false}});
    auto prompts = test_prompts();
    run_episode(task, episode_config(), vanilla, prompts);
    run_episode(task, episode_config(6, ""), empty_ctx, prompts);
    REQUIRE(vanilla.request_log().size() == 1);
    REQUIRE(empty_ctx.request_log().size() == 1);
    CHECK(vanilla.request_log()[0] == empty_ctx.request_log()[0]);
}

TEST_CASE("system template selection follows the suite") {
    auto prompts = test_prompts();
    MockBackend mock("m", {{"", "FINAL ANSWER: done", false, false}});

    Task code_task;
    code_task.id = "c1";
    code_task.suite = Suite::code;
    code_task.text = "write add";
    code_task.gold.tests = {"assert add(1,2)==3"};
    run_episode(code_task, episode_config(), mock, prompts);

    auto payload = nlohmann::json::parse(mock.request_log()[0]);
    CHECK(payload["messages"][0]["role"] == "system");
    CHECK(payload["messages"][0]["content"] == prompts.system_code);
}

TEST_CASE("parsing: the earlier of final answer and code fence wins") {
    CHECK(*extract_final_answer("FINAL ANSWER: 7") == "7");
    CHECK(*extract_first_code_block("```python\nx=1\n```") == "x=1");
    CHECK_FALSE(extract_final_answer("no marker").has_value());
    CHECK_FALSE(extract_first_code_block("``` unterminated").has_value());

    // Answer first: terminate without executing anything.
    MockBackend answer_first("m", {{"", "FINAL ANSWER: 9\n```python\nprint(1)\n```", false, false}});
    auto prompts = test_prompts();
    Trajectory t1 = run_episode(math_task("t", "q", "9"), episode_config(), answer_first, prompts);
    CHECK(t1.terminated_by == Termination::answer);
    CHECK(t1.steps.size() == 1);

    // Code first: execute, treat the marker as part of a later turn.
    MockBackend code_first("m", {
        {"q", "```python\nprint(5)\n```\nFINAL ANSWER: not yet", true, false},
        {"Execution output", "FINAL ANSWER: 5", false, false},
    });
    Trajectory t2 = run_episode(math_task("t", "q", "5"), episode_config(), code_first, prompts);
    CHECK(t2.turns == 2);
    REQUIRE(t2.steps.size() == 3);
    CHECK(t2.steps[0].kind == StepKind::code);
}

TEST_CASE("step indices are strictly increasing from zero") {
    MockBackend mock("m", {
        {"q", "thinking", true, false},
        {"Continue", "```python\nprint(3)\n```", true, false},
        {"Execution output", "FINAL ANSWER: 3", false, false},
    });
    auto prompts = test_prompts();
    Trajectory t = run_episode(math_task("t", "q", "3"), episode_config(), mock, prompts);
    REQUIRE(t.steps.size() == 4);
    for (std::size_t i = 0; i < t.steps.size(); ++i)
        CHECK(t.steps[i].index == static_cast<int>(i));
    CHECK(t.turns == 3);
    CHECK(step_grammar_ok(t));
}

}  // TEST_SUITE
