#include "doctest.h"

#include "memcollab/distill.hpp"
#include "memcollab/util.hpp"
#include "testutil.hpp"

using namespace memcollab;

namespace {

PromptSet test_prompts() { return PromptSet::load(TEST_ASSET_DIR); }
CategoryScheme math_scheme() {
    return CategoryScheme::from_file(std::filesystem::path(TEST_ASSET_DIR) / "schemes/math.json");
}

Trajectory verified(const std::string& task_id, const std::string& agent_id, bool correct) {
    Trajectory t;
    t.task_id = task_id;
    t.agent_id = agent_id;
    t.steps = {{StepKind::final_answer, correct ? "right" : "wrong", 0}};
    t.turns = 1;
    t.terminated_by = Termination::answer;
    t.correct = correct;
    return t;
}

Task math_task(const std::string& id, const std::string& text, const std::string& answer) {
    Task task;
    task.id = id;
    task.suite = Suite::math;
    task.text = text;
    task.gold.answer = answer;
    return task;
}

const char* kThreeConstraints =
    "When facing token puzzles, enforce checking the stated invariant; avoid guessing blindly.\n"
    "When decomposing the problem, enforce writing the constraint system first; avoid skipping "
    "validation.\n"
    "When verifying results, enforce substituting back into the original conditions; avoid "
    "accepting the first candidate.";

}  // namespace

TEST_SUITE("distill") {

TEST_CASE("preference selection truth table") {
    // (I(w), I(s)) -> preferred source
    struct Case {
        bool weak_correct;
        bool strong_correct;
        PreferredFrom expected;
    };
    const Case cases[] = {
        {true, true, PreferredFrom::weak},
        {true, false, PreferredFrom::weak},
        {false, true, PreferredFrom::strong},
        {false, false, PreferredFrom::strong},  // degenerate branch, literal rule
    };
    for (const auto& c : cases) {
        CAPTURE(c.weak_correct);
        CAPTURE(c.strong_correct);
        ContrastPair pair = select_preference(verified("t", "weak", c.weak_correct),
                                              verified("t", "strong", c.strong_correct));
        CHECK(pair.preferred_from == c.expected);
        if (c.expected == PreferredFrom::weak) {
            CHECK(pair.preferred.agent_id == "weak");
            CHECK(pair.unpreferred.agent_id == "strong");
        } else {
            CHECK(pair.preferred.agent_id == "strong");
            CHECK(pair.unpreferred.agent_id == "weak");
        }
    }
}

TEST_CASE("preference selection requires verified trajectories") {
    Trajectory unverified = verified("t", "weak", true);
    unverified.correct.reset();
    CHECK_THROWS_AS(select_preference(unverified, verified("t", "strong", true)),
                    UnverifiedTrajectory);
    CHECK_THROWS_AS(select_preference(verified("t", "weak", true), unverified),
                    UnverifiedTrajectory);
    CHECK_THROWS_AS(select_preference(verified("t1", "weak", true), verified("t2", "strong", true)),
                    InvariantViolation);
}

TEST_CASE("parse_constraints: canonical single line without a violation clause") {
    const std::string line =
        "When projecting multiple vectors onto the same vector and obtaining identical "
        "projections, enforce equality of scalar projection coefficients rather than treating "
        "each projection independently.";
    ParsedConstraints parsed = parse_constraints(line, 3);
    REQUIRE(parsed.items.size() == 1);
    CHECK(parsed.items[0].trigger ==
          "projecting multiple vectors onto the same vector and obtaining identical projections");
    CHECK(parsed.items[0].invariant ==
          "equality of scalar projection coefficients rather than treating each projection "
          "independently.");
    CHECK(parsed.items[0].violation.empty());
}

TEST_CASE("parse_constraints: violation clause, bullets, numbering, loose spacing") {
    ParsedConstraints parsed = parse_constraints(
        "- When A , enforce B ; avoid C\n"
        "1. when D, enforce E; avoid F\n"
        "2) When G, enforce H\n",
        5);
    REQUIRE(parsed.items.size() == 3);
    CHECK(parsed.items[0].trigger == "A");
    CHECK(parsed.items[0].invariant == "B");
    CHECK(parsed.items[0].violation == "C");
    CHECK(parsed.items[1].trigger == "D");
    CHECK(parsed.items[1].violation == "F");
    CHECK(parsed.items[2].invariant == "H");
    CHECK(parsed.items[2].violation.empty());
    CHECK(parsed.skipped_lines.empty());
}

TEST_CASE("parse_constraints: at most K, in order of appearance") {
    std::string five;
    for (int i = 1; i <= 5; ++i)
        five += "When trigger " + std::to_string(i) + ", enforce rule " + std::to_string(i) + "\n";
    ParsedConstraints parsed = parse_constraints(five, 3);
    REQUIRE(parsed.items.size() == 3);
    CHECK(parsed.items[0].trigger == "trigger 1");
    CHECK(parsed.items[2].trigger == "trigger 3");
}

TEST_CASE("parse_constraints: no grammar hit raises NoConstraintsFound") {
    CHECK_THROWS_AS(parse_constraints("I could not find any differences worth noting.", 3),
                    NoConstraintsFound);
    CHECK_THROWS_AS(parse_constraints("", 3), NoConstraintsFound);
}

TEST_CASE("parse_constraints: non-matching lines are skipped and reported") {
    ParsedConstraints parsed = parse_constraints(
        "Here are the strategies:\nWhen X, enforce Y; avoid Z\nHope this helps!", 3);
    REQUIRE(parsed.items.size() == 1);
    REQUIRE(parsed.skipped_lines.size() == 2);
    CHECK(parsed.skipped_lines[0] == "Here are the strategies:");
}

TEST_CASE("parse_constraints composed with render is the identity") {
    testutil::Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        MemoryEntry entry = testutil::rand_entry(rng, "t", 1, "Algebra", "Linear Equations");
        ParsedConstraints parsed = parse_constraints(entry.render(), 1);
        REQUIRE(parsed.items.size() == 1);
        CHECK(parsed.items[0].trigger == entry.trigger);
        CHECK(parsed.items[0].invariant == entry.invariant);
        CHECK(parsed.items[0].violation == entry.violation);
    }
}

TEST_CASE("serialize_trajectory: step tags and middle truncation") {
    Trajectory t;
    t.task_id = "t";
    t.agent_id = "a";
    t.steps = {{StepKind::reasoning, "think", 0},
               {StepKind::code, "print(1)", 1},
               {StepKind::execution_feedback, "1", 2},
               {StepKind::final_answer, "1", 3}};
    t.turns = 2;
    std::string serialized = serialize_trajectory(t);
    CHECK(serialized.find("[REASONING]\nthink") != std::string::npos);
    CHECK(serialized.find("[CODE]\nprint(1)") != std::string::npos);
    CHECK(serialized.find("[FEEDBACK]\n1") != std::string::npos);
    CHECK(serialized.find("[ANSWER]\n1") != std::string::npos);

    Trajectory long_t;
    long_t.task_id = "t";
    long_t.agent_id = "a";
    for (int i = 0; i < 40; ++i)
        long_t.steps.push_back({StepKind::reasoning, "step " + std::to_string(i) + std::string(50, 'x'), i});
    long_t.turns = 40;
    std::string truncated = serialize_trajectory(long_t, 400);
    CHECK(truncated.size() <= 400);
    CHECK(truncated.find("[... truncated ...]") != std::string::npos);
    CHECK(truncated.find("step 0") != std::string::npos);    // head kept
    CHECK(truncated.find("step 39") != std::string::npos);   // tail kept
}

TEST_CASE("build_memory: scripted end-to-end run over two tasks") {
    std::vector<Task> dataset = {math_task("t1", "solve the alpha puzzle", "10"),
                                 math_task("t2", "solve the beta puzzle", "20")};

    auto weak = std::make_shared<MockBackend>(
        "weak", std::vector<MockRule>{{"", "FINAL ANSWER: 0", false, false}});
    auto strong = std::make_shared<MockBackend>(
        "strong", std::vector<MockRule>{
                      {"[PREFERRED TRAJECTORY]", kThreeConstraints, false, false},
                      {"Allowed Categories", "Algebra", false, false},
                      {"Allowed Subcategories", "Linear Equations", false, false},
                      {"alpha", "FINAL ANSWER: 10", false, false},
                      {"beta", "FINAL ANSWER: 20", false, false},
                  });

    BuildResult result = build_memory(dataset, {"weak-agent", weak}, {"strong-agent", strong},
                                      math_scheme(), test_prompts(), SandboxConfig{}, {});

    CHECK(result.report.tasks_processed == 2);
    CHECK(result.report.skipped == 0);
    CHECK(result.report.failed == 0);
    CHECK(result.report.entries_added == 6);
    REQUIRE(result.bank.size() == 6);
    CHECK(result.bank.source_task_ids() == std::set<std::string>{"t1", "t2"});
    for (const auto& entry : result.bank.entries()) {
        CHECK(entry.category == "Algebra");
        CHECK(entry.subcategory == "Linear Equations");
        CHECK(entry.raw == entry.render());
    }
    CHECK(result.bank.entries()[0].id == "t1#1");
    CHECK(result.bank.entries()[3].id == "t2#1");
}

TEST_CASE("build_memory: both-incorrect tasks are skipped under the default policy") {
    std::vector<Task> dataset = {math_task("t1", "alpha", "10")};
    auto weak = std::make_shared<MockBackend>(
        "weak", std::vector<MockRule>{{"", "FINAL ANSWER: 0", false, false}});
    auto strong = std::make_shared<MockBackend>(
        "strong", std::vector<MockRule>{
                      {"[PREFERRED TRAJECTORY]", kThreeConstraints, false, false},
                      {"Allowed Categories", "Algebra", false, false},
                      {"Allowed Subcategories", "Linear Equations", false, false},
                      {"alpha", "FINAL ANSWER: 1", false, false},  // also wrong
                  });

    BuildResult skipped = build_memory(dataset, {"w", weak}, {"s", strong}, math_scheme(),
                                       test_prompts(), SandboxConfig{}, {});
    CHECK(skipped.report.skipped == 1);
    CHECK(skipped.report.failed == 0);
    CHECK(skipped.bank.empty());

    BuildOptions keep;
    keep.skip_when_both_incorrect = false;
    BuildResult kept = build_memory(dataset, {"w", weak}, {"s", strong}, math_scheme(),
                                    test_prompts(), SandboxConfig{}, keep);
    CHECK(kept.report.skipped == 0);
    CHECK(kept.bank.size() == 3);  // distilled from the literal (strong-preferred) pair
}

TEST_CASE("build_memory: empty dataset yields an empty bank and report") {
    auto weak = std::make_shared<MockBackend>("weak", std::vector<MockRule>{});
    auto strong = std::make_shared<MockBackend>("strong", std::vector<MockRule>{});
    BuildResult result = build_memory({}, {"w", weak}, {"s", strong}, math_scheme(),
                                      test_prompts(), SandboxConfig{}, {});
    CHECK(result.bank.empty());
    CHECK(result.report.tasks_processed == 0);
    CHECK(result.report.entries_added == 0);
}

TEST_CASE("build_memory: per-task failures skip the task; >50% failures abort") {
    auto weak = std::make_shared<MockBackend>(
        "weak", std::vector<MockRule>{{"", "FINAL ANSWER: 0", false, false}});
    // Strong has no rule for "gamma" episodes: that task fails.
    auto strong = std::make_shared<MockBackend>(
        "strong", std::vector<MockRule>{
                      {"[PREFERRED TRAJECTORY]", kThreeConstraints, false, false},
                      {"Allowed Categories", "Algebra", false, false},
                      {"Allowed Subcategories", "Linear Equations", false, false},
                      {"alpha", "FINAL ANSWER: 10", false, false},
                      {"beta", "FINAL ANSWER: 20", false, false},
                  });

    std::vector<Task> dataset = {math_task("t1", "alpha", "10"), math_task("t2", "beta", "20"),
                                 math_task("t3", "gamma", "30")};
    BuildResult result = build_memory(dataset, {"w", weak}, {"s", strong}, math_scheme(),
                                      test_prompts(), SandboxConfig{}, {});
    CHECK(result.report.failed == 1);
    CHECK(result.report.skipped == 1);
    CHECK(result.bank.size() == 6);
    REQUIRE(result.report.notes.size() == 1);
    CHECK(result.report.notes[0].find("t3") == 0);

    std::vector<Task> all_failing = {math_task("t3", "gamma", "30")};
    CHECK_THROWS_AS(build_memory(all_failing, {"w", weak}, {"s", strong}, math_scheme(),
                                 test_prompts(), SandboxConfig{}, {}),
                    RunFailure);
}

TEST_CASE("build_memory: never more than K entries per task") {
    std::string five_lines;
    for (int i = 1; i <= 5; ++i)
        five_lines += "When case " + std::to_string(i) + ", enforce rule " + std::to_string(i) + "\n";

    auto weak = std::make_shared<MockBackend>(
        "weak", std::vector<MockRule>{{"", "FINAL ANSWER: 0", false, false}});
    auto strong = std::make_shared<MockBackend>(
        "strong", std::vector<MockRule>{
                      {"[PREFERRED TRAJECTORY]", five_lines, false, false},
                      {"Allowed Categories", "Algebra", false, false},
                      {"Allowed Subcategories", "Linear Equations", false, false},
                      {"alpha", "FINAL ANSWER: 10", false, false},
                  });

    BuildOptions options;
    options.max_entries_per_task = 3;
    BuildResult result = build_memory({math_task("t1", "alpha", "10")}, {"w", weak}, {"s", strong},
                                      math_scheme(), test_prompts(), SandboxConfig{}, options);
    CHECK(result.bank.size() == 3);

    options.max_entries_per_task = 2;
    result = build_memory({math_task("t1", "alpha", "10")}, {"w", weak}, {"s", strong},
                          math_scheme(), test_prompts(), SandboxConfig{}, options);
    CHECK(result.bank.size() == 2);
}

TEST_CASE("build_memory: reuse_labels stamps dataset labels without classifier calls") {
    Task task = math_task("t1", "alpha", "10");
    task.category = "Geometry";
    task.subcategory = "Circles & Angles";

    auto weak = std::make_shared<MockBackend>(
        "weak", std::vector<MockRule>{{"", "FINAL ANSWER: 0", false, false}});
    // No classifier rules at all: reuse_labels must avoid those calls.
    auto strong = std::make_shared<MockBackend>(
        "strong", std::vector<MockRule>{
                      {"[PREFERRED TRAJECTORY]", kThreeConstraints, false, false},
                      {"alpha", "FINAL ANSWER: 10", false, false},
                  });

    BuildOptions options;
    options.reuse_labels = true;
    BuildResult result = build_memory({task}, {"w", weak}, {"s", strong}, math_scheme(),
                                      test_prompts(), SandboxConfig{}, options);
    REQUIRE(result.bank.size() == 3);
    CHECK(result.bank.entries()[0].category == "Geometry");
    CHECK(result.bank.entries()[0].subcategory == "Circles & Angles");
}

}  // TEST_SUITE
