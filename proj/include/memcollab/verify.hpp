#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "memcollab/core.hpp"

namespace memcollab {

// Process-level isolation: fresh scratch directory per run, filtered
// environment, whole process group killed on timeout.
struct SandboxConfig {
    std::string interpreter_command = "python3";  // may carry flags, split on spaces
    double timeout_seconds = 10.0;
    std::filesystem::path workdir_root;  // empty -> system temp dir
    std::vector<std::string> env_allowlist = {"PATH"};
};

struct RunResult {
    bool exited_ok = false;  // process ran to completion with exit status 0
    bool timed_out = false;
    std::string output;  // interleaved stdout+stderr, truncated to 4 KiB
};

struct VerifyResult {
    bool passed = false;
    std::string detail;
};

// Runs one source program under the sandbox. Throws SandboxError when the
// sandbox itself cannot be set up or spawned; a failing or timed-out program
// is an ordinary result.
RunResult run_program(const std::string& source, const SandboxConfig& sandbox);

// Normalization applied to both sides of a math comparison: trim, strip
// surrounding math delimiters and \boxed{}, drop '$' and ',', lowercase.
// Exposed so the rules can be audited per dataset.
std::string normalize_math_answer(const std::string& answer);

// True iff the normalized forms match; when both normalize to numbers
// (including simple fractions a/b) they are compared with absolute tolerance
// 1e-6. Symmetric, and reflexive on any nonempty string.
bool check_math_answer(const std::string& predicted, const std::string& gold);

// Concatenates code + gold test assertions into one program and executes it;
// passed iff the process exits successfully. detail carries the captured
// output for use as execution feedback ("timeout" on timeout).
VerifyResult run_code_tests(const std::string& code, const GoldSpec& gold,
                            const SandboxConfig& sandbox);

// The correctness indicator: math -> final answer vs gold answer; code ->
// last code step vs gold tests. Absent final answer / code step -> false.
// The result is cached onto trajectory.correct.
bool indicate(Trajectory& trajectory, const Task& task, const SandboxConfig& sandbox);

}  // namespace memcollab
