#include "memcollab/verify.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <sstream>

#include "memcollab/util.hpp"

namespace memcollab {

namespace {

constexpr std::size_t kOutputCap = 4096;  // 4 KiB of captured output

std::vector<std::string> split_command(const std::string& command) {
    std::vector<std::string> parts;
    std::istringstream in(command);
    std::string part;
    while (in >> part) parts.push_back(part);
    return parts;
}

}  // namespace

RunResult run_program(const std::string& source, const SandboxConfig& sandbox) {
    if (sandbox.timeout_seconds <= 0) throw SandboxError("timeout must be > 0");
    std::vector<std::string> argv_strings = split_command(sandbox.interpreter_command);
    if (argv_strings.empty()) throw SandboxError("empty interpreter command");

    std::optional<util::TempDir> workdir;
    try {
        workdir.emplace(sandbox.workdir_root);
    } catch (const IoError& e) {
        throw SandboxError(std::string("cannot create scratch dir: ") + e.what());
    }
    const std::filesystem::path program = workdir->path() / "prog.py";
    try {
        util::write_file(program, source);
    } catch (const IoError& e) {
        throw SandboxError(std::string("cannot stage program: ") + e.what());
    }
    argv_strings.push_back(program.string());

    std::vector<char*> argv;
    for (auto& s : argv_strings) argv.push_back(s.data());
    argv.push_back(nullptr);

    // Environment restricted to the allowlist.
    std::vector<std::string> env_strings;
    for (const auto& name : sandbox.env_allowlist) {
        if (const char* value = std::getenv(name.c_str()))
            env_strings.push_back(name + "=" + value);
    }
    std::vector<char*> envp;
    for (auto& s : env_strings) envp.push_back(s.data());
    envp.push_back(nullptr);

    int pipe_fds[2];
    if (pipe(pipe_fds) != 0) throw SandboxError("pipe() failed");
    // Exec-failure channel: closed on successful exec, carries errno otherwise.
    int exec_fds[2];
    if (pipe2(exec_fds, O_CLOEXEC) != 0) {
        close(pipe_fds[0]);
        close(pipe_fds[1]);
        throw SandboxError("pipe2() failed");
    }

    pid_t pid = fork();
    if (pid < 0) {
        close(pipe_fds[0]);
        close(pipe_fds[1]);
        close(exec_fds[0]);
        close(exec_fds[1]);
        throw SandboxError("fork() failed");
    }

    if (pid == 0) {
        // Child: own process group so a timeout kill reaps any grandchildren.
        setpgid(0, 0);
        close(pipe_fds[0]);
        close(exec_fds[0]);
        dup2(pipe_fds[1], STDOUT_FILENO);
        dup2(pipe_fds[1], STDERR_FILENO);
        close(pipe_fds[1]);
        if (chdir(workdir->path().c_str()) != 0) _exit(127);
        execvpe(argv[0], argv.data(), envp.data());
        int err = errno;
        ssize_t ignored = write(exec_fds[1], &err, sizeof(err));
        (void)ignored;
        _exit(127);
    }

    // Mirror the child's setpgid so the timeout group-kill cannot race it.
    setpgid(pid, pid);

    close(pipe_fds[1]);
    close(exec_fds[1]);
    {
        int exec_errno = 0;
        ssize_t n = read(exec_fds[0], &exec_errno, sizeof(exec_errno));
        close(exec_fds[0]);
        if (n == sizeof(exec_errno)) {
            close(pipe_fds[0]);
            waitpid(pid, nullptr, 0);
            throw SandboxError("cannot execute interpreter \"" + sandbox.interpreter_command +
                               "\": " + std::strerror(exec_errno));
        }
    }
    RunResult result;
    std::string output;

    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(sandbox.timeout_seconds);
    char buffer[4096];
    bool eof = false;
    while (!eof) {
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) {
            result.timed_out = true;
            break;
        }
        struct pollfd pfd = {pipe_fds[0], POLLIN, 0};
        int ready = poll(&pfd, 1, static_cast<int>(remaining.count()));
        if (ready < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (ready == 0) {
            result.timed_out = true;
            break;
        }
        ssize_t n = read(pipe_fds[0], buffer, sizeof(buffer));
        if (n < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (n == 0) {
            eof = true;
            break;
        }
        // Keep draining past the cap so the child never blocks on a full pipe.
        if (output.size() < kOutputCap)
            output.append(buffer, std::min<std::size_t>(n, kOutputCap - output.size()));
    }
    close(pipe_fds[0]);

    int status = 0;
    if (result.timed_out) {
        kill(-pid, SIGKILL);
        kill(pid, SIGKILL);
        waitpid(pid, &status, 0);
        result.exited_ok = false;
        result.output = std::move(output);
        return result;
    }

    waitpid(pid, &status, 0);
    result.exited_ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
    result.output = std::move(output);
    return result;
}

// ---------------------------------------------------------------------------
// Math answer checking
// ---------------------------------------------------------------------------

namespace {

// Strips one layer of surrounding delimiters; returns true if it stripped.
bool strip_outer(std::string& s) {
    auto wrapped_by = [&](const std::string& open, const std::string& close) {
        return s.size() > open.size() + close.size() && util::starts_with(s, open) &&
               s.compare(s.size() - close.size(), close.size(), close) == 0;
    };
    const std::pair<std::string, std::string> pairs[] = {
        {"\\(", "\\)"}, {"\\[", "\\]"}, {"$", "$"}};
    for (const auto& [open, close] : pairs) {
        if (wrapped_by(open, close)) {
            s = util::trim(s.substr(open.size(), s.size() - open.size() - close.size()));
            return true;
        }
    }
    if (util::starts_with(s, "\\boxed{") && s.back() == '}') {
        s = util::trim(s.substr(7, s.size() - 8));
        return true;
    }
    return false;
}

std::optional<double> parse_number(const std::string& s) {
    std::string t = util::trim(s);
    if (t.empty()) return std::nullopt;
    // Simple fraction a/b.
    auto slash = t.find('/');
    if (slash != std::string::npos && slash > 0 && slash + 1 < t.size()) {
        auto numerator = parse_number(t.substr(0, slash));
        auto denominator = parse_number(t.substr(slash + 1));
        if (numerator && denominator && *denominator != 0.0) return *numerator / *denominator;
        return std::nullopt;
    }
    char* end = nullptr;
    errno = 0;
    double value = std::strtod(t.c_str(), &end);
    if (errno != 0 || end != t.c_str() + t.size()) return std::nullopt;
    return value;
}

}  // namespace

std::string normalize_math_answer(const std::string& answer) {
    std::string s = util::trim(answer);
    while (strip_outer(s)) {
    }
    std::string cleaned;
    cleaned.reserve(s.size());
    for (char c : s) {
        if (c == '$' || c == ',') continue;  // currency / thousands formatting
        cleaned.push_back(c);
    }
    return util::to_lower(util::trim(cleaned));
}

bool check_math_answer(const std::string& predicted, const std::string& gold) {
    const std::string a = normalize_math_answer(predicted);
    const std::string b = normalize_math_answer(gold);
    if (util::trim(predicted).empty() || util::trim(gold).empty()) return false;
    auto x = parse_number(a);
    auto y = parse_number(b);
    if (x && y) return std::fabs(*x - *y) < 1e-6;
    return a == b;
}

// ---------------------------------------------------------------------------
// Code verification and the indicator
// ---------------------------------------------------------------------------

VerifyResult run_code_tests(const std::string& code, const GoldSpec& gold,
                            const SandboxConfig& sandbox) {
    if (gold.tests.empty()) throw SandboxError("gold spec carries no tests");
    std::string program = code;
    program += "\n\n";
    for (const auto& test : gold.tests) program += test + "\n";

    RunResult run = run_program(program, sandbox);
    VerifyResult result;
    result.passed = run.exited_ok && !run.timed_out;
    result.detail = run.timed_out ? "timeout" : run.output;
    return result;
}

bool indicate(Trajectory& trajectory, const Task& task, const SandboxConfig& sandbox) {
    bool correct = false;
    if (task.suite == Suite::math) {
        const Step* answer = trajectory.last_of(StepKind::final_answer);
        if (answer && task.gold.answer)
            correct = check_math_answer(answer->text, *task.gold.answer);
    } else {
        const Step* code = trajectory.last_of(StepKind::code);
        if (code) correct = run_code_tests(code->text, task.gold, sandbox).passed;
    }
    trajectory.correct = correct;
    return correct;
}

}  // namespace memcollab
