#include "memcollab/core.hpp"

#include <algorithm>

#include "memcollab/util.hpp"

namespace memcollab {

std::string to_string(Suite s) { return s == Suite::math ? "math" : "code"; }

std::string to_string(StepKind k) {
    switch (k) {
        case StepKind::reasoning: return "reasoning";
        case StepKind::code: return "code";
        case StepKind::execution_feedback: return "execution_feedback";
        case StepKind::final_answer: return "final_answer";
    }
    return "reasoning";
}

std::string to_string(Termination t) {
    switch (t) {
        case Termination::answer: return "answer";
        case Termination::max_turns: return "max_turns";
        case Termination::error: return "error";
    }
    return "error";
}

Suite suite_from_string(const std::string& s) {
    if (s == "math") return Suite::math;
    if (s == "code") return Suite::code;
    throw InvariantViolation("unknown suite: " + s);
}

StepKind step_kind_from_string(const std::string& s) {
    if (s == "reasoning") return StepKind::reasoning;
    if (s == "code") return StepKind::code;
    if (s == "execution_feedback") return StepKind::execution_feedback;
    if (s == "final_answer") return StepKind::final_answer;
    throw InvariantViolation("unknown step kind: " + s);
}

Termination termination_from_string(const std::string& s) {
    if (s == "answer") return Termination::answer;
    if (s == "max_turns") return Termination::max_turns;
    if (s == "error") return Termination::error;
    throw InvariantViolation("unknown termination: " + s);
}

const Step* Trajectory::last_of(StepKind kind) const {
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        if (it->kind == kind) return &*it;
    }
    return nullptr;
}

std::string MemoryEntry::render() const {
    std::string line = "When " + trigger + ", enforce " + invariant;
    if (!violation.empty()) line += "; avoid " + violation;
    return line;
}

// ---------------------------------------------------------------------------
// MemoryBank
// ---------------------------------------------------------------------------

MemoryBank::MemoryBank(int max_entries_per_task) : max_per_task_(max_entries_per_task) {
    if (max_per_task_ < 1) throw InvariantViolation("max_entries_per_task must be >= 1");
}

void MemoryBank::append(const MemoryEntry& entry) {
    if (entry.id.empty() || entry.source_task_id.empty())
        throw InvariantViolation("memory entry needs id and source_task_id");
    if (entry.trigger.empty() || entry.invariant.empty())
        throw InvariantViolation("memory entry needs nonempty trigger and invariant");
    if (entry.category.empty() || entry.subcategory.empty())
        throw InvariantViolation("memory entry is missing category labels");

    MemoryEntry stored = entry;
    if (stored.raw.empty()) stored.raw = stored.render();

    // Exact duplicate from the same source task: silent no-op.
    if (seen_.count({stored.source_task_id, stored.raw})) return;

    if (index_by_id_.count(stored.id))
        throw InvariantViolation("duplicate entry id: " + stored.id);
    if (count_by_task_[stored.source_task_id] >= max_per_task_)
        throw InvariantViolation("source task " + stored.source_task_id + " already has " +
                                 std::to_string(max_per_task_) + " entries");

    index_by_id_[stored.id] = entries_.size();
    by_category_[{stored.category, stored.subcategory}][stored.source_task_id].push_back(stored.id);
    count_by_task_[stored.source_task_id] += 1;
    seen_.insert({stored.source_task_id, stored.raw});
    entries_.push_back(std::move(stored));
}

const MemoryEntry* MemoryBank::find(const std::string& entry_id) const {
    auto it = index_by_id_.find(entry_id);
    return it == index_by_id_.end() ? nullptr : &entries_[it->second];
}

std::vector<const MemoryEntry*> MemoryBank::entries_for_task(const std::string& source_task_id) const {
    std::vector<const MemoryEntry*> result;
    for (const auto& entry : entries_) {
        if (entry.source_task_id == source_task_id) result.push_back(&entry);
    }
    return result;
}

std::set<std::string> MemoryBank::source_task_ids() const {
    std::set<std::string> ids;
    for (const auto& entry : entries_) ids.insert(entry.source_task_id);
    return ids;
}

// ---------------------------------------------------------------------------
// JSON (de)serialization
// ---------------------------------------------------------------------------

namespace {

std::string require_string(const nlohmann::json& record, const char* field, int line) {
    if (!record.contains(field) || !record[field].is_string())
        throw SchemaError(line, std::string("missing or non-string field \"") + field + "\"");
    return record[field].get<std::string>();
}

}  // namespace

nlohmann::json entry_to_json(const MemoryEntry& entry) {
    return {
        {"id", entry.id},
        {"source_task_id", entry.source_task_id},
        {"trigger", entry.trigger},
        {"invariant", entry.invariant},
        {"violation", entry.violation},
        {"category", entry.category},
        {"subcategory", entry.subcategory},
        {"raw", entry.raw},
    };
}

MemoryEntry entry_from_json(const nlohmann::json& record, int line) {
    MemoryEntry entry;
    entry.id = require_string(record, "id", line);
    entry.source_task_id = require_string(record, "source_task_id", line);
    entry.trigger = require_string(record, "trigger", line);
    entry.invariant = require_string(record, "invariant", line);
    entry.violation = require_string(record, "violation", line);
    entry.category = require_string(record, "category", line);
    entry.subcategory = require_string(record, "subcategory", line);
    entry.raw = require_string(record, "raw", line);
    return entry;
}

nlohmann::json task_to_json(const Task& task) {
    nlohmann::json record = {
        {"id", task.id},
        {"suite", to_string(task.suite)},
        {"text", task.text},
    };
    if (task.gold.answer) record["answer"] = *task.gold.answer;
    if (!task.gold.tests.empty()) record["tests"] = task.gold.tests;
    if (task.gold.entry_point) record["entry_point"] = *task.gold.entry_point;
    if (task.category) record["category"] = *task.category;
    if (task.subcategory) record["subcategory"] = *task.subcategory;
    return record;
}

Task task_from_json(const nlohmann::json& record, int line) {
    Task task;
    task.id = require_string(record, "id", line);
    task.suite = suite_from_string(require_string(record, "suite", line));
    task.text = require_string(record, "text", line);

    bool has_answer = record.contains("answer");
    bool has_tests = record.contains("tests");
    if (has_answer == has_tests)
        throw SchemaError(line, "task must carry exactly one of \"answer\" or \"tests\"");

    if (has_answer) {
        if (!record["answer"].is_string()) throw SchemaError(line, "\"answer\" must be a string");
        task.gold.answer = record["answer"].get<std::string>();
    } else {
        if (!record["tests"].is_array() || record["tests"].empty())
            throw SchemaError(line, "\"tests\" must be a nonempty array");
        for (const auto& t : record["tests"]) {
            if (!t.is_string()) throw SchemaError(line, "test assertions must be strings");
            task.gold.tests.push_back(t.get<std::string>());
        }
    }
    if (record.contains("entry_point")) task.gold.entry_point = record["entry_point"].get<std::string>();
    if (record.contains("category")) task.category = record["category"].get<std::string>();
    if (record.contains("subcategory")) task.subcategory = record["subcategory"].get<std::string>();

    if (task.id.empty()) throw SchemaError(line, "task id must be nonempty");
    if (task.suite == Suite::math && !task.gold.answer)
        throw SchemaError(line, "math task needs a gold answer");
    if (task.suite == Suite::code && task.gold.tests.empty())
        throw SchemaError(line, "code task needs gold tests");
    return task;
}

nlohmann::json trajectory_to_json(const Trajectory& trajectory) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& step : trajectory.steps) {
        steps.push_back({{"kind", to_string(step.kind)}, {"text", step.text}, {"index", step.index}});
    }
    nlohmann::json record = {
        {"task_id", trajectory.task_id},
        {"agent_id", trajectory.agent_id},
        {"turns", trajectory.turns},
        {"terminated_by", to_string(trajectory.terminated_by)},
        {"steps", steps},
    };
    record["correct"] = trajectory.correct ? nlohmann::json(*trajectory.correct) : nlohmann::json();
    return record;
}

Trajectory trajectory_from_json(const nlohmann::json& record, int line) {
    Trajectory trajectory;
    trajectory.task_id = require_string(record, "task_id", line);
    trajectory.agent_id = require_string(record, "agent_id", line);
    if (!record.contains("turns") || !record["turns"].is_number_integer())
        throw SchemaError(line, "missing integer field \"turns\"");
    trajectory.turns = record["turns"].get<int>();
    trajectory.terminated_by = termination_from_string(require_string(record, "terminated_by", line));
    if (record.contains("correct") && !record["correct"].is_null())
        trajectory.correct = record["correct"].get<bool>();
    if (!record.contains("steps") || !record["steps"].is_array())
        throw SchemaError(line, "missing array field \"steps\"");
    for (const auto& s : record["steps"]) {
        Step step;
        step.kind = step_kind_from_string(require_string(s, "kind", line));
        step.text = require_string(s, "text", line);
        step.index = s.value("index", static_cast<int>(trajectory.steps.size()));
        trajectory.steps.push_back(std::move(step));
    }
    return trajectory;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

void save_bank(const MemoryBank& bank, const std::filesystem::path& path) {
    std::vector<nlohmann::json> records;
    records.reserve(bank.size());
    for (const auto& entry : bank.entries()) records.push_back(entry_to_json(entry));
    util::write_jsonl(path, records);
}

MemoryBank load_bank(const std::filesystem::path& path, int max_entries_per_task) {
    MemoryBank bank(max_entries_per_task);
    for (const auto& [line, record] : util::read_jsonl(path)) {
        bank.append(entry_from_json(record, line));
    }
    return bank;
}

std::vector<Task> load_dataset(const std::filesystem::path& path) {
    std::vector<Task> tasks;
    std::set<std::string> ids;
    for (const auto& [line, record] : util::read_jsonl(path)) {
        Task task = task_from_json(record, line);
        if (!ids.insert(task.id).second)
            throw SchemaError(line, "duplicate task id: " + task.id);
        tasks.push_back(std::move(task));
    }
    return tasks;
}

void save_dataset(const std::vector<Task>& tasks, const std::filesystem::path& path) {
    std::vector<nlohmann::json> records;
    records.reserve(tasks.size());
    for (const auto& task : tasks) records.push_back(task_to_json(task));
    util::write_jsonl(path, records);
}

void save_trajectories(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path) {
    std::vector<nlohmann::json> records;
    records.reserve(trajectories.size());
    for (const auto& t : trajectories) records.push_back(trajectory_to_json(t));
    util::write_jsonl(path, records);
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path) {
    std::vector<Trajectory> trajectories;
    for (const auto& [line, record] : util::read_jsonl(path)) {
        trajectories.push_back(trajectory_from_json(record, line));
    }
    return trajectories;
}

}  // namespace memcollab
