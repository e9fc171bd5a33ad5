#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "memcollab/errors.hpp"

namespace memcollab {

enum class Suite { math, code };
enum class StepKind { reasoning, code, execution_feedback, final_answer };
enum class Termination { answer, max_turns, error };

std::string to_string(Suite s);
std::string to_string(StepKind k);
std::string to_string(Termination t);
Suite suite_from_string(const std::string& s);
StepKind step_kind_from_string(const std::string& s);
Termination termination_from_string(const std::string& s);

// Either a normalized gold answer (math) or executable test assertions (code).
struct GoldSpec {
    std::optional<std::string> answer;
    std::vector<std::string> tests;
    std::optional<std::string> entry_point;
};

struct Task {
    std::string id;
    Suite suite = Suite::math;
    std::string text;
    GoldSpec gold;
    std::optional<std::string> category;
    std::optional<std::string> subcategory;
};

struct Step {
    StepKind kind = StepKind::reasoning;
    std::string text;
    int index = 0;  // 0-based position within the trajectory
};

// Ordered multi-step record of one agent's attempt at one task.
struct Trajectory {
    std::string task_id;
    std::string agent_id;
    std::vector<Step> steps;
    int turns = 0;  // number of model calls made
    std::optional<bool> correct;
    Termination terminated_by = Termination::error;

    // Last step of the given kind, or nullptr.
    const Step* last_of(StepKind kind) const;
};

// One normative constraint: "When {trigger}, enforce {invariant}; avoid {violation}".
struct MemoryEntry {
    std::string id;
    std::string source_task_id;
    std::string trigger;
    std::string invariant;
    std::string violation;  // may be empty
    std::string category;
    std::string subcategory;
    std::string raw;  // distilled line as parsed, bullet/numbering stripped

    // Canonical one-line rendering of the constraint.
    std::string render() const;
};

// Category-indexed collection of entries with provenance to source tasks.
// Mutation is single-writer; a fully built bank is an immutable value that is
// safe to share across threads for read-only retrieval.
class MemoryBank {
  public:
    using CategoryKey = std::pair<std::string, std::string>;  // (category, subcategory)
    using CategoryIndex = std::map<CategoryKey, std::map<std::string, std::vector<std::string>>>;

    explicit MemoryBank(int max_entries_per_task = 3);

    // Appends one entry. Exact raw-text duplicates from the same source task
    // are dropped silently; exceeding the per-task cap throws InvariantViolation.
    void append(const MemoryEntry& entry);

    const std::vector<MemoryEntry>& entries() const { return entries_; }
    int max_entries_per_task() const { return max_per_task_; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    // (category, subcategory) -> source_task_id -> entry ids, insertion order.
    const CategoryIndex& by_category() const { return by_category_; }

    const MemoryEntry* find(const std::string& entry_id) const;
    std::vector<const MemoryEntry*> entries_for_task(const std::string& source_task_id) const;
    std::set<std::string> source_task_ids() const;

  private:
    int max_per_task_;
    std::vector<MemoryEntry> entries_;
    CategoryIndex by_category_;
    std::map<std::string, std::size_t> index_by_id_;
    std::map<std::string, int> count_by_task_;
    std::set<std::pair<std::string, std::string>> seen_;  // (source_task_id, raw)
};

// ---------------------------------------------------------------------------
// Persistence. Banks and datasets are line-delimited JSON records, UTF-8, one
// record per line, order preserved.
// ---------------------------------------------------------------------------

nlohmann::json entry_to_json(const MemoryEntry& entry);
MemoryEntry entry_from_json(const nlohmann::json& record, int line = 0);

nlohmann::json task_to_json(const Task& task);
Task task_from_json(const nlohmann::json& record, int line = 0);

nlohmann::json trajectory_to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const nlohmann::json& record, int line = 0);

void save_bank(const MemoryBank& bank, const std::filesystem::path& path);
MemoryBank load_bank(const std::filesystem::path& path, int max_entries_per_task = 3);

std::vector<Task> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::vector<Task>& tasks, const std::filesystem::path& path);

void save_trajectories(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path);
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path);

}  // namespace memcollab
