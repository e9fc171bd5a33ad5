#pragma once

#include <map>
#include <string>
#include <vector>

#include "memcollab/agent.hpp"
#include "memcollab/backend.hpp"
#include "memcollab/core.hpp"
#include "memcollab/taxonomy.hpp"

namespace memcollab {

// Lowercase, split on non-alphanumeric, drop empty tokens.
std::vector<std::string> tokenize(const std::string& text);

struct TfidfDoc {
    std::string source_task_id;
    std::string category;
    std::string subcategory;
    std::string text;                   // the source task statement
    std::map<int, double> weights;      // dimension -> weight, L2-normalized
};

// Immutable after build; retrieval is read-only and freely parallel.
// Documents are the source task texts of bank entries, one per distinct
// source task. tf = raw count, idf = ln((1+N)/(1+df)) + 1, L2-normalized.
struct TfidfIndex {
    std::map<std::string, int> vocabulary;  // term -> dimension
    std::vector<double> idf;                // by dimension
    std::vector<TfidfDoc> docs;             // sorted by source_task_id
};

// `source_tasks` must cover every source task id in the bank (it supplies the
// task statements the bank records only by id). Throws EmptyBank on an empty
// bank, InvariantViolation on a missing source task.
TfidfIndex build_index(const MemoryBank& bank, const std::vector<Task>& source_tasks);

enum class RetrievalMode { tfidf, llm_select };

struct RankedTask {
    std::string source_task_id;
    double score;  // cosine similarity (tfidf) or 1/rank placeholder (llm_select)
};

struct RetrievalResult {
    std::vector<RankedTask> ranked;     // length <= p, scores non-increasing
    std::vector<MemoryEntry> entries;   // flattened in rank order, <= p*K
};

// Category-filtered top-p retrieval. Candidates are the indexed docs whose
// (category, subcategory) equal the query labels; tfidf mode ranks them by
// cosine against the query text with ties broken by lexicographic source task
// id; llm_select asks `selector` to pick p candidate ids. Fewer than p
// matching docs returns them all; zero matches returns an empty result
// (signaling vanilla inference).
RetrievalResult retrieve(const Task& query, const MemoryBank& bank, const TfidfIndex& index,
                         int p, RetrievalMode mode = RetrievalMode::tfidf,
                         Backend* selector = nullptr, const PromptSet* prompts = nullptr);

struct SolveOptions {
    int p = 3;
    RetrievalMode mode = RetrievalMode::tfidf;
    ClassifyOptions classify;
};

struct Solution {
    Trajectory trajectory;
    RetrievalResult retrieval;  // audit trail
    std::string query_category;
    std::string query_subcategory;
};

// Memory-guided solving: classify the query, retrieve, render the constraint
// context, run the episode. An empty bank or empty retrieval degrades to a
// vanilla episode with a byte-identical outbound prompt.
Solution solve(const Task& query, const MemoryBank& bank, const TfidfIndex& index,
               const EpisodeConfig& episode, Backend& backend, const CategoryScheme& scheme,
               const PromptSet& prompts, const SolveOptions& options = {});

}  // namespace memcollab
