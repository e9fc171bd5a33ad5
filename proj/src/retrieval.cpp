#include "memcollab/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include "memcollab/util.hpp"

namespace memcollab {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

TfidfIndex build_index(const MemoryBank& bank, const std::vector<Task>& source_tasks) {
    if (bank.empty()) throw EmptyBank("cannot index an empty memory bank");

    std::map<std::string, const Task*> task_by_id;
    for (const auto& task : source_tasks) task_by_id[task.id] = &task;

    // One document per distinct source task, carrying the task's statement
    // and the labels stamped on its entries.
    struct DocSeed {
        std::string text;
        std::string category;
        std::string subcategory;
    };
    std::map<std::string, DocSeed> seeds;  // keyed by source_task_id -> sorted
    for (const auto& entry : bank.entries()) {
        if (seeds.count(entry.source_task_id)) continue;
        auto it = task_by_id.find(entry.source_task_id);
        if (it == task_by_id.end())
            throw InvariantViolation("no source task text for id " + entry.source_task_id);
        seeds[entry.source_task_id] = {it->second->text, entry.category, entry.subcategory};
    }

    TfidfIndex index;
    std::vector<std::vector<std::string>> doc_tokens;
    for (const auto& [task_id, seed] : seeds) {
        TfidfDoc doc;
        doc.source_task_id = task_id;
        doc.category = seed.category;
        doc.subcategory = seed.subcategory;
        doc.text = seed.text;
        index.docs.push_back(std::move(doc));
        doc_tokens.push_back(tokenize(seed.text));
    }

    // Vocabulary in sorted term order; document frequency per term.
    std::map<std::string, int> df;
    for (const auto& tokens : doc_tokens) {
        std::set<std::string> unique(tokens.begin(), tokens.end());
        for (const auto& term : unique) df[term] += 1;
    }
    for (const auto& [term, _] : df) {
        int dim = static_cast<int>(index.vocabulary.size());
        index.vocabulary[term] = dim;
    }

    const double n_docs = static_cast<double>(index.docs.size());
    index.idf.resize(index.vocabulary.size());
    for (const auto& [term, dim] : index.vocabulary) {
        index.idf[dim] = std::log((1.0 + n_docs) / (1.0 + df[term])) + 1.0;
    }

    for (std::size_t d = 0; d < index.docs.size(); ++d) {
        std::map<int, double> weights;
        for (const auto& term : doc_tokens[d]) {
            weights[index.vocabulary[term]] += 1.0;  // raw tf
        }
        double norm_sq = 0.0;
        for (auto& [dim, weight] : weights) {
            weight *= index.idf[dim];
            norm_sq += weight * weight;
        }
        if (norm_sq > 0.0) {
            double norm = std::sqrt(norm_sq);
            for (auto& [dim, weight] : weights) weight /= norm;
        }
        index.docs[d].weights = std::move(weights);
    }
    return index;
}

// ---------------------------------------------------------------------------
// Retrieval
// ---------------------------------------------------------------------------

namespace {

// Query vector under the index's vocabulary; out-of-vocabulary terms
// contribute nothing.
std::map<int, double> query_vector(const TfidfIndex& index, const std::string& text) {
    std::map<int, double> weights;
    for (const auto& term : tokenize(text)) {
        auto it = index.vocabulary.find(term);
        if (it != index.vocabulary.end()) weights[it->second] += 1.0;
    }
    double norm_sq = 0.0;
    for (auto& [dim, weight] : weights) {
        weight *= index.idf[dim];
        norm_sq += weight * weight;
    }
    if (norm_sq > 0.0) {
        double norm = std::sqrt(norm_sq);
        for (auto& [dim, weight] : weights) weight /= norm;
    }
    return weights;
}

double dot(const std::map<int, double>& a, const std::map<int, double>& b) {
    const auto& small = a.size() <= b.size() ? a : b;
    const auto& large = a.size() <= b.size() ? b : a;
    double sum = 0.0;
    for (const auto& [dim, weight] : small) {
        auto it = large.find(dim);
        if (it != large.end()) sum += weight * it->second;
    }
    return sum;
}

std::vector<RankedTask> rank_tfidf(const std::vector<const TfidfDoc*>& candidates,
                                   const TfidfIndex& index, const std::string& query_text,
                                   int p) {
    const auto query = query_vector(index, query_text);
    std::vector<RankedTask> scored;
    scored.reserve(candidates.size());
    for (const TfidfDoc* doc : candidates) {
        scored.push_back({doc->source_task_id, dot(query, doc->weights)});
    }
    // Ties broken by lexicographic source task id.
    std::stable_sort(scored.begin(), scored.end(), [](const RankedTask& a, const RankedTask& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.source_task_id < b.source_task_id;
    });
    if (static_cast<int>(scored.size()) > p) scored.resize(p);
    return scored;
}

std::vector<RankedTask> rank_llm_select(const std::vector<const TfidfDoc*>& candidates,
                                        const Task& query, int p, Backend& selector,
                                        const PromptSet& prompts) {
    std::string listing;
    for (const TfidfDoc* doc : candidates) {
        listing += "[" + doc->source_task_id + "] " + doc->text + "\n";
    }
    const std::string prompt = fill(prompts.select_tasks, {{"QUERY", query.text},
                                                           {"CANDIDATES", listing},
                                                           {"P", std::to_string(p)}});
    ChatRequest request;
    request.messages.push_back({Role::user, prompt});
    ChatResponse response = selector.complete(request);

    std::set<std::string> candidate_ids;
    for (const TfidfDoc* doc : candidates) candidate_ids.insert(doc->source_task_id);

    std::vector<RankedTask> ranked;
    std::set<std::string> taken;
    std::istringstream in(response.content);
    std::string line;
    while (std::getline(in, line) && static_cast<int>(ranked.size()) < p) {
        std::string id = util::trim(line);
        if (util::starts_with(id, "- ")) id = util::trim(id.substr(2));
        if (!id.empty() && id.front() == '[' && id.back() == ']')
            id = id.substr(1, id.size() - 2);
        if (candidate_ids.count(id) && taken.insert(id).second) {
            // No cosine score in this mode; 1/rank keeps scores non-increasing.
            ranked.push_back({id, 1.0 / static_cast<double>(ranked.size() + 1)});
        }
    }
    return ranked;
}

}  // namespace

RetrievalResult retrieve(const Task& query, const MemoryBank& bank, const TfidfIndex& index,
                         int p, RetrievalMode mode, Backend* selector, const PromptSet* prompts) {
    if (p < 1) throw InvariantViolation("retrieval count p must be >= 1");
    if (!query.category || !query.subcategory)
        throw InvariantViolation("query must carry (category, subcategory) labels");

    // Task-filtered subset first, relevance ranking second.
    std::vector<const TfidfDoc*> candidates;
    for (const auto& doc : index.docs) {
        if (doc.category == *query.category && doc.subcategory == *query.subcategory)
            candidates.push_back(&doc);
    }

    RetrievalResult result;
    if (candidates.empty()) return result;  // vanilla inference

    if (mode == RetrievalMode::tfidf) {
        result.ranked = rank_tfidf(candidates, index, query.text, p);
    } else {
        if (!selector || !prompts)
            throw InvariantViolation("llm_select mode needs a selector backend and prompts");
        result.ranked = rank_llm_select(candidates, query, p, *selector, *prompts);
    }

    const auto key = MemoryBank::CategoryKey{*query.category, *query.subcategory};
    auto group = bank.by_category().find(key);
    for (const auto& ranked : result.ranked) {
        if (group == bank.by_category().end()) break;
        auto ids = group->second.find(ranked.source_task_id);
        if (ids == group->second.end()) continue;
        for (const auto& entry_id : ids->second) {
            if (const MemoryEntry* entry = bank.find(entry_id)) result.entries.push_back(*entry);
        }
    }
    return result;
}

Solution solve(const Task& query, const MemoryBank& bank, const TfidfIndex& index,
               const EpisodeConfig& episode, Backend& backend, const CategoryScheme& scheme,
               const PromptSet& prompts, const SolveOptions& options) {
    Solution solution;

    if (bank.empty()) {
        // Nothing to retrieve: behave exactly like a vanilla episode.
        solution.trajectory = run_episode(query, episode, backend, prompts);
        return solution;
    }

    auto [category, subcategory] =
        classify_task(query, backend, scheme, prompts, options.classify);
    solution.query_category = category;
    solution.query_subcategory = subcategory;

    Task labeled = query;
    labeled.category = category;
    labeled.subcategory = subcategory;
    solution.retrieval = retrieve(labeled, bank, index, options.p, options.mode,
                                  options.mode == RetrievalMode::llm_select ? &backend : nullptr,
                                  &prompts);

    EpisodeConfig guided = episode;
    guided.memory_context = render_memory_context(solution.retrieval.entries);
    solution.trajectory = run_episode(query, guided, backend, prompts);
    return solution;
}

}  // namespace memcollab
