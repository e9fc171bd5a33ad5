#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "memcollab/backend.hpp"
#include "memcollab/core.hpp"
#include "memcollab/prompts.hpp"

namespace memcollab {

inline constexpr const char* kUnclassified = "Unclassified";

struct CategoryScheme {
    std::vector<std::string> categories;  // in asset order
    std::map<std::string, std::vector<std::string>> subcategories;

    void validate() const;  // throws InvariantViolation
    static CategoryScheme from_file(const std::filesystem::path& path);
};

struct ClassifyOptions {
    // Trust dataset-provided labels when present; zero backend calls.
    bool reuse_labels = false;
};

// Two-stage LLM classification: pick the category, then the subcategory
// within it. Responses are trimmed and matched case-insensitively against the
// allowed list, with one retry per stage; exhaustion falls back to
// "Unclassified". The same entry point serves memory organization and
// inference-time routing.
std::pair<std::string, std::string> classify_task(const Task& task, Backend& backend,
                                                  const CategoryScheme& scheme,
                                                  const PromptSet& prompts,
                                                  const ClassifyOptions& options = {});

}  // namespace memcollab
