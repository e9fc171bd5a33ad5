#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "memcollab/core.hpp"

namespace memcollab {

// Editable text assets: system templates, the contrast prompt, classifier
// prompts, annotation prompt, retrieval-selection prompt, error-type labels.
// Placeholders use {NAME} syntax; see fill().
struct PromptSet {
    std::string system_math;
    std::string system_code;
    std::string contrast;
    std::string single_summary;  // single-trajectory summarization (baseline modes)
    std::string classify_category;
    std::string classify_subcategory;
    std::string annotate_error;
    std::string select_tasks;  // llm_select retrieval mode
    std::vector<std::string> error_types;

    const std::string& system_for(Suite suite) const;

    static PromptSet load(const std::filesystem::path& asset_root);

    // $MEMCOLLAB_ASSETS, else the compiled-in asset directory.
    static std::filesystem::path default_asset_root();
};

// Replaces each "{KEY}" in the template with its value.
std::string fill(std::string prompt_template,
                 const std::vector<std::pair<std::string, std::string>>& values);

}  // namespace memcollab
