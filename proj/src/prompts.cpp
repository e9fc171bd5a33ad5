#include "memcollab/prompts.hpp"

#include <cstdlib>

#include "memcollab/errors.hpp"
#include "memcollab/util.hpp"

#ifndef MEMCOLLAB_ASSET_ROOT
#define MEMCOLLAB_ASSET_ROOT "assets"
#endif

namespace memcollab {

const std::string& PromptSet::system_for(Suite suite) const {
    return suite == Suite::math ? system_math : system_code;
}

std::filesystem::path PromptSet::default_asset_root() {
    if (const char* env = std::getenv("MEMCOLLAB_ASSETS")) return env;
    return MEMCOLLAB_ASSET_ROOT;
}

PromptSet PromptSet::load(const std::filesystem::path& asset_root) {
    auto read = [&](const char* name) { return util::read_file(asset_root / "prompts" / name); };

    PromptSet prompts;
    prompts.system_math = read("system_math.txt");
    prompts.system_code = read("system_code.txt");
    prompts.contrast = read("contrast.txt");
    prompts.single_summary = read("single_summary.txt");
    prompts.classify_category = read("classify_category.txt");
    prompts.classify_subcategory = read("classify_subcategory.txt");
    prompts.annotate_error = read("annotate_error.txt");
    prompts.select_tasks = read("select_tasks.txt");

    std::string labels = util::read_file(asset_root / "error_types.txt");
    std::size_t start = 0;
    while (start <= labels.size()) {
        std::size_t end = labels.find('\n', start);
        std::string label = util::trim(labels.substr(start, end == std::string::npos
                                                                ? std::string::npos
                                                                : end - start));
        if (!label.empty()) prompts.error_types.push_back(label);
        if (end == std::string::npos) break;
        start = end + 1;
    }
    if (prompts.error_types.empty())
        throw InvariantViolation("error_types.txt lists no labels");
    return prompts;
}

std::string fill(std::string prompt_template,
                 const std::vector<std::pair<std::string, std::string>>& values) {
    for (const auto& [key, value] : values) {
        prompt_template = util::replace_all(prompt_template, "{" + key + "}", value);
    }
    return prompt_template;
}

}  // namespace memcollab
