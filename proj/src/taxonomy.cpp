#include "memcollab/taxonomy.hpp"

#include <set>

#include "json.hpp"

#include "memcollab/util.hpp"

namespace memcollab {

void CategoryScheme::validate() const {
    if (categories.empty()) throw InvariantViolation("scheme has no categories");
    std::set<std::string> seen_subcategories;
    for (const auto& category : categories) {
        auto it = subcategories.find(category);
        if (it == subcategories.end() || it->second.empty())
            throw InvariantViolation("category \"" + category + "\" has no subcategories");
        for (const auto& sub : it->second) {
            if (!seen_subcategories.insert(sub).second)
                throw InvariantViolation("subcategory \"" + sub +
                                         "\" belongs to more than one category");
        }
    }
    if (subcategories.size() != categories.size())
        throw InvariantViolation("scheme lists subcategories for unknown categories");
}

CategoryScheme CategoryScheme::from_file(const std::filesystem::path& path) {
    nlohmann::json parsed = nlohmann::json::parse(util::read_file(path), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_array())
        throw SchemaError(1, "scheme file must be a JSON array of {category, subcategories}");

    CategoryScheme scheme;
    for (const auto& record : parsed) {
        std::string category = record.value("category", "");
        if (category.empty()) throw SchemaError(1, "scheme record needs a \"category\"");
        scheme.categories.push_back(category);
        auto& subs = scheme.subcategories[category];
        for (const auto& sub : record.value("subcategories", nlohmann::json::array()))
            subs.push_back(sub.get<std::string>());
    }
    scheme.validate();
    return scheme;
}

namespace {

std::string join_lines(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& item : items) {
        if (!out.empty()) out += "\n";
        out += "- " + item;
    }
    return out;
}

// Trimmed, case-insensitive match against the allowed list; returns the
// canonical spelling from the list.
std::optional<std::string> match_label(const std::string& response,
                                       const std::vector<std::string>& allowed) {
    const std::string normalized = util::to_lower(util::trim(response));
    for (const auto& candidate : allowed) {
        if (util::to_lower(candidate) == normalized) return candidate;
    }
    return std::nullopt;
}

// Asks once, retries once on a mismatched reply. Both attempts run in one
// session so scripted mocks can vary the second reply.
std::optional<std::string> ask_for_label(Backend& backend, const std::string& prompt,
                                         const std::vector<std::string>& allowed) {
    auto session = backend.open_session();
    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatRequest request;
        request.messages.push_back({Role::user, prompt});
        ChatResponse response = session->complete(request);
        if (auto label = match_label(response.content, allowed)) return label;
    }
    return std::nullopt;
}

}  // namespace

std::pair<std::string, std::string> classify_task(const Task& task, Backend& backend,
                                                  const CategoryScheme& scheme,
                                                  const PromptSet& prompts,
                                                  const ClassifyOptions& options) {
    if (options.reuse_labels && task.category && task.subcategory)
        return {*task.category, *task.subcategory};

    const std::string category_prompt = fill(prompts.classify_category,
                                             {{"PROBLEM", task.text},
                                              {"CATEGORY_LIST", join_lines(scheme.categories)}});
    auto category = ask_for_label(backend, category_prompt, scheme.categories);
    if (!category) return {kUnclassified, kUnclassified};

    const auto& allowed_subs = scheme.subcategories.at(*category);
    const std::string sub_prompt = fill(prompts.classify_subcategory,
                                        {{"PROBLEM", task.text},
                                         {"CATEGORY", *category},
                                         {"SUBCATEGORY_LIST", join_lines(allowed_subs)}});
    auto subcategory = ask_for_label(backend, sub_prompt, allowed_subs);
    if (!subcategory) return {*category, kUnclassified};

    return {*category, *subcategory};
}

}  // namespace memcollab
