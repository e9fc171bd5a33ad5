#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace memcollab::util {

std::string trim(const std::string& s);
std::string to_lower(std::string s);
bool starts_with(const std::string& s, const std::string& prefix);

// Replaces every occurrence of `from` with `to`.
std::string replace_all(std::string text, const std::string& from, const std::string& to);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

// One parsed record per non-empty line, paired with its 1-based line number.
// Throws SchemaError on unparseable lines, IoError on unreadable paths.
std::vector<std::pair<int, nlohmann::json>> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions from
// workers are rethrown on the calling thread (first one wins).
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

// Scratch directory deleted on destruction.
class TempDir {
  public:
    explicit TempDir(const std::filesystem::path& root = {});
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

}  // namespace memcollab::util
