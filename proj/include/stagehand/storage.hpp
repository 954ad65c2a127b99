#pragma once

// File-backed entity store: one JSON document per entity under
// <root>/{stories,sessions,annotations}/<id>.json, written atomically.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace stagehand {

class StorageError : public std::runtime_error {
public:
    StorageError(std::filesystem::path path, const std::string& what);

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Writes to a sibling temp file, flushes, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

class Storage {
public:
    enum class Collection { Stories, Sessions, Annotations };

    struct LoadError {
        std::filesystem::path path;         // original location
        std::filesystem::path quarantined;  // where the file was moved
        std::string reason;
    };

    explicit Storage(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }

    void save(Collection c, const std::string& id, const nlohmann::json& doc) const;
    // nullopt when absent. A corrupt file is quarantined and StorageError thrown.
    std::optional<nlohmann::json> load(Collection c, const std::string& id) const;

    // Loads every entity of a collection; corrupt files are quarantined and
    // reported through `errors`.
    std::vector<std::pair<std::string, nlohmann::json>> load_all(Collection c, std::vector<LoadError>& errors) const;

    std::filesystem::path path_for(Collection c, const std::string& id) const;

    // Moves a file aside into <root>/quarantine with an .error.txt report.
    LoadError quarantine(const std::filesystem::path& path, const std::string& reason) const;

private:
    std::filesystem::path dir(Collection c) const;

    std::filesystem::path root_;
};

}  // namespace stagehand
