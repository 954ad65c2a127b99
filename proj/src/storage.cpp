#include "stagehand/storage.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace stagehand {

using nlohmann::json;

StorageError::StorageError(fs::path path, const std::string& what)
    : std::runtime_error(path.string() + ": " + what), path_(std::move(path))
{
}

void write_file_atomic(const fs::path& path, const std::string& content)
{
    static std::atomic<unsigned long> counter{0};
    const fs::path tmp = path.parent_path() / ("." + path.filename().string() + ".tmp" +
                                               std::to_string(::getpid()) + "-" + std::to_string(counter++));
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0)
        throw StorageError(tmp, "cannot create temp file");
    std::size_t written = 0;
    while (written < content.size()) {
        auto n = ::write(fd, content.data() + written, content.size() - written);
        if (n < 0) {
            ::close(fd);
            ::unlink(tmp.c_str());
            throw StorageError(tmp, "write failed");
        }
        written += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw StorageError(path, "rename failed: " + ec.message());
    }
}

Storage::Storage(fs::path root) : root_(std::move(root))
{
    for (const char* sub : {"stories", "sessions", "annotations", "quarantine"}) {
        std::error_code ec;
        fs::create_directories(root_ / sub, ec);
        if (ec)
            throw StorageError(root_ / sub, "cannot create directory: " + ec.message());
    }
}

fs::path Storage::dir(Collection c) const
{
    switch (c) {
    case Collection::Stories:
        return root_ / "stories";
    case Collection::Sessions:
        return root_ / "sessions";
    case Collection::Annotations:
        return root_ / "annotations";
    }
    return root_;
}

fs::path Storage::path_for(Collection c, const std::string& id) const
{
    if (id.empty() || id.find_first_of("/\\") != std::string::npos || id.front() == '.')
        throw StorageError(dir(c) / id, "invalid entity id");
    return dir(c) / (id + ".json");
}

void Storage::save(Collection c, const std::string& id, const json& doc) const
{
    write_file_atomic(path_for(c, id), doc.dump(2));
}

Storage::LoadError Storage::quarantine(const fs::path& path, const std::string& reason) const
{
    const fs::path target = root_ / "quarantine" / (path.parent_path().filename().string() + "-" +
                                                    path.filename().string());
    std::error_code ec;
    fs::rename(path, target, ec);
    write_file_atomic(fs::path(target.string() + ".error.txt"), path.string() + ": " + reason + "\n");
    return {path, target, reason};
}

std::optional<json> Storage::load(Collection c, const std::string& id) const
{
    const fs::path path = path_for(c, id);
    std::ifstream in(path);
    if (!in)
        return std::nullopt;
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        auto err = quarantine(path, e.what());
        throw StorageError(path, "corrupt file quarantined to " + err.quarantined.string());
    }
}

std::vector<std::pair<std::string, json>> Storage::load_all(Collection c, std::vector<LoadError>& errors) const
{
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir(c))) {
        const auto& p = entry.path();
        if (entry.is_regular_file() && p.extension() == ".json" && p.filename().string().front() != '.')
            files.push_back(p);
    }
    std::sort(files.begin(), files.end());

    std::vector<std::pair<std::string, json>> out;
    for (const auto& p : files) {
        std::ifstream in(p);
        try {
            out.emplace_back(p.stem().string(), json::parse(in));
        } catch (const json::parse_error& e) {
            in.close();
            errors.push_back(quarantine(p, e.what()));
        }
    }
    return out;
}

}  // namespace stagehand
