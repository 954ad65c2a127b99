#include "stagehand/cli.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "stagehand/storage.hpp"

namespace fs = std::filesystem;

namespace stagehand::cli {

using nlohmann::json;

BackendSpec BackendSpec::parse(const std::string& text)
{
    if (text == "live")
        return {};
    constexpr std::string_view prefix = "scripted:";
    if (text.rfind(prefix, 0) == 0 && text.size() > prefix.size())
        return {false, fs::path(text.substr(prefix.size()))};
    throw std::invalid_argument("backend must be \"live\" or \"scripted:<fixture>\"");
}

std::shared_ptr<CompletionBackend> BackendSpec::make(std::uint64_t seed) const
{
    if (live)
        return std::make_shared<HttpBackend>(HttpBackendConfig::from_env());
    return std::make_shared<ScriptedBackend>(ScriptedFixture::load(fixture), seed);
}

static std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cmd_validate(const fs::path& story_file, bool allow_warnings, std::ostream& out, std::ostream& err)
{
    StoryDefinition def;
    try {
        def = parse_story_definition(read_file(story_file));
    } catch (const std::exception& e) {
        err << story_file.string() << ": error: " << e.what() << "\n";
        return kErrors;
    }
    const auto warnings = validate_story(def);
    for (const auto& w : warnings)
        out << story_file.string() << ": warning [" << w.code << "]: " << w.message << "\n";
    out << story_file.string() << ": " << def.characters.size() << " characters, " << def.triggers.size()
        << " triggers, " << warnings.size() << " warnings\n";
    if (warnings.empty() || allow_warnings)
        return kOk;
    return kWarnings;
}

std::string format_report(const RunReport& r)
{
    std::ostringstream out;
    out << "simulation_length: " << r.simulation_length << "\n"
        << "dialogue_count: " << r.dialogue_count << "\n"
        << "action_count: " << r.action_count << "\n"
        << "generated_action_count: " << r.generated_action_count << "\n"
        << "ended_by: " << r.ended_by << "\n";
    for (const auto& [id, n] : r.firings_per_trigger)
        out << "fired " << id << ": " << n << "\n";
    return out.str();
}

RunResult run_session(const RunOptions& options, std::istream& in, std::ostream& out)
{
    StoryDefinition def = parse_story_definition(read_file(options.story_file));
    if (options.max_turns < 1)
        throw std::invalid_argument("--max-turns must be >= 1");
    auto backend = options.backend.make(options.seed);
    const std::string id = options.session_id.empty() ? "run-" + std::to_string(options.seed) : options.session_id;
    Session session = Session::create(id, std::move(def), options.mode, options.seed);

    const bool echo = options.mode == Mode::Interactive;
    if (echo)
        out << "*" << session.definition.world_setting << "*\n";
    std::size_t shown = 0;
    auto show_new = [&] {
        for (; shown < session.lines.size(); ++shown)
            if (echo)
                out << render_line(session.lines[shown]) << "\n";
    };

    const int start = session.turn;
    while (session.turn - start < options.max_turns) {
        if (session.state == SessionState::Running) {
            step(session, *backend, options.engine);
        } else if (session.state == SessionState::AwaitingPlayer) {
            out << *session.definition.player_character << "> " << std::flush;
            std::string text;
            if (!std::getline(in, text))
                break;
            try {
                submit_player_line(session, text, *backend, options.engine);
            } catch (const std::invalid_argument& e) {
                out << "(" << e.what() << ")\n";
            }
        } else {
            break;
        }
        show_new();
    }

    fs::create_directories(options.out_dir);
    RunResult result;
    result.report = run_report(session);
    result.txt_path = options.out_dir / (id + ".txt");
    result.json_path = options.out_dir / (id + ".json");
    write_file_atomic(result.txt_path, export_text(session));
    json doc = build_export(session);
    if (options.backend.live)
        doc["nondeterministic"] = true;
    write_file_atomic(result.json_path, doc.dump(2));
    return result;
}

int cmd_run(const RunOptions& options, std::istream& in, std::ostream& out, std::ostream& err)
{
    try {
        RunResult r = run_session(options, in, out);
        out << format_report(r.report);
        out << "wrote " << r.txt_path.string() << " and " << r.json_path.string() << "\n";
        if (options.backend.live)
            out << "note: live backends are not deterministic; the seed does not reproduce this run\n";
        if (r.report.ended_by == "exhaustion") {
            std::ifstream j(r.json_path);
            const auto doc = json::parse(j);
            err << "session errored: " << doc.at("error_reason").get<std::string>() << "\n";
            for (const auto& e : doc.at("events"))
                if (e.at("kind") != "firing")
                    err << "  [" << e.at("kind").get<std::string>() << "] " << e.at("message").get<std::string>()
                        << "\n";
            return kErrors;
        }
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kErrors;
    }
}

int cmd_batch(const RunOptions& options, int runs, int jobs, std::ostream& out, std::ostream& err)
{
    if (runs < 1 || jobs < 1) {
        err << "error: --runs and --jobs must be >= 1\n";
        return kErrors;
    }
    std::vector<std::optional<RunResult>> results(static_cast<std::size_t>(runs));
    std::vector<std::string> failures(static_cast<std::size_t>(runs));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < runs; i = next++) {
            RunOptions o = options;
            o.mode = Mode::Autonomous;
            o.seed = options.seed + static_cast<std::uint64_t>(i);
            o.session_id = "run-" + std::to_string(o.seed);
            std::istringstream no_input;
            std::ostringstream quiet;
            try {
                results[static_cast<std::size_t>(i)] = run_session(o, no_input, quiet);
            } catch (const std::exception& e) {
                failures[static_cast<std::size_t>(i)] = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < std::min(jobs, runs); ++j)
        pool.emplace_back(worker);
    for (auto& t : pool)
        t.join();

    std::vector<json> exports;
    int failed = 0;
    for (int i = 0; i < runs; ++i) {
        const auto& r = results[static_cast<std::size_t>(i)];
        if (!r) {
            ++failed;
            err << "run " << i << " failed: " << failures[static_cast<std::size_t>(i)] << "\n";
            continue;
        }
        std::ifstream in(r->json_path);
        exports.push_back(json::parse(in));
        out << r->json_path.filename().string() << ": length " << r->report.simulation_length << ", actions "
            << r->report.action_count << ", ended_by " << r->report.ended_by << "\n";
    }
    if (!exports.empty())
        out << format_stats_table(aggregate_exports(exports));
    return failed == 0 ? kOk : kErrors;
}

int cmd_stats(const fs::path& dir, std::ostream& out, std::ostream& err)
{
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    if (ec) {
        err << "error: cannot read " << dir.string() << ": " << ec.message() << "\n";
        return kErrors;
    }
    std::sort(files.begin(), files.end());

    std::vector<json> exports;
    for (const auto& f : files) {
        try {
            std::ifstream in(f);
            json doc = json::parse(in);
            if (doc.value("format", std::string()) != kExportFormat)
                throw std::runtime_error("not a " + std::string(kExportFormat) + " export");
            recount_report(doc);  // structural check
            story_from_json(doc.at("story"));
            exports.push_back(std::move(doc));
        } catch (const std::exception& e) {
            err << "skipped " << f.string() << ": " << e.what() << "\n";
        }
    }
    if (exports.empty()) {
        err << "error: no usable transcript exports in " << dir.string() << "\n";
        return kErrors;
    }
    out << format_stats_table(aggregate_exports(exports));
    return kOk;
}

}  // namespace stagehand::cli
