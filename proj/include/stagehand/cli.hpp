#pragma once

// Subcommand implementations behind tools/stagehand. They take streams so the
// test suite can drive them directly.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "stagehand/backend.hpp"
#include "stagehand/engine.hpp"
#include "stagehand/transcript.hpp"

namespace stagehand::cli {

enum ExitCode { kOk = 0, kWarnings = 1, kErrors = 2 };

// "live" or "scripted:<fixture.json>".
struct BackendSpec {
    bool live = true;
    std::filesystem::path fixture;

    static BackendSpec parse(const std::string& text);  // throws std::invalid_argument
    std::shared_ptr<CompletionBackend> make(std::uint64_t seed) const;
};

int cmd_validate(const std::filesystem::path& story_file, bool allow_warnings, std::ostream& out, std::ostream& err);

struct RunOptions {
    std::filesystem::path story_file;
    BackendSpec backend;
    Mode mode = Mode::Autonomous;
    int max_turns = 30;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "transcripts";
    std::string session_id;  // default "run-<seed>"
    EngineOptions engine;
};

struct RunResult {
    RunReport report;
    std::filesystem::path txt_path;
    std::filesystem::path json_path;
};

// Runs one session and writes <out>/<id>.txt and <id>.json. In interactive
// mode player lines are read from `in`; EOF stops the run.
RunResult run_session(const RunOptions& options, std::istream& in, std::ostream& out);

int cmd_run(const RunOptions& options, std::istream& in, std::ostream& out, std::ostream& err);

// Runs `runs` autonomous sessions with seeds seed, seed+1, ... using up to
// `jobs` threads, then prints the aggregate table.
int cmd_batch(const RunOptions& options, int runs, int jobs, std::ostream& out, std::ostream& err);

int cmd_stats(const std::filesystem::path& transcript_dir, std::ostream& out, std::ostream& err);

std::string format_report(const RunReport& report);

}  // namespace stagehand::cli
