// stagehand: validate stories, run sessions, batch-run, aggregate stats, serve the HTTP API.

#include <csignal>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "stagehand/cli.hpp"
#include "stagehand/service.hpp"

namespace {

std::string env_or(const char* name, const std::string& fallback)
{
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

stagehand::SessionService* g_service = nullptr;

void on_signal(int)
{
    if (g_service)
        g_service->stop();
}

}  // namespace

int main(int argc, char** argv)
{
    using namespace stagehand;

    CLI::App app{"Authorable LLM-driven interactive stories with natural-language triggers"};
    app.require_subcommand(1);

    std::string story_file;
    std::string backend = "live";
    std::string mode = "autonomous";
    int max_turns = 30;
    std::uint64_t seed = 0;
    std::string out_dir = "transcripts";
    bool allow_warnings = false;
    int runs = 10;
    int jobs = 1;
    std::string transcript_dir;
    std::string data_dir = env_or("DL_DATA_DIR", "data");
    std::string bind = env_or("DL_BIND_ADDR", "127.0.0.1:8080");
    std::size_t line_cap = 200;

    auto* validate = app.add_subcommand("validate", "Parse and check a story file");
    validate->add_option("story", story_file, "Story definition (.json)")->required()->check(CLI::ExistingFile);
    validate->add_flag("--allow-warnings", allow_warnings, "Exit 0 when only warnings were found");

    auto* run = app.add_subcommand("run", "Run one session and write .txt/.json exports");
    auto* batch = app.add_subcommand("batch", "Run N seeded autonomous sessions and aggregate them");
    for (auto* sub : {run, batch}) {
        sub->add_option("story", story_file, "Story definition (.json)")->required()->check(CLI::ExistingFile);
        sub->add_option("--backend", backend, "live | scripted:<fixture.json>")->capture_default_str();
        sub->add_option("--max-turns", max_turns, "Dialogue lines per session")->capture_default_str();
        sub->add_option("--seed", seed, "Scripted-backend seed (first seed for batch)")->capture_default_str();
        sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
        sub->add_option("--line-cap", line_cap, "Hard cap on script lines")->capture_default_str();
    }
    run->add_option("--mode", mode, "interactive | autonomous")
        ->check(CLI::IsMember({"interactive", "autonomous"}))
        ->capture_default_str();
    batch->add_option("--runs", runs, "Number of sessions")->capture_default_str();
    batch->add_option("--jobs", jobs, "Parallel sessions")->capture_default_str();

    auto* stats = app.add_subcommand("stats", "Mean ± std over a directory of .json exports");
    stats->add_option("dir", transcript_dir, "Directory of exports")->required()->check(CLI::ExistingDirectory);

    auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
    serve->add_option("--data-dir", data_dir, "Storage directory (DL_DATA_DIR)")->capture_default_str();
    serve->add_option("--bind", bind, "host:port (DL_BIND_ADDR)")->capture_default_str();
    serve->add_option("--backend", backend, "live | scripted:<fixture.json>")->capture_default_str();
    serve->add_option("--line-cap", line_cap, "Hard cap on script lines")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed())
            return cli::cmd_validate(story_file, allow_warnings, std::cout, std::cerr);

        if (stats->parsed())
            return cli::cmd_stats(transcript_dir, std::cout, std::cerr);

        const auto spec = cli::BackendSpec::parse(backend);
        EngineOptions engine;
        engine.line_cap = line_cap;

        if (run->parsed() || batch->parsed()) {
            cli::RunOptions options;
            options.story_file = story_file;
            options.backend = spec;
            options.mode = mode_from_string(mode);
            options.max_turns = max_turns;
            options.seed = seed;
            options.out_dir = out_dir;
            options.engine = engine;
            if (run->parsed())
                return cli::cmd_run(options, std::cin, std::cout, std::cerr);
            return cli::cmd_batch(options, runs, jobs, std::cout, std::cerr);
        }

        if (serve->parsed()) {
            auto [host, port] = parse_bind_address(bind);
            ServiceConfig config;
            config.data_dir = data_dir;
            config.engine = engine;
            SessionService service(config, [spec](const Session& s) { return spec.make(s.seed); });
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "serving on " << host << ":" << port << " (data in " << data_dir << ")" << std::endl;
            if (!service.listen(host, port)) {
                g_service = nullptr;
                std::cerr << "error: cannot listen on " << bind << "\n";
                return cli::kErrors;
            }
            g_service = nullptr;
            return cli::kOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kErrors;
    }
    return cli::kOk;
}
