#include "stagehand/service.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "stagehand/transcript.hpp"

namespace stagehand {

using nlohmann::json;
using Collection = Storage::Collection;

std::pair<std::string, int> parse_bind_address(const std::string& addr)
{
    auto colon = addr.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size())
        throw std::invalid_argument("bind address must look like host:port");
    int port = 0;
    try {
        port = std::stoi(addr.substr(colon + 1));
    } catch (const std::exception&) {
        throw std::invalid_argument("bad port in bind address \"" + addr + "\"");
    }
    if (port < 0 || port > 65535)
        throw std::invalid_argument("port out of range in \"" + addr + "\"");
    return {addr.substr(0, colon), port};
}

namespace {

struct HttpError {
    int status;
    std::string code;
    std::string message;
    json detail = nullptr;
};

HttpError not_found(const std::string& what)
{
    return {404, "not_found", what};
}

HttpError conflict(const std::string& what, json detail = nullptr)
{
    return {409, "conflict", what, std::move(detail)};
}

HttpError bad_request(const std::string& what, json detail = nullptr)
{
    return {400, "validation", what, std::move(detail)};
}

// Compact reset point: the session's vectors are append-only between resets,
// so a snapshot only needs the prefix lengths plus the small mutable state.
struct Mark {
    std::size_t line_count = 0;
    std::vector<TriggerRuntime> runtimes;
    FallbackClock clock;
    int turn = 0;
    SessionState state = SessionState::Running;
    std::string error_reason;
    std::size_t firings = 0;
    std::size_t events = 0;
};

Mark mark_of(const Session& s)
{
    return {s.lines.size(), s.runtimes, s.clock, s.turn, s.state, s.error_reason, s.firings.size(), s.events.size()};
}

Snapshot snapshot_from_mark(const Session& s, const Mark& m)
{
    Snapshot snap;
    snap.session_id = s.id;
    snap.line_count = m.line_count;
    snap.lines.assign(s.lines.begin(), s.lines.begin() + static_cast<std::ptrdiff_t>(m.line_count));
    snap.runtimes = m.runtimes;
    snap.clock = m.clock;
    snap.turn = m.turn;
    snap.state = m.state;
    snap.error_reason = m.error_reason;
    snap.firings.assign(s.firings.begin(), s.firings.begin() + static_cast<std::ptrdiff_t>(m.firings));
    snap.events.assign(s.events.begin(), s.events.begin() + static_cast<std::ptrdiff_t>(m.events));
    return snap;
}

json mark_to_json(const Mark& m)
{
    // Reuse the snapshot encoding for the runtime block.
    Snapshot tmp;
    tmp.runtimes = m.runtimes;
    tmp.clock = m.clock;
    tmp.turn = m.turn;
    tmp.state = m.state;
    tmp.error_reason = m.error_reason;
    json j = snapshot_to_json(tmp);
    j.erase("lines");
    j.erase("firings");
    j.erase("events");
    j.erase("session_id");
    j["line_count"] = m.line_count;
    j["firings_count"] = m.firings;
    j["events_count"] = m.events;
    return j;
}

Mark mark_from_json(const json& j)
{
    json full = j;
    full["session_id"] = "";
    full["lines"] = json::array();
    full["firings"] = json::array();
    full["events"] = json::array();
    Snapshot tmp = snapshot_from_json(full);
    return {j.at("line_count").get<std::size_t>(), tmp.runtimes, tmp.clock, tmp.turn, tmp.state, tmp.error_reason,
            j.at("firings_count").get<std::size_t>(), j.at("events_count").get<std::size_t>()};
}

struct SessionRecord {
    std::mutex mutex;  // one writer at a time; contention answers 409
    Session session;
    std::string story_id;
    bool paused = false;
    std::vector<Mark> marks;
    std::vector<Annotation> annotations;
    std::shared_ptr<CompletionBackend> backend;

    void remember_mark()
    {
        Mark m = mark_of(session);
        auto it = std::find_if(marks.begin(), marks.end(), [&](const Mark& x) { return x.line_count == m.line_count; });
        if (it != marks.end())
            *it = std::move(m);
        else
            marks.push_back(std::move(m));
    }
};

json record_to_json(const SessionRecord& r)
{
    json marks = json::array();
    for (const auto& m : r.marks)
        marks.push_back(mark_to_json(m));
    return {{"session", session_to_json(r.session)},
            {"story_id", r.story_id},
            {"paused", r.paused},
            {"marks", std::move(marks)}};
}

json lines_since(const Session& s, std::size_t since)
{
    json out = json::array();
    for (std::size_t i = std::min(since, s.lines.size()); i < s.lines.size(); ++i) {
        json l = line_to_json(s.lines[i]);
        l["index"] = i;
        out.push_back(std::move(l));
    }
    return out;
}

json session_view(const SessionRecord& r, std::size_t since)
{
    const Session& s = r.session;
    json firings = json::array();
    for (const auto& f : s.firings)
        firings.push_back(firing_to_json(f));
    return {{"id", s.id},
            {"story_id", r.story_id},
            {"title", s.definition.title},
            {"mode", std::string(to_string(s.mode))},
            {"seed", s.seed},
            {"state", std::string(to_string(s.state))},
            {"paused", r.paused},
            {"error_reason", s.error_reason},
            {"player_character", s.definition.player_character ? json(*s.definition.player_character) : json()},
            {"turn", s.turn},
            {"line_count", s.lines.size()},
            {"since", since},
            {"lines", lines_since(s, since)},
            {"firings", std::move(firings)}};
}

json outcome_to_json(const StepOutcome& o)
{
    return {{"appended", o.appended ? line_to_json(*o.appended) : json()},
            {"firing", o.firing ? firing_to_json(*o.firing) : json()},
            {"new_state", std::string(to_string(o.new_state))},
            {"awaiting_player", o.awaiting_player}};
}

json warnings_to_json(const std::vector<Warning>& ws)
{
    json out = json::array();
    for (const auto& w : ws)
        out.push_back({{"code", w.code}, {"trigger_id", w.trigger_id}, {"message", w.message}});
    return out;
}

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const HttpError& e)
{
    send_json(res, e.status, {{"code", e.code}, {"message", e.message}, {"detail", e.detail}});
}

json parse_body(const httplib::Request& req)
{
    if (req.body.empty())
        return json::object();
    try {
        auto j = json::parse(req.body);
        if (!j.is_object())
            throw bad_request("request body must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw bad_request(std::string("malformed JSON body: ") + e.what());
    }
}

std::size_t since_of(const httplib::Request& req, const json& body)
{
    if (body.contains("since")) {
        if (!body.at("since").is_number_unsigned())
            throw bad_request("since must be a non-negative integer");
        return body.at("since").get<std::size_t>();
    }
    if (req.has_param("since")) {
        try {
            return std::stoul(req.get_param_value("since"));
        } catch (const std::exception&) {
            throw bad_request("since must be a non-negative integer");
        }
    }
    return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

struct SessionService::Impl {
    ServiceConfig config;
    BackendFactory backends;
    Storage storage;
    httplib::Server server;
    std::thread thread;
    std::vector<Storage::LoadError> load_errors;

    std::mutex maps_mutex;
    std::map<std::string, StoryDefinition> stories;
    std::map<std::string, std::shared_ptr<SessionRecord>> sessions;
    std::size_t next_story = 1;
    std::size_t next_session = 1;

    Impl(ServiceConfig cfg, BackendFactory factory)
        : config(std::move(cfg)), backends(std::move(factory)), storage(config.data_dir)
    {
        load();
        routes();
    }

    static std::size_t numeric_suffix(const std::string& id)
    {
        auto dash = id.rfind('-');
        try {
            return dash == std::string::npos ? 0 : std::stoul(id.substr(dash + 1));
        } catch (const std::exception&) {
            return 0;
        }
    }

    void load()
    {
        for (auto& [id, doc] : storage.load_all(Collection::Stories, load_errors)) {
            try {
                stories.emplace(id, story_from_json(doc));
                next_story = std::max(next_story, numeric_suffix(id) + 1);
            } catch (const std::exception& e) {
                load_errors.push_back(storage.quarantine(storage.path_for(Collection::Stories, id), e.what()));
            }
        }
        for (auto& [id, doc] : storage.load_all(Collection::Sessions, load_errors)) {
            try {
                auto rec = std::make_shared<SessionRecord>();
                rec->session = session_from_json(doc.at("session"));
                rec->story_id = doc.at("story_id").get<std::string>();
                rec->paused = doc.value("paused", false);
                for (const auto& m : doc.at("marks"))
                    rec->marks.push_back(mark_from_json(m));
                if (auto notes = storage.load(Collection::Annotations, id))
                    for (const auto& a : *notes)
                        rec->annotations.push_back(annotation_from_json(a));
                rec->backend = backends(rec->session);
                sessions.emplace(id, std::move(rec));
                next_session = std::max(next_session, numeric_suffix(id) + 1);
            } catch (const std::exception& e) {
                load_errors.push_back(storage.quarantine(storage.path_for(Collection::Sessions, id), e.what()));
            }
        }
        for (const auto& e : load_errors)
            std::cerr << "stagehand: quarantined " << e.path << ": " << e.reason << "\n";
    }

    void persist(const SessionRecord& r)
    {
        storage.save(Collection::Sessions, r.session.id, record_to_json(r));
    }

    void persist_annotations(const SessionRecord& r)
    {
        json arr = json::array();
        for (const auto& a : r.annotations)
            arr.push_back(annotation_to_json(a));
        storage.save(Collection::Annotations, r.session.id, arr);
    }

    std::shared_ptr<SessionRecord> find_session(const std::string& id)
    {
        std::lock_guard lock(maps_mutex);
        auto it = sessions.find(id);
        if (it == sessions.end())
            throw not_found("unknown session \"" + id + "\"");
        return it->second;
    }

    // Guard for one session mutation; a concurrent writer gets 409.
    static std::unique_lock<std::mutex> exclusive(SessionRecord& r)
    {
        std::unique_lock lock(r.mutex, std::try_to_lock);
        if (!lock.owns_lock())
            throw conflict("session is busy with another request");
        return lock;
    }

    template <typename F>
    httplib::Server::Handler wrap(F f)
    {
        return [this, f](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const HttpError& e) {
                send_error(res, e);
            } catch (const ValidationError& e) {
                send_error(res, bad_request(e.what(), {{"path", e.path()}, {"reason", e.reason()}}));
            } catch (const SessionStateError& e) {
                send_error(res, conflict(e.what()));
            } catch (const BackendError& e) {
                send_error(res, {502, "backend_failure", e.what(), {{"kind", std::string(to_string(e.kind()))}}});
            } catch (const std::invalid_argument& e) {
                send_error(res, bad_request(e.what()));
            } catch (const json::exception& e) {
                send_error(res, bad_request(e.what()));
            } catch (const std::exception& e) {
                send_error(res, {500, "internal", e.what()});
            }
        };
    }

    void routes()
    {
        server.Get("/health", wrap([this](const httplib::Request&, httplib::Response& res) {
                       json errors = json::array();
                       for (const auto& e : load_errors)
                           errors.push_back({{"path", e.path.string()}, {"reason", e.reason}});
                       send_json(res, 200, {{"ok", true}, {"load_errors", errors}});
                   }));

        // Stories ---------------------------------------------------------
        server.Get("/stories", wrap([this](const httplib::Request&, httplib::Response& res) {
                       std::lock_guard lock(maps_mutex);
                       json out = json::array();
                       for (const auto& [id, def] : stories)
                           out.push_back({{"id", id}, {"title", def.title}});
                       send_json(res, 200, out);
                   }));

        server.Post("/stories", wrap([this](const httplib::Request& req, httplib::Response& res) {
                        StoryDefinition def = story_from_json(parse_body(req));
                        std::lock_guard lock(maps_mutex);
                        const std::string id = "story-" + std::to_string(next_story++);
                        storage.save(Collection::Stories, id, story_to_json(def));
                        json body = {{"id", id},
                                     {"story", story_to_json(def)},
                                     {"warnings", warnings_to_json(validate_story(def))}};
                        stories.emplace(id, std::move(def));
                        send_json(res, 201, body);
                    }));

        server.Get(R"(/stories/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                       std::lock_guard lock(maps_mutex);
                       auto it = stories.find(req.matches[1]);
                       if (it == stories.end())
                           throw not_found("unknown story \"" + std::string(req.matches[1]) + "\"");
                       send_json(res, 200,
                                 {{"id", it->first},
                                  {"story", story_to_json(it->second)},
                                  {"warnings", warnings_to_json(validate_story(it->second))}});
                   }));

        server.Put(R"(/stories/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                       const std::string id = req.matches[1];
                       {
                           std::lock_guard lock(maps_mutex);
                           if (!stories.count(id))
                               throw not_found("unknown story \"" + id + "\"");
                       }
                       StoryDefinition def = story_from_json(parse_body(req));
                       std::lock_guard lock(maps_mutex);
                       storage.save(Collection::Stories, id, story_to_json(def));
                       json body = {{"id", id},
                                    {"story", story_to_json(def)},
                                    {"warnings", warnings_to_json(validate_story(def))}};
                       stories[id] = std::move(def);
                       send_json(res, 200, body);
                   }));

        // Sessions --------------------------------------------------------
        server.Post("/sessions", wrap([this](const httplib::Request& req, httplib::Response& res) {
                        const json body = parse_body(req);
                        if (!body.contains("story_id") || !body.at("story_id").is_string())
                            throw bad_request("story_id is required");
                        const std::string story_id = body.at("story_id").get<std::string>();
                        auto rec = std::make_shared<SessionRecord>();
                        {
                            std::lock_guard lock(maps_mutex);
                            auto it = stories.find(story_id);
                            if (it == stories.end())
                                throw not_found("unknown story \"" + story_id + "\"");
                            Mode mode = it->second.player_character ? Mode::Interactive : Mode::Autonomous;
                            if (body.contains("mode"))
                                mode = mode_from_string(body.at("mode").get<std::string>());
                            const std::uint64_t seed = body.value("seed", std::uint64_t{0});
                            rec->session = Session::create("session-" + std::to_string(next_session++), it->second,
                                                           mode, seed);
                            rec->story_id = story_id;
                        }
                        rec->backend = backends(rec->session);
                        rec->remember_mark();
                        persist(*rec);
                        {
                            std::lock_guard lock(maps_mutex);
                            sessions.emplace(rec->session.id, rec);
                        }
                        send_json(res, 201, session_view(*rec, 0));
                    }));

        server.Get("/sessions", wrap([this](const httplib::Request&, httplib::Response& res) {
                       std::vector<std::shared_ptr<SessionRecord>> recs;
                       {
                           std::lock_guard lock(maps_mutex);
                           for (const auto& [_, r] : sessions)
                               recs.push_back(r);
                       }
                       json out = json::array();
                       for (const auto& r : recs) {
                           std::lock_guard lock(r->mutex);
                           out.push_back({{"id", r->session.id},
                                          {"story_id", r->story_id},
                                          {"state", std::string(to_string(r->session.state))},
                                          {"paused", r->paused},
                                          {"line_count", r->session.lines.size()}});
                       }
                       send_json(res, 200, out);
                   }));

        server.Get(R"(/sessions/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                       auto rec = find_session(req.matches[1]);
                       std::lock_guard lock(rec->mutex);
                       send_json(res, 200, session_view(*rec, since_of(req, json::object())));
                   }));

        server.Post(R"(/sessions/([^/]+)/step)", wrap([this](const httplib::Request& req, httplib::Response& res) {
                        auto rec = find_session(req.matches[1]);
                        const json body = parse_body(req);
                        const std::size_t since = since_of(req, body);
                        auto lock = exclusive(*rec);
                        if (rec->paused)
                            throw conflict("session is paused");
                        if (rec->session.state != SessionState::Running)
                            throw conflict("cannot step a session in state " +
                                           std::string(to_string(rec->session.state)));
                        const StepOutcome outcome = step(rec->session, *rec->backend, config.engine);
                        if (outcome.new_state != SessionState::Errored)
                            rec->remember_mark();
                        persist(*rec);
                        json payload = {{"outcome", outcome_to_json(outcome)}, {"session", session_view(*rec, since)}};
                        if (outcome.new_state == SessionState::Errored) {
                            payload["event"] = rec->session.events.empty()
                                                   ? json()
                                                   : event_to_json(rec->session.events.back());
                            send_error(res, {502, "backend_failure", rec->session.error_reason, payload});
                            return;
                        }
                        send_json(res, 200, payload);
                    }));

        server.Post(R"(/sessions/([^/]+)/player-line)",
                    wrap([this](const httplib::Request& req, httplib::Response& res) {
                        auto rec = find_session(req.matches[1]);
                        const json body = parse_body(req);
                        const std::size_t since = since_of(req, body);
                        auto lock = exclusive(*rec);
                        if (rec->session.state != SessionState::AwaitingPlayer)
                            throw conflict("session is not awaiting the player (state " +
                                           std::string(to_string(rec->session.state)) + ")");
                        if (!body.contains("text") || !body.at("text").is_string())
                            throw bad_request("text is required");
                        StepOutcome outcome;
                        try {
                            outcome = submit_player_line(rec->session, body.at("text").get<std::string>(),
                                                         *rec->backend, config.engine);
                        } catch (const BackendError& e) {
                            persist(*rec);
                            send_error(res, {502,
                                             "backend_failure",
                                             e.what(),
                                             {{"event", event_to_json(rec->session.events.back())},
                                              {"session", session_view(*rec, since)}}});
                            return;
                        }
                        rec->remember_mark();
                        persist(*rec);
                        send_json(res, 200,
                                  {{"outcome", outcome_to_json(outcome)}, {"session", session_view(*rec, since)}});
                    }));

        server.Post(R"(/sessions/([^/]+)/pause)", wrap([this](const httplib::Request& req, httplib::Response& res) {
                        auto rec = find_session(req.matches[1]);
                        auto lock = exclusive(*rec);
                        rec->paused = true;
                        persist(*rec);
                        send_json(res, 200, session_view(*rec, rec->session.lines.size()));
                    }));

        server.Post(R"(/sessions/([^/]+)/resume)", wrap([this](const httplib::Request& req, httplib::Response& res) {
                        auto rec = find_session(req.matches[1]);
                        auto lock = exclusive(*rec);
                        rec->paused = false;
                        if (rec->session.state == SessionState::Errored) {
                            rec->session.state = SessionState::Running;
                            rec->session.error_reason.clear();
                        }
                        persist(*rec);
                        send_json(res, 200, session_view(*rec, rec->session.lines.size()));
                    }));

        server.Get(R"(/sessions/([^/]+)/snapshots)", wrap([this](const httplib::Request& req, httplib::Response& res) {
                       auto rec = find_session(req.matches[1]);
                       std::lock_guard lock(rec->mutex);
                       json out = json::array();
                       for (const auto& m : rec->marks)
                           out.push_back({{"line_count", m.line_count},
                                          {"turn", m.turn},
                                          {"state", std::string(to_string(m.state))}});
                       send_json(res, 200, out);
                   }));

        server.Post(R"(/sessions/([^/]+)/snapshots)",
                    wrap([this](const httplib::Request& req, httplib::Response& res) {
                        auto rec = find_session(req.matches[1]);
                        auto lock = exclusive(*rec);
                        rec->remember_mark();
                        persist(*rec);
                        send_json(res, 201, {{"line_count", rec->session.lines.size()}, {"turn", rec->session.turn}});
                    }));

        server.Post(R"(/sessions/([^/]+)/reset)", wrap([this](const httplib::Request& req, httplib::Response& res) {
                        auto rec = find_session(req.matches[1]);
                        const json body = parse_body(req);
                        if (!body.contains("line_count") || !body.at("line_count").is_number_unsigned())
                            throw bad_request("line_count is required");
                        const auto target = body.at("line_count").get<std::size_t>();
                        auto lock = exclusive(*rec);
                        auto it = std::find_if(rec->marks.begin(), rec->marks.end(),
                                               [&](const Mark& m) { return m.line_count == target; });
                        if (it == rec->marks.end())
                            throw not_found("no snapshot at line " + std::to_string(target));
                        reset_to(rec->session, snapshot_from_mark(rec->session, *it));
                        rec->marks.erase(std::remove_if(rec->marks.begin(), rec->marks.end(),
                                                        [&](const Mark& m) { return m.line_count > target; }),
                                         rec->marks.end());
                        const auto before = rec->annotations.size();
                        rec->annotations.erase(
                            std::remove_if(rec->annotations.begin(), rec->annotations.end(),
                                           [&](const Annotation& a) { return !annotation_target_exists(rec->session, a); }),
                            rec->annotations.end());
                        if (before != rec->annotations.size())
                            persist_annotations(*rec);
                        persist(*rec);
                        send_json(res, 200, session_view(*rec, 0));
                    }));

        server.Post(R"(/sessions/([^/]+)/annotations)",
                    wrap([this](const httplib::Request& req, httplib::Response& res) {
                        auto rec = find_session(req.matches[1]);
                        Annotation a = annotation_from_json(parse_body(req));
                        auto lock = exclusive(*rec);
                        a.session_id = rec->session.id;
                        try {
                            check_annotation(rec->session, rec->annotations, a);
                        } catch (const std::invalid_argument& e) {
                            throw bad_request(e.what());
                        } catch (const std::logic_error& e) {
                            throw conflict(e.what());
                        }
                        rec->annotations.push_back(a);
                        persist_annotations(*rec);
                        json body = annotation_to_json(a);
                        body["index"] = rec->annotations.size() - 1;
                        send_json(res, 201, body);
                    }));

        server.Get(R"(/sessions/([^/]+)/annotations)",
                   wrap([this](const httplib::Request& req, httplib::Response& res) {
                       auto rec = find_session(req.matches[1]);
                       std::lock_guard lock(rec->mutex);
                       json out = json::array();
                       for (const auto& a : rec->annotations)
                           out.push_back(annotation_to_json(a));
                       send_json(res, 200, out);
                   }));

        server.Get(R"(/sessions/([^/]+)/export(\.json)?)",
                   wrap([this](const httplib::Request& req, httplib::Response& res) {
                       auto rec = find_session(req.matches[1]);
                       std::lock_guard lock(rec->mutex);
                       send_json(res, 200, build_export(rec->session, rec->annotations));
                   }));

        server.Get(R"(/sessions/([^/]+)/export\.txt)",
                   wrap([this](const httplib::Request& req, httplib::Response& res) {
                       auto rec = find_session(req.matches[1]);
                       std::lock_guard lock(rec->mutex);
                       res.status = 200;
                       res.set_content(export_text(rec->session), "text/plain; charset=utf-8");
                   }));

        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty())
                send_error(res, {res.status, res.status == 404 ? "not_found" : "error", "no such route"});
        });
    }
};

SessionService::SessionService(ServiceConfig config, BackendFactory backends)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(backends)))
{
}

SessionService::~SessionService()
{
    stop();
}

int SessionService::start(const std::string& host, int port)
{
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0)
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

bool SessionService::listen(const std::string& host, int port)
{
    return impl_->server.listen(host, port);
}

void SessionService::stop()
{
    if (!impl_)
        return;
    impl_->server.stop();
    if (impl_->thread.joinable())
        impl_->thread.join();
}

const std::vector<Storage::LoadError>& SessionService::load_errors() const
{
    return impl_->load_errors;
}

}  // namespace stagehand
