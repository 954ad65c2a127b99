#include "stagehand/story.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace stagehand {

using nlohmann::json;

std::string_view to_string(TriggerType type)
{
    return type == TriggerType::Ending ? "ending" : "basic";
}

std::string trim(std::string_view s)
{
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!s.empty() && is_space(s.front()))
        s.remove_prefix(1);
    while (!s.empty() && is_space(s.back()))
        s.remove_suffix(1);
    return std::string(s);
}

ValidationError::ValidationError(std::string path, std::string reason)
    : std::runtime_error(path.empty() ? reason : path + ": " + reason),
      path_(std::move(path)),
      reason_(std::move(reason))
{
}

const Character* StoryDefinition::find_character(std::string_view name) const
{
    for (const auto& c : characters)
        if (c.name == name)
            return &c;
    return nullptr;
}

const Trigger* StoryDefinition::find_trigger(std::string_view id) const
{
    auto idx = trigger_index(id);
    return idx ? &triggers[*idx] : nullptr;
}

std::optional<std::size_t> StoryDefinition::trigger_index(std::string_view id) const
{
    for (std::size_t i = 0; i < triggers.size(); ++i)
        if (triggers[i].id == id)
            return i;
    return std::nullopt;
}

namespace {

bool has_newline(std::string_view s)
{
    return s.find('\n') != std::string_view::npos || s.find('\r') != std::string_view::npos;
}

// Small helper that walks a json object and reports errors with a JSON-pointer-ish path.
class Reader {
public:
    Reader(const json& obj, std::string path, std::initializer_list<std::string_view> allowed)
        : obj_(obj), path_(std::move(path))
    {
        if (!obj_.is_object())
            throw ValidationError(path_.empty() ? "/" : path_, "expected an object");
        for (const auto& [key, _] : obj_.items()) {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
                throw ValidationError(at(key), "unknown key");
        }
    }

    std::string at(std::string_view key) const { return path_ + "/" + std::string(key); }

    bool has(std::string_view key) const { return obj_.contains(key) && !obj_.at(std::string(key)).is_null(); }

    const json& get(std::string_view key) const { return obj_.at(std::string(key)); }

    std::string string(std::string_view key, bool required) const
    {
        if (!has(key)) {
            if (required)
                throw ValidationError(at(key), "missing required string");
            return {};
        }
        const auto& v = get(key);
        if (!v.is_string())
            throw ValidationError(at(key), "expected a string");
        return v.get<std::string>();
    }

    bool boolean(std::string_view key, bool fallback) const
    {
        if (!has(key))
            return fallback;
        const auto& v = get(key);
        if (!v.is_boolean())
            throw ValidationError(at(key), "expected a boolean");
        return v.get<bool>();
    }

    std::optional<long long> integer(std::string_view key) const
    {
        if (!has(key))
            return std::nullopt;
        const auto& v = get(key);
        if (!v.is_number_integer())
            throw ValidationError(at(key), "expected an integer");
        return v.get<long long>();
    }

    const json& array(std::string_view key, bool required) const
    {
        static const json empty = json::array();
        if (!has(key)) {
            if (required)
                throw ValidationError(at(key), "missing required array");
            return empty;
        }
        const auto& v = get(key);
        if (!v.is_array())
            throw ValidationError(at(key), "expected an array");
        return v;
    }

private:
    const json& obj_;
    std::string path_;
};

std::set<std::string> read_id_set(const Reader& r, std::string_view key)
{
    std::set<std::string> out;
    const auto& arr = r.array(key, false);
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_string())
            throw ValidationError(r.at(key) + "/" + std::to_string(i), "expected a trigger id string");
        out.insert(arr[i].get<std::string>());
    }
    return out;
}

Trigger read_trigger(const json& j, std::size_t index)
{
    const std::string path = "/triggers/" + std::to_string(index);
    Reader r(j, path,
             {"id", "condition", "actions", "type", "repeatable", "fallback_k", "cooldown_turns", "requires_fired",
              "requires_not_fired"});
    Trigger t;
    t.id = r.has("id") ? r.string("id", true) : "trigger-" + std::to_string(index);
    t.condition = r.string("condition", false);

    const auto& actions = r.array("actions", true);
    for (std::size_t i = 0; i < actions.size(); ++i) {
        if (!actions[i].is_string())
            throw ValidationError(r.at("actions") + "/" + std::to_string(i), "expected a string");
        t.actions.push_back(actions[i].get<std::string>());
    }

    std::string type = r.has("type") ? r.string("type", true) : "basic";
    std::transform(type.begin(), type.end(), type.begin(), [](unsigned char c) { return std::tolower(c); });
    if (type == "basic")
        t.type = TriggerType::Basic;
    else if (type == "ending")
        t.type = TriggerType::Ending;
    else
        throw ValidationError(r.at("type"), "expected \"basic\" or \"ending\"");

    t.repeatable = r.boolean("repeatable", false);
    if (auto k = r.integer("fallback_k")) {
        if (*k < 1 || *k > 1'000'000)
            throw ValidationError(r.at("fallback_k"), "must be a positive integer");
        t.fallback_k = static_cast<int>(*k);
    }
    if (auto c = r.integer("cooldown_turns")) {
        if (*c < 0 || *c > 1'000'000)
            throw ValidationError(r.at("cooldown_turns"), "must be a non-negative integer");
        t.cooldown_turns = static_cast<int>(*c);
    }
    t.requires_fired = read_id_set(r, "requires_fired");
    t.requires_not_fired = read_id_set(r, "requires_not_fired");
    return t;
}

}  // namespace

std::string character_name_problem(std::string_view name)
{
    if (trim(name).empty())
        return "name must be non-empty";
    if (trim(name) != name)
        return "name must not have leading or trailing whitespace";
    if (has_newline(name))
        return "name must not contain a newline";
    if (name.find(':') != std::string_view::npos)
        return "name must not contain ':'";
    if (name.front() == '*')
        return "name must not start with '*'";
    return {};
}

void check_story_invariants(const StoryDefinition& def)
{
    if (def.characters.empty())
        throw ValidationError("/characters", "at least one character is required");

    std::set<std::string> names;
    for (std::size_t i = 0; i < def.characters.size(); ++i) {
        const auto& c = def.characters[i];
        const std::string path = "/characters/" + std::to_string(i);
        if (auto problem = character_name_problem(c.name); !problem.empty())
            throw ValidationError(path + "/name", problem);
        if (!names.insert(c.name).second)
            throw ValidationError(path + "/name", "duplicate character name \"" + c.name + "\"");
    }

    if (def.player_character && !def.find_character(*def.player_character))
        throw ValidationError("/player_character", "names no character \"" + *def.player_character + "\"");

    std::set<std::string> ids;
    for (std::size_t i = 0; i < def.triggers.size(); ++i) {
        const auto& t = def.triggers[i];
        const std::string path = "/triggers/" + std::to_string(i);
        if (t.id.empty())
            throw ValidationError(path + "/id", "id must be non-empty");
        if (!ids.insert(t.id).second)
            throw ValidationError(path + "/id", "duplicate trigger id \"" + t.id + "\"");
        if (t.actions.empty())
            throw ValidationError(path + "/actions", "trigger \"" + t.id + "\" needs at least one action");
        for (std::size_t a = 0; a < t.actions.size(); ++a) {
            if (trim(t.actions[a]).empty() || has_newline(t.actions[a]))
                throw ValidationError(path + "/actions/" + std::to_string(a),
                                      "action text must be a non-empty single line");
        }
        if (has_newline(t.condition))
            throw ValidationError(path + "/condition", "condition must be a single line");
        if (trim(t.condition).empty() && !t.fallback_k)
            throw ValidationError(path + "/condition",
                                  "trigger \"" + t.id + "\" has an empty condition and no fallback_k");
        if (t.fallback_k && *t.fallback_k < 1)
            throw ValidationError(path + "/fallback_k", "must be >= 1");
        if (t.cooldown_turns < 0)
            throw ValidationError(path + "/cooldown_turns", "must be >= 0");
        if (t.requires_fired.count(t.id) || t.requires_not_fired.count(t.id))
            throw ValidationError(path, "trigger \"" + t.id + "\" references itself in an ordering constraint");
        for (const auto& id : t.requires_fired) {
            if (t.requires_not_fired.count(id))
                throw ValidationError(path, "\"" + id + "\" is in both requires_fired and requires_not_fired");
        }
    }

    for (std::size_t i = 0; i < def.triggers.size(); ++i) {
        const auto& t = def.triggers[i];
        const std::string path = "/triggers/" + std::to_string(i);
        for (const auto& id : t.requires_fired)
            if (!ids.count(id))
                throw ValidationError(path + "/requires_fired", "unknown trigger id \"" + id + "\"");
        for (const auto& id : t.requires_not_fired)
            if (!ids.count(id))
                throw ValidationError(path + "/requires_not_fired", "unknown trigger id \"" + id + "\"");
    }
}

StoryDefinition story_from_json(const json& doc)
{
    Reader r(doc, "", {"title", "world_setting", "characters", "triggers", "player_character"});
    StoryDefinition def;
    def.title = r.string("title", false);
    def.world_setting = r.string("world_setting", true);
    if (trim(def.world_setting).empty() || has_newline(def.world_setting))
        throw ValidationError("/world_setting", "must be a non-empty single line");

    const auto& chars = r.array("characters", true);
    for (std::size_t i = 0; i < chars.size(); ++i) {
        Reader cr(chars[i], "/characters/" + std::to_string(i), {"name", "description", "behavior_prompt"});
        Character c;
        c.name = cr.string("name", true);
        c.description = cr.string("description", false);
        c.behavior_prompt = cr.string("behavior_prompt", false);
        def.characters.push_back(std::move(c));
    }

    const auto& triggers = r.array("triggers", false);
    for (std::size_t i = 0; i < triggers.size(); ++i)
        def.triggers.push_back(read_trigger(triggers[i], i));

    if (r.has("player_character"))
        def.player_character = r.string("player_character", true);

    check_story_invariants(def);
    return def;
}

StoryDefinition parse_story_definition(std::string_view document)
{
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ValidationError("", std::string("malformed document: ") + e.what());
    }
    return story_from_json(doc);
}

json story_to_json(const StoryDefinition& def)
{
    json chars = json::array();
    for (const auto& c : def.characters)
        chars.push_back({{"name", c.name}, {"description", c.description}, {"behavior_prompt", c.behavior_prompt}});

    json triggers = json::array();
    for (const auto& t : def.triggers) {
        json jt = {{"id", t.id},
                   {"condition", t.condition},
                   {"actions", t.actions},
                   {"type", std::string(to_string(t.type))},
                   {"repeatable", t.repeatable},
                   {"cooldown_turns", t.cooldown_turns},
                   {"requires_fired", t.requires_fired},
                   {"requires_not_fired", t.requires_not_fired}};
        if (t.fallback_k)
            jt["fallback_k"] = *t.fallback_k;
        triggers.push_back(std::move(jt));
    }

    json out = {{"title", def.title},
                {"world_setting", def.world_setting},
                {"characters", std::move(chars)},
                {"triggers", std::move(triggers)}};
    if (def.player_character)
        out["player_character"] = *def.player_character;
    return out;
}

std::vector<Warning> validate_story(const StoryDefinition& def)
{
    std::vector<Warning> warnings;

    // Least fixpoint of "could ever fire": every requires_fired dependency must
    // itself be able to fire, and must not be an Ending trigger (the session
    // halts as soon as one fires).
    std::map<std::string, bool> fireable;
    for (const auto& t : def.triggers)
        fireable[t.id] = false;
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& t : def.triggers) {
            if (fireable[t.id])
                continue;
            bool ok = std::all_of(t.requires_fired.begin(), t.requires_fired.end(), [&](const std::string& dep) {
                const Trigger* d = def.find_trigger(dep);
                return d && fireable[dep] && d->type != TriggerType::Ending;
            });
            if (ok) {
                fireable[t.id] = true;
                changed = true;
            }
        }
    }
    for (const auto& t : def.triggers) {
        if (fireable[t.id])
            continue;
        bool after_ending = std::any_of(t.requires_fired.begin(), t.requires_fired.end(), [&](const std::string& dep) {
            const Trigger* d = def.find_trigger(dep);
            return d && d->type == TriggerType::Ending;
        });
        warnings.push_back({"unfireable-gate", t.id,
                            after_ending ? "trigger \"" + t.id + "\" requires an Ending trigger to have fired; unfireable"
                                         : "trigger \"" + t.id + "\" is mutually gated, unfireable"});
    }

    for (const auto& t : def.triggers) {
        if (t.type == TriggerType::Ending && t.actions.size() > 1)
            warnings.push_back({"ending-extra-actions", t.id,
                                "Ending trigger \"" + t.id + "\" has " + std::to_string(t.actions.size()) +
                                    " actions; actions beyond first unreachable"});
    }

    if (!def.player_character)
        warnings.push_back({"no-player-character", "", "player_character unset; story can only run autonomously"});

    return warnings;
}

void check_script_line(const StoryDefinition& def, const ScriptLine& line)
{
    if (const auto* d = std::get_if<Dialogue>(&line)) {
        if (!def.find_character(d->speaker))
            throw ValidationError("speaker", "unknown speaker \"" + d->speaker + "\"");
        if (trim(d->text).empty() || has_newline(d->text))
            throw ValidationError("text", "dialogue text must be a non-empty single line");
    } else {
        const auto& a = std::get<StageAction>(line);
        if (trim(a.text).empty() || has_newline(a.text))
            throw ValidationError("text", "stage action text must be a non-empty single line");
    }
}

std::string render_line(const ScriptLine& line)
{
    if (const auto* d = std::get_if<Dialogue>(&line))
        return d->speaker + ": " + d->text;
    return "*" + std::get<StageAction>(line).text + "*";
}

std::string render_script(std::string_view world_setting, const std::vector<ScriptLine>& lines)
{
    std::string out;
    out.reserve(world_setting.size() + 2 + lines.size() * 64);
    out += '*';
    out += world_setting;
    out += '*';
    for (const auto& line : lines) {
        out += '\n';
        out += render_line(line);
    }
    return out;
}

ParsedScript parse_script(std::string_view text)
{
    ParsedScript out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        std::string_view raw = text.substr(pos, end - pos);
        const std::string where = "line " + std::to_string(line_no + 1);
        bool starred = raw.size() >= 2 && raw.front() == '*' && raw.back() == '*';
        if (line_no == 0) {
            if (!starred)
                throw ValidationError(where, "script must start with *world setting*");
            out.world_setting = std::string(raw.substr(1, raw.size() - 2));
        } else if (starred) {
            out.lines.emplace_back(StageAction{std::string(raw.substr(1, raw.size() - 2)), GeneratedByModel{}});
        } else {
            auto sep = raw.find(": ");
            if (sep == std::string_view::npos || sep == 0)
                throw ValidationError(where, "expected \"Name: text\" or \"*action*\"");
            out.lines.emplace_back(Dialogue{std::string(raw.substr(0, sep)), std::string(raw.substr(sep + 2))});
        }
        ++line_no;
        pos = end + 1;
    }
    return out;
}

json line_to_json(const ScriptLine& line)
{
    if (const auto* d = std::get_if<Dialogue>(&line))
        return {{"kind", "dialogue"}, {"speaker", d->speaker}, {"text", d->text}};
    const auto& a = std::get<StageAction>(line);
    json j = {{"kind", "stage_action"}, {"text", a.text}};
    if (const auto* inj = std::get_if<InjectedByTrigger>(&a.source))
        j["source"] = {{"kind", "trigger"}, {"trigger_id", inj->trigger_id}, {"action_index", inj->action_index}};
    else
        j["source"] = {{"kind", "model"}};
    return j;
}

ScriptLine line_from_json(const json& j)
{
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "dialogue")
        return Dialogue{j.at("speaker").get<std::string>(), j.at("text").get<std::string>()};
    if (kind != "stage_action")
        throw ValidationError("kind", "unknown line kind \"" + kind + "\"");
    StageAction a{j.at("text").get<std::string>(), GeneratedByModel{}};
    if (j.contains("source") && j.at("source").value("kind", "model") == "trigger")
        a.source = InjectedByTrigger{j.at("source").at("trigger_id").get<std::string>(),
                                     j.at("source").at("action_index").get<int>()};
    return a;
}

}  // namespace stagehand
