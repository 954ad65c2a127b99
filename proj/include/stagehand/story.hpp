#pragma once

// Authored story model: characters, triggers, the story definition document,
// and the play-script line types shared by prompts, transcripts and exports.

#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace stagehand {

struct Character {
    std::string name;
    std::string description;      // short, player-visible
    std::string behavior_prompt;  // personality and behavior, fed to the model

    bool operator==(const Character&) const = default;
};

enum class TriggerType { Basic, Ending };

std::string_view to_string(TriggerType type);

struct Trigger {
    std::string id;
    std::string condition;  // empty only for pure fallback triggers
    std::vector<std::string> actions;
    TriggerType type = TriggerType::Basic;
    bool repeatable = false;
    std::optional<int> fallback_k;
    int cooldown_turns = 0;
    std::set<std::string> requires_fired;
    std::set<std::string> requires_not_fired;

    bool is_fallback() const { return fallback_k.has_value(); }
    bool is_pure_fallback() const { return fallback_k.has_value() && condition.empty(); }

    bool operator==(const Trigger&) const = default;
};

struct StoryDefinition {
    std::string title;
    std::string world_setting;
    std::vector<Character> characters;
    std::vector<Trigger> triggers;  // order is priority, earlier first
    std::optional<std::string> player_character;

    const Character* find_character(std::string_view name) const;
    const Trigger* find_trigger(std::string_view id) const;
    std::optional<std::size_t> trigger_index(std::string_view id) const;

    bool operator==(const StoryDefinition&) const = default;
};

// ---------------------------------------------------------------------------
// Script lines

struct Dialogue {
    std::string speaker;
    std::string text;

    bool operator==(const Dialogue&) const = default;
};

struct GeneratedByModel {
    bool operator==(const GeneratedByModel&) const = default;
};

struct InjectedByTrigger {
    std::string trigger_id;
    int action_index = 0;

    bool operator==(const InjectedByTrigger&) const = default;
};

using ActionSource = std::variant<GeneratedByModel, InjectedByTrigger>;

struct StageAction {
    std::string text;
    ActionSource source = GeneratedByModel{};

    bool is_injected() const { return std::holds_alternative<InjectedByTrigger>(source); }
    bool operator==(const StageAction&) const = default;
};

// The world setting is not a line: it always heads the rendered script.
using ScriptLine = std::variant<Dialogue, StageAction>;

inline bool is_dialogue(const ScriptLine& line) { return std::holds_alternative<Dialogue>(line); }

// ---------------------------------------------------------------------------
// Errors and warnings

class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string path, std::string reason);

    const std::string& path() const { return path_; }
    const std::string& reason() const { return reason_; }

private:
    std::string path_;
    std::string reason_;
};

struct Warning {
    std::string code;  // "unfireable-gate", "ending-extra-actions", "no-player-character"
    std::string trigger_id;
    std::string message;
};

// ---------------------------------------------------------------------------
// Operations

// Throws ValidationError. Applies defaults and assigns "trigger-<index>" ids.
StoryDefinition parse_story_definition(std::string_view document);
StoryDefinition story_from_json(const nlohmann::json& doc);
nlohmann::json story_to_json(const StoryDefinition& def);

// Re-checks every invariant of an in-memory definition; throws ValidationError.
void check_story_invariants(const StoryDefinition& def);

std::vector<Warning> validate_story(const StoryDefinition& def);

// Empty string when the name is acceptable, otherwise the reason.
std::string character_name_problem(std::string_view name);

// Checks a line against the story's cast and the single-line text rule.
void check_script_line(const StoryDefinition& def, const ScriptLine& line);

std::string render_line(const ScriptLine& line);
std::string render_script(std::string_view world_setting, const std::vector<ScriptLine>& lines);

// Inverse of render_script for scripts whose lines obey the invariants.
// Injected stage actions come back as GeneratedByModel (the text format does
// not carry provenance).
struct ParsedScript {
    std::string world_setting;
    std::vector<ScriptLine> lines;
};
ParsedScript parse_script(std::string_view text);

nlohmann::json line_to_json(const ScriptLine& line);
ScriptLine line_from_json(const nlohmann::json& j);

std::string trim(std::string_view s);

}  // namespace stagehand
