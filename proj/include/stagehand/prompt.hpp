#pragma once

// Builds the two model prompts (next-line simulation and single-trigger check)
// and parses the model's replies.

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "stagehand/story.hpp"

namespace stagehand {

inline constexpr std::string_view kPromptHeader =
    "We're writing a story in the form of a play script. The story has these characters:";
inline constexpr std::string_view kScriptSoFar = "So far, the script is as follows:";
inline constexpr std::string_view kSuggestInstruction =
    "Suggest a possible next line for the script. Wrap it in <line></line> tags.";
inline constexpr std::string_view kDecideInstruction =
    "Decide whether the following condition has been met in the script so far:";
inline constexpr std::string_view kYesNoInstruction = "Return either the single token YES or NO, nothing else.";

struct SimulationPrompt {
    std::string text;
};

struct TriggerCheckPrompt {
    std::string text;
};

// Shared context: header, cast, the script so far and a trailing blank line.
// Both prompts start with exactly this text.
std::string build_prompt_context(const StoryDefinition& def, const std::vector<ScriptLine>& lines);

SimulationPrompt build_simulation_prompt(const StoryDefinition& def, const std::vector<ScriptLine>& lines);

// Precondition: trigger.condition is non-empty (std::invalid_argument otherwise).
TriggerCheckPrompt build_trigger_check_prompt(const StoryDefinition& def, const std::vector<ScriptLine>& lines,
                                              const Trigger& trigger);

class LineParseError : public std::runtime_error {
public:
    enum class Kind { NoTagFound, EmptyLine, UnknownSpeaker, MalformedLine };

    LineParseError(Kind kind, std::string detail);

    Kind kind() const { return kind_; }
    const std::string& detail() const { return detail_; }

private:
    Kind kind_;
    std::string detail_;
};

std::string_view to_string(LineParseError::Kind kind);

// Takes the first <line>...</line> span and ignores everything else.
// Throws LineParseError.
ScriptLine parse_line_response(const StoryDefinition& def, std::string_view raw);

class AmbiguousAnswer : public std::runtime_error {
public:
    explicit AmbiguousAnswer(std::string raw);

    const std::string& raw() const { return raw_; }

private:
    std::string raw_;
};

// Case-insensitive YES/NO after trimming whitespace and trailing punctuation.
// Throws AmbiguousAnswer.
bool parse_yes_no(std::string_view raw);

}  // namespace stagehand
