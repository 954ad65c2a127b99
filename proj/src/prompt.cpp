#include "stagehand/prompt.hpp"

#include <algorithm>
#include <cctype>

namespace stagehand {

std::string build_prompt_context(const StoryDefinition& def, const std::vector<ScriptLine>& lines)
{
    std::string out;
    out += kPromptHeader;
    out += '\n';
    for (const auto& c : def.characters) {
        out += c.name;
        out += ": ";
        out += c.behavior_prompt;
        out += '\n';
    }
    out += '\n';
    out += kScriptSoFar;
    out += '\n';
    out += render_script(def.world_setting, lines);
    out += "\n\n";
    return out;
}

SimulationPrompt build_simulation_prompt(const StoryDefinition& def, const std::vector<ScriptLine>& lines)
{
    std::string text = build_prompt_context(def, lines);
    text += kSuggestInstruction;
    return {std::move(text)};
}

TriggerCheckPrompt build_trigger_check_prompt(const StoryDefinition& def, const std::vector<ScriptLine>& lines,
                                              const Trigger& trigger)
{
    if (trigger.condition.empty())
        throw std::invalid_argument("trigger \"" + trigger.id + "\" has no condition to check");
    std::string text = build_prompt_context(def, lines);
    text += kDecideInstruction;
    text += '\n';
    text += trigger.condition;
    text += "\n\n";
    text += kYesNoInstruction;
    return {std::move(text)};
}

// ---------------------------------------------------------------------------

LineParseError::LineParseError(Kind kind, std::string detail)
    : std::runtime_error(std::string(to_string(kind)) + (detail.empty() ? "" : ": " + detail)),
      kind_(kind),
      detail_(std::move(detail))
{
}

std::string_view to_string(LineParseError::Kind kind)
{
    switch (kind) {
    case LineParseError::Kind::NoTagFound:
        return "NoTagFound";
    case LineParseError::Kind::EmptyLine:
        return "EmptyLine";
    case LineParseError::Kind::UnknownSpeaker:
        return "UnknownSpeaker";
    case LineParseError::Kind::MalformedLine:
        return "MalformedLine";
    }
    return "?";
}

namespace {

// Newline-bearing whitespace runs become a single space.
std::string flatten(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        if (s[i] == '\n' || s[i] == '\r') {
            while (!out.empty() && (out.back() == ' ' || out.back() == '\t'))
                out.pop_back();
            while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i])))
                ++i;
            out += ' ';
        } else {
            out += s[i++];
        }
    }
    return out;
}

}  // namespace

ScriptLine parse_line_response(const StoryDefinition& def, std::string_view raw)
{
    constexpr std::string_view open = "<line>";
    constexpr std::string_view close = "</line>";
    auto begin = raw.find(open);
    if (begin == std::string_view::npos)
        throw LineParseError(LineParseError::Kind::NoTagFound, "");
    begin += open.size();
    auto end = raw.find(close, begin);
    if (end == std::string_view::npos)
        throw LineParseError(LineParseError::Kind::NoTagFound, "unterminated <line> tag");

    std::string body = trim(flatten(trim(raw.substr(begin, end - begin))));
    if (body.empty())
        throw LineParseError(LineParseError::Kind::EmptyLine, "");

    if (body.front() == '*') {
        if (body.size() < 2 || body.back() != '*')
            throw LineParseError(LineParseError::Kind::MalformedLine, body);
        std::string text = trim(std::string_view(body).substr(1, body.size() - 2));
        if (text.empty())
            throw LineParseError(LineParseError::Kind::EmptyLine, body);
        return StageAction{std::move(text), GeneratedByModel{}};
    }

    auto colon = body.find(':');
    if (colon == std::string::npos)
        throw LineParseError(LineParseError::Kind::MalformedLine, body);
    std::string speaker = trim(std::string_view(body).substr(0, colon));
    std::string text = trim(std::string_view(body).substr(colon + 1));
    if (speaker.empty())
        throw LineParseError(LineParseError::Kind::MalformedLine, body);
    if (!def.find_character(speaker))
        throw LineParseError(LineParseError::Kind::UnknownSpeaker, speaker);
    if (text.empty())
        throw LineParseError(LineParseError::Kind::EmptyLine, body);
    return Dialogue{std::move(speaker), std::move(text)};
}

AmbiguousAnswer::AmbiguousAnswer(std::string raw)
    : std::runtime_error("ambiguous YES/NO answer: \"" + raw + "\""), raw_(std::move(raw))
{
}

bool parse_yes_no(std::string_view raw)
{
    std::string s = trim(raw);
    while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.back())))
        s.pop_back();
    s = trim(s);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    if (s == "YES")
        return true;
    if (s == "NO")
        return false;
    throw AmbiguousAnswer(std::string(raw));
}

}  // namespace stagehand
