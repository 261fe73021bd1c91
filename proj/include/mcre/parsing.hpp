#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace mcre {

enum class TaskKind { numeric, multiple_choice };

/// A normalized final answer: a number, an option letter, or nothing.
struct InvalidAnswer {
  friend bool operator==(InvalidAnswer, InvalidAnswer) = default;
};
using AnswerValue = std::variant<InvalidAnswer, double, char>;

bool is_valid(const AnswerValue& value);
std::string format_answer(const AnswerValue& value);

struct ParsedAnswer {
  std::string reasoning_text;
  std::string final_raw;
  AnswerValue final_normalized;
  bool is_valid = false;
};

struct SplitResult {
  std::string reasoning;
  std::string final_raw;
  bool found = false;
};

/// Locates the last line carrying a `Final Answer:` marker (case-insensitive,
/// optional surrounding pipes). Without a marker, the whole text is reasoning.
SplitResult split_reasoning_and_final(std::string_view raw_text);

/// Strips commas, currency symbols, a trailing unit word and trailing
/// punctuation, then parses an integer, decimal or simple fraction `a/b`.
std::optional<double> normalize_numeric(std::string_view final_raw);

/// Extracts a single option letter A-H from forms such as `B`, `(b)`, `B)`,
/// `option B` or `The answer is C`. Several distinct letters are ambiguous.
std::optional<char> normalize_choice_letter(std::string_view final_raw);

/// Maps a self-reported confidence onto [0, 1]. Numbers are clamped, and
/// a fixed word scale covers `very low` .. `very high`.
std::optional<double> normalize_confidence(std::string_view raw);
std::optional<double> normalize_confidence(double raw);

/// Full parse of one raw response for the given task kind.
ParsedAnswer parse_response(std::string_view raw_text, TaskKind kind);

}  // namespace mcre
