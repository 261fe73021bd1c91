#include "mcre/parsing.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <vector>

namespace mcre {
namespace {

constexpr std::string_view kMarker = "final answer:";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) tokens.push_back(s.substr(start, i - start));
  }
  return tokens;
}

bool is_trailing_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '|';
}

std::string_view strip_trailing_punct(std::string_view s) {
  s = trim(s);
  while (!s.empty() && (is_trailing_punct(s.back()) || is_space(s.back()))) s.remove_suffix(1);
  return s;
}

std::string remove_currency_and_commas(std::string_view s) {
  static constexpr std::array<std::string_view, 5> kCurrency = {"$", "\xE2\x82\xAC", "\xC2\xA3",
                                                                "\xC2\xA5", "\xE2\x82\xB9"};
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    bool skipped = false;
    for (auto sym : kCurrency) {
      if (s.substr(i, sym.size()) == sym) {
        i += sym.size();
        skipped = true;
        break;
      }
    }
    if (skipped) continue;
    if (s[i] != ',') out.push_back(s[i]);
    ++i;
  }
  return out;
}

bool all_alpha(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalpha(c) != 0; });
}

std::optional<double> parse_plain_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  bool negative = false;
  if (s.front() == '+' || s.front() == '-') {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (s.empty() || !(std::isdigit(static_cast<unsigned char>(s.front())) || s.front() == '.'))
    return std::nullopt;
  bool any_digit = false;
  for (char c : s) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      any_digit = true;
    } else if (c != '.' && c != 'e' && c != 'E' && c != '+' && c != '-') {
      return std::nullopt;
    }
  }
  if (!any_digit) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return negative ? -value : value;
}

std::optional<double> parse_fraction(std::string_view s) {
  const auto slash = s.find('/');
  if (slash == std::string_view::npos || s.find('/', slash + 1) != std::string_view::npos)
    return std::nullopt;
  const auto num = s.substr(0, slash);
  const auto den = s.substr(slash + 1);
  const auto digits_only = [](std::string_view t) {
    return !t.empty() && std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
  };
  std::string_view num_digits = num;
  bool negative = false;
  if (!num_digits.empty() && (num_digits.front() == '-' || num_digits.front() == '+')) {
    negative = num_digits.front() == '-';
    num_digits.remove_prefix(1);
  }
  if (!digits_only(num_digits) || !digits_only(den)) return std::nullopt;
  const auto a = parse_plain_number(num_digits);
  const auto b = parse_plain_number(den);
  if (!a || !b || *b == 0.0) return std::nullopt;
  const double v = *a / *b;
  return negative ? -v : v;
}

std::optional<char> as_option_letter(char c) {
  const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper >= 'A' && upper <= 'H') return upper;
  return std::nullopt;
}

}  // namespace

bool is_valid(const AnswerValue& value) { return !std::holds_alternative<InvalidAnswer>(value); }

std::string format_answer(const AnswerValue& value) {
  if (const auto* d = std::get_if<double>(&value)) {
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), *d);
    return std::string(buf.data(), ptr);
  }
  if (const auto* c = std::get_if<char>(&value)) return std::string(1, *c);
  return "invalid";
}

SplitResult split_reasoning_and_final(std::string_view raw_text) {
  const std::string lowered = to_lower(raw_text);
  // Find the start of the last line that carries the marker.
  std::size_t line_start = 0;
  std::optional<std::size_t> hit_line;
  std::size_t hit_pos = 0;
  while (line_start <= raw_text.size()) {
    auto line_end = raw_text.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = raw_text.size();
    const auto pos = lowered.substr(line_start, line_end - line_start).rfind(kMarker);
    if (pos != std::string::npos) {
      hit_line = line_start;
      hit_pos = line_start + pos;
    }
    if (line_end == raw_text.size()) break;
    line_start = line_end + 1;
  }

  SplitResult result;
  if (!hit_line) {
    result.reasoning = std::string(raw_text);
    return result;
  }
  result.found = true;
  auto line_end = raw_text.find('\n', hit_pos);
  if (line_end == std::string_view::npos) line_end = raw_text.size();

  std::string_view prefix = raw_text.substr(*hit_line, hit_pos - *hit_line);
  prefix = trim(prefix);
  while (!prefix.empty() && prefix.back() == '|') prefix.remove_suffix(1);
  std::string reasoning(trim(raw_text.substr(0, *hit_line)));
  prefix = trim(prefix);
  if (!prefix.empty()) {
    if (!reasoning.empty()) reasoning.push_back('\n');
    reasoning.append(prefix);
  }
  result.reasoning = std::move(reasoning);

  std::string_view final_part = raw_text.substr(hit_pos + kMarker.size(), line_end - hit_pos - kMarker.size());
  final_part = trim(final_part);
  while (!final_part.empty() && (final_part.back() == '|' || is_space(final_part.back())))
    final_part.remove_suffix(1);
  while (!final_part.empty() && (final_part.front() == '|' || is_space(final_part.front())))
    final_part.remove_prefix(1);
  result.final_raw = std::string(final_part);
  return result;
}

std::optional<double> normalize_numeric(std::string_view final_raw) {
  std::string cleaned = remove_currency_and_commas(trim(final_raw));
  std::string_view s = strip_trailing_punct(cleaned);
  auto tokens = split_whitespace(s);
  if (tokens.size() >= 2 && all_alpha(tokens.back())) tokens.pop_back();
  if (tokens.size() != 1) return std::nullopt;
  std::string_view token = strip_trailing_punct(tokens.front());
  if (token.find('/') != std::string_view::npos) return parse_fraction(token);
  return parse_plain_number(token);
}

std::optional<char> normalize_choice_letter(std::string_view final_raw) {
  std::string_view t = trim(final_raw);
  {
    std::string_view core = t;
    while (!core.empty() && std::string_view("([{'\"").find(core.front()) != std::string_view::npos)
      core.remove_prefix(1);
    while (!core.empty() && std::string_view(")]}.:,;'\"!?|").find(core.back()) != std::string_view::npos)
      core.remove_suffix(1);
    core = trim(core);
    if (core.size() == 1) return as_option_letter(core.front());
  }

  std::set<char> found;
  const auto tokens = split_whitespace(t);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string_view tok = tokens[i];
    while (!tok.empty() && std::string_view(".,:;!?'\"").find(tok.back()) != std::string_view::npos)
      tok.remove_suffix(1);
    if (tok.empty()) continue;
    if (tok.size() == 3 && tok.front() == '(' && tok.back() == ')') {
      if (auto l = as_option_letter(tok[1])) found.insert(*l);
      continue;
    }
    if (tok.size() == 2 && (tok.back() == ')' || tok.front() == '(')) {
      const char c = tok.back() == ')' ? tok.front() : tok.back();
      if (auto l = as_option_letter(c)) found.insert(*l);
      continue;
    }
    if (tok.size() == 1) {
      const char c = tok.front();
      const bool upper = std::isupper(static_cast<unsigned char>(c)) != 0;
      bool after_keyword = false;
      if (i > 0) {
        const std::string prev = to_lower(tokens[i - 1]);
        after_keyword = prev == "option" || prev == "choice" || prev == "letter";
      }
      if (upper || after_keyword) {
        if (auto l = as_option_letter(c)) found.insert(*l);
      }
    }
  }
  if (found.size() == 1) return *found.begin();
  return std::nullopt;
}

std::optional<double> normalize_confidence(double raw) {
  if (!std::isfinite(raw)) return std::nullopt;
  return std::clamp(raw, 0.0, 1.0);
}

std::optional<double> normalize_confidence(std::string_view raw) {
  std::string text = to_lower(strip_trailing_punct(raw));
  // Collapse internal whitespace so "very  high" matches.
  std::string collapsed;
  for (auto tok : split_whitespace(text)) {
    if (!collapsed.empty()) collapsed.push_back(' ');
    collapsed.append(tok);
  }
  static constexpr std::array<std::pair<std::string_view, double>, 5> kWords = {{
      {"very low", 0.1}, {"low", 0.3}, {"medium", 0.5}, {"high", 0.8}, {"very high", 0.95}}};
  for (const auto& [word, value] : kWords)
    if (collapsed == word) return value;

  std::string_view number = collapsed;
  bool percent = false;
  if (!number.empty() && number.back() == '%') {
    percent = true;
    number.remove_suffix(1);
    number = trim(number);
  }
  auto value = parse_plain_number(number);
  if (!value) return std::nullopt;
  return normalize_confidence(percent ? *value / 100.0 : *value);
}

ParsedAnswer parse_response(std::string_view raw_text, TaskKind kind) {
  auto split = split_reasoning_and_final(raw_text);
  ParsedAnswer parsed;
  parsed.reasoning_text = std::move(split.reasoning);
  parsed.final_raw = std::move(split.final_raw);
  parsed.final_normalized = InvalidAnswer{};
  if (split.found) {
    if (kind == TaskKind::numeric) {
      if (auto v = normalize_numeric(parsed.final_raw)) parsed.final_normalized = *v;
    } else {
      if (auto l = normalize_choice_letter(parsed.final_raw)) parsed.final_normalized = *l;
    }
  }
  parsed.is_valid = is_valid(parsed.final_normalized);
  return parsed;
}

}  // namespace mcre
