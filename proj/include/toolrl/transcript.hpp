#pragma once

// Tagged rollout transcripts: parsing, answer extraction and serialization.
//
// A rollout is free text in which the agent emits phase regions delimited by
// five exact tags:
//
//   <think_reasoning>  <tool_call>  <tool_response>  <think_perception>  <answer>
//
// Parsing is total. Anything that is not a well-formed known region (stray
// text, hallucinated tags, unclosed regions) becomes a Noise segment.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace toolrl {

enum class SegmentKind { Reasoning, ToolCall, ToolResponse, Perception, Answer, Noise };

inline constexpr std::array<SegmentKind, 5> kTaggedKinds = {
    SegmentKind::Reasoning, SegmentKind::ToolCall, SegmentKind::ToolResponse,
    SegmentKind::Perception, SegmentKind::Answer};

constexpr std::string_view tag_name(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Reasoning: return "think_reasoning";
    case SegmentKind::ToolCall: return "tool_call";
    case SegmentKind::ToolResponse: return "tool_response";
    case SegmentKind::Perception: return "think_perception";
    case SegmentKind::Answer: return "answer";
    case SegmentKind::Noise: return "";
  }
  return "";
}

constexpr std::string_view kind_label(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Reasoning: return "Reasoning";
    case SegmentKind::ToolCall: return "ToolCall";
    case SegmentKind::ToolResponse: return "ToolResponse";
    case SegmentKind::Perception: return "Perception";
    case SegmentKind::Answer: return "Answer";
    case SegmentKind::Noise: return "Noise";
  }
  return "";
}

/// Set of tool names an agent may legitimately call.
using ToolRegistry = std::set<std::string, std::less<>>;

inline ToolRegistry default_tool_registry() {
  return {"captioning_tool", "ocr_tool", "detection_tool", "perception_tool"};
}

struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const ByteSpan&, const ByteSpan&) = default;
};

/// Decoded body of a <tool_call> region.
struct ToolCallPayload {
  std::string tool_name;
  nlohmann::json arguments = nlohmann::json::object();
  // Parsed as exactly one JSON object with string "name" and object "arguments".
  bool syntactically_valid = false;
  // syntactically_valid and tool_name is in the registry.
  bool registered = false;
};

/// Decoded body of a <tool_response> region.
struct ToolResponsePayload {
  bool success = false;
  std::string message;
};

struct Segment {
  SegmentKind kind = SegmentKind::Noise;
  std::string content;
  ByteSpan span;
  std::optional<ToolCallPayload> call;          // set iff kind == ToolCall
  std::optional<ToolResponsePayload> response;  // set iff kind == ToolResponse
};

struct Transcript {
  std::vector<Segment> segments;
  std::string sample_id;
  std::string dataset;
  std::string ground_truth;
  std::size_t raw_length = 0;

  std::size_t count(SegmentKind kind) const {
    return static_cast<std::size_t>(std::count_if(
        segments.begin(), segments.end(), [kind](const Segment& s) { return s.kind == kind; }));
  }
};

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string open_tag(SegmentKind kind) { return "<" + std::string(tag_name(kind)) + ">"; }
inline std::string close_tag(SegmentKind kind) { return "</" + std::string(tag_name(kind)) + ">"; }

struct OpenTagHit {
  std::size_t pos;
  SegmentKind kind;
};

// Earliest known open tag starting at or after `from`.
inline std::optional<OpenTagHit> next_open_tag(std::string_view raw, std::size_t from) {
  std::optional<OpenTagHit> best;
  for (SegmentKind kind : kTaggedKinds) {
    const std::size_t p = raw.find(open_tag(kind), from);
    if (p != std::string_view::npos && (!best || p < best->pos)) best = OpenTagHit{p, kind};
  }
  return best;
}

}  // namespace detail

inline ToolCallPayload parse_tool_call_payload(std::string_view body, const ToolRegistry& registry) {
  ToolCallPayload payload;
  const auto doc = nlohmann::json::parse(detail::trim(body), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) return payload;
  if (auto it = doc.find("name"); it != doc.end() && it->is_string()) {
    payload.tool_name = it->get<std::string>();
    if (auto args = doc.find("arguments"); args != doc.end() && args->is_object()) {
      payload.arguments = *args;
      payload.syntactically_valid = true;
      payload.registered = registry.contains(payload.tool_name);
    }
  }
  return payload;
}

inline ToolResponsePayload parse_tool_response_payload(std::string_view body) {
  const auto doc = nlohmann::json::parse(detail::trim(body), nullptr, false);
  if (!doc.is_discarded() && doc.is_object()) {
    auto ok = doc.find("success");
    auto msg = doc.find("message");
    if (ok != doc.end() && ok->is_boolean() && msg != doc.end() && msg->is_string())
      return {ok->get<bool>(), msg->get<std::string>()};
  }
  return {false, std::string(body)};
}

/// Parses raw rollout text. Never throws on malformed input.
///
/// A known open tag starts a candidate region. The region is accepted when its
/// matching close tag appears before any other known open tag; otherwise the
/// candidate (up to the interrupting tag, or to end of text) is left unclaimed.
/// Unclaimed bytes between accepted regions form Noise segments, trimmed of
/// surrounding whitespace; whitespace-only gaps produce no segment.
inline Transcript parse_transcript(std::string_view raw, const ToolRegistry& registry) {
  struct Claim {
    SegmentKind kind;
    std::size_t begin, content_begin, content_end, end;
  };
  std::vector<Claim> claims;

  std::size_t pos = 0;
  while (auto open = detail::next_open_tag(raw, pos)) {
    const std::size_t content_begin = open->pos + detail::open_tag(open->kind).size();
    const std::string close = detail::close_tag(open->kind);
    const std::size_t close_pos = raw.find(close, content_begin);
    const auto interrupt = detail::next_open_tag(raw, content_begin);
    if (close_pos != std::string_view::npos && (!interrupt || close_pos < interrupt->pos)) {
      claims.push_back({open->kind, open->pos, content_begin, close_pos, close_pos + close.size()});
      pos = close_pos + close.size();
    } else if (interrupt) {
      pos = interrupt->pos;
    } else {
      break;
    }
  }

  Transcript t;
  t.raw_length = raw.size();
  auto emit_noise = [&](std::size_t from, std::size_t to) {
    while (from < to && detail::is_space(raw[from])) ++from;
    while (to > from && detail::is_space(raw[to - 1])) --to;
    if (from < to)
      t.segments.push_back({SegmentKind::Noise, std::string(raw.substr(from, to - from)), {from, to}, {}, {}});
  };

  std::size_t cursor = 0;
  for (const Claim& c : claims) {
    emit_noise(cursor, c.begin);
    Segment seg{c.kind, std::string(raw.substr(c.content_begin, c.content_end - c.content_begin)),
                {c.begin, c.end}, {}, {}};
    if (c.kind == SegmentKind::ToolCall) seg.call = parse_tool_call_payload(seg.content, registry);
    if (c.kind == SegmentKind::ToolResponse) seg.response = parse_tool_response_payload(seg.content);
    t.segments.push_back(std::move(seg));
    cursor = c.end;
  }
  emit_noise(cursor, raw.size());
  return t;
}

namespace detail {

// Contents of the last \boxed{...} with balanced braces, or the whole text.
inline std::string_view boxed_content(std::string_view text) {
  constexpr std::string_view marker = "\\boxed{";
  const std::size_t at = text.rfind(marker);
  if (at == std::string_view::npos) return text;
  const std::size_t start = at + marker.size();
  int depth = 1;
  for (std::size_t i = start; i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0) return text.substr(start, i - start);
  }
  return text.substr(start);
}

// Drops LaTeX command names and braces so "\text{A}" reads as "A".
inline std::string strip_latex(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\') {
      while (i + 1 < s.size() && std::isalpha(static_cast<unsigned char>(s[i + 1]))) ++i;
      continue;
    }
    if (s[i] == '{' || s[i] == '}') continue;
    out.push_back(s[i]);
  }
  return out;
}

inline bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
inline char upper(char c) { return static_cast<char>(std::toupper(static_cast<unsigned char>(c))); }

}  // namespace detail

/// Option letter from an answer body: "(X)" anywhere, else a leading "X)",
/// else a body that is a single letter. Case-insensitive; returns uppercase.
inline std::optional<char> extract_option_letter(std::string_view answer_body) {
  const std::string text = detail::strip_latex(detail::boxed_content(answer_body));
  for (std::size_t i = 0; i + 2 < text.size(); ++i) {
    if (text[i] == '(' && detail::is_letter(text[i + 1]) && text[i + 2] == ')')
      return detail::upper(text[i + 1]);
  }
  const std::string_view s = detail::trim(text);
  if (s.size() >= 2 && detail::is_letter(s[0]) && s[1] == ')') return detail::upper(s[0]);
  if (s.size() == 1 && detail::is_letter(s[0])) return detail::upper(s[0]);
  return std::nullopt;
}

/// Letter of the last Answer segment, if any.
inline std::optional<char> extract_answer(const Transcript& t) {
  for (auto it = t.segments.rbegin(); it != t.segments.rend(); ++it) {
    if (it->kind == SegmentKind::Answer) return extract_option_letter(it->content);
  }
  return std::nullopt;
}

inline std::string render_segment(const Segment& s) {
  if (s.kind == SegmentKind::Noise) return s.content;
  return detail::open_tag(s.kind) + s.content + detail::close_tag(s.kind);
}

/// Canonical text form: segments joined by newlines.
inline std::string serialize_transcript(const Transcript& t) {
  std::string out;
  for (std::size_t i = 0; i < t.segments.size(); ++i) {
    if (i) out.push_back('\n');
    out += render_segment(t.segments[i]);
  }
  return out;
}

/// One letter per non-noise segment: R C S P A.
inline std::string kind_string(const Transcript& t) {
  std::string out;
  for (const Segment& s : t.segments) {
    switch (s.kind) {
      case SegmentKind::Reasoning: out.push_back('R'); break;
      case SegmentKind::ToolCall: out.push_back('C'); break;
      case SegmentKind::ToolResponse: out.push_back('S'); break;
      case SegmentKind::Perception: out.push_back('P'); break;
      case SegmentKind::Answer: out.push_back('A'); break;
      case SegmentKind::Noise: break;
    }
  }
  return out;
}

}  // namespace toolrl
