#pragma once

// JSONL corpus records: {"sample_id", "dataset", "ground_truth", "raw"}.

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "toolrl/transcript.hpp"

namespace toolrl {

struct CorpusRecord {
  std::string sample_id;
  std::string dataset;
  std::string ground_truth;
  std::string raw;
  nlohmann::json source = nlohmann::json::object();  // full input object, extra fields kept
};

struct CorpusLine {
  std::optional<CorpusRecord> record;
  std::string error;  // non-empty iff record is absent
};

inline CorpusLine parse_corpus_line(std::string_view line) {
  const auto doc = nlohmann::json::parse(line, nullptr, false);
  if (doc.is_discarded()) return {std::nullopt, "line is not valid JSON"};
  if (!doc.is_object()) return {std::nullopt, "line is not a JSON object"};
  CorpusRecord rec;
  for (auto [field, target] : {std::pair{"sample_id", &rec.sample_id}, std::pair{"dataset", &rec.dataset},
                               std::pair{"ground_truth", &rec.ground_truth}, std::pair{"raw", &rec.raw}}) {
    auto it = doc.find(field);
    if (it == doc.end() || !it->is_string())
      return {std::nullopt, std::string("missing or non-string field '") + field + "'"};
    *target = it->get<std::string>();
  }
  rec.source = doc;
  return {std::move(rec), {}};
}

inline nlohmann::json to_json(const CorpusRecord& rec) {
  nlohmann::json j = rec.source.is_object() ? rec.source : nlohmann::json::object();
  j["sample_id"] = rec.sample_id;
  j["dataset"] = rec.dataset;
  j["ground_truth"] = rec.ground_truth;
  j["raw"] = rec.raw;
  return j;
}

/// Serializes one JSON value as a single JSONL line. Invalid UTF-8 is replaced.
inline void write_jsonl(std::ostream& out, const nlohmann::json& j) {
  out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

inline Transcript parse_record(const CorpusRecord& rec, const ToolRegistry& registry) {
  Transcript t = parse_transcript(rec.raw, registry);
  t.sample_id = rec.sample_id;
  t.dataset = rec.dataset;
  t.ground_truth = rec.ground_truth;
  return t;
}

/// Calls `fn(line_number, CorpusLine)` for every non-blank line.
template <typename Fn>
void for_each_corpus_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    fn(number, parse_corpus_line(line));
  }
}

}  // namespace toolrl
