#include "rlcer/rubric_schema.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstddef>

namespace rlcer {
namespace {

using ordered_json = nlohmann::ordered_json;

// Scans for balanced top-level {...} spans, skipping string literals and
// escapes. Spans nested inside an already matched span are not candidates.
std::vector<std::string_view> balanced_object_spans(std::string_view text) {
  std::vector<std::string_view> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') {
      ++i;
      continue;
    }
    std::size_t depth = 0;
    bool in_string = false;
    std::size_t j = i;
    std::size_t end = std::string_view::npos;
    for (; j < text.size(); ++j) {
      const char c = text[j];
      if (in_string) {
        if (c == '\\') {
          ++j;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          end = j;
          break;
        }
      }
    }
    if (end == std::string_view::npos) break;  // unbalanced tail
    spans.push_back(text.substr(i, end - i + 1));
    i = end + 1;
  }
  return spans;
}

int require_int(const ordered_json& obj, const char* key) {
  if (!obj.contains(key)) {
    throw SchemaViolation(std::string("missing field: ") + key);
  }
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) {
    throw SchemaViolation(std::string("field is not an integer: ") + key);
  }
  return v.get<int>();
}

std::string require_string(const ordered_json& obj, const char* key) {
  if (!obj.contains(key)) {
    throw SchemaViolation(std::string("missing field: ") + key);
  }
  const auto& v = obj.at(key);
  if (!v.is_string()) {
    throw SchemaViolation(std::string("field is not a string: ") + key);
  }
  return v.get<std::string>();
}

void reject_unknown_keys(const ordered_json& obj,
                         std::initializer_list<std::string_view> known,
                         const char* where) {
  for (const auto& item : obj.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw SchemaViolation(std::string("unknown field in ") + where + ": " +
                            item.key());
    }
  }
}

RubricDocument document_from_json(const ordered_json& root) {
  if (!root.is_object()) {
    throw SchemaViolation("document root is not a JSON object");
  }
  reject_unknown_keys(root,
                      {"question_domain", "rubrics", "maximum_score",
                       "minimum_score", "current_score"},
                      "document");

  RubricDocument doc;
  doc.question_domain = require_string(root, "question_domain");
  if (!root.contains("rubrics")) {
    throw SchemaViolation("missing field: rubrics");
  }
  const auto& arr = root.at("rubrics");
  if (!arr.is_array()) {
    throw SchemaViolation("field is not an array: rubrics");
  }
  for (const auto& item : arr) {
    if (!item.is_object()) {
      throw SchemaViolation("rubrics entry is not an object");
    }
    reject_unknown_keys(item, {"category", "criterion", "points"}, "criterion");
    RubricCriterion c;
    c.category = require_string(item, "category");
    c.criterion = require_string(item, "criterion");
    c.points = require_int(item, "points");
    doc.rubrics.push_back(std::move(c));
  }
  doc.maximum_score = require_int(root, "maximum_score");
  doc.minimum_score = require_int(root, "minimum_score");
  if (root.contains("current_score")) {
    const auto& v = root.at("current_score");
    if (!v.is_number_integer()) {
      throw SchemaViolation("field is not an integer: current_score");
    }
    doc.current_score = v.get<int>();
  }
  return doc;
}

}  // namespace

void validate_document(const RubricDocument& doc) {
  for (std::size_t k = 0; k < doc.rubrics.size(); ++k) {
    const auto& c = doc.rubrics[k];
    if (c.criterion.empty()) {
      throw InvariantViolation("criterion " + std::to_string(k) +
                               " has empty text");
    }
    if (c.points == 0 || c.points < -kMaxAbsPoints || c.points > kMaxAbsPoints) {
      throw InvariantViolation("criterion " + std::to_string(k) +
                               " has points outside {-5..-1, 1..5}: " +
                               std::to_string(c.points));
    }
  }
  if (doc.rubrics.size() < kMinCriteria || doc.rubrics.size() > kMaxCriteria) {
    throw InvariantViolation("criterion count " +
                             std::to_string(doc.rubrics.size()) +
                             " outside [5, 15]");
  }
  int positive_sum = 0;
  int negative_sum = 0;
  for (const auto& c : doc.rubrics) {
    (c.points > 0 ? positive_sum : negative_sum) += c.points;
  }
  if (doc.maximum_score != positive_sum) {
    throw InvariantViolation("maximum_score " +
                             std::to_string(doc.maximum_score) +
                             " != sum of positive points " +
                             std::to_string(positive_sum));
  }
  if (doc.minimum_score != negative_sum) {
    throw InvariantViolation("minimum_score " +
                             std::to_string(doc.minimum_score) +
                             " != sum of negative points " +
                             std::to_string(negative_sum));
  }
  if (doc.current_score) {
    const int cur = *doc.current_score;
    if (cur < doc.minimum_score || cur > doc.maximum_score) {
      throw InvariantViolation("current_score " + std::to_string(cur) +
                               " outside [minimum_score, maximum_score]");
    }
    // Strict bound: cur < (max+min)/2, compared in integers as 2*cur < max+min.
    if (2 * cur >= doc.maximum_score + doc.minimum_score) {
      throw InvariantViolation("current_score " + std::to_string(cur) +
                               " not below (maximum_score+minimum_score)/2");
    }
  }
}

RubricDocument parse_rubric_document(std::string_view text) {
  const auto spans = balanced_object_spans(text);
  std::vector<ordered_json> candidates;
  for (const auto& span : spans) {
    ordered_json parsed =
        ordered_json::parse(span, /*cb=*/nullptr, /*allow_exceptions=*/false);
    if (!parsed.is_discarded() && parsed.is_object()) {
      candidates.push_back(std::move(parsed));
    }
  }
  if (candidates.empty()) {
    throw NoDocumentFound("no JSON object found in input");
  }
  if (candidates.size() > 1) {
    throw NoDocumentFound("multiple JSON objects found in input (" +
                          std::to_string(candidates.size()) + ")");
  }
  RubricDocument doc = document_from_json(candidates.front());
  validate_document(doc);
  return doc;
}

std::string serialize_rubric_document(const RubricDocument& doc) {
  ordered_json root;
  root["question_domain"] = doc.question_domain;
  ordered_json arr = ordered_json::array();
  for (const auto& c : doc.rubrics) {
    ordered_json item;
    item["category"] = c.category;
    item["criterion"] = c.criterion;
    item["points"] = c.points;
    arr.push_back(std::move(item));
  }
  root["rubrics"] = std::move(arr);
  root["maximum_score"] = doc.maximum_score;
  root["minimum_score"] = doc.minimum_score;
  if (doc.current_score) {
    root["current_score"] = *doc.current_score;
  }
  return root.dump();
}

int format_reward(std::string_view text) noexcept {
  try {
    parse_rubric_document(text);
    return 1;
  } catch (...) {
    return 0;
  }
}

}  // namespace rlcer
