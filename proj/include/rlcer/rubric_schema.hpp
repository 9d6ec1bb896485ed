#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rlcer {

// One checkable criterion with an integer importance score. Positive points
// reward a merit, negative points penalize a flaw; zero is never allowed.
struct RubricCriterion {
  std::string category;
  std::string criterion;
  int points = 0;

  bool operator==(const RubricCriterion&) const = default;
};

// A rubricator output document. maximum_score / minimum_score are the sums
// of the positive / negative points and must match the criteria exactly.
// current_score is the document's self-assessment of the conditioning
// response; it may be absent (its absence is the parse-side signal that the
// generator skipped self-scoring).
struct RubricDocument {
  std::string question_domain;
  std::vector<RubricCriterion> rubrics;
  int maximum_score = 0;
  int minimum_score = 0;
  std::optional<int> current_score;

  bool operator==(const RubricDocument&) const = default;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// No single JSON object could be located in the input (none found, or more
// than one candidate — ambiguous extraction is rejected).
struct NoDocumentFound : ParseError {
  using ParseError::ParseError;
};
// A required field is missing, has the wrong type, or an unknown field is
// present.
struct SchemaViolation : ParseError {
  using ParseError::ParseError;
};
// A domain invariant is violated; the message names the first broken rule.
struct InvariantViolation : ParseError {
  using ParseError::ParseError;
};

inline constexpr std::size_t kMinCriteria = 5;
inline constexpr std::size_t kMaxCriteria = 15;
inline constexpr int kMaxAbsPoints = 5;

// Throws InvariantViolation naming the first violated rule. Check order:
// per-criterion rules in document order (non-empty text, point range),
// criterion count, score sums, current_score bounds.
void validate_document(const RubricDocument& doc);

// Locates the single JSON object in arbitrary text (surrounding prose and
// fenced code blocks are tolerated), validates it against the document
// schema and all invariants, and returns the document with criterion order
// preserved.
RubricDocument parse_rubric_document(std::string_view text);

// Canonical compact JSON emission with fixed key order. Injective on valid
// documents; parse(serialize(d)) == d and serialize∘parse is a fixed point
// on canonical text.
std::string serialize_rubric_document(const RubricDocument& doc);

// 1 iff parse_rubric_document succeeds on the text, else 0. Never throws.
int format_reward(std::string_view text) noexcept;

}  // namespace rlcer
