#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rlcer/rubric_schema.hpp"
#include "rlcer/synth_env.hpp"

namespace rlcer {

struct VerifierError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FeatureOutOfRange : VerifierError {
  using VerifierError::VerifierError;
};
struct Transport : VerifierError {
  using VerifierError::VerifierError;
};
struct ProtocolViolation : VerifierError {
  using VerifierError::VerifierError;
};
struct ScoreMismatch : VerifierError {
  using VerifierError::VerifierError;
};

// Synthetic stand-in for a natural-language criterion: a single-feature
// presence predicate. require_present criteria carry positive points,
// penalize_present criteria carry negative points; both are judged by the
// same presence test (a penalty criterion is "satisfied" when the flaw is
// present).
enum class Polarity { require_present, penalize_present };

struct SyntheticCriterion {
  std::size_t target_feature = 0;
  Polarity polarity = Polarity::require_present;

  bool operator==(const SyntheticCriterion&) const = default;
};

// 1 iff the CoT's bit at the criterion's target feature is set.
int judge_local(const SyntheticCriterion& criterion, const FeatureCoT& cot);

// Deterministic judge over synthetic criteria with optional i.i.d. flip
// noise, keyed so results are independent of batch order and parallelism.
class LocalVerifier {
 public:
  LocalVerifier() = default;
  LocalVerifier(double flip_noise, std::uint64_t noise_seed)
      : flip_noise_(flip_noise), noise_seed_(noise_seed) {}

  std::vector<std::uint8_t> judge(std::span<const SyntheticCriterion> rubrics,
                                  const FeatureCoT& cot) const;

 private:
  double flip_noise_ = 0.0;
  std::uint64_t noise_seed_ = 0;
};

// Wire types for the remote verifier protocol. Rubric order in the request
// is the judgment order.
struct VerifierRequest {
  std::string question;
  std::string response;
  std::vector<RubricCriterion> rubrics;
};

struct VerifierResponse {
  std::vector<std::uint8_t> judgement;
  int final_score = 0;
};

struct RemoteVerifierConfig {
  std::string base_url;          // e.g. "http://127.0.0.1:8700"
  std::string path = "/judge";
  int max_attempts = 3;
  int timeout_seconds = 10;
};

std::string verifier_request_json(const VerifierRequest& request);
// Parses {"judgement": [...], "final_score": n} and checks both response
// invariants against the request. Throws ProtocolViolation / ScoreMismatch.
VerifierResponse parse_verifier_response(std::string_view body,
                                         const VerifierRequest& request);

// POSTs the request and validates the reply; retries up to
// config.max_attempts on transport failure or invariant violation.
VerifierResponse judge_remote(const VerifierRequest& request,
                              const RemoteVerifierConfig& config);

struct JudgmentRow {
  std::vector<std::uint8_t> bits;
  bool failed = false;  // all-zero row produced by a failed request
};

struct LocalJob {
  std::vector<SyntheticCriterion> rubrics;
  FeatureCoT cot;
};

// Both overloads preserve request order in the result regardless of
// completion order; a failed request yields an all-zero flagged row.
std::vector<JudgmentRow> judge_batch(std::span<const LocalJob> jobs,
                                     const LocalVerifier& verifier,
                                     int parallelism);
std::vector<JudgmentRow> judge_batch(std::span<const VerifierRequest> requests,
                                     const RemoteVerifierConfig& config,
                                     int parallelism);

// Canonical textual encoding of synthetic criteria, used when rendering
// rubric documents and when mapping parsed documents back onto feature
// predicates. Unrecognized text maps to nullopt.
std::string criterion_text(const SyntheticCriterion& criterion);
std::optional<SyntheticCriterion> criterion_from_text(std::string_view text,
                                                      std::size_t feature_dim);

std::string question_text(const SynthQuestion& q);
std::string cot_text(const FeatureCoT& cot);

}  // namespace rlcer
