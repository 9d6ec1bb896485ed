#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlcer/errors.hpp"

namespace rlcer {

struct RewardError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct TooFewSamples : RewardError {
  using RewardError::RewardError;
};
struct ZeroRubrics : RewardError {
  using RewardError::RewardError;
};

enum class TrainMode {
  rlcer,
  rlvr_only,
  rubric_only,
  rubric_only_random,
  rlcer_no_evolving,
};

const char* to_string(TrainMode mode);
std::optional<TrainMode> train_mode_from_string(std::string_view name);

// Row n holds the binary rubric-satisfaction judgments of rollout n over
// the pooled rubric set of one question; column k belongs to one rubric,
// with its score and the index of the generation that proposed it.
struct JudgmentMatrix {
  std::size_t rollouts = 0;
  std::size_t rubric_count = 0;
  std::vector<std::uint8_t> entries;  // row-major rollouts × rubric_count
  std::vector<int> rubric_scores;
  std::vector<std::size_t> rubric_origin;

  std::uint8_t at(std::size_t row, std::size_t col) const {
    return entries[row * rubric_count + col];
  }
  void validate() const;  // throws DimensionMismatch / RewardError
};

struct OutcomeVector {
  std::vector<std::uint8_t> z;
};

struct ValidityMask {
  std::vector<std::uint8_t> valid;
  std::vector<std::optional<double>> correlations;  // nullopt = undefined

  std::size_t valid_count() const;
};

struct ReasonerReward {
  double outcome = 0.0;
  double cot = 0.0;
  double total = 0.0;
};

struct RubricatorReward {
  double evolving = 0.0;
  double format = 0.0;
  double total = 0.0;
};

// Sample Pearson correlation (population-std formulation); nullopt iff
// either vector is constant. Throws LengthMismatch / TooFewSamples.
std::optional<double> pearson(std::span<const double> v,
                              std::span<const double> z);
std::optional<double> pearson_binary(std::span<const std::uint8_t> v,
                                     std::span<const std::uint8_t> z);

// A rubric is valid iff its satisfaction column has a defined correlation
// with the outcome vector strictly above alpha (and is non-constant).
ValidityMask validity_mask(const JudgmentMatrix& judgments,
                           const OutcomeVector& outcomes, double alpha);

// Min–max normalized aggregate of satisfied valid-rubric scores. Returns 0
// when the valid set is empty or the attainable range collapses.
double cot_reward(std::span<const std::uint8_t> judgment_row,
                  std::span<const int> scores);

template <class T, class Equiv>
int outcome_reward(const T& predicted, const T& gold, Equiv&& equiv) {
  return equiv(predicted, gold) ? 1 : -1;
}

// Fraction of a generation's rubrics that are valid.
double evolving_reward(std::size_t k_valid, std::size_t k);

// Per-rollout CoT rewards over the valid columns of the pooled matrix.
std::vector<double> cot_rewards_for_matrix(const JudgmentMatrix& judgments,
                                           const ValidityMask& mask);

// Number of valid rubrics attributed to each of the N generations.
std::vector<std::size_t> per_generation_valid_counts(
    const JudgmentMatrix& judgments, const ValidityMask& mask,
    std::size_t generations);

// Per-rollout reward assembly. outcome entries are ±1; cot entries in [0,1].
// rubric_only drops the outcome term, rlvr_only zeroes the cot term, and
// rubric_only_random replaces cot with a draw from the dedicated stream.
std::vector<ReasonerReward> reasoner_rewards(std::span<const int> outcome,
                                             std::span<const double> cot,
                                             TrainMode mode,
                                             std::mt19937_64* random_stream);

struct GenerationSummary {
  bool parsed = false;
  std::size_t rubric_count = 0;
  std::size_t valid_count = 0;
};

// Per-generation reward assembly: evolving = valid fraction (zeroed for
// reward purposes in rlcer_no_evolving), format from parse success; a parse
// failure yields (0, 0, 0).
std::vector<RubricatorReward> rubricator_rewards(
    std::span<const GenerationSummary> generations, TrainMode mode);

}  // namespace rlcer
