#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rlcer/rubric_schema.hpp"
#include "rlcer/synth_env.hpp"
#include "rlcer/verifier.hpp"

namespace rlcer {

struct PolicyError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct KOutOfRange : PolicyError {
  using PolicyError::PolicyError;
};
struct LatentMismatch : PolicyError {
  using PolicyError::PolicyError;
};
struct CheckpointMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Initial tilt of the rubricator's polarity logits toward merit criteria,
// standing in for the cold-start that teaches a proposer to phrase most
// criteria as rewards rather than penalties. Without it, an opposite-sign
// pair (f,+)/(f,-) passes the validity filter equally often and their CoT
// reward contributions cancel in expectation.
inline constexpr double kColdStartPolarityPrior = 1.5;

// Shared parameter store for both roles. reasoner_logits is classes × F
// (per-bit Bernoulli logits); rubricator_logits is classes × F × 2 proposal
// weights over (feature, polarity); magnitude_weights is a softmax over
// |points| in {1..5}. hint_bias and cot_absence_offset are configuration
// constants, not learned.
struct PolicyParams {
  std::size_t classes = 0;
  std::size_t feature_dim = 0;
  std::vector<double> reasoner_logits;     // classes * F
  std::vector<double> rubricator_logits;   // classes * F * 2
  std::array<double, 5> magnitude_weights{};
  double hint_bias = 0.0;
  double cot_absence_offset = 0.0;

  double& reasoner_at(std::size_t cls, std::size_t f) {
    return reasoner_logits[cls * feature_dim + f];
  }
  double reasoner_at(std::size_t cls, std::size_t f) const {
    return reasoner_logits[cls * feature_dim + f];
  }
  std::size_t pair_count() const { return 2 * feature_dim; }
  double& rubricator_at(std::size_t cls, std::size_t pair) {
    return rubricator_logits[cls * pair_count() + pair];
  }
  double rubricator_at(std::size_t cls, std::size_t pair) const {
    return rubricator_logits[cls * pair_count() + pair];
  }
  static std::size_t pair_index(std::size_t feature, Polarity polarity) {
    return 2 * feature + (polarity == Polarity::penalize_present ? 1 : 0);
  }
  static std::size_t pair_feature(std::size_t pair) { return pair / 2; }
  static Polarity pair_polarity(std::size_t pair) {
    return pair % 2 == 0 ? Polarity::require_present
                         : Polarity::penalize_present;
  }

  void validate_finite() const;  // throws PolicyError on non-finite entries
};

PolicyParams initial_params(const EnvConfig& env, double hint_bias,
                            double polarity_prior = kColdStartPolarityPrior);

struct LatentChoice {
  std::size_t pair_index = 0;      // into the 2F (feature, polarity) space
  std::size_t magnitude_index = 0; // |points| - 1
};

struct RubricProposal {
  RubricDocument document;
  std::vector<LatentChoice> latent;
  double logprob = 0.0;
};

// Criteria used as in-prompt hints at evaluation time. Polarity carries the
// sign: require_present features get +hint_bias, penalize_present features
// get -hint_bias.
struct HintContext {
  std::vector<SyntheticCriterion> hints;
};

// Maps a parsed document onto hint predicates; criteria whose text does not
// encode a feature are skipped.
HintContext hints_from_document(const RubricDocument& doc,
                                std::size_t feature_dim);
// The environment's ground-truth rubrics for a question's class: its
// required features as merits, its distractors as flaws.
HintContext oracle_hints(const SynthQuestion& q, const EnvConfig& cfg);

// Each bit is an independent Bernoulli(sigmoid(logit + hint bias)). The
// returned logprob is always the likelihood under the unhinted distribution
// (hints are an evaluation-time intervention and must not enter training
// ratios). Exactly one uniform draw is consumed per bit, so runs with and
// without hints pair sample-for-sample on a shared engine.
std::pair<FeatureCoT, double> sample_cot(const PolicyParams& params,
                                         const SynthQuestion& q,
                                         std::mt19937_64& eng,
                                         const HintContext* hints = nullptr);

double logprob_cot(const PolicyParams& params, const SynthQuestion& q,
                   const FeatureCoT& cot);

// Draws K (feature, polarity) pairs without replacement from the softmax
// over the class's proposal logits (optionally offset toward features
// absent from the conditioning CoT), with |points| from the magnitude
// softmax. The emitted document always satisfies the schema invariants.
RubricProposal sample_rubrics(const PolicyParams& params,
                              const SynthQuestion& q, const FeatureCoT& cot,
                              std::size_t k, std::mt19937_64& eng);

// Exact log-likelihood of the recorded latent choices; matches the
// sampling-time value bit for bit.
double logprob_rubrics(const PolicyParams& params, const SynthQuestion& q,
                       const FeatureCoT& cot, const RubricProposal& proposal);

// Likelihood of a latent draw sequence alone (the document-independent core
// of logprob_rubrics).
double logprob_latent(const PolicyParams& params, std::size_t cls,
                      const FeatureCoT& cot,
                      std::span<const LatentChoice> latent);

// Versioned JSON checkpoint of the shared parameters together with the
// environment they were trained against. Loading validates dimensions and
// the environment fingerprint.
struct Checkpoint {
  PolicyParams params;
  EnvConfig env;
  std::string mode;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rlcer
