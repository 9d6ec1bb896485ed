#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "rlcer/errors.hpp"

namespace rlcer {

struct EnvError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A question class is defined by a set of required features and a set of
// harmful distractor features (disjoint). A CoT answers correctly when it
// covers at least coverage_threshold of the required set and touches no
// distractor; flip_noise optionally corrupts the outcome.
struct EnvConfig {
  std::size_t feature_dim = 16;
  std::size_t classes = 4;
  std::vector<std::vector<std::size_t>> required_per_class;
  std::vector<std::vector<std::size_t>> distractors_per_class;
  double coverage_threshold = 0.75;
  double flip_noise = 0.0;

  // F=16, 4 classes, 4 required + 2 distractor features per class. Class c
  // requires {4c..4c+3}; its distractors are the first two required
  // features of the next class (cyclically), so sets stay disjoint per
  // class while features matter differently across classes.
  static EnvConfig default_config();

  void validate() const;  // throws EnvError
  std::uint64_t fingerprint() const;
};

struct SynthQuestion {
  std::uint64_t id = 0;
  std::size_t cls = 0;
  std::uint64_t gold = 0;  // opaque answer token, exact-match equivalence
};

struct FeatureCoT {
  std::vector<std::uint8_t> bits;
};

SynthQuestion gen_question(std::uint64_t rng_seed, const EnvConfig& cfg);

// Noise-free answering rule: coverage of the class's required features
// reaches the threshold and no distractor of the class is present.
bool answer_rule(const FeatureCoT& cot, std::size_t cls, const EnvConfig& cfg);

// Returns the gold token iff the answer rule holds, XOR a Bernoulli
// flip keyed by noise_seed. Deterministic in all inputs.
std::uint64_t answer_of(const FeatureCoT& cot, const SynthQuestion& q,
                        const EnvConfig& cfg, std::uint64_t noise_seed);

// Monte-Carlo estimate of corr(feature presence, correctness) under the
// given CoT sampler. Test-side oracle for validity filtering.
double oracle_corr(std::size_t feature,
                   const std::function<FeatureCoT(std::mt19937_64&)>& sampler,
                   const SynthQuestion& q, const EnvConfig& cfg,
                   std::size_t samples, std::uint64_t rng_seed);

}  // namespace rlcer
