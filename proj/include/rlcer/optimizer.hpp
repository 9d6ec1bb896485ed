#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlcer/policy.hpp"
#include "rlcer/reward_engine.hpp"
#include "rlcer/synth_env.hpp"
#include "rlcer/verifier.hpp"

namespace rlcer {

struct OptimizerError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct EmptyGroup : OptimizerError {
  using OptimizerError::OptimizerError;
};
struct NonpositiveRatio : OptimizerError {
  using OptimizerError::OptimizerError;
};
struct NonFiniteGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class AdvEstimator { group_mean, batch_mean };

// group_mean subtracts each entry's own group mean (rollouts of one
// question); batch_mean subtracts the mean over all entries of the role,
// for rollouts whose contexts differ and cannot be grouped.
std::vector<double> role_advantages(
    std::span<const double> rewards,
    std::span<const std::vector<std::size_t>> groups, AdvEstimator estimator);

// min(ratio * A, clip(ratio, 1-eps, 1+eps) * A); ties resolve to the
// unclipped branch.
double clipped_term(double ratio, double advantage, double epsilon);

struct ReasonerEntry {
  std::size_t cls = 0;
  FeatureCoT cot;
  double old_logprob = 0.0;
  double reward = 0.0;
  double advantage = 0.0;
};

struct RubricatorEntry {
  std::size_t cls = 0;
  FeatureCoT cot;  // conditioning CoT
  std::vector<LatentChoice> latent;
  double old_logprob = 0.0;
  double reward = 0.0;
  double advantage = 0.0;
};

struct RoleBatches {
  std::vector<ReasonerEntry> reasoner;
  std::vector<RubricatorEntry> rubricator;
  // Relative weight of the rubricator expectation in the joint objective.
  double rubricator_weight = 1.0;
};

// Mean of clipped terms over reasoner entries plus (weighted) mean over
// rubricator entries, with ratio = exp(logprob(params) - old_logprob).
double surrogate(const PolicyParams& params, const RoleBatches& batches,
                 double epsilon);

// Gradient of the learnable parameter blocks, mirroring PolicyParams.
struct PolicyGrad {
  std::vector<double> reasoner_logits;
  std::vector<double> rubricator_logits;
  std::array<double, 5> magnitude_weights{};

  double norm() const;
  void scale(double factor);
};

PolicyGrad zero_grad(const PolicyParams& params);

struct UpdateStats {
  double surrogate_value = 0.0;
  double grad_norm = 0.0;      // pre-clip L2 norm
  double clip_fraction = 0.0;  // entries where the clipped branch was active
  double lr = 0.0;
};

// Exact analytic gradient of surrogate(). Entries whose clipped branch is
// strictly active contribute nothing (the clip is constant in the
// parameters); ties use the unclipped branch. When stats is given, its
// clip_fraction is filled from the branch decisions.
PolicyGrad gradient(const PolicyParams& params, const RoleBatches& batches,
                    double epsilon, UpdateStats* stats = nullptr);

// One gradient-ascent step with gradient-norm clipping, in place.
void apply_update(PolicyParams& params, const PolicyGrad& grad, double lr,
                  double grad_clip, UpdateStats& stats);

struct VerifierHandle {
  enum class Kind { local, remote };
  Kind kind = Kind::local;
  LocalVerifier local;
  RemoteVerifierConfig remote;
};

struct TrainOptions {
  TrainMode mode = TrainMode::rlcer;
  double alpha = 0.2;
  double clip_epsilon = 0.2;
  double lr = 0.0;  // effective (post-warmup) learning rate for this step
  double grad_clip = 1.0;
  int rollout_n = 8;
  AdvEstimator reasoner_estimator = AdvEstimator::group_mean;
  AdvEstimator rubricator_estimator = AdvEstimator::batch_mean;
  double rubricator_weight = 1.0;
  int judge_parallelism = 1;
  // Test hook: rewrites the serialized rubric document before it re-enters
  // the parser, to exercise the format-failure path.
  std::function<std::string(const std::string&)> document_hook;
};

// Per-step aggregates destined for the metrics table.
struct StepMetrics {
  double train_accuracy = 0.0;
  double mean_corr_valid = 0.0;
  double mean_corr_all = 0.0;
  double valid_fraction = 0.0;
  double mean_cot = 0.0;
  double mean_evolving = 0.0;  // measured valid fraction, logged in all modes
  double mean_reasoner_total = 0.0;
  std::size_t pooled_rubrics = 0;
  std::size_t valid_rubrics = 0;
  std::size_t judge_failures = 0;
  std::vector<std::uint64_t> question_ids;
};

struct StepResult {
  PolicyParams params;
  UpdateStats stats;
  StepMetrics metrics;
};

// One rubricator rollout with the per-generation K_n draw used throughout
// training and self-proposed-hint evaluation.
RubricProposal sample_generation(const PolicyParams& params,
                                 const SynthQuestion& q, const FeatureCoT& cot,
                                 std::mt19937_64& eng);

// Executes one full training step: N reasoner rollouts per question, one
// rubricator generation per rollout, pooled judging, validity filtering,
// role rewards and advantages, and a single clipped-surrogate ascent step.
// Any error propagates without touching the input parameters.
StepResult train_step(const PolicyParams& params,
                      std::span<const SynthQuestion> questions,
                      const EnvConfig& env, const VerifierHandle& verifier,
                      const TrainOptions& options, std::uint64_t run_seed,
                      int step);

}  // namespace rlcer
