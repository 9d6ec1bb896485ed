#include "rlcer/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "rlcer/rng.hpp"
#include "rlcer/rubric_schema.hpp"

namespace rlcer {
namespace {

constexpr std::uint64_t kReasonerTag = 0x52;
constexpr std::uint64_t kRubricatorTag = 0x53;
constexpr std::uint64_t kAnswerNoiseTag = 0x54;
constexpr std::uint64_t kRandomRewardTag = 0x55;

// Per-generation rubric counts vary like the paper's K_n; the range is kept
// small so each slot carries a measurable share of the evolving reward.
constexpr std::size_t kMinRubricsPerGen = 5;
constexpr std::size_t kMaxRubricsPerGen = 9;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct BranchInfo {
  double value = 0.0;
  bool clipped = false;  // clipped branch strictly active
  double ratio = 1.0;
};

BranchInfo clip_branch(double ratio, double advantage, double epsilon) {
  if (!(ratio > 0.0)) {
    throw NonpositiveRatio("likelihood ratio must be positive, got " +
                           std::to_string(ratio));
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw OptimizerError("epsilon must be in (0, 1)");
  }
  const double clipped_ratio = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  const double raw = ratio * advantage;
  const double clipped = clipped_ratio * advantage;
  BranchInfo info;
  info.ratio = ratio;
  if (clipped < raw) {
    info.value = clipped;
    info.clipped = true;
  } else {
    info.value = raw;  // ties resolve to the unclipped branch
    info.clipped = false;
  }
  return info;
}

// Accumulates coef * d(logprob)/d(reasoner logits) for one CoT.
void accumulate_reasoner(const PolicyParams& params, const ReasonerEntry& entry,
                         double coef, PolicyGrad& grad) {
  const std::size_t base = entry.cls * params.feature_dim;
  for (std::size_t f = 0; f < params.feature_dim; ++f) {
    const double p = sigmoid(params.reasoner_logits[base + f]);
    const double b = entry.cot.bits[f] ? 1.0 : 0.0;
    grad.reasoner_logits[base + f] += coef * (b - p);
  }
}

// Accumulates coef * d(logprob)/d(rubricator logits, magnitude weights) for
// one sequential without-replacement draw.
void accumulate_rubricator(const PolicyParams& params,
                           const RubricatorEntry& entry, double coef,
                           PolicyGrad& grad) {
  const std::size_t pairs = params.pair_count();
  const std::size_t base = entry.cls * pairs;
  std::vector<double> weights(pairs);
  double max_logit = -INFINITY;
  for (std::size_t p = 0; p < pairs; ++p) {
    double l = params.rubricator_logits[base + p];
    if (params.cot_absence_offset != 0.0 &&
        !entry.cot.bits[PolicyParams::pair_feature(p)]) {
      l += params.cot_absence_offset;
    }
    weights[p] = l;
    max_logit = std::max(max_logit, l);
  }
  double total = 0.0;
  for (auto& w : weights) {
    w = std::exp(w - max_logit);
    total += w;
  }
  for (const auto& choice : entry.latent) {
    // d/d theta_j of log(w_a / S) = delta(j == a) - w_j / S over remaining j.
    for (std::size_t p = 0; p < pairs; ++p) {
      if (weights[p] == 0.0) continue;
      grad.rubricator_logits[base + p] -= coef * weights[p] / total;
    }
    grad.rubricator_logits[base + choice.pair_index] += coef;
    total -= weights[choice.pair_index];
    weights[choice.pair_index] = 0.0;
  }

  double mag_max =
      *std::max_element(params.magnitude_weights.begin(),
                        params.magnitude_weights.end());
  std::array<double, 5> mag_probs{};
  double mag_total = 0.0;
  for (std::size_t m = 0; m < mag_probs.size(); ++m) {
    mag_probs[m] = std::exp(params.magnitude_weights[m] - mag_max);
    mag_total += mag_probs[m];
  }
  for (auto& p : mag_probs) p /= mag_total;
  for (const auto& choice : entry.latent) {
    for (std::size_t m = 0; m < mag_probs.size(); ++m) {
      grad.magnitude_weights[m] -= coef * mag_probs[m];
    }
    grad.magnitude_weights[choice.magnitude_index] += coef;
  }
}

}  // namespace

RubricProposal sample_generation(const PolicyParams& params,
                                 const SynthQuestion& q, const FeatureCoT& cot,
                                 std::mt19937_64& eng) {
  const std::size_t hi =
      std::min({kMaxRubricsPerGen, kMaxCriteria, params.pair_count()});
  const std::size_t lo = kMinRubricsPerGen;
  if (hi < lo) {
    throw KOutOfRange("pair space too small for a schema-valid document");
  }
  const std::size_t k = lo + rng::uniform_index(eng, hi - lo + 1);
  return sample_rubrics(params, q, cot, k, eng);
}

std::vector<double> role_advantages(
    std::span<const double> rewards,
    std::span<const std::vector<std::size_t>> groups, AdvEstimator estimator) {
  std::vector<double> advantages(rewards.size(), 0.0);
  if (estimator == AdvEstimator::batch_mean) {
    if (rewards.empty()) return advantages;
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      advantages[i] = rewards[i] - mean;
    }
    return advantages;
  }
  std::vector<std::uint8_t> seen(rewards.size(), 0);
  for (const auto& group : groups) {
    if (group.empty()) throw EmptyGroup("advantage group is empty");
    double mean = 0.0;
    for (std::size_t i : group) {
      if (i >= rewards.size()) {
        throw OptimizerError("group index out of range");
      }
      if (seen[i]) throw OptimizerError("groups must partition the entries");
      seen[i] = 1;
      mean += rewards[i];
    }
    mean /= static_cast<double>(group.size());
    for (std::size_t i : group) advantages[i] = rewards[i] - mean;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw OptimizerError("entry not covered by any group");
  }
  return advantages;
}

double clipped_term(double ratio, double advantage, double epsilon) {
  return clip_branch(ratio, advantage, epsilon).value;
}

double surrogate(const PolicyParams& params, const RoleBatches& batches,
                 double epsilon) {
  double objective = 0.0;
  if (!batches.reasoner.empty()) {
    double sum = 0.0;
    for (const auto& entry : batches.reasoner) {
      SynthQuestion q;
      q.cls = entry.cls;
      const double lp = logprob_cot(params, q, entry.cot);
      sum += clipped_term(std::exp(lp - entry.old_logprob), entry.advantage,
                          epsilon);
    }
    objective += sum / static_cast<double>(batches.reasoner.size());
  }
  if (!batches.rubricator.empty()) {
    double sum = 0.0;
    for (const auto& entry : batches.rubricator) {
      const double lp =
          logprob_latent(params, entry.cls, entry.cot, entry.latent);
      sum += clipped_term(std::exp(lp - entry.old_logprob), entry.advantage,
                          epsilon);
    }
    objective += batches.rubricator_weight * sum /
                 static_cast<double>(batches.rubricator.size());
  }
  return objective;
}

double PolicyGrad::norm() const {
  double s = 0.0;
  for (double g : reasoner_logits) s += g * g;
  for (double g : rubricator_logits) s += g * g;
  for (double g : magnitude_weights) s += g * g;
  return std::sqrt(s);
}

void PolicyGrad::scale(double factor) {
  for (auto& g : reasoner_logits) g *= factor;
  for (auto& g : rubricator_logits) g *= factor;
  for (auto& g : magnitude_weights) g *= factor;
}

PolicyGrad zero_grad(const PolicyParams& params) {
  PolicyGrad grad;
  grad.reasoner_logits.assign(params.reasoner_logits.size(), 0.0);
  grad.rubricator_logits.assign(params.rubricator_logits.size(), 0.0);
  grad.magnitude_weights.fill(0.0);
  return grad;
}

PolicyGrad gradient(const PolicyParams& params, const RoleBatches& batches,
                    double epsilon, UpdateStats* stats) {
  PolicyGrad grad = zero_grad(params);
  std::size_t clipped_entries = 0;
  const std::size_t total_entries =
      batches.reasoner.size() + batches.rubricator.size();
  if (!batches.reasoner.empty()) {
    const double inv = 1.0 / static_cast<double>(batches.reasoner.size());
    for (const auto& entry : batches.reasoner) {
      SynthQuestion q;
      q.cls = entry.cls;
      const double lp = logprob_cot(params, q, entry.cot);
      const auto info =
          clip_branch(std::exp(lp - entry.old_logprob), entry.advantage,
                      epsilon);
      if (info.clipped) {
        ++clipped_entries;
        continue;  // constant in params
      }
      accumulate_reasoner(params, entry, inv * info.ratio * entry.advantage,
                          grad);
    }
  }
  if (!batches.rubricator.empty()) {
    const double inv = batches.rubricator_weight /
                       static_cast<double>(batches.rubricator.size());
    for (const auto& entry : batches.rubricator) {
      const double lp =
          logprob_latent(params, entry.cls, entry.cot, entry.latent);
      const auto info =
          clip_branch(std::exp(lp - entry.old_logprob), entry.advantage,
                      epsilon);
      if (info.clipped) {
        ++clipped_entries;
        continue;
      }
      accumulate_rubricator(params, entry, inv * info.ratio * entry.advantage,
                            grad);
    }
  }
  if (stats != nullptr) {
    stats->clip_fraction =
        total_entries ? static_cast<double>(clipped_entries) /
                            static_cast<double>(total_entries)
                      : 0.0;
  }
  for (double g : grad.reasoner_logits) {
    if (!std::isfinite(g)) throw NonFiniteGradient("reasoner gradient");
  }
  for (double g : grad.rubricator_logits) {
    if (!std::isfinite(g)) throw NonFiniteGradient("rubricator gradient");
  }
  for (double g : grad.magnitude_weights) {
    if (!std::isfinite(g)) throw NonFiniteGradient("magnitude gradient");
  }
  return grad;
}

void apply_update(PolicyParams& params, const PolicyGrad& grad, double lr,
                  double grad_clip, UpdateStats& stats) {
  stats.grad_norm = grad.norm();
  stats.lr = lr;
  double factor = lr;
  if (grad_clip > 0.0 && stats.grad_norm > grad_clip) {
    factor *= grad_clip / stats.grad_norm;
  }
  for (std::size_t i = 0; i < params.reasoner_logits.size(); ++i) {
    params.reasoner_logits[i] += factor * grad.reasoner_logits[i];
  }
  for (std::size_t i = 0; i < params.rubricator_logits.size(); ++i) {
    params.rubricator_logits[i] += factor * grad.rubricator_logits[i];
  }
  for (std::size_t i = 0; i < params.magnitude_weights.size(); ++i) {
    params.magnitude_weights[i] += factor * grad.magnitude_weights[i];
  }
  params.validate_finite();
}

StepResult train_step(const PolicyParams& params,
                      std::span<const SynthQuestion> questions,
                      const EnvConfig& env, const VerifierHandle& verifier,
                      const TrainOptions& options, std::uint64_t run_seed,
                      int step) {
  params.validate_finite();
  if (questions.empty()) throw OptimizerError("question batch is empty");
  if (options.rollout_n < 2) {
    throw OptimizerError("rollout_n must be at least 2");
  }
  const std::size_t n = static_cast<std::size_t>(options.rollout_n);
  const std::uint64_t t = static_cast<std::uint64_t>(step);

  RoleBatches batches;
  batches.rubricator_weight = options.rubricator_weight;
  std::vector<double> reasoner_rewards_flat;
  std::vector<double> rubricator_rewards_flat;
  std::vector<std::vector<std::size_t>> reasoner_groups;
  StepMetrics metrics;

  auto random_reward_eng =
      rng::engine_from(rng::mix(run_seed, kRandomRewardTag, t));

  double corr_all_sum = 0.0;
  std::size_t corr_all_count = 0;
  double corr_valid_sum = 0.0;
  std::size_t corr_valid_count = 0;
  double cot_sum = 0.0;
  std::size_t cot_count = 0;
  double evolving_sum = 0.0;
  std::size_t evolving_count = 0;
  double total_sum = 0.0;
  std::size_t correct_count = 0;

  for (std::size_t qi = 0; qi < questions.size(); ++qi) {
    const SynthQuestion& q = questions[qi];
    metrics.question_ids.push_back(q.id);

    // Role-specific rollout.
    std::vector<FeatureCoT> cots(n);
    std::vector<double> cot_old_lp(n);
    std::vector<int> outcomes(n);
    OutcomeVector z;
    z.z.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto eng = rng::engine_from(rng::mix(run_seed, kReasonerTag, t, qi, i));
      auto [cot, lp] = sample_cot(params, q, eng);
      const std::uint64_t answer =
          answer_of(cot, q, env, rng::mix(run_seed, kAnswerNoiseTag, t, qi, i));
      const bool correct = answer == q.gold;
      outcomes[i] = correct ? 1 : -1;
      z.z[i] = correct ? 1 : 0;
      correct_count += correct ? 1 : 0;
      cots[i] = std::move(cot);
      cot_old_lp[i] = lp;
    }

    struct Generation {
      RubricProposal proposal;
      bool parsed = false;
      RubricDocument doc;  // re-parsed from the wire text
    };
    std::vector<Generation> generations(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto eng =
          rng::engine_from(rng::mix(run_seed, kRubricatorTag, t, qi, i));
      generations[i].proposal = sample_generation(params, q, cots[i], eng);
      std::string text =
          serialize_rubric_document(generations[i].proposal.document);
      if (options.document_hook) text = options.document_hook(text);
      try {
        generations[i].doc = parse_rubric_document(text);
        generations[i].parsed = true;
      } catch (const ParseError&) {
        generations[i].parsed = false;
      }
    }

    // Pool every criterion of every parsed generation, in generation order.
    JudgmentMatrix judgments;
    judgments.rollouts = n;
    std::vector<RubricCriterion> pooled_criteria;
    std::vector<std::optional<SyntheticCriterion>> pooled_predicates;
    for (std::size_t i = 0; i < n; ++i) {
      if (!generations[i].parsed) continue;
      for (const auto& criterion : generations[i].doc.rubrics) {
        pooled_criteria.push_back(criterion);
        pooled_predicates.push_back(
            criterion_from_text(criterion.criterion, env.feature_dim));
        judgments.rubric_scores.push_back(criterion.points);
        judgments.rubric_origin.push_back(i);
      }
    }
    judgments.rubric_count = pooled_criteria.size();
    judgments.entries.assign(n * judgments.rubric_count, 0);

    if (verifier.kind == VerifierHandle::Kind::local) {
      std::vector<SyntheticCriterion> mapped;
      std::vector<std::size_t> mapped_columns;
      for (std::size_t k = 0; k < pooled_predicates.size(); ++k) {
        if (pooled_predicates[k]) {
          mapped.push_back(*pooled_predicates[k]);
          mapped_columns.push_back(k);
        }
      }
      std::vector<LocalJob> jobs(n);
      for (std::size_t i = 0; i < n; ++i) {
        jobs[i].rubrics = mapped;
        jobs[i].cot = cots[i];
      }
      const auto rows =
          judge_batch(std::span<const LocalJob>(jobs), verifier.local,
                      options.judge_parallelism);
      for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].failed) {
          ++metrics.judge_failures;
          continue;  // unmapped/unjudged criteria stay unsatisfied
        }
        for (std::size_t j = 0; j < mapped_columns.size(); ++j) {
          judgments.entries[i * judgments.rubric_count + mapped_columns[j]] =
              rows[i].bits[j];
        }
      }
    } else {
      std::vector<VerifierRequest> requests(n);
      for (std::size_t i = 0; i < n; ++i) {
        requests[i].question = question_text(q);
        requests[i].response = cot_text(cots[i]);
        requests[i].rubrics = pooled_criteria;
      }
      const auto rows =
          judge_batch(std::span<const VerifierRequest>(requests),
                      verifier.remote, options.judge_parallelism);
      for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].failed) {
          ++metrics.judge_failures;
          continue;
        }
        for (std::size_t k = 0; k < judgments.rubric_count; ++k) {
          judgments.entries[i * judgments.rubric_count + k] = rows[i].bits[k];
        }
      }
    }

    const ValidityMask mask = validity_mask(judgments, z, options.alpha);
    for (std::size_t k = 0; k < mask.correlations.size(); ++k) {
      if (mask.correlations[k]) {
        corr_all_sum += *mask.correlations[k];
        ++corr_all_count;
        if (mask.valid[k]) {
          corr_valid_sum += *mask.correlations[k];
          ++corr_valid_count;
        }
      }
    }
    metrics.pooled_rubrics += judgments.rubric_count;
    metrics.valid_rubrics += mask.valid_count();

    const std::vector<double> cot_values =
        cot_rewards_for_matrix(judgments, mask);
    for (double v : cot_values) cot_sum += v;
    cot_count += cot_values.size();

    const auto reasoner_batch =
        reasoner_rewards(outcomes, cot_values, options.mode,
                         &random_reward_eng);

    const auto valid_counts =
        per_generation_valid_counts(judgments, mask, n);
    std::vector<GenerationSummary> summaries(n);
    for (std::size_t i = 0; i < n; ++i) {
      summaries[i].parsed = generations[i].parsed;
      summaries[i].rubric_count =
          generations[i].parsed ? generations[i].doc.rubrics.size() : 0;
      summaries[i].valid_count = valid_counts[i];
      if (generations[i].parsed && summaries[i].rubric_count > 0) {
        evolving_sum += static_cast<double>(summaries[i].valid_count) /
                        static_cast<double>(summaries[i].rubric_count);
      }
      ++evolving_count;
    }
    const auto rubricator_batch = rubricator_rewards(summaries, options.mode);

    std::vector<std::size_t> group;
    for (std::size_t i = 0; i < n; ++i) {
      ReasonerEntry entry;
      entry.cls = q.cls;
      entry.cot = cots[i];
      entry.old_logprob = cot_old_lp[i];
      entry.reward = reasoner_batch[i].total;
      group.push_back(batches.reasoner.size());
      batches.reasoner.push_back(std::move(entry));
      reasoner_rewards_flat.push_back(reasoner_batch[i].total);
      total_sum += reasoner_batch[i].total;

      RubricatorEntry rub;
      rub.cls = q.cls;
      rub.cot = cots[i];
      rub.latent = generations[i].proposal.latent;
      rub.old_logprob = generations[i].proposal.logprob;
      rub.reward = rubricator_batch[i].total;
      batches.rubricator.push_back(std::move(rub));
      rubricator_rewards_flat.push_back(rubricator_batch[i].total);
    }
    reasoner_groups.push_back(std::move(group));
  }

  // Role-specific advantages.
  const auto reasoner_adv = role_advantages(
      reasoner_rewards_flat, reasoner_groups, options.reasoner_estimator);
  for (std::size_t i = 0; i < batches.reasoner.size(); ++i) {
    batches.reasoner[i].advantage = reasoner_adv[i];
  }
  const auto rubricator_adv = role_advantages(
      rubricator_rewards_flat, {}, options.rubricator_estimator);
  for (std::size_t i = 0; i < batches.rubricator.size(); ++i) {
    batches.rubricator[i].advantage = rubricator_adv[i];
  }
  if (options.mode == TrainMode::rlvr_only) {
    // The rubricator is still rolled out for stream parity, but its
    // gradient is excluded from the joint objective.
    batches.rubricator.clear();
  }

  StepResult result;
  result.stats.surrogate_value =
      surrogate(params, batches, options.clip_epsilon);
  PolicyGrad grad =
      gradient(params, batches, options.clip_epsilon, &result.stats);
  result.params = params;
  apply_update(result.params, grad, options.lr, options.grad_clip,
               result.stats);

  const double rollouts =
      static_cast<double>(questions.size()) * static_cast<double>(n);
  metrics.train_accuracy = static_cast<double>(correct_count) / rollouts;
  metrics.mean_corr_all =
      corr_all_count ? corr_all_sum / static_cast<double>(corr_all_count) : 0.0;
  metrics.mean_corr_valid =
      corr_valid_count ? corr_valid_sum / static_cast<double>(corr_valid_count)
                       : 0.0;
  metrics.valid_fraction =
      metrics.pooled_rubrics
          ? static_cast<double>(metrics.valid_rubrics) /
                static_cast<double>(metrics.pooled_rubrics)
          : 0.0;
  metrics.mean_cot = cot_count ? cot_sum / static_cast<double>(cot_count) : 0.0;
  metrics.mean_evolving =
      evolving_count ? evolving_sum / static_cast<double>(evolving_count) : 0.0;
  metrics.mean_reasoner_total = total_sum / rollouts;
  result.metrics = std::move(metrics);
  return result;
}

}  // namespace rlcer
