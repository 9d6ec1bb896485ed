#include "rlcer/reward_engine.hpp"

#include <cmath>

#include "rlcer/rng.hpp"

namespace rlcer {

const char* to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::rlcer: return "rlcer";
    case TrainMode::rlvr_only: return "rlvr_only";
    case TrainMode::rubric_only: return "rubric_only";
    case TrainMode::rubric_only_random: return "rubric_only_random";
    case TrainMode::rlcer_no_evolving: return "rlcer_no_evolving";
  }
  return "unknown";
}

std::optional<TrainMode> train_mode_from_string(std::string_view name) {
  for (TrainMode mode : {TrainMode::rlcer, TrainMode::rlvr_only,
                         TrainMode::rubric_only, TrainMode::rubric_only_random,
                         TrainMode::rlcer_no_evolving}) {
    if (name == to_string(mode)) return mode;
  }
  return std::nullopt;
}

void JudgmentMatrix::validate() const {
  if (entries.size() != rollouts * rubric_count) {
    throw DimensionMismatch("judgment entries size != rollouts * rubric_count");
  }
  if (rubric_scores.size() != rubric_count ||
      rubric_origin.size() != rubric_count) {
    throw DimensionMismatch("per-rubric metadata size != rubric_count");
  }
  for (int s : rubric_scores) {
    if (s == 0 || s < -5 || s > 5) {
      throw RewardError("rubric score outside {-5..-1, 1..5}");
    }
  }
  for (std::size_t g : rubric_origin) {
    if (g >= rollouts) throw RewardError("rubric origin index out of range");
  }
}

std::size_t ValidityMask::valid_count() const {
  std::size_t n = 0;
  for (auto v : valid) n += v ? 1 : 0;
  return n;
}

std::optional<double> pearson(std::span<const double> v,
                              std::span<const double> z) {
  if (v.size() != z.size()) {
    throw LengthMismatch("pearson: vector lengths differ (" +
                         std::to_string(v.size()) + " vs " +
                         std::to_string(z.size()) + ")");
  }
  if (v.size() < 2) {
    throw TooFewSamples("pearson needs at least 2 samples");
  }
  const double n = static_cast<double>(v.size());
  double mean_v = 0, mean_z = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    mean_v += v[i];
    mean_z += z[i];
  }
  mean_v /= n;
  mean_z /= n;
  double cov = 0, var_v = 0, var_z = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double dv = v[i] - mean_v;
    const double dz = z[i] - mean_z;
    cov += dv * dz;
    var_v += dv * dv;
    var_z += dz * dz;
  }
  if (var_v == 0.0 || var_z == 0.0) return std::nullopt;
  return cov / std::sqrt(var_v * var_z);
}

std::optional<double> pearson_binary(std::span<const std::uint8_t> v,
                                     std::span<const std::uint8_t> z) {
  std::vector<double> dv(v.begin(), v.end());
  std::vector<double> dz(z.begin(), z.end());
  return pearson(dv, dz);
}

ValidityMask validity_mask(const JudgmentMatrix& judgments,
                           const OutcomeVector& outcomes, double alpha) {
  judgments.validate();
  if (outcomes.z.size() != judgments.rollouts) {
    throw DimensionMismatch("outcome vector length != judgment rollouts");
  }
  ValidityMask mask;
  mask.valid.assign(judgments.rubric_count, 0);
  mask.correlations.assign(judgments.rubric_count, std::nullopt);
  std::vector<std::uint8_t> column(judgments.rollouts);
  for (std::size_t k = 0; k < judgments.rubric_count; ++k) {
    for (std::size_t n = 0; n < judgments.rollouts; ++n) {
      column[n] = judgments.at(n, k);
    }
    const auto corr = pearson_binary(column, outcomes.z);
    mask.correlations[k] = corr;
    if (corr && *corr > alpha) mask.valid[k] = 1;
  }
  return mask;
}

double cot_reward(std::span<const std::uint8_t> judgment_row,
                  std::span<const int> scores) {
  if (judgment_row.size() != scores.size()) {
    throw LengthMismatch("cot_reward: judgment row and scores differ in length");
  }
  if (scores.empty()) return 0.0;
  double raw = 0, min_value = 0, max_value = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (judgment_row[k]) raw += scores[k];
    (scores[k] > 0 ? max_value : min_value) += scores[k];
  }
  if (max_value == min_value) return 0.0;
  return (raw - min_value) / (max_value - min_value);
}

double evolving_reward(std::size_t k_valid, std::size_t k) {
  if (k == 0) throw ZeroRubrics("generation contained no rubrics");
  if (k_valid > k) throw RewardError("valid count exceeds rubric count");
  return static_cast<double>(k_valid) / static_cast<double>(k);
}

std::vector<double> cot_rewards_for_matrix(const JudgmentMatrix& judgments,
                                           const ValidityMask& mask) {
  if (mask.valid.size() != judgments.rubric_count) {
    throw DimensionMismatch("validity mask size != rubric count");
  }
  std::vector<int> valid_scores;
  std::vector<std::size_t> valid_columns;
  for (std::size_t k = 0; k < judgments.rubric_count; ++k) {
    if (mask.valid[k]) {
      valid_scores.push_back(judgments.rubric_scores[k]);
      valid_columns.push_back(k);
    }
  }
  std::vector<double> rewards(judgments.rollouts, 0.0);
  std::vector<std::uint8_t> row(valid_columns.size());
  for (std::size_t n = 0; n < judgments.rollouts; ++n) {
    for (std::size_t j = 0; j < valid_columns.size(); ++j) {
      row[j] = judgments.at(n, valid_columns[j]);
    }
    rewards[n] = cot_reward(row, valid_scores);
  }
  return rewards;
}

std::vector<std::size_t> per_generation_valid_counts(
    const JudgmentMatrix& judgments, const ValidityMask& mask,
    std::size_t generations) {
  if (mask.valid.size() != judgments.rubric_count) {
    throw DimensionMismatch("validity mask size != rubric count");
  }
  std::vector<std::size_t> counts(generations, 0);
  for (std::size_t k = 0; k < judgments.rubric_count; ++k) {
    const std::size_t g = judgments.rubric_origin[k];
    if (g >= generations) throw RewardError("rubric origin index out of range");
    if (mask.valid[k]) ++counts[g];
  }
  return counts;
}

std::vector<ReasonerReward> reasoner_rewards(std::span<const int> outcome,
                                             std::span<const double> cot,
                                             TrainMode mode,
                                             std::mt19937_64* random_stream) {
  if (outcome.size() != cot.size()) {
    throw LengthMismatch("reasoner_rewards: outcome and cot lengths differ");
  }
  if (mode == TrainMode::rubric_only_random && random_stream == nullptr) {
    throw RewardError("rubric_only_random requires a random stream");
  }
  std::vector<ReasonerReward> rewards(outcome.size());
  for (std::size_t n = 0; n < outcome.size(); ++n) {
    if (outcome[n] != 1 && outcome[n] != -1) {
      throw RewardError("outcome entries must be +1 or -1");
    }
    ReasonerReward& r = rewards[n];
    switch (mode) {
      case TrainMode::rlcer:
      case TrainMode::rlcer_no_evolving:
        r.outcome = outcome[n];
        r.cot = cot[n];
        break;
      case TrainMode::rlvr_only:
        r.outcome = outcome[n];
        r.cot = 0.0;
        break;
      case TrainMode::rubric_only:
        r.outcome = 0.0;
        r.cot = cot[n];
        break;
      case TrainMode::rubric_only_random:
        r.outcome = 0.0;
        r.cot = rng::uniform01(*random_stream);
        break;
    }
    r.total = r.outcome + r.cot;
  }
  return rewards;
}

std::vector<RubricatorReward> rubricator_rewards(
    std::span<const GenerationSummary> generations, TrainMode mode) {
  std::vector<RubricatorReward> rewards(generations.size());
  for (std::size_t n = 0; n < generations.size(); ++n) {
    const GenerationSummary& g = generations[n];
    RubricatorReward& r = rewards[n];
    if (!g.parsed) {
      continue;  // (0, 0, 0)
    }
    r.format = 1.0;
    r.evolving = mode == TrainMode::rlcer_no_evolving
                     ? 0.0
                     : evolving_reward(g.valid_count, g.rubric_count);
    r.total = r.evolving + r.format;
  }
  return rewards;
}

}  // namespace rlcer
