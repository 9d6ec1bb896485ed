#include "rlcer/policy.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rlcer/rng.hpp"

namespace rlcer {
namespace {

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double log_sigmoid(double x) { return -softplus(-x); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Net hint bias for one feature: +b if hinted as a merit, -b if hinted as a
// flaw; opposite hints on the same feature cancel.
std::vector<double> hint_biases(const HintContext* hints, std::size_t dims,
                                double bias) {
  std::vector<double> out(dims, 0.0);
  if (hints == nullptr || bias == 0.0) return out;
  for (const auto& h : hints->hints) {
    if (h.target_feature >= dims) continue;
    out[h.target_feature] +=
        h.polarity == Polarity::require_present ? bias : -bias;
    out[h.target_feature] = std::clamp(out[h.target_feature], -bias, bias);
  }
  return out;
}

std::array<double, 5> magnitude_probs(const std::array<double, 5>& weights) {
  const double m = *std::max_element(weights.begin(), weights.end());
  std::array<double, 5> probs{};
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = std::exp(weights[i] - m);
    total += probs[i];
  }
  for (auto& p : probs) p /= total;
  return probs;
}

// Pair-space weights for one class: exp(logit + offset for features absent
// from the conditioning CoT), stabilized by the global max.
std::vector<double> pair_weights(const PolicyParams& params, std::size_t cls,
                                 const FeatureCoT& cot) {
  const std::size_t pairs = params.pair_count();
  std::vector<double> shifted(pairs);
  double max_logit = -INFINITY;
  for (std::size_t p = 0; p < pairs; ++p) {
    double l = params.rubricator_at(cls, p);
    if (params.cot_absence_offset != 0.0 &&
        !cot.bits[PolicyParams::pair_feature(p)]) {
      l += params.cot_absence_offset;
    }
    shifted[p] = l;
    max_logit = std::max(max_logit, l);
  }
  for (auto& w : shifted) w = std::exp(w - max_logit);
  return shifted;
}

void check_cot_dims(const PolicyParams& params, const SynthQuestion& q,
                    const FeatureCoT& cot) {
  if (cot.bits.size() != params.feature_dim) {
    throw DimensionMismatch("CoT length != policy feature_dim");
  }
  if (q.cls >= params.classes) {
    throw DimensionMismatch("question class out of policy range");
  }
}

}  // namespace

void PolicyParams::validate_finite() const {
  auto check = [](std::span<const double> xs, const char* name) {
    for (double x : xs) {
      if (!std::isfinite(x)) {
        throw PolicyError(std::string("non-finite entry in ") + name);
      }
    }
  };
  check(reasoner_logits, "reasoner_logits");
  check(rubricator_logits, "rubricator_logits");
  check(magnitude_weights, "magnitude_weights");
  if (!std::isfinite(hint_bias) || !std::isfinite(cot_absence_offset)) {
    throw PolicyError("non-finite policy constant");
  }
}

PolicyParams initial_params(const EnvConfig& env, double hint_bias,
                            double polarity_prior) {
  PolicyParams params;
  params.classes = env.classes;
  params.feature_dim = env.feature_dim;
  params.reasoner_logits.assign(env.classes * env.feature_dim, 0.0);
  params.rubricator_logits.assign(env.classes * env.feature_dim * 2, 0.0);
  for (std::size_t c = 0; c < env.classes; ++c) {
    for (std::size_t f = 0; f < env.feature_dim; ++f) {
      params.rubricator_at(
          c, PolicyParams::pair_index(f, Polarity::require_present)) =
          polarity_prior;
      params.rubricator_at(
          c, PolicyParams::pair_index(f, Polarity::penalize_present)) =
          -polarity_prior;
    }
  }
  params.magnitude_weights.fill(0.0);
  params.hint_bias = hint_bias;
  return params;
}

HintContext hints_from_document(const RubricDocument& doc,
                                std::size_t feature_dim) {
  HintContext ctx;
  for (const auto& criterion : doc.rubrics) {
    if (auto mapped = criterion_from_text(criterion.criterion, feature_dim)) {
      ctx.hints.push_back(*mapped);
    }
  }
  return ctx;
}

HintContext oracle_hints(const SynthQuestion& q, const EnvConfig& cfg) {
  HintContext ctx;
  for (std::size_t f : cfg.required_per_class.at(q.cls)) {
    ctx.hints.push_back({f, Polarity::require_present});
  }
  for (std::size_t f : cfg.distractors_per_class.at(q.cls)) {
    ctx.hints.push_back({f, Polarity::penalize_present});
  }
  return ctx;
}

std::pair<FeatureCoT, double> sample_cot(const PolicyParams& params,
                                         const SynthQuestion& q,
                                         std::mt19937_64& eng,
                                         const HintContext* hints) {
  if (q.cls >= params.classes) {
    throw DimensionMismatch("question class out of policy range");
  }
  const auto biases = hint_biases(hints, params.feature_dim, params.hint_bias);
  FeatureCoT cot;
  cot.bits.resize(params.feature_dim);
  double logprob = 0.0;
  for (std::size_t f = 0; f < params.feature_dim; ++f) {
    const double logit = params.reasoner_at(q.cls, f);
    const double u = rng::uniform01(eng);
    const bool set = u < sigmoid(logit + biases[f]);
    cot.bits[f] = set ? 1 : 0;
    // Reported likelihood is always the unhinted one; hints only reshape
    // the draw itself.
    logprob += set ? log_sigmoid(logit) : log_sigmoid(-logit);
  }
  return {std::move(cot), logprob};
}

double logprob_cot(const PolicyParams& params, const SynthQuestion& q,
                   const FeatureCoT& cot) {
  check_cot_dims(params, q, cot);
  double logprob = 0.0;
  for (std::size_t f = 0; f < params.feature_dim; ++f) {
    const double logit = params.reasoner_at(q.cls, f);
    logprob += cot.bits[f] ? log_sigmoid(logit) : log_sigmoid(-logit);
  }
  return logprob;
}

RubricProposal sample_rubrics(const PolicyParams& params,
                              const SynthQuestion& q, const FeatureCoT& cot,
                              std::size_t k, std::mt19937_64& eng) {
  check_cot_dims(params, q, cot);
  if (k < kMinCriteria || k > kMaxCriteria || k > params.pair_count()) {
    throw KOutOfRange("rubric count " + std::to_string(k) +
                      " outside [5, min(15, 2F)]");
  }
  auto weights = pair_weights(params, q.cls, cot);
  double total = 0.0;
  for (double w : weights) total += w;
  const auto mag_probs = magnitude_probs(params.magnitude_weights);

  RubricProposal proposal;
  proposal.logprob = 0.0;
  for (std::size_t step = 0; step < k; ++step) {
    const double target = rng::uniform01(eng) * total;
    std::size_t chosen = 0;
    double acc = 0.0;
    for (std::size_t p = 0; p < weights.size(); ++p) {
      if (weights[p] == 0.0) continue;
      acc += weights[p];
      chosen = p;
      if (target < acc) break;
    }
    proposal.logprob += std::log(weights[chosen] / total);
    total -= weights[chosen];
    weights[chosen] = 0.0;

    const double mu = rng::uniform01(eng);
    std::size_t magnitude = 0;
    double macc = 0.0;
    for (std::size_t m = 0; m < mag_probs.size(); ++m) {
      macc += mag_probs[m];
      magnitude = m;
      if (mu < macc) break;
    }
    proposal.logprob += std::log(mag_probs[magnitude]);
    proposal.latent.push_back({chosen, magnitude});
  }

  RubricDocument& doc = proposal.document;
  doc.question_domain = "synthetic/class-" + std::to_string(q.cls);
  int positive_sum = 0;
  int negative_sum = 0;
  for (const auto& choice : proposal.latent) {
    SyntheticCriterion criterion{
        PolicyParams::pair_feature(choice.pair_index),
        PolicyParams::pair_polarity(choice.pair_index)};
    const int magnitude = static_cast<int>(choice.magnitude_index) + 1;
    RubricCriterion entry;
    entry.criterion = criterion_text(criterion);
    if (criterion.polarity == Polarity::require_present) {
      entry.category = "coverage";
      entry.points = magnitude;
      positive_sum += magnitude;
    } else {
      entry.category = "flaw";
      entry.points = -magnitude;
      negative_sum -= magnitude;
    }
    doc.rubrics.push_back(std::move(entry));
  }
  doc.maximum_score = positive_sum;
  doc.minimum_score = negative_sum;
  // minimum_score < (max+min)/2 holds whenever the document is non-empty,
  // so self-scoring at the floor always satisfies the schema bound.
  doc.current_score = negative_sum;
  return proposal;
}

double logprob_latent(const PolicyParams& params, std::size_t cls,
                      const FeatureCoT& cot,
                      std::span<const LatentChoice> latent) {
  if (cot.bits.size() != params.feature_dim) {
    throw DimensionMismatch("CoT length != policy feature_dim");
  }
  if (cls >= params.classes) {
    throw DimensionMismatch("class out of policy range");
  }
  auto weights = pair_weights(params, cls, cot);
  double total = 0.0;
  for (double w : weights) total += w;
  const auto mag_probs = magnitude_probs(params.magnitude_weights);

  double logprob = 0.0;
  for (const auto& choice : latent) {
    if (choice.pair_index >= weights.size()) {
      throw LatentMismatch("latent pair index out of range");
    }
    if (choice.magnitude_index >= mag_probs.size()) {
      throw LatentMismatch("latent magnitude index out of range");
    }
    if (weights[choice.pair_index] == 0.0) {
      throw LatentMismatch("latent pair repeated within one document");
    }
    logprob += std::log(weights[choice.pair_index] / total);
    total -= weights[choice.pair_index];
    weights[choice.pair_index] = 0.0;
    logprob += std::log(mag_probs[choice.magnitude_index]);
  }
  return logprob;
}

double logprob_rubrics(const PolicyParams& params, const SynthQuestion& q,
                       const FeatureCoT& cot, const RubricProposal& proposal) {
  if (proposal.latent.size() != proposal.document.rubrics.size()) {
    throw LatentMismatch("latent size != document criterion count");
  }
  return logprob_latent(params, q.cls, cot, proposal.latent);
}

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::ordered_json env_to_json(const EnvConfig& env) {
  nlohmann::ordered_json j;
  j["feature_dim"] = env.feature_dim;
  j["classes"] = env.classes;
  j["required_per_class"] = env.required_per_class;
  j["distractors_per_class"] = env.distractors_per_class;
  j["coverage_threshold"] = env.coverage_threshold;
  j["flip_noise"] = env.flip_noise;
  return j;
}

EnvConfig env_from_json(const nlohmann::json& j) {
  EnvConfig env;
  env.feature_dim = j.at("feature_dim").get<std::size_t>();
  env.classes = j.at("classes").get<std::size_t>();
  env.required_per_class =
      j.at("required_per_class").get<std::vector<std::vector<std::size_t>>>();
  env.distractors_per_class =
      j.at("distractors_per_class")
          .get<std::vector<std::vector<std::size_t>>>();
  env.coverage_threshold = j.at("coverage_threshold").get<double>();
  env.flip_noise = j.at("flip_noise").get<double>();
  return env;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  nlohmann::ordered_json root;
  root["version"] = kCheckpointVersion;
  root["mode"] = checkpoint.mode;
  root["seed"] = checkpoint.seed;
  root["env"] = env_to_json(checkpoint.env);
  root["env_fingerprint"] = checkpoint.env.fingerprint();
  nlohmann::ordered_json p;
  p["classes"] = checkpoint.params.classes;
  p["feature_dim"] = checkpoint.params.feature_dim;
  p["reasoner_logits"] = checkpoint.params.reasoner_logits;
  p["rubricator_logits"] = checkpoint.params.rubricator_logits;
  p["magnitude_weights"] = checkpoint.params.magnitude_weights;
  p["hint_bias"] = checkpoint.params.hint_bias;
  p["cot_absence_offset"] = checkpoint.params.cot_absence_offset;
  root["params"] = std::move(p);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open checkpoint for writing: " + path);
  out << root.dump(2) << "\n";
  if (!out) throw IoFailure("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open checkpoint: " + path);
  nlohmann::json root =
      nlohmann::json::parse(in, /*cb=*/nullptr, /*allow_exceptions=*/false);
  if (root.is_discarded() || !root.is_object()) {
    throw CheckpointMismatch("checkpoint is not a JSON object");
  }
  try {
    if (root.at("version").get<int>() != kCheckpointVersion) {
      throw CheckpointMismatch("unsupported checkpoint version");
    }
    Checkpoint checkpoint;
    checkpoint.mode = root.at("mode").get<std::string>();
    checkpoint.seed = root.at("seed").get<std::uint64_t>();
    checkpoint.env = env_from_json(root.at("env"));
    checkpoint.env.validate();
    if (root.at("env_fingerprint").get<std::uint64_t>() !=
        checkpoint.env.fingerprint()) {
      throw CheckpointMismatch("environment fingerprint mismatch");
    }
    const auto& p = root.at("params");
    PolicyParams& params = checkpoint.params;
    params.classes = p.at("classes").get<std::size_t>();
    params.feature_dim = p.at("feature_dim").get<std::size_t>();
    params.reasoner_logits =
        p.at("reasoner_logits").get<std::vector<double>>();
    params.rubricator_logits =
        p.at("rubricator_logits").get<std::vector<double>>();
    params.magnitude_weights =
        p.at("magnitude_weights").get<std::array<double, 5>>();
    params.hint_bias = p.at("hint_bias").get<double>();
    params.cot_absence_offset = p.at("cot_absence_offset").get<double>();
    if (params.classes != checkpoint.env.classes ||
        params.feature_dim != checkpoint.env.feature_dim ||
        params.reasoner_logits.size() != params.classes * params.feature_dim ||
        params.rubricator_logits.size() !=
            params.classes * params.feature_dim * 2) {
      throw CheckpointMismatch("parameter dimensions inconsistent");
    }
    params.validate_finite();
    return checkpoint;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointMismatch(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace rlcer
