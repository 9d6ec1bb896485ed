#include "rlcer/synth_env.hpp"

#include <cmath>

#include "rlcer/rng.hpp"

namespace rlcer {
namespace {

constexpr std::uint64_t kGoldTag = 0x67;
constexpr std::uint64_t kWrongTag = 0x77;
constexpr std::uint64_t kFlipTag = 0x46;

}  // namespace

EnvConfig EnvConfig::default_config() {
  EnvConfig cfg;
  cfg.required_per_class.resize(cfg.classes);
  cfg.distractors_per_class.resize(cfg.classes);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    for (std::size_t i = 0; i < 4; ++i) {
      cfg.required_per_class[c].push_back((4 * c + i) % cfg.feature_dim);
    }
    cfg.distractors_per_class[c].push_back((4 * c + 4) % cfg.feature_dim);
    cfg.distractors_per_class[c].push_back((4 * c + 5) % cfg.feature_dim);
  }
  return cfg;
}

void EnvConfig::validate() const {
  if (feature_dim == 0) throw EnvError("feature_dim must be positive");
  if (classes == 0) throw EnvError("classes must be positive");
  if (required_per_class.size() != classes ||
      distractors_per_class.size() != classes) {
    throw EnvError("per-class feature sets must have one entry per class");
  }
  if (!(coverage_threshold > 0.0 && coverage_threshold <= 1.0)) {
    throw EnvError("coverage_threshold must be in (0, 1]");
  }
  if (!(flip_noise >= 0.0 && flip_noise < 1.0)) {
    throw EnvError("flip_noise must be in [0, 1)");
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (required_per_class[c].empty()) {
      throw EnvError("class " + std::to_string(c) + " has no required features");
    }
    for (std::size_t f : required_per_class[c]) {
      if (f >= feature_dim) throw EnvError("required feature index out of range");
    }
    for (std::size_t f : distractors_per_class[c]) {
      if (f >= feature_dim) throw EnvError("distractor feature index out of range");
      for (std::size_t r : required_per_class[c]) {
        if (r == f) {
          throw EnvError("class " + std::to_string(c) +
                         ": required and distractor sets overlap at feature " +
                         std::to_string(f));
        }
      }
    }
  }
}

std::uint64_t EnvConfig::fingerprint() const {
  std::uint64_t h = rng::mix(feature_dim, classes,
                             static_cast<std::uint64_t>(coverage_threshold * 1e9),
                             static_cast<std::uint64_t>(flip_noise * 1e9));
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t f : required_per_class[c]) h = rng::mix(h, 1, c, f);
    for (std::size_t f : distractors_per_class[c]) h = rng::mix(h, 2, c, f);
  }
  return h;
}

SynthQuestion gen_question(std::uint64_t rng_seed, const EnvConfig& cfg) {
  SynthQuestion q;
  q.id = rng_seed;
  q.cls = static_cast<std::size_t>(rng::splitmix64(rng_seed) % cfg.classes);
  q.gold = rng::mix(q.id, static_cast<std::uint64_t>(q.cls), kGoldTag);
  return q;
}

bool answer_rule(const FeatureCoT& cot, std::size_t cls, const EnvConfig& cfg) {
  if (cot.bits.size() != cfg.feature_dim) {
    throw DimensionMismatch("CoT length " + std::to_string(cot.bits.size()) +
                            " != feature_dim " + std::to_string(cfg.feature_dim));
  }
  if (cls >= cfg.classes) throw DimensionMismatch("class index out of range");
  const auto& required = cfg.required_per_class[cls];
  std::size_t covered = 0;
  for (std::size_t f : required) covered += cot.bits[f] ? 1 : 0;
  const double coverage =
      static_cast<double>(covered) / static_cast<double>(required.size());
  if (coverage < cfg.coverage_threshold) return false;
  for (std::size_t f : cfg.distractors_per_class[cls]) {
    if (cot.bits[f]) return false;
  }
  return true;
}

std::uint64_t answer_of(const FeatureCoT& cot, const SynthQuestion& q,
                        const EnvConfig& cfg, std::uint64_t noise_seed) {
  bool ok = answer_rule(cot, q.cls, cfg);
  if (cfg.flip_noise > 0.0) {
    const double u = static_cast<double>(
                         rng::mix(noise_seed, q.id, kFlipTag) >> 11) *
                     0x1.0p-53;
    if (u < cfg.flip_noise) ok = !ok;
  }
  return ok ? q.gold : rng::mix(q.id, static_cast<std::uint64_t>(q.cls), kWrongTag);
}

double oracle_corr(std::size_t feature,
                   const std::function<FeatureCoT(std::mt19937_64&)>& sampler,
                   const SynthQuestion& q, const EnvConfig& cfg,
                   std::size_t samples, std::uint64_t rng_seed) {
  if (feature >= cfg.feature_dim) throw EnvError("feature index out of range");
  if (samples < 100) throw EnvError("oracle_corr needs at least 100 samples");
  auto eng = rng::engine_from(rng_seed);
  double sum_v = 0, sum_z = 0, sum_vz = 0, sum_vv = 0, sum_zz = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const FeatureCoT cot = sampler(eng);
    const double v = cot.bits.at(feature) ? 1.0 : 0.0;
    const double z =
        answer_of(cot, q, cfg, rng::mix(rng_seed, i)) == q.gold ? 1.0 : 0.0;
    sum_v += v;
    sum_z += z;
    sum_vz += v * z;
    sum_vv += v * v;
    sum_zz += z * z;
  }
  const double n = static_cast<double>(samples);
  const double cov = sum_vz / n - (sum_v / n) * (sum_z / n);
  const double var_v = sum_vv / n - (sum_v / n) * (sum_v / n);
  const double var_z = sum_zz / n - (sum_z / n) * (sum_z / n);
  if (var_v <= 0.0 || var_z <= 0.0) return 0.0;
  return cov / std::sqrt(var_v * var_z);
}

}  // namespace rlcer
