#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rlcer/metrics.hpp"
#include "rlcer/optimizer.hpp"
#include "rlcer/policy.hpp"
#include "rlcer/reward_engine.hpp"
#include "rlcer/synth_env.hpp"

namespace rlcer {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kWarmupSteps = 10;
inline constexpr std::size_t kEvalQuestionCount = 32;

struct RunConfig {
  TrainMode mode = TrainMode::rlcer;
  double alpha = 0.2;
  int rollout_n = 8;
  double clip_epsilon = 0.2;
  int max_steps = 1500;
  int batch_questions = 8;
  double lr = 0.05;
  std::uint64_t seed = 0;
  EnvConfig env = EnvConfig::default_config();
  int eval_every = 50;
  int eval_samples = 16;
  double hint_bias = 4.0;
  VerifierHandle::Kind verifier = VerifierHandle::Kind::local;
  std::string verifier_address;  // required when verifier == remote

  void validate() const;  // throws ConfigError
};

// Flat key = value document with an env. sub-section; '#' starts a comment;
// unknown keys are errors. Feature-set values list classes separated by '|'
// and indices separated by spaces.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

struct TrainHooks {
  // Rewrites serialized rubric documents before re-parsing (tests only).
  std::function<std::string(const std::string&)> document_hook;
};

struct TrainResult {
  PolicyParams params;
  std::vector<MetricsRow> rows;
  std::vector<std::vector<std::uint64_t>> question_ids;  // per step
};

// Runs config.max_steps training steps, logging one metrics row per step
// and an eval row every eval_every steps (plus the final step). When
// metrics_path is set, rows are appended to the file as they are produced
// so an aborted run leaves a partial table behind. Fully reproducible from
// (config, seed).
TrainResult run_training(const RunConfig& config,
                         const std::string& metrics_path = "",
                         const TrainHooks& hooks = {});

enum class HintMode { none, self_proposed, ground_truth };

const char* to_string(HintMode mode);
std::optional<HintMode> hint_mode_from_string(std::string_view name);

struct EvalQuestionReport {
  std::uint64_t id = 0;
  double rate = 0.0;  // fraction of correct samples
  bool any_correct = false;
};

struct EvalReport {
  double pass1 = 0.0;       // mean per-question fraction of correct samples
  double best_of_n = 0.0;   // fraction of questions with any correct sample
  std::vector<EvalQuestionReport> questions;
};

// Evaluates on the fixed question set derived from (seed). Sampling streams
// are keyed per (question, sample) and shared across hint modes, so hinted
// and unhinted evaluations pair draw-for-draw.
EvalReport run_eval(const PolicyParams& params, const EnvConfig& env,
                    int samples, HintMode hints, std::uint64_t seed);

// Lower-level entry taking an arbitrary per-question hint provider.
EvalReport eval_with_hints(
    const PolicyParams& params, const EnvConfig& env, int samples,
    std::uint64_t seed,
    const std::function<HintContext(const SynthQuestion&)>& provider);

// Verbosity from RLCER_LOG (quiet|info|debug); logging goes to stderr.
int log_verbosity();
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace rlcer
