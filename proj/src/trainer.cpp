#include "rlcer/trainer.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "rlcer/rng.hpp"

namespace rlcer {
namespace {

constexpr std::uint64_t kQuestionTag = 0x51;
constexpr std::uint64_t kEvalQuestionTag = 0x61;
constexpr std::uint64_t kEvalSampleTag = 0x62;
constexpr std::uint64_t kEvalNoiseTag = 0x63;
constexpr std::uint64_t kEvalHintCotTag = 0x64;
constexpr std::uint64_t kEvalHintRubTag = 0x65;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::vector<std::size_t>> parse_class_sets(const std::string& value,
                                                       const std::string& key) {
  std::vector<std::vector<std::size_t>> sets;
  std::stringstream ss(value);
  std::string group;
  while (std::getline(ss, group, '|')) {
    std::vector<std::size_t> indices;
    std::stringstream gs(group);
    std::string token;
    while (gs >> token) {
      try {
        indices.push_back(std::stoul(token));
      } catch (const std::exception&) {
        throw ConfigError("bad index '" + token + "' in " + key);
      }
    }
    sets.push_back(std::move(indices));
  }
  return sets;
}

double parse_real(const std::string& value, const std::string& key) {
  try {
    std::size_t consumed = 0;
    const double v = std::stod(value, &consumed);
    if (consumed != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": '" + value + "'");
  }
}

std::int64_t parse_integer(const std::string& value, const std::string& key) {
  try {
    std::size_t consumed = 0;
    const std::int64_t v = std::stoll(value, &consumed);
    if (consumed != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for " + key + ": '" + value + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must be in (0, 1)");
  }
  if (rollout_n < 2) {
    throw ConfigError("rollout_n must be at least 2 (correlation needs two "
                      "samples)");
  }
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
    throw ConfigError("clip_epsilon must be in (0, 1)");
  }
  if (max_steps < 1) throw ConfigError("max_steps must be positive");
  if (batch_questions < 1) throw ConfigError("batch_questions must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (eval_every < 1) throw ConfigError("eval_every must be positive");
  if (eval_samples < 1) throw ConfigError("eval_samples must be positive");
  if (hint_bias < 0.0) throw ConfigError("hint_bias must be non-negative");
  try {
    env.validate();
  } catch (const EnvError& e) {
    throw ConfigError(std::string("env: ") + e.what());
  }
  if (2 * env.feature_dim < kMinCriteria) {
    throw ConfigError("env.feature_dim too small to host 5-criterion rubric "
                      "documents");
  }
  if (verifier == VerifierHandle::Kind::remote && verifier_address.empty()) {
    throw ConfigError("remote verifier requires an address");
  }
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::map<std::string, std::string> pairs;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    if (!pairs.emplace(key, value).second) {
      throw ConfigError("duplicate key: " + key);
    }
  }

  bool required_set = false;
  bool distractors_set = false;
  for (const auto& [key, value] : pairs) {
    if (key == "mode") {
      const auto mode = train_mode_from_string(value);
      if (!mode) throw ConfigError("unknown mode: " + value);
      config.mode = *mode;
    } else if (key == "alpha") {
      config.alpha = parse_real(value, key);
    } else if (key == "rollout_n") {
      config.rollout_n = static_cast<int>(parse_integer(value, key));
    } else if (key == "clip_epsilon") {
      config.clip_epsilon = parse_real(value, key);
    } else if (key == "max_steps") {
      config.max_steps = static_cast<int>(parse_integer(value, key));
    } else if (key == "batch_questions") {
      config.batch_questions = static_cast<int>(parse_integer(value, key));
    } else if (key == "lr") {
      config.lr = parse_real(value, key);
    } else if (key == "seed") {
      config.seed = static_cast<std::uint64_t>(parse_integer(value, key));
    } else if (key == "eval_every") {
      config.eval_every = static_cast<int>(parse_integer(value, key));
    } else if (key == "eval_samples") {
      config.eval_samples = static_cast<int>(parse_integer(value, key));
    } else if (key == "hint_bias") {
      config.hint_bias = parse_real(value, key);
    } else if (key == "verifier") {
      if (value == "local") {
        config.verifier = VerifierHandle::Kind::local;
      } else if (value.rfind("remote:", 0) == 0) {
        config.verifier = VerifierHandle::Kind::remote;
        config.verifier_address = trim(value.substr(7));
      } else {
        throw ConfigError("verifier must be 'local' or 'remote:<url>'");
      }
    } else if (key == "env.feature_dim") {
      config.env.feature_dim =
          static_cast<std::size_t>(parse_integer(value, key));
    } else if (key == "env.classes") {
      config.env.classes = static_cast<std::size_t>(parse_integer(value, key));
    } else if (key == "env.coverage_threshold") {
      config.env.coverage_threshold = parse_real(value, key);
    } else if (key == "env.flip_noise") {
      config.env.flip_noise = parse_real(value, key);
    } else if (key == "env.required_per_class") {
      config.env.required_per_class = parse_class_sets(value, key);
      required_set = true;
    } else if (key == "env.distractors_per_class") {
      config.env.distractors_per_class = parse_class_sets(value, key);
      distractors_set = true;
    } else {
      throw ConfigError("unknown key: " + key);
    }
  }

  // Re-derive the default per-class sets when dimensions changed but the
  // sets were not given explicitly.
  const EnvConfig defaults = EnvConfig::default_config();
  const bool dims_changed = config.env.feature_dim != defaults.feature_dim ||
                            config.env.classes != defaults.classes;
  if (dims_changed && (!required_set || !distractors_set)) {
    throw ConfigError(
        "env.required_per_class and env.distractors_per_class must be given "
        "when env.feature_dim or env.classes is changed");
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

const char* to_string(HintMode mode) {
  switch (mode) {
    case HintMode::none: return "none";
    case HintMode::self_proposed: return "self";
    case HintMode::ground_truth: return "oracle";
  }
  return "unknown";
}

std::optional<HintMode> hint_mode_from_string(std::string_view name) {
  if (name == "none") return HintMode::none;
  if (name == "self" || name == "self_proposed") return HintMode::self_proposed;
  if (name == "oracle" || name == "ground_truth") return HintMode::ground_truth;
  return std::nullopt;
}

int log_verbosity() {
  const char* value = std::getenv("RLCER_LOG");
  if (value == nullptr) return 1;
  const std::string v(value);
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

void log_info(const std::string& message) {
  if (log_verbosity() >= 1) std::cerr << "[rlcer] " << message << "\n";
}

void log_debug(const std::string& message) {
  if (log_verbosity() >= 2) std::cerr << "[rlcer:debug] " << message << "\n";
}

TrainResult run_training(const RunConfig& config,
                         const std::string& metrics_path,
                         const TrainHooks& hooks) {
  config.validate();

  VerifierHandle verifier;
  verifier.kind = config.verifier;
  if (config.verifier == VerifierHandle::Kind::remote) {
    verifier.remote.base_url = config.verifier_address;
  }

  TrainOptions options;
  options.mode = config.mode;
  options.alpha = config.alpha;
  options.clip_epsilon = config.clip_epsilon;
  options.rollout_n = config.rollout_n;
  options.document_hook = hooks.document_hook;

  TrainResult result;
  result.params = initial_params(config.env, config.hint_bias);

  std::ofstream metrics_file;
  if (!metrics_path.empty()) {
    metrics_file.open(metrics_path, std::ios::binary);
    if (!metrics_file) {
      throw IoFailure("cannot open metrics file for writing: " + metrics_path);
    }
    metrics_file << kMetricsHeader << "\n";
  }

  for (int step = 0; step < config.max_steps; ++step) {
    std::vector<SynthQuestion> batch;
    batch.reserve(config.batch_questions);
    for (int i = 0; i < config.batch_questions; ++i) {
      const std::uint64_t qseed =
          rng::mix(config.seed, kQuestionTag, static_cast<std::uint64_t>(step),
                   static_cast<std::uint64_t>(i));
      batch.push_back(gen_question(qseed, config.env));
    }

    const double warmup =
        std::min(1.0, static_cast<double>(step + 1) / kWarmupSteps);
    options.lr = config.lr * warmup;

    StepResult sr = train_step(result.params, batch, config.env, verifier,
                               options, config.seed, step);
    result.params = std::move(sr.params);

    MetricsRow row;
    row.step = step;
    row.train_accuracy = sr.metrics.train_accuracy;
    row.mean_corr_valid = sr.metrics.mean_corr_valid;
    row.mean_corr_all = sr.metrics.mean_corr_all;
    row.valid_fraction = sr.metrics.valid_fraction;
    row.mean_cot = sr.metrics.mean_cot;
    row.mean_evolving = sr.metrics.mean_evolving;
    row.mean_reasoner_total = sr.metrics.mean_reasoner_total;
    row.clip_fraction = sr.stats.clip_fraction;
    row.grad_norm = sr.stats.grad_norm;

    if (step % config.eval_every == 0 || step == config.max_steps - 1) {
      const EvalReport report =
          run_eval(result.params, config.env, config.eval_samples,
                   HintMode::none, config.seed);
      row.eval_pass1 = report.pass1;
    }

    result.question_ids.push_back(std::move(sr.metrics.question_ids));
    result.rows.push_back(row);
    if (metrics_file.is_open()) {
      const MetricsRow rows_one[] = {row};
      const std::string text = metrics_to_csv(rows_one);
      metrics_file << text.substr(text.find('\n') + 1);
      metrics_file.flush();
    }
    if (step % 100 == 0) {
      log_debug("step " + std::to_string(step) + " accuracy " +
                std::to_string(row.train_accuracy));
    }
  }
  log_info("training finished: " + std::to_string(config.max_steps) +
           " steps, final accuracy " +
           std::to_string(result.rows.back().train_accuracy));
  return result;
}

EvalReport eval_with_hints(
    const PolicyParams& params, const EnvConfig& env, int samples,
    std::uint64_t seed,
    const std::function<HintContext(const SynthQuestion&)>& provider) {
  if (samples < 1) throw ConfigError("eval_samples must be positive");
  EvalReport report;
  double rate_sum = 0.0;
  std::size_t any_count = 0;
  for (std::size_t j = 0; j < kEvalQuestionCount; ++j) {
    const SynthQuestion q =
        gen_question(rng::mix(seed, kEvalQuestionTag, j), env);
    HintContext hints;
    const HintContext* hints_ptr = nullptr;
    if (provider) {
      hints = provider(q);
      if (!hints.hints.empty()) hints_ptr = &hints;
    }
    std::size_t correct = 0;
    for (int s = 0; s < samples; ++s) {
      auto eng = rng::engine_from(
          rng::mix(seed, kEvalSampleTag, j, static_cast<std::uint64_t>(s)));
      const auto [cot, lp] = sample_cot(params, q, eng, hints_ptr);
      const std::uint64_t answer = answer_of(
          cot, q, env,
          rng::mix(seed, kEvalNoiseTag, j, static_cast<std::uint64_t>(s)));
      if (answer == q.gold) ++correct;
    }
    EvalQuestionReport qr;
    qr.id = q.id;
    qr.rate = static_cast<double>(correct) / static_cast<double>(samples);
    qr.any_correct = correct > 0;
    rate_sum += qr.rate;
    any_count += qr.any_correct ? 1 : 0;
    report.questions.push_back(qr);
  }
  report.pass1 = rate_sum / static_cast<double>(kEvalQuestionCount);
  report.best_of_n =
      static_cast<double>(any_count) / static_cast<double>(kEvalQuestionCount);
  return report;
}

EvalReport run_eval(const PolicyParams& params, const EnvConfig& env,
                    int samples, HintMode hints, std::uint64_t seed) {
  switch (hints) {
    case HintMode::none:
      return eval_with_hints(params, env, samples, seed, nullptr);
    case HintMode::ground_truth:
      return eval_with_hints(
          params, env, samples, seed,
          [&](const SynthQuestion& q) { return oracle_hints(q, env); });
    case HintMode::self_proposed:
      return eval_with_hints(
          params, env, samples, seed, [&](const SynthQuestion& q) {
            auto cot_eng = rng::engine_from(
                rng::mix(seed, kEvalHintCotTag, q.id));
            const auto [cot, lp] = sample_cot(params, q, cot_eng);
            auto rub_eng = rng::engine_from(
                rng::mix(seed, kEvalHintRubTag, q.id));
            const RubricProposal proposal =
                sample_generation(params, q, cot, rub_eng);
            return hints_from_document(proposal.document, env.feature_dim);
          });
  }
  throw ConfigError("unknown hint mode");
}

}  // namespace rlcer
