#include "rlcer/verifier.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <charconv>
#include <thread>

#include "rlcer/rng.hpp"

namespace rlcer {
namespace {

constexpr std::string_view kCoverPrefix = "covers feature ";
constexpr std::string_view kDwellPrefix = "dwells on feature ";

std::uint64_t cot_hash(const FeatureCoT& cot) {
  std::uint64_t h = rng::mix(cot.bits.size());
  for (std::size_t i = 0; i < cot.bits.size(); ++i) {
    if (cot.bits[i]) h = rng::mix(h, i);
  }
  return h;
}

template <class Fn>
void run_indexed(std::size_t count, int parallelism, Fn&& fn) {
  if (parallelism <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(parallelism), count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

int judge_local(const SyntheticCriterion& criterion, const FeatureCoT& cot) {
  if (criterion.target_feature >= cot.bits.size()) {
    throw FeatureOutOfRange("criterion feature " +
                            std::to_string(criterion.target_feature) +
                            " out of range for CoT of length " +
                            std::to_string(cot.bits.size()));
  }
  return cot.bits[criterion.target_feature] ? 1 : 0;
}

std::vector<std::uint8_t> LocalVerifier::judge(
    std::span<const SyntheticCriterion> rubrics, const FeatureCoT& cot) const {
  std::vector<std::uint8_t> row(rubrics.size(), 0);
  const std::uint64_t ch = flip_noise_ > 0.0 ? cot_hash(cot) : 0;
  for (std::size_t k = 0; k < rubrics.size(); ++k) {
    int bit = judge_local(rubrics[k], cot);
    if (flip_noise_ > 0.0) {
      const std::uint64_t key =
          rng::mix(noise_seed_, ch, rubrics[k].target_feature,
                   static_cast<std::uint64_t>(rubrics[k].polarity), k);
      const double u = static_cast<double>(key >> 11) * 0x1.0p-53;
      if (u < flip_noise_) bit = 1 - bit;
    }
    row[k] = static_cast<std::uint8_t>(bit);
  }
  return row;
}

std::string verifier_request_json(const VerifierRequest& request) {
  nlohmann::ordered_json root;
  root["question"] = request.question;
  root["response"] = request.response;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& c : request.rubrics) {
    nlohmann::ordered_json item;
    item["category"] = c.category;
    item["criterion"] = c.criterion;
    item["points"] = c.points;
    arr.push_back(std::move(item));
  }
  root["rubrics"] = std::move(arr);
  return root.dump();
}

VerifierResponse parse_verifier_response(std::string_view body,
                                         const VerifierRequest& request) {
  const auto root =
      nlohmann::json::parse(body, /*cb=*/nullptr, /*allow_exceptions=*/false);
  if (root.is_discarded() || !root.is_object()) {
    throw ProtocolViolation("reply is not a JSON object");
  }
  if (!root.contains("judgement") || !root.at("judgement").is_array()) {
    throw ProtocolViolation("reply missing judgement array");
  }
  if (!root.contains("final_score") || !root.at("final_score").is_number()) {
    throw ProtocolViolation("reply missing final_score number");
  }
  VerifierResponse response;
  for (const auto& v : root.at("judgement")) {
    if (!v.is_boolean()) {
      throw ProtocolViolation("judgement entries must be booleans");
    }
    response.judgement.push_back(v.get<bool>() ? 1 : 0);
  }
  if (response.judgement.size() != request.rubrics.size()) {
    throw ProtocolViolation("judgement length " +
                            std::to_string(response.judgement.size()) +
                            " != rubric count " +
                            std::to_string(request.rubrics.size()));
  }
  const double score = root.at("final_score").get<double>();
  int recomputed = 0;
  for (std::size_t k = 0; k < request.rubrics.size(); ++k) {
    if (response.judgement[k]) recomputed += request.rubrics[k].points;
  }
  if (score != static_cast<double>(recomputed)) {
    throw ScoreMismatch("final_score " + std::to_string(score) +
                        " != recomputed sum " + std::to_string(recomputed));
  }
  response.final_score = recomputed;
  return response;
}

VerifierResponse judge_remote(const VerifierRequest& request,
                              const RemoteVerifierConfig& config) {
  const std::string body = verifier_request_json(request);
  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, config.max_attempts); ++attempt) {
    httplib::Client client(config.base_url);
    client.set_connection_timeout(config.timeout_seconds);
    client.set_read_timeout(config.timeout_seconds);
    auto res = client.Post(config.path, body, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    try {
      return parse_verifier_response(res->body, request);
    } catch (const VerifierError& e) {
      last_error = e.what();
    }
  }
  if (last_error.find("transport") == 0 || last_error.find("HTTP") == 0) {
    throw Transport(last_error);
  }
  throw ProtocolViolation("retries exhausted: " + last_error);
}

std::vector<JudgmentRow> judge_batch(std::span<const LocalJob> jobs,
                                     const LocalVerifier& verifier,
                                     int parallelism) {
  if (parallelism < 1) throw VerifierError("parallelism must be >= 1");
  std::vector<JudgmentRow> rows(jobs.size());
  run_indexed(jobs.size(), parallelism, [&](std::size_t i) {
    try {
      rows[i].bits = verifier.judge(jobs[i].rubrics, jobs[i].cot);
      rows[i].failed = false;
    } catch (...) {
      rows[i].bits.assign(jobs[i].rubrics.size(), 0);
      rows[i].failed = true;
    }
  });
  return rows;
}

std::vector<JudgmentRow> judge_batch(std::span<const VerifierRequest> requests,
                                     const RemoteVerifierConfig& config,
                                     int parallelism) {
  if (parallelism < 1) throw VerifierError("parallelism must be >= 1");
  std::vector<JudgmentRow> rows(requests.size());
  run_indexed(requests.size(), parallelism, [&](std::size_t i) {
    try {
      const VerifierResponse response = judge_remote(requests[i], config);
      rows[i].bits = response.judgement;
      rows[i].failed = false;
    } catch (...) {
      rows[i].bits.assign(requests[i].rubrics.size(), 0);
      rows[i].failed = true;
    }
  });
  return rows;
}

std::string criterion_text(const SyntheticCriterion& criterion) {
  const auto prefix = criterion.polarity == Polarity::require_present
                          ? kCoverPrefix
                          : kDwellPrefix;
  return std::string(prefix) + std::to_string(criterion.target_feature);
}

std::optional<SyntheticCriterion> criterion_from_text(std::string_view text,
                                                      std::size_t feature_dim) {
  SyntheticCriterion criterion;
  std::string_view rest;
  if (text.starts_with(kCoverPrefix)) {
    criterion.polarity = Polarity::require_present;
    rest = text.substr(kCoverPrefix.size());
  } else if (text.starts_with(kDwellPrefix)) {
    criterion.polarity = Polarity::penalize_present;
    rest = text.substr(kDwellPrefix.size());
  } else {
    return std::nullopt;
  }
  std::size_t feature = 0;
  const auto [ptr, ec] =
      std::from_chars(rest.data(), rest.data() + rest.size(), feature);
  if (ec != std::errc() || ptr != rest.data() + rest.size()) {
    return std::nullopt;
  }
  if (feature >= feature_dim) return std::nullopt;
  criterion.target_feature = feature;
  return criterion;
}

std::string question_text(const SynthQuestion& q) {
  return "question " + std::to_string(q.id) + " class " + std::to_string(q.cls);
}

std::string cot_text(const FeatureCoT& cot) {
  std::string out;
  out.reserve(cot.bits.size());
  for (const auto b : cot.bits) out.push_back(b ? '1' : '0');
  return out;
}

}  // namespace rlcer
