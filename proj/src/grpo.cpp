#include "trajoracle/grpo.hpp"

#include <cmath>
#include <map>

#include "trajoracle/error.hpp"

namespace trajoracle {

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw Error(ErrorCode::GroupTooSmall, "advantages need at least two responses");
  }
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / n);

  std::vector<double> adv(rewards.size(), 0.0);
  // Degenerate group: no relative signal.
  if (!(std_dev > kAdvantageEpsilon)) {
    return adv;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    adv[i] = (rewards[i] - mean) / std_dev;
  }
  return adv;
}

double kl_estimate(std::span<const double> policy_logps, std::span<const double> ref_logps) {
  if (policy_logps.size() != ref_logps.size() || policy_logps.empty()) {
    throw Error(ErrorCode::LengthMismatch, "policy and reference log-probs must be equal, non-empty length");
  }
  double sum = 0.0;
  for (std::size_t t = 0; t < policy_logps.size(); ++t) {
    sum += policy_logps[t] - ref_logps[t];
  }
  return sum / static_cast<double>(policy_logps.size());
}

GrpoOutput grpo_loss(const RolloutGroup& group, double beta) {
  std::vector<double> rewards;
  rewards.reserve(group.responses.size());
  for (const Rollout& r : group.responses) rewards.push_back(r.reward);

  GrpoOutput out;
  out.beta = beta;
  out.advantages = group_advantages(rewards);
  double weighted = 0.0;
  double kl_sum = 0.0;
  for (std::size_t i = 0; i < group.responses.size(); ++i) {
    const Rollout& r = group.responses[i];
    const double kl = kl_estimate(r.policy_logps, r.ref_logps);
    out.kl.push_back(kl);
    kl_sum += kl;
    double seq_logp = 0.0;
    for (double lp : r.policy_logps) seq_logp += lp;
    weighted += seq_logp * out.advantages[i];
  }
  out.loss = -weighted + beta * (kl_sum / static_cast<double>(group.responses.size()));
  return out;
}

std::vector<RolloutGroup> build_groups(std::span<const ScoredRecord> records, std::size_t group_size, bool strict) {
  std::map<std::string, RolloutGroup> by_id;
  for (const ScoredRecord& rec : records) {
    RolloutGroup& g = by_id[rec.query_id];
    g.query_id = rec.query_id;
    g.responses.push_back({rec.reward, rec.policy_logps, rec.ref_logps});
  }
  std::vector<RolloutGroup> out;
  out.reserve(by_id.size());
  for (auto& [id, g] : by_id) {
    const std::size_t n = g.responses.size();
    if ((strict && n != group_size) || n < 2) {
      throw Error(ErrorCode::IncompleteGroup,
                  "query " + id + " has " + std::to_string(n) + " responses, expected " + std::to_string(group_size));
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace trajoracle
