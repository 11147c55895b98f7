#pragma once

#include <span>
#include <string>
#include <vector>

namespace trajoracle {

inline constexpr double kAdvantageEpsilon = 1e-8;

struct Rollout {
  double reward = 0.0;
  std::vector<double> policy_logps;  // per generated token
  std::vector<double> ref_logps;
};

struct RolloutGroup {
  std::string query_id;
  std::vector<Rollout> responses;
};

struct GrpoOutput {
  std::vector<double> advantages;
  std::vector<double> kl;
  double loss = 0.0;
  double beta = 0.0;
};

/// (r - mean) / population std; all zeros when std <= kAdvantageEpsilon.
/// Throws GroupTooSmall below 2.
std::vector<double> group_advantages(std::span<const double> rewards);

/// Mean per-token log-ratio log pi(t) - log pi_ref(t). Throws LengthMismatch.
double kl_estimate(std::span<const double> policy_logps, std::span<const double> ref_logps);

/// -sum_i (sum_t logp_it) * A_i + beta * mean_i KL_i.
GrpoOutput grpo_loss(const RolloutGroup& group, double beta);

struct ScoredRecord {
  std::string query_id;
  double reward = 0.0;
  std::vector<double> policy_logps;
  std::vector<double> ref_logps;
};

/// Groups records by query_id (groups ordered by id, members by arrival).
/// Strict mode demands exactly `group_size` members per group; lenient mode
/// keeps any group of at least two. Throws IncompleteGroup otherwise.
std::vector<RolloutGroup> build_groups(std::span<const ScoredRecord> records, std::size_t group_size,
                                       bool strict = true);

}  // namespace trajoracle
