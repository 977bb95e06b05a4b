#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "equal/ot.hpp"

namespace equal::bandit {

struct ArmStats {
    std::uint32_t cluster_id = 0;
    std::uint64_t pulls = 0;
    std::optional<double> reward;  // unset before the first pull
    std::uint64_t docs_remaining = 0;
    bool exhausted = false;
};

struct BanditState {
    std::vector<ArmStats> arms;  // indexed by cluster id
    std::uint64_t total_pulls = 0;
    std::uint64_t rng_seed = 0;

    static BanditState init(const std::vector<std::uint64_t>& docs_per_cluster, std::uint64_t seed);
    const ArmStats& arm(std::uint32_t cluster_id) const;
    ArmStats& arm(std::uint32_t cluster_id);
};

// Exploration weight 1 / (total pulls + 1): decays from full exploration
// toward exploitation.
double alpha(const BanditState& state);

// reward + alpha * sqrt(2 ln(total pulls) / pulls_j). Requires a pulled arm.
double ds_score(const BanditState& state, std::uint32_t cluster_id);

// Lowest-id unpulled non-exhausted arm first (cold start); afterwards the
// non-exhausted arm with the highest DS score, ties to the lowest id.
// Empty when every arm is exhausted.
std::optional<std::uint32_t> select_cluster(const BanditState& state);

// Counter/flag bookkeeping for one pull with an already-computed reward.
void record_pull(BanditState& state, std::uint32_t cluster_id, double reward,
                 std::uint64_t docs_taken);

// Scores the cumulative pairs of the cluster against the reference via OT
// (subsampled under cfg.point_cap with seeds derived from state.rng_seed),
// then records the pull. Empty cumulative pairs score 0 and still count.
// Returns the OT cost, NaN when the pair set was empty.
double update_after_pull(BanditState& state, std::uint32_t cluster_id,
                         const ot::EmpiricalDistribution& cumulative_pairs,
                         const ot::EmpiricalDistribution& reference,
                         const ot::OtConfig& cfg, std::uint64_t docs_taken);

// no-OT ablation reward: mean over pair points of mean cosine to the
// reference points.
double avg_sim_reward(const ot::EmpiricalDistribution& pairs,
                      const ot::EmpiricalDistribution& reference);

}  // namespace equal::bandit
