#include "equal/bandit.hpp"

#include <cmath>
#include <limits>

#include "equal/common.hpp"
#include "equal/error.hpp"

namespace equal::bandit {

BanditState BanditState::init(const std::vector<std::uint64_t>& docs_per_cluster,
                              std::uint64_t seed) {
    BanditState state;
    state.rng_seed = seed;
    state.arms.reserve(docs_per_cluster.size());
    for (std::size_t i = 0; i < docs_per_cluster.size(); ++i) {
        ArmStats arm;
        arm.cluster_id = static_cast<std::uint32_t>(i);
        arm.docs_remaining = docs_per_cluster[i];
        arm.exhausted = arm.docs_remaining == 0;
        state.arms.push_back(arm);
    }
    return state;
}

const ArmStats& BanditState::arm(std::uint32_t cluster_id) const {
    if (cluster_id >= arms.size()) throw DataError("unknown cluster id " + std::to_string(cluster_id));
    return arms[cluster_id];
}

ArmStats& BanditState::arm(std::uint32_t cluster_id) {
    if (cluster_id >= arms.size()) throw DataError("unknown cluster id " + std::to_string(cluster_id));
    return arms[cluster_id];
}

double alpha(const BanditState& state) {
    return 1.0 / (static_cast<double>(state.total_pulls) + 1.0);
}

double ds_score(const BanditState& state, std::uint32_t cluster_id) {
    const ArmStats& arm = state.arm(cluster_id);
    if (arm.pulls == 0 || !arm.reward.has_value()) {
        throw DataError("ds_score on unpulled arm " + std::to_string(cluster_id));
    }
    const double bonus = alpha(state) * std::sqrt(2.0 * std::log(static_cast<double>(state.total_pulls)) /
                                                  static_cast<double>(arm.pulls));
    return *arm.reward + bonus;
}

std::optional<std::uint32_t> select_cluster(const BanditState& state) {
    for (const ArmStats& arm : state.arms) {
        if (!arm.exhausted && arm.pulls == 0) return arm.cluster_id;
    }
    std::optional<std::uint32_t> best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const ArmStats& arm : state.arms) {
        if (arm.exhausted) continue;
        const double score = ds_score(state, arm.cluster_id);
        if (score > best_score) {
            best_score = score;
            best = arm.cluster_id;
        }
    }
    return best;
}

void record_pull(BanditState& state, std::uint32_t cluster_id, double reward,
                 std::uint64_t docs_taken) {
    ArmStats& arm = state.arm(cluster_id);
    arm.reward = reward;
    arm.pulls += 1;
    state.total_pulls += 1;
    arm.docs_remaining = docs_taken >= arm.docs_remaining ? 0 : arm.docs_remaining - docs_taken;
    arm.exhausted = arm.docs_remaining == 0;
}

double update_after_pull(BanditState& state, std::uint32_t cluster_id,
                         const ot::EmpiricalDistribution& cumulative_pairs,
                         const ot::EmpiricalDistribution& reference,
                         const ot::OtConfig& cfg, std::uint64_t docs_taken) {
    double cost = std::numeric_limits<double>::quiet_NaN();
    double reward = 0.0;
    if (cumulative_pairs.n > 0) {
        const std::uint64_t pull_no = state.arm(cluster_id).pulls + 1;
        const auto mu = ot::subsample(cumulative_pairs, cfg.point_cap,
                                      rng::mix(state.rng_seed, rng::mix(0x6d75, cluster_id * 1315423911ull + pull_no)));
        const auto nu = ot::subsample(reference, cfg.point_cap,
                                      rng::mix(state.rng_seed, rng::mix(0x6e75, cluster_id * 2654435761ull + pull_no)));
        cost = ot::ot_cost(mu, nu, cfg).cost;
        reward = ot::ot_reward(cost);
    }
    record_pull(state, cluster_id, reward, docs_taken);
    return cost;
}

double avg_sim_reward(const ot::EmpiricalDistribution& pairs,
                      const ot::EmpiricalDistribution& reference) {
    if (pairs.n == 0 || reference.n == 0) throw NumericError("avg_sim_reward: empty distribution");
    double total = 0.0;
    for (std::size_t i = 0; i < pairs.n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < reference.n; ++j) {
            s += embed::cosine_sim(pairs.point(i), reference.point(j));
        }
        total += s / static_cast<double>(reference.n);
    }
    return total / static_cast<double>(pairs.n);
}

}  // namespace equal::bandit
