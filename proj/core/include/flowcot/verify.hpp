#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "flowcot/objective.hpp"
#include "flowcot/policy.hpp"
#include "flowcot/reward.hpp"
#include "flowcot/toyworld.hpp"

namespace flowcot {

// Distance between a target and a learned distribution over complete
// rationales. kl is target || learned and finite only when the learned
// distribution covers the target support. sample_count 0 means the learned
// side was enumerated exactly.
struct DistanceReport {
    double tv = 0.0;
    double kl = 0.0;
    std::size_t support_size = 0;
    std::uint64_t sample_count = 0;
};

// Exact distribution over rationales of length <= max_len induced by the
// unconstrained temperature-1 policy; the forced-termination mass at max_len
// is attributed to the truncated rationale.
std::map<std::vector<int>, double> policy_distribution_exact(const PolicyParams& params,
                                                             int instance_id, int max_len,
                                                             std::uint64_t cap = 10'000'000);

// Frequency estimate from n unconstrained samples.
std::map<std::vector<int>, double> policy_distribution_sampled(const PolicyParams& params,
                                                               int instance_id, int max_len,
                                                               std::uint64_t n,
                                                               std::uint64_t seed);

DistanceReport distance(const std::map<std::vector<int>, double>& target,
                        const std::map<std::vector<int>, double>& learned,
                        std::uint64_t sample_count = 0);

// Max |residual| over all sub-trajectories with exact (lambda = 1) rewards.
double flow_residual_report(const PolicyParams& params, const Trajectory& trajectory,
                            std::span<const double> exact_logrewards);

struct InterpBoundReport {
    double max_abs_error = 0.0;
    double global_bound = 0.0;             // M * lambda^2 / 8
    std::vector<bool> per_index_pass;      // one per interior index
    bool all_pass = true;
};

// Compares interpolated vs exact per-prefix log-rewards at every interior
// index and checks |err_i| <= M * i * (w - i) / 8 with the segment's actual
// width w and M from second_difference_bound.
InterpBoundReport interp_bound_check(const JointModel& model, const Sequence& x, const Sequence& y,
                        const Sequence& z, int lambda);

// Central finite differences on every logit touched by the analytic
// gradient; returns the max relative error (absolute below 1e-6 scale).
double gradcheck(const PolicyParams& params, const Trajectory& trajectory,
                 const RewardTrace& trace, double eps);

// Params whose policy realizes the given distribution exactly: logits set to
// the log conditional masses of the distribution's prefix tree. Zero masses
// get a -700 floor to keep logits finite.
PolicyParams posterior_factorized_params(const std::map<std::vector<int>, double>& target,
                                         int instance_id, int vocab_size);

}  // namespace flowcot
