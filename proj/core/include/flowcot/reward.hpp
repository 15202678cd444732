#pragma once

#include <vector>

#include "flowcot/toyworld.hpp"

namespace flowcot {

// Per-trajectory log-rewards: exact joint log-likelihood at anchors every
// lambda steps (plus both endpoints), linear interpolation in between. All
// values are divided by reward_temperature.
struct RewardTrace {
    int length = 0;  // rationale length n
    int lambda = 1;
    std::vector<int> anchor_indices;       // 0, lambda, 2*lambda, ..., n
    std::vector<double> anchor_logreward;  // exact values at anchors
    std::vector<double> interp_logreward;  // length n+1; entry t = log-reward of z_{1:t} terminated
    double reward_temperature = 1.0;
};

// Anchors score log_joint(x, z_{1:t}, y) / reward_temperature; interior
// entries are filled by the linear rule with the segment's actual endpoints
// (the final partial segment uses its true width).
RewardTrace compute_trace(const JointModel& model, const Sequence& x, const Sequence& y,
                          const Sequence& z, int lambda, double reward_temperature);

// Lookup into interp_logreward; out-of-range t is an error.
double reward_at(const RewardTrace& trace, int t);

// M = max_s |R(z_{1:s+1}) - 2 R(z_{1:s}) + R(z_{1:s-1})| over interior s,
// computed on the exact per-prefix log-rewards at the given temperature.
// Requires n >= 2.
double second_difference_bound(const JointModel& model, const Sequence& x, const Sequence& y,
                               const Sequence& z, double reward_temperature = 1.0);

// Exact per-prefix log-rewards (t = 0..n), same scaling as the trace.
std::vector<double> exact_prefix_logrewards(const JointModel& model, const Sequence& x,
                                            const Sequence& y, const Sequence& z,
                                            double reward_temperature = 1.0);

}  // namespace flowcot
