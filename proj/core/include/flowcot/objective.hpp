#pragma once

#include <span>
#include <vector>

#include "flowcot/policy.hpp"
#include "flowcot/reward.hpp"

namespace flowcot {

// Value of the bracketed log-ratio for the sub-trajectory (i, j) before
// squaring: logR[i] + sum_{k=i+1..j} log q(z_k|.) + log q(top|z_{1:j})
//           - logR[j] - log q(top|z_{1:i}).
struct SubTrajectoryResidual {
    int i = 0;
    int j = 0;
    double residual = 0.0;
};

struct FilterDecision {
    double candidate_logreward = 0.0;
    double ref_logreward = 0.0;
    double delta = 1.0;
    bool accepted = false;
};

struct LossResult {
    double loss = 0.0;
    GradientTable gradient;
};

struct Candidate {
    Trajectory trajectory;
    RewardTrace trace;
    double final_logreward = 0.0;  // tempered, = trace.interp_logreward.back()
};

struct RgfnResult {
    double loss = 0.0;
    GradientTable gradient;
    int accept_count = 0;
};

// All n(n+1)/2 residuals for a length-n rationale. log_reward has n+1
// entries (t = 0 is the empty-rationale reward); policy terms are
// temperature-1 log-probabilities recomputed from current params.
std::vector<SubTrajectoryResidual> subtb_residuals(const PolicyParams& params,
                                                   const Trajectory& trajectory,
                                                   std::span<const double> log_reward);

// Sum of squared residuals plus the analytic gradient through the
// log-softmax. pair_weight_gamma != 1 enables geometric length-weighting
// (weight gamma^(j-i-1) per pair); default is the unweighted sum.
LossResult subtb_loss(const PolicyParams& params, const Trajectory& trajectory,
                      std::span<const double> log_reward, double pair_weight_gamma = 1.0);

// SubTB with interpolated per-token rewards from the trace. Degenerates to
// exact-reward SubTB at lambda = 1.
LossResult isubtb_loss(const PolicyParams& params, const Trajectory& trajectory,
                       const RewardTrace& trace, double pair_weight_gamma = 1.0);

// delta_s = tau_max - (tau_max - tau_min) * min(1, s / horizon).
double delta_schedule(int s, double tau_max, double tau_min, int horizon);

// Accepted iff R(Z_i) > delta_s * R(Z_ref), strict. The reference log-reward
// must be negative (log of a proper probability); with delta_s >= 1 the
// threshold is looser early and tightens to R(Z_ref) at s >= horizon.
std::vector<FilterDecision> filter_candidates(std::span<const double> candidate_logrewards,
                                              double ref_logreward, int s, double tau_max,
                                              double tau_min, int horizon);

// Loss, gradient, and accept count summed over accepted candidates only;
// rejected candidates contribute exactly nothing.
RgfnResult rgfn_step_loss(const PolicyParams& params, std::span<const Candidate> candidates,
                          std::span<const FilterDecision> decisions,
                          double pair_weight_gamma = 1.0);

}  // namespace flowcot
