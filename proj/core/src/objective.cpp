#include "flowcot/objective.hpp"

#include <cmath>

#include "flowcot/errors.hpp"
#include "flowcot/numeric.hpp"

namespace flowcot {

namespace {

struct PathTerms {
    std::vector<double> step_cumsum;  // S[j] = sum of log q(z_k|.) for k <= j
    std::vector<double> term_lp;      // log q(top | z_{1:i}) for i = 0..n
    std::vector<std::vector<double>> action_lp;  // per prefix, all actions, T=1
};

PathTerms path_terms(const PolicyParams& params, const Trajectory& traj) {
    const int n = traj.length();
    PathTerms pt;
    pt.step_cumsum.assign(static_cast<std::size_t>(n) + 1, 0.0);
    pt.term_lp.resize(static_cast<std::size_t>(n) + 1);
    pt.action_lp.resize(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        const std::span<const int> prefix(traj.tokens.data(), static_cast<std::size_t>(i));
        pt.action_lp[i] = params.action_logprobs(traj.instance_id, prefix, 1.0);
        pt.term_lp[i] = pt.action_lp[i][params.terminal_action()];
        if (i < n) pt.step_cumsum[i + 1] = pt.step_cumsum[i] + pt.action_lp[i][traj.tokens[i]];
    }
    // forced truncation terminates with probability 1, not the softmax mass;
    // anything else leaves the total termination scale unconstrained at the
    // SubTB optimum and the learned distribution can drift off the posterior
    if (!traj.terminated) pt.term_lp[n] = 0.0;
    return pt;
}

}  // namespace

std::vector<SubTrajectoryResidual> subtb_residuals(const PolicyParams& params,
                                                   const Trajectory& trajectory,
                                                   std::span<const double> log_reward) {
    const int n = trajectory.length();
    if (static_cast<int>(log_reward.size()) != n + 1)
        throw DataError("subtb_residuals: expected " + std::to_string(n + 1) +
                        " per-prefix log-rewards, got " + std::to_string(log_reward.size()));
    const PathTerms pt = path_terms(params, trajectory);

    std::vector<SubTrajectoryResidual> out;
    out.reserve(static_cast<std::size_t>(n) * (n + 1) / 2);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j <= n; ++j) {
            const double r = log_reward[i] + (pt.step_cumsum[j] - pt.step_cumsum[i]) +
                             pt.term_lp[j] - log_reward[j] - pt.term_lp[i];
            out.push_back({i, j, r});
        }
    }
    return out;
}

LossResult subtb_loss(const PolicyParams& params, const Trajectory& trajectory,
                      std::span<const double> log_reward, double pair_weight_gamma) {
    const int n = trajectory.length();
    if (static_cast<int>(log_reward.size()) != n + 1)
        throw DataError("subtb_loss: per-prefix log-reward length mismatch");
    const PathTerms pt = path_terms(params, trajectory);
    const int terminal = params.terminal_action();
    const auto actions = static_cast<std::size_t>(params.actions());

    // accumulated d(loss)/d(log q(a | prefix_p)) per prefix
    std::vector<std::vector<double>> weight(static_cast<std::size_t>(n) + 1,
                                            std::vector<double>(actions, 0.0));
    long double loss_acc = 0.0L;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j <= n; ++j) {
            const double r = log_reward[i] + (pt.step_cumsum[j] - pt.step_cumsum[i]) +
                             pt.term_lp[j] - log_reward[j] - pt.term_lp[i];
            if (!std::isfinite(r))
                throw NumericError("subtb_loss: non-finite residual at pair (" +
                                   std::to_string(i) + ", " + std::to_string(j) + ")");
            const double w = pair_weight_gamma == 1.0
                                 ? 1.0
                                 : std::pow(pair_weight_gamma, static_cast<double>(j - i - 1));
            loss_acc += static_cast<long double>(w) * r * r;
            const double c = 2.0 * w * r;
            for (int k = i + 1; k <= j; ++k) weight[k - 1][trajectory.tokens[k - 1]] += c;
            // a forced terminal step carries no parameter dependence
            if (trajectory.terminated || j < n) weight[j][terminal] += c;
            weight[i][terminal] -= c;
        }
    }

    LossResult result;
    result.loss = static_cast<double>(loss_acc);
    if (!std::isfinite(result.loss)) throw NumericError("subtb_loss: non-finite loss");

    for (int p = 0; p <= n; ++p) {
        double total = 0.0;
        bool touched = false;
        for (double w : weight[p]) {
            total += w;
            touched = touched || w != 0.0;
        }
        if (!touched) continue;
        const std::span<const int> prefix(trajectory.tokens.data(), static_cast<std::size_t>(p));
        const auto key = PolicyParams::prefix_key(trajectory.instance_id, prefix);
        auto& grad = result.gradient[key];
        grad.assign(actions, 0.0);
        for (std::size_t b = 0; b < actions; ++b)
            grad[b] = weight[p][b] - total * std::exp(pt.action_lp[p][b]);
    }
    return result;
}

LossResult isubtb_loss(const PolicyParams& params, const Trajectory& trajectory,
                       const RewardTrace& trace, double pair_weight_gamma) {
    if (trace.length != trajectory.length())
        throw DataError("isubtb_loss: trace length does not match trajectory");
    return subtb_loss(params, trajectory, trace.interp_logreward, pair_weight_gamma);
}

double delta_schedule(int s, double tau_max, double tau_min, int horizon) {
    if (s < 0) throw DataError("delta_schedule: step index must be >= 0");
    if (horizon < 1) throw DataError("delta_schedule: horizon must be >= 1");
    if (tau_max < tau_min) throw DataError("delta_schedule: tau_max must be >= tau_min");
    const double frac = std::min(1.0, static_cast<double>(s) / static_cast<double>(horizon));
    return tau_max - (tau_max - tau_min) * frac;
}

std::vector<FilterDecision> filter_candidates(std::span<const double> candidate_logrewards,
                                              double ref_logreward, int s, double tau_max,
                                              double tau_min, int horizon) {
    if (!(ref_logreward < 0.0))
        throw DataError("filter_candidates: reference log-reward must be negative");
    const double delta = delta_schedule(s, tau_max, tau_min, horizon);
    std::vector<FilterDecision> out;
    out.reserve(candidate_logrewards.size());
    for (double r : candidate_logrewards) {
        FilterDecision d;
        d.candidate_logreward = r;
        d.ref_logreward = ref_logreward;
        d.delta = delta;
        d.accepted = r > delta * ref_logreward;
        out.push_back(d);
    }
    return out;
}

RgfnResult rgfn_step_loss(const PolicyParams& params, std::span<const Candidate> candidates,
                          std::span<const FilterDecision> decisions, double pair_weight_gamma) {
    if (candidates.size() != decisions.size())
        throw DataError("rgfn_step_loss: candidates/decisions size mismatch");
    RgfnResult result;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!decisions[i].accepted) continue;
        const auto part =
            isubtb_loss(params, candidates[i].trajectory, candidates[i].trace, pair_weight_gamma);
        result.loss += part.loss;
        merge_gradient(result.gradient, part.gradient);
        result.accept_count += 1;
    }
    return result;
}

}  // namespace flowcot
