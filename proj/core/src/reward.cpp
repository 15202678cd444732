#include "flowcot/reward.hpp"

#include <cmath>

#include "flowcot/errors.hpp"

namespace flowcot {

namespace {

Sequence prefix_of(const Sequence& z, int t) {
    return make_sequence(std::vector<int>(z.tokens.begin(), z.tokens.begin() + t),
                         Role::Rationale);
}

}  // namespace

std::vector<double> exact_prefix_logrewards(const JointModel& model, const Sequence& x,
                                            const Sequence& y, const Sequence& z,
                                            double reward_temperature) {
    if (!(reward_temperature > 0.0))
        throw DataError("exact_prefix_logrewards: reward_temperature must be > 0");
    const int n = z.length();
    std::vector<double> out(static_cast<std::size_t>(n) + 1);
    for (int t = 0; t <= n; ++t)
        out[t] = model.log_joint(x, prefix_of(z, t), y) / reward_temperature;
    return out;
}

RewardTrace compute_trace(const JointModel& model, const Sequence& x, const Sequence& y,
                          const Sequence& z, int lambda, double reward_temperature) {
    if (lambda < 1) throw DataError("compute_trace: lambda must be >= 1");
    if (!(reward_temperature > 0.0))
        throw DataError("compute_trace: reward_temperature must be > 0");

    RewardTrace trace;
    trace.length = z.length();
    trace.lambda = lambda;
    trace.reward_temperature = reward_temperature;

    const int n = trace.length;
    for (int t = 0; t < n; t += lambda) trace.anchor_indices.push_back(t);
    trace.anchor_indices.push_back(n);

    trace.anchor_logreward.reserve(trace.anchor_indices.size());
    for (int t : trace.anchor_indices)
        trace.anchor_logreward.push_back(model.log_joint(x, prefix_of(z, t), y) /
                                         reward_temperature);

    trace.interp_logreward.assign(static_cast<std::size_t>(n) + 1, 0.0);
    for (std::size_t a = 0; a + 1 < trace.anchor_indices.size(); ++a) {
        const int lo = trace.anchor_indices[a];
        const int hi = trace.anchor_indices[a + 1];
        const double r_lo = trace.anchor_logreward[a];
        const double r_hi = trace.anchor_logreward[a + 1];
        trace.interp_logreward[lo] = r_lo;
        for (int t = lo + 1; t < hi; ++t)
            trace.interp_logreward[t] =
                r_lo + static_cast<double>(t - lo) / static_cast<double>(hi - lo) * (r_hi - r_lo);
    }
    trace.interp_logreward[n] = trace.anchor_logreward.back();
    return trace;
}

double reward_at(const RewardTrace& trace, int t) {
    if (t < 0 || t > trace.length)
        throw DataError("reward_at: index " + std::to_string(t) + " outside [0, " +
                        std::to_string(trace.length) + "]");
    return trace.interp_logreward[static_cast<std::size_t>(t)];
}

double second_difference_bound(const JointModel& model, const Sequence& x, const Sequence& y,
                               const Sequence& z, double reward_temperature) {
    if (z.length() < 2)
        throw DataError("second_difference_bound: needs a rationale of length >= 2");
    const auto r = exact_prefix_logrewards(model, x, y, z, reward_temperature);
    double m = 0.0;
    for (std::size_t s = 1; s + 1 < r.size(); ++s)
        m = std::max(m, std::abs(r[s + 1] - 2.0 * r[s] + r[s - 1]));
    return m;
}

}  // namespace flowcot
