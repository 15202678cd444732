#include "flowcot/verify.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "flowcot/errors.hpp"
#include "flowcot/numeric.hpp"

namespace flowcot {

std::map<std::vector<int>, double> policy_distribution_exact(const PolicyParams& params,
                                                             int instance_id, int max_len,
                                                             std::uint64_t cap) {
    const int v = params.vocab_size();
    std::uint64_t count = 0, level = 1;
    for (int l = 0; l <= max_len; ++l) {
        count += level;
        if (count > cap)
            throw EnumerationCapError("policy_distribution_exact: enumeration exceeds cap");
        level *= static_cast<std::uint64_t>(v);
    }

    std::map<std::vector<int>, double> dist;
    std::vector<int> prefix;
    const std::function<void(double)> rec = [&](double log_reach) {
        const auto lp = params.action_logprobs(instance_id, prefix, 1.0);
        if (static_cast<int>(prefix.size()) == max_len) {
            // forced termination: all remaining mass goes to the truncated rationale
            dist[prefix] = std::exp(log_reach);
            return;
        }
        dist[prefix] = std::exp(log_reach + lp[params.terminal_action()]);
        for (int t = 0; t < v; ++t) {
            prefix.push_back(t);
            rec(log_reach + lp[t]);
            prefix.pop_back();
        }
    };
    rec(0.0);
    return dist;
}

std::map<std::vector<int>, double> policy_distribution_sampled(const PolicyParams& params,
                                                               int instance_id, int max_len,
                                                               std::uint64_t n,
                                                               std::uint64_t seed) {
    if (n == 0) throw DataError("policy_distribution_sampled: n must be >= 1");
    std::map<std::vector<int>, std::uint64_t> counts;
    for (std::uint64_t i = 0; i < n; ++i) {
        Rng rng(stream_seed(seed, "policy-sample", i));
        const Trajectory traj =
            sample_rationale(params, instance_id, 1.0, /*min_len=*/0, max_len, rng);
        counts[traj.tokens] += 1;
    }
    std::map<std::vector<int>, double> dist;
    for (const auto& [tokens, c] : counts)
        dist[tokens] = static_cast<double>(c) / static_cast<double>(n);
    return dist;
}

DistanceReport distance(const std::map<std::vector<int>, double>& target,
                        const std::map<std::vector<int>, double>& learned,
                        std::uint64_t sample_count) {
    DistanceReport report;
    report.sample_count = sample_count;

    std::map<std::vector<int>, std::pair<double, double>> joined;
    for (const auto& [k, p] : target) joined[k].first = p;
    for (const auto& [k, q] : learned) joined[k].second = q;
    report.support_size = joined.size();

    double l1 = 0.0, kl = 0.0;
    bool covered = true;
    for (const auto& [k, pq] : joined) {
        const auto [p, q] = pq;
        l1 += std::abs(p - q);
        if (p > 0.0) {
            if (q > 0.0)
                kl += p * std::log(p / q);
            else
                covered = false;
        }
    }
    report.tv = 0.5 * l1;
    report.kl = covered ? kl : std::numeric_limits<double>::infinity();
    return report;
}

double flow_residual_report(const PolicyParams& params, const Trajectory& trajectory,
                            std::span<const double> exact_logrewards) {
    double max_abs = 0.0;
    for (const auto& r : subtb_residuals(params, trajectory, exact_logrewards))
        max_abs = std::max(max_abs, std::abs(r.residual));
    return max_abs;
}

InterpBoundReport interp_bound_check(const JointModel& model, const Sequence& x, const Sequence& y,
                        const Sequence& z, int lambda) {
    InterpBoundReport report;
    const int n = z.length();
    const auto trace = compute_trace(model, x, y, z, lambda, 1.0);
    if (n < 2) return report;  // every index is an anchor

    const auto exact = exact_prefix_logrewards(model, x, y, z, 1.0);
    const double m_bound = second_difference_bound(model, x, y, z, 1.0);
    report.global_bound = m_bound * static_cast<double>(lambda) * lambda / 8.0;

    for (std::size_t a = 0; a + 1 < trace.anchor_indices.size(); ++a) {
        const int lo = trace.anchor_indices[a];
        const int hi = trace.anchor_indices[a + 1];
        const int w = hi - lo;
        for (int t = lo + 1; t < hi; ++t) {
            const int i = t - lo;
            const double err = std::abs(trace.interp_logreward[t] - exact[t]);
            const double bound = m_bound * static_cast<double>(i) * (w - i) / 8.0;
            report.max_abs_error = std::max(report.max_abs_error, err);
            const bool pass = err <= bound + 1e-12;
            report.per_index_pass.push_back(pass);
            report.all_pass = report.all_pass && pass;
        }
    }
    return report;
}

double gradcheck(const PolicyParams& params, const Trajectory& trajectory,
                 const RewardTrace& trace, double eps) {
    if (!(eps > 0.0)) throw DataError("gradcheck: eps must be > 0");
    const auto analytic = isubtb_loss(params, trajectory, trace);

    double max_err = 0.0;
    for (const auto& [key, grad] : analytic.gradient) {
        for (std::size_t a = 0; a < grad.size(); ++a) {
            PolicyParams perturbed = params;
            auto& entry = perturbed.touch(key);
            entry.logits[a] += eps;
            const double up = isubtb_loss(perturbed, trajectory, trace).loss;
            entry.logits[a] -= 2.0 * eps;
            const double down = isubtb_loss(perturbed, trajectory, trace).loss;
            const double numeric = (up - down) / (2.0 * eps);

            const double diff = std::abs(grad[a] - numeric);
            const double scale = std::max(std::abs(grad[a]), std::abs(numeric));
            max_err = std::max(max_err, scale > 1e-6 ? diff / scale : diff);
        }
    }
    return max_err;
}

PolicyParams posterior_factorized_params(const std::map<std::vector<int>, double>& target,
                                         int instance_id, int vocab_size) {
    PolicyParams params(vocab_size);
    constexpr double log_floor = -700.0;

    // prefix-tree masses: reach[p] = total mass of rationales extending p
    // (p itself included); stop[p] = mass of p as a complete rationale
    std::map<std::vector<int>, double> reach, stop;
    for (const auto& [tokens, mass] : target) {
        stop[tokens] += mass;
        for (std::size_t l = 0; l <= tokens.size(); ++l)
            reach[std::vector<int>(tokens.begin(), tokens.begin() + l)] += mass;
    }

    for (const auto& [prefix, total] : reach) {
        if (!(total > 0.0)) continue;
        auto& entry = params.touch(PolicyParams::prefix_key(instance_id, prefix));
        for (int t = 0; t < vocab_size; ++t) {
            auto child = prefix;
            child.push_back(t);
            const auto it = reach.find(child);
            const double mass = it == reach.end() ? 0.0 : it->second;
            entry.logits[t] = mass > 0.0 ? std::log(mass) : log_floor;
        }
        const auto it = stop.find(prefix);
        const double term_mass = it == stop.end() ? 0.0 : it->second;
        entry.logits[vocab_size] = term_mass > 0.0 ? std::log(term_mass) : log_floor;
    }
    return params;
}

}  // namespace flowcot
