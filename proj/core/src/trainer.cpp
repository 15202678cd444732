#include "flowcot/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "flowcot/errors.hpp"

namespace flowcot {

void TrainConfig::validate() const {
    if (m < 1) throw DataError("TrainConfig: m must be >= 1");
    if (lambda < 1) throw DataError("TrainConfig: lambda must be >= 1");
    if (!(lr > 0.0)) throw DataError("TrainConfig: lr must be > 0");
    if (weight_decay < 0.0) throw DataError("TrainConfig: weight_decay must be >= 0");
    if (steps < 0) throw DataError("TrainConfig: steps must be >= 0");
    if (tau_max < tau_min) throw DataError("TrainConfig: tau_max must be >= tau_min");
    if (delta_horizon < 1 || reward_temp_horizon < 1)
        throw DataError("TrainConfig: horizons must be >= 1");
    for (double t : {sample_temp_max, sample_temp_min, reward_temp_start, reward_temp_end})
        if (!(t > 0.0)) throw DataError("TrainConfig: temperatures must be > 0");
    if (min_rationale_len < 0 || max_rationale_len < std::max(1, min_rationale_len))
        throw DataError("TrainConfig: bad rationale length bounds");
    if (!(pair_weight_gamma > 0.0)) throw DataError("TrainConfig: pair_weight_gamma must be > 0");
    if (checkpoint_interval < 0) throw DataError("TrainConfig: checkpoint_interval must be >= 0");
}

namespace {

double anneal(double start, double end, int s, int horizon) {
    const double frac = std::min(1.0, static_cast<double>(s) / static_cast<double>(horizon));
    return start + (end - start) * frac;
}

}  // namespace

double sample_temperature_at(const TrainConfig& cfg, int s) {
    return anneal(cfg.sample_temp_max, cfg.sample_temp_min, s, cfg.reward_temp_horizon);
}

double reward_temperature_at(const TrainConfig& cfg, int s) {
    return anneal(cfg.reward_temp_start, cfg.reward_temp_end, s, cfg.reward_temp_horizon);
}

namespace {

// Z_ref wrapped as a trajectory, per-step cache filled from current params.
Trajectory reference_trajectory(const PolicyParams& params, int instance_id,
                                const Sequence& z_ref) {
    Trajectory traj;
    traj.instance_id = instance_id;
    traj.tokens = z_ref.tokens;
    traj.terminated = true;
    for (int k = 0; k <= traj.length(); ++k) {
        const std::span<const int> prefix(traj.tokens.data(), static_cast<std::size_t>(k));
        const auto lp = params.action_logprobs(instance_id, prefix, 1.0);
        const int action = k < traj.length() ? traj.tokens[k] : params.terminal_action();
        traj.per_step_logprob.push_back(lp[action]);
    }
    return traj;
}

Candidate score_candidate(const JointModel& model, const Instance& instance, Trajectory traj,
                          int lambda, double reward_temp) {
    Candidate cand;
    cand.trace = compute_trace(model, instance.x, instance.y,
                               make_sequence(traj.tokens, Role::Rationale), lambda, reward_temp);
    cand.final_logreward = cand.trace.interp_logreward.back();
    cand.trajectory = std::move(traj);
    return cand;
}

}  // namespace

ExploreResult explore(const PolicyParams& params, const JointModel& model,
                      const Instance& instance, int instance_id, const TrainConfig& cfg, int s) {
    const double sample_temp = sample_temperature_at(cfg, s);
    const double reward_temp = reward_temperature_at(cfg, s);

    ExploreResult result;
    result.candidates.reserve(cfg.m);
    for (int k = 0; k < cfg.m; ++k) {
        Rng rng(stream_seed(cfg.rng_seed, "explore", static_cast<std::uint64_t>(s),
                            static_cast<std::uint64_t>(k)));
        Trajectory traj = sample_rationale(params, instance_id, sample_temp,
                                           cfg.min_rationale_len, cfg.max_rationale_len, rng);
        result.candidates.push_back(
            score_candidate(model, instance, std::move(traj), cfg.lambda, reward_temp));
    }
    result.reference =
        score_candidate(model, instance, reference_trajectory(params, instance_id, instance.z_ref),
                        cfg.lambda, reward_temp);
    return result;
}

TrainResult train(const World& world, const TrainConfig& cfg, PolicyParams initial,
                  int start_step, const StepCallback& on_step) {
    cfg.validate();
    if (world.instances.empty()) throw DataError("train: world has no instances");
    if (initial.vocab_size() != world.model.vocab().size)
        throw DataError("train: params vocabulary does not match world");

    TrainResult result{std::move(initial), {}};
    for (int s = start_step; s < cfg.steps; ++s) {
        const int instance_id = s % static_cast<int>(world.instances.size());
        const Instance& instance = world.instances[instance_id];

        const ExploreResult ex = explore(result.params, world.model, instance, instance_id, cfg, s);

        std::vector<double> logrewards;
        logrewards.reserve(ex.candidates.size());
        for (const auto& c : ex.candidates) logrewards.push_back(c.final_logreward);

        auto decisions = filter_candidates(logrewards, ex.reference.final_logreward, s,
                                           cfg.tau_max, cfg.tau_min, cfg.delta_horizon);
        if (!cfg.filter_enabled)
            for (auto& d : decisions) d.accepted = true;

        RgfnResult step_loss;
        try {
            step_loss = rgfn_step_loss(result.params, ex.candidates, decisions,
                                       cfg.pair_weight_gamma);
            if (step_loss.accept_count == 0 && cfg.fallback_on_empty) {
                const auto fallback = isubtb_loss(result.params, ex.reference.trajectory,
                                                  ex.reference.trace, cfg.pair_weight_gamma);
                step_loss.loss = fallback.loss;
                step_loss.gradient = fallback.gradient;
            }
            result.params.apply_gradient(step_loss.gradient, cfg.lr, cfg.weight_decay);
        } catch (const NumericError& e) {
            throw NumericError("train: aborting at step " + std::to_string(s) + ", instance " +
                               std::to_string(instance_id) + ", ref log-reward " +
                               std::to_string(ex.reference.final_logreward) + ": " + e.what());
        }

        MetricsRecord rec;
        rec.step = s;
        rec.instance_id = instance_id;
        rec.accept_count = step_loss.accept_count;
        rec.max_candidate_logreward =
            *std::max_element(logrewards.begin(), logrewards.end());
        rec.mean_candidate_logreward = 0.0;
        for (double r : logrewards) rec.mean_candidate_logreward += r;
        rec.mean_candidate_logreward /= static_cast<double>(logrewards.size());
        rec.ref_logreward = ex.reference.final_logreward;
        rec.loss = step_loss.loss;
        double sq = 0.0;
        for (const auto& [key, grad] : step_loss.gradient)
            for (double g : grad) sq += g * g;
        rec.grad_norm = std::sqrt(sq);
        rec.delta = delta_schedule(s, cfg.tau_max, cfg.tau_min, cfg.delta_horizon);
        rec.sample_temperature = sample_temperature_at(cfg, s);
        rec.reward_temperature = reward_temperature_at(cfg, s);
        result.metrics.push_back(rec);

        if (on_step && !on_step(s, result.params, rec)) break;
    }
    return result;
}

TrainResult train(const World& world, const TrainConfig& cfg, const StepCallback& on_step) {
    return train(world, cfg, PolicyParams(world.model.vocab().size), 0, on_step);
}

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_metrics_csv: cannot open '" + path + "'");
    out << "# flowcot_metrics_version=1\n";
    out << "step,instance,accept_count,mean_candidate_logreward,max_candidate_logreward,"
           "ref_logreward,loss,grad_norm,delta,sample_temperature,reward_temperature\n";
    char buf[512];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf),
                      "%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step,
                      r.instance_id, r.accept_count, r.mean_candidate_logreward,
                      r.max_candidate_logreward, r.ref_logreward, r.loss, r.grad_norm, r.delta,
                      r.sample_temperature, r.reward_temperature);
        out << buf;
    }
}

}  // namespace flowcot
