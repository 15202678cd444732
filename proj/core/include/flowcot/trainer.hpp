#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flowcot/objective.hpp"
#include "flowcot/policy.hpp"
#include "flowcot/toyworld.hpp"

namespace flowcot {

// All schedules and constants of the exploration-filter-update loop, at toy
// scale. Defaults mirror the training hyperparameters (m = 6, lambda = 8,
// weight decay 0.05, delta 1.5 -> 1.0 over 50 steps, sampling temperature
// 1.0 -> 0.5, reward temperature 1.0 -> 0.7 over 50 steps); the learning
// rate is the tabular-scale 1e-2.
struct TrainConfig {
    int m = 6;        // exploration number: candidates per step
    int lambda = 8;   // reward anchor spacing
    double lr = 1e-2;
    double weight_decay = 0.05;
    int steps = 1000;
    double tau_max = 1.5;
    double tau_min = 1.0;
    int delta_horizon = 50;
    double sample_temp_max = 1.0;
    double sample_temp_min = 0.5;
    double reward_temp_start = 1.0;
    double reward_temp_end = 0.7;
    int reward_temp_horizon = 50;
    int min_rationale_len = 1;
    int max_rationale_len = 4;
    std::uint64_t rng_seed = 0;
    bool fallback_on_empty = true;  // train on Z_ref when every candidate is rejected
    bool filter_enabled = true;     // false reproduces the no-filter ablation arm
    double pair_weight_gamma = 1.0; // geometric sub-trajectory weighting; 1 = off
    int checkpoint_interval = 0;    // steps between periodic checkpoints; 0 = final only

    void validate() const;
};

struct MetricsRecord {
    int step = 0;
    int instance_id = 0;
    int accept_count = 0;
    double mean_candidate_logreward = 0.0;
    double max_candidate_logreward = 0.0;
    double ref_logreward = 0.0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double delta = 0.0;
    double sample_temperature = 0.0;
    double reward_temperature = 0.0;
};

// Linear anneal, clamped at the horizon.
double sample_temperature_at(const TrainConfig& cfg, int s);
double reward_temperature_at(const TrainConfig& cfg, int s);

struct ExploreResult {
    std::vector<Candidate> candidates;
    Candidate reference;  // Z_ref scored identically
};

// m independent samples at the step-s sampling temperature, each scored by
// compute_trace at the step-s reward temperature. Seeds derive from
// (rng_seed, step, candidate index), so exploration is reproducible and
// resumable.
ExploreResult explore(const PolicyParams& params, const JointModel& model,
                      const Instance& instance, int instance_id, const TrainConfig& cfg, int s);

struct TrainResult {
    PolicyParams params;
    std::vector<MetricsRecord> metrics;
};

// Called after each step; return false to stop early.
using StepCallback = std::function<bool(int step, const PolicyParams&, const MetricsRecord&)>;

// The RGFN loop: round-robin over instances, per step snapshot -> explore ->
// filter -> loss -> AdamW update. When every candidate is rejected and
// fallback_on_empty is set, the step trains on Z_ref's own loss instead.
// Non-finite losses abort with the offending step's state in the message.
TrainResult train(const World& world, const TrainConfig& cfg, PolicyParams initial,
                  int start_step, const StepCallback& on_step = {});
TrainResult train(const World& world, const TrainConfig& cfg, const StepCallback& on_step = {});

// Metrics CSV: versioned fixed header, one row per record, 17-significant-
// digit floats so reruns are byte-identical.
void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path);

}  // namespace flowcot
