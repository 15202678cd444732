#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "flowcot/rng.hpp"
#include "flowcot/sequence.hpp"

namespace flowcot {

// Gradient w.r.t. logits, keyed by (instance-id, prefix). Ordered map so that
// merges and updates are order-independent and deterministic.
using GradientTable = std::map<std::string, std::vector<double>>;

inline void merge_gradient(GradientTable& into, const GradientTable& from) {
    for (const auto& [key, grad] : from) {
        auto& dst = into[key];
        if (dst.empty()) dst.assign(grad.size(), 0.0);
        for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += grad[i];
    }
}

// One sampled rationale. per_step_logprob caches the unmasked temperature-1
// policy log-probabilities at sampling time; the objective recomputes them
// from current params, the cache is for diagnostics and stays immutable.
struct Trajectory {
    int instance_id = 0;
    std::vector<int> tokens;
    std::vector<double> per_step_logprob;  // length = tokens + 1 (terminal step)
    bool terminated = true;                // false when termination was forced at max_len
    double sampling_temperature = 1.0;

    int length() const { return static_cast<int>(tokens.size()); }
};

// The amortized sampler q_theta(Z|X): a full-prefix tabular softmax policy
// with a termination action, plus AdamW state per entry. Entries are lazily
// created; an unseen prefix behaves as all-zero logits (uniform).
class PolicyParams {
public:
    struct Entry {
        std::vector<double> logits;
        std::vector<double> m;  // Adam first moment
        std::vector<double> v;  // Adam second moment
        std::int64_t steps = 0;
    };

    explicit PolicyParams(int vocab_size);

    int vocab_size() const { return vocab_size_; }
    int actions() const { return vocab_size_ + 1; }  // tokens + terminal
    int terminal_action() const { return vocab_size_; }

    static std::string prefix_key(int instance_id, std::span<const int> prefix);

    // log-softmax of logits/temperature over the V+1 actions.
    std::vector<double> action_logprobs(int instance_id, std::span<const int> prefix,
                                        double temperature) const;

    // AdamW update per touched entry; untouched entries unchanged. Bias
    // correction uses a per-entry step count (lazily created parameters start
    // their own moment recursion). Non-finite gradient entries are a hard
    // error.
    void apply_gradient(const GradientTable& grads, double lr, double weight_decay);

    const Entry* find(const std::string& key) const;
    Entry& touch(const std::string& key);
    const std::map<std::string, Entry>& entries() const { return entries_; }

    bool operator==(const PolicyParams& other) const;

private:
    int vocab_size_;
    std::map<std::string, Entry> entries_;
};

// Ancestral sampling from the policy. The terminal action is masked out
// (renormalized) while the prefix is shorter than min_len and forced at
// max_len; the masked, tempered distribution drives sampling while
// per_step_logprob records the unmasked temperature-1 log-probabilities.
// min_len = 0 means unconstrained termination.
Trajectory sample_rationale(const PolicyParams& params, int instance_id, double temperature,
                            int min_len, int max_len, Rng& rng);

// Sum of temperature-1 per-step log-probabilities recomputed from current
// params (token steps plus the terminal step).
double trajectory_logprob(const PolicyParams& params, const Trajectory& traj);

// Checkpoint round-trip (JSON, version 1); reload is bit-exact.
void save_checkpoint(const PolicyParams& params, std::int64_t step, const std::string& path);
std::pair<PolicyParams, std::int64_t> load_checkpoint(const std::string& path);

}  // namespace flowcot
