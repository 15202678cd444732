#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "flowcot/policy.hpp"
#include "flowcot/toyworld.hpp"

namespace flowcot {

struct InferenceConfig {
    int n_rationales = 64;
    double temperature = 1.0;
    int rationale_max_len = 4;
    int answer_max_len = 4;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct SupportItem {
    std::vector<int> rationale;
    double log_joint = 0.0;
    int combined_len = 0;  // |Z| + 1 (inter-segment terminal) + |Y|
};

struct RankedAnswer {
    std::vector<int> answer;
    double score = 0.0;
    std::vector<SupportItem> support;
};

struct RankResult {
    RankedAnswer selected;
    std::vector<RankedAnswer> all;  // descending score, ties by answer
};

// One sampled rationale-answer pair: Z from the policy at the configured
// temperature, Y from the joint model conditioned on X Z top, scored by the
// joint model. bin_rank and bon_rank consume this identical set when given
// identical seeds.
struct RationalAnswerPair {
    std::vector<int> rationale;
    std::vector<int> answer;
    double log_joint = 0.0;
    int combined_len = 0;
};

std::vector<RationalAnswerPair> sample_candidates(const PolicyParams& params,
                                                  const JointModel& model, int instance_id,
                                                  const Sequence& x, const InferenceConfig& cfg);

// Ranking over an explicit candidate set; scores do not depend on candidate
// order.
RankResult bin_rank_candidates(const std::vector<RationalAnswerPair>& candidates);
RankResult bon_rank_candidates(const std::vector<RationalAnswerPair>& candidates);

// Bayesian ranking over N rationales: candidates grouped by identical answer
// sequence, score = mean over the group of exp(log_joint)/combined_len
// (averaged in linear space via log-sum-exp). Argmax wins; ties go to the
// lexicographically smallest answer.
RankResult bin_rank(const PolicyParams& params, const JointModel& model, int instance_id,
                    const Sequence& x, const InferenceConfig& cfg);

// Best-of-N baseline: no grouping, score per candidate = log_joint /
// combined_len, same tie-break.
RankResult bon_rank(const PolicyParams& params, const JointModel& model, int instance_id,
                    const Sequence& x, const InferenceConfig& cfg);

// Exact length-normalized marginal of every answer of length 0..answer_max_len
// by full enumeration over (Z, Y) pairs: marginal(Y) = sum_Z
// exp(log_joint(X,Z,Y)) / (|Z|+1+|Y|).
std::map<std::vector<int>, double> enumerate_answer_marginals(const JointModel& model,
                                                              const Sequence& x,
                                                              int rationale_max_len,
                                                              int answer_max_len,
                                                              std::uint64_t cap = 10'000'000);

// Argmax of a map with the same lexicographic tie-break as the rankers.
std::vector<int> argmax_answer(const std::map<std::vector<int>, double>& scores);

}  // namespace flowcot
