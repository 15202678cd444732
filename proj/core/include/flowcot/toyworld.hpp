#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "flowcot/rng.hpp"
#include "flowcot/sequence.hpp"

namespace flowcot {

// Tabular order-k autoregressive distribution over tokens + terminal. Plays
// the ground-truth scorer role: every reward in the project is a log-joint
// under one of these.
//
// Rows are keyed by the last-k context, left-padded with the pad symbol, and
// live in linear probability space over V+1 symbols (V tokens + terminal).
class JointModel {
public:
    JointModel(Vocabulary vocab, int order);

    const Vocabulary& vocab() const { return vocab_; }
    int order() const { return order_; }

    // context must have length == order (already padded).
    void set_row(std::span<const int> context, std::vector<double> probs);

    // Every row sums to 1 within 1e-12 and every entry is strictly positive.
    void validate_rows() const;

    // Log-probability of `symbol` (token id or terminal) given the raw
    // preceding symbols; keeps the last k, left-pads with the pad symbol.
    double conditional_logprob(std::span<const int> context, int symbol) const;

    // log P(X Z top Y): the concatenation scored autoregressively, left to
    // right, with exactly one terminal between Z and Y. Always < 0.
    double log_joint(const Sequence& x, const Sequence& z, const Sequence& y) const;

    // The symbol stream scored by log_joint, in order.
    static std::vector<int> joint_symbols(const Vocabulary& vocab, const Sequence& x,
                                          const Sequence& z, const Sequence& y);

    // Ancestral sampling from `prefix` (raw symbols) until the terminal is
    // drawn or max_len tokens are emitted. Deterministic given the Rng state.
    std::vector<int> sample_continuation(std::span<const int> prefix, int max_len, Rng& rng) const;

    // Like sample_continuation but the terminal is masked out; emits exactly
    // `len` tokens.
    std::vector<int> sample_tokens(std::span<const int> prefix, int len, Rng& rng) const;

    // Stepwise argmax decoding; terminal masked while below min_len, stop on
    // terminal argmax or at max_len.
    std::vector<int> greedy_continuation(std::span<const int> prefix, int min_len, int max_len) const;

    const std::map<std::string, std::vector<double>>& tables() const { return tables_; }

    static std::string context_key(std::span<const int> context);

private:
    const std::vector<double>& row(std::span<const int> context) const;

    Vocabulary vocab_;
    int order_;
    std::map<std::string, std::vector<double>> tables_;
};

struct Instance {
    Sequence x;
    Sequence y;
    Sequence z_ref;
};

struct World {
    JointModel model;
    std::vector<Instance> instances;
};

struct WorldSpec {
    int vocab_size = 3;
    int order = 1;
    double concentration = 1.0;   // Dirichlet concentration for random rows
    bool uniform_rows = false;    // concentration -> infinity limit
    int num_instances = 1;
    int x_len_min = 1, x_len_max = 2;
    int y_len_min = 1, y_len_max = 2;
    int min_rationale_len = 1, max_rationale_len = 4;

    void validate() const;
};

// Builds a seeded world: strictly positive Dirichlet rows (floor 1e-6 then
// renormalize), instances with Z_ref produced by greedy decoding from the
// model conditioned on X.
World make_world(const WorldSpec& spec, std::uint64_t seed);

// Exact posterior over rationales of length 0..max_len: mass proportional to
// exp(log_joint), normalized. Throws EnumerationCapError when the rationale
// count would exceed `cap`.
std::map<std::vector<int>, double> exact_posterior(const JointModel& model, const Sequence& x,
                                                   const Sequence& y, int max_len,
                                                   std::uint64_t cap = 10'000'000);

// World file round-trip (JSON, version 1).
void save_world(const World& world, const std::string& path);
World load_world(const std::string& path);

}  // namespace flowcot
