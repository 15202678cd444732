#include "flowcot/inference.hpp"

#include <algorithm>
#include <cmath>

#include "flowcot/errors.hpp"
#include "flowcot/numeric.hpp"

namespace flowcot {

void InferenceConfig::validate() const {
    if (n_rationales < 1) throw DataError("InferenceConfig: n_rationales must be >= 1");
    if (!(temperature > 0.0)) throw DataError("InferenceConfig: temperature must be > 0");
    if (rationale_max_len < 1 || answer_max_len < 1)
        throw DataError("InferenceConfig: max lengths must be >= 1");
}

std::vector<RationalAnswerPair> sample_candidates(const PolicyParams& params,
                                                  const JointModel& model, int instance_id,
                                                  const Sequence& x, const InferenceConfig& cfg) {
    cfg.validate();
    x.validate(model.vocab());
    std::vector<RationalAnswerPair> out;
    out.reserve(cfg.n_rationales);
    for (int i = 0; i < cfg.n_rationales; ++i) {
        Rng rng(stream_seed(cfg.rng_seed, "rank", static_cast<std::uint64_t>(i)));
        const Trajectory traj = sample_rationale(params, instance_id, cfg.temperature,
                                                 /*min_len=*/0, cfg.rationale_max_len, rng);
        std::vector<int> ctx = x.tokens;
        ctx.insert(ctx.end(), traj.tokens.begin(), traj.tokens.end());
        ctx.push_back(model.vocab().terminal_id());

        RationalAnswerPair pair;
        pair.rationale = traj.tokens;
        pair.answer = model.sample_continuation(ctx, cfg.answer_max_len, rng);
        pair.log_joint = model.log_joint(x, make_sequence(pair.rationale, Role::Rationale),
                                         make_sequence(pair.answer, Role::Answer));
        pair.combined_len =
            static_cast<int>(pair.rationale.size()) + 1 + static_cast<int>(pair.answer.size());
        out.push_back(std::move(pair));
    }
    return out;
}

namespace {

RankResult finalize(std::vector<RankedAnswer> answers) {
    RankResult result;
    // argmax with lexicographic tie-break, then a deterministic listing order
    const RankedAnswer* best = nullptr;
    for (const auto& a : answers) {
        if (best == nullptr || a.score > best->score ||
            (a.score == best->score && a.answer < best->answer))
            best = &a;
    }
    result.selected = *best;
    std::sort(answers.begin(), answers.end(), [](const RankedAnswer& a, const RankedAnswer& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.answer < b.answer;
    });
    result.all = std::move(answers);
    return result;
}

}  // namespace

RankResult bin_rank_candidates(const std::vector<RationalAnswerPair>& candidates) {
    if (candidates.empty()) throw DataError("bin_rank_candidates: empty candidate set");
    std::map<std::vector<int>, std::vector<SupportItem>> groups;
    for (const auto& c : candidates)
        groups[c.answer].push_back(SupportItem{c.rationale, c.log_joint, c.combined_len});

    std::vector<RankedAnswer> answers;
    answers.reserve(groups.size());
    for (auto& [answer, support] : groups) {
        std::vector<double> log_terms;
        log_terms.reserve(support.size());
        for (const auto& s : support)
            log_terms.push_back(s.log_joint - std::log(static_cast<double>(s.combined_len)));
        RankedAnswer ra;
        ra.answer = answer;
        ra.score =
            std::exp(log_sum_exp(log_terms) - std::log(static_cast<double>(support.size())));
        ra.support = std::move(support);
        answers.push_back(std::move(ra));
    }
    return finalize(std::move(answers));
}

RankResult bon_rank_candidates(const std::vector<RationalAnswerPair>& candidates) {
    if (candidates.empty()) throw DataError("bon_rank_candidates: empty candidate set");
    std::vector<RankedAnswer> answers;
    answers.reserve(candidates.size());
    for (const auto& c : candidates) {
        RankedAnswer ra;
        ra.answer = c.answer;
        ra.score = c.log_joint / static_cast<double>(c.combined_len);
        ra.support.push_back(SupportItem{c.rationale, c.log_joint, c.combined_len});
        answers.push_back(std::move(ra));
    }
    return finalize(std::move(answers));
}

RankResult bin_rank(const PolicyParams& params, const JointModel& model, int instance_id,
                    const Sequence& x, const InferenceConfig& cfg) {
    return bin_rank_candidates(sample_candidates(params, model, instance_id, x, cfg));
}

RankResult bon_rank(const PolicyParams& params, const JointModel& model, int instance_id,
                    const Sequence& x, const InferenceConfig& cfg) {
    return bon_rank_candidates(sample_candidates(params, model, instance_id, x, cfg));
}

std::map<std::vector<int>, double> enumerate_answer_marginals(const JointModel& model,
                                                              const Sequence& x,
                                                              int rationale_max_len,
                                                              int answer_max_len,
                                                              std::uint64_t cap) {
    const int v = model.vocab().size;
    std::uint64_t z_count = 0, y_count = 0, level = 1;
    for (int l = 0; l <= rationale_max_len; ++l) {
        z_count += level;
        level *= static_cast<std::uint64_t>(v);
    }
    level = 1;
    for (int l = 0; l <= answer_max_len; ++l) {
        y_count += level;
        level *= static_cast<std::uint64_t>(v);
    }
    if (z_count * y_count > cap)
        throw EnumerationCapError("enumerate_answer_marginals: " +
                                  std::to_string(z_count * y_count) + " pairs exceed cap");

    auto enumerate = [v](int max_len) {
        std::vector<std::vector<int>> out = {{}};
        std::size_t begin = 0;
        for (int l = 1; l <= max_len; ++l) {
            const std::size_t end = out.size();
            for (std::size_t i = begin; i < end; ++i)
                for (int t = 0; t < v; ++t) {
                    auto s = out[i];
                    s.push_back(t);
                    out.push_back(std::move(s));
                }
            begin = end;
        }
        return out;
    };
    const auto rationales = enumerate(rationale_max_len);
    const auto answers = enumerate(answer_max_len);

    std::map<std::vector<int>, double> marginals;
    for (const auto& y_tokens : answers) {
        const Sequence y = make_sequence(y_tokens, Role::Answer);
        double total = 0.0;
        for (const auto& z_tokens : rationales) {
            const Sequence z = make_sequence(z_tokens, Role::Rationale);
            const double ll = model.log_joint(x, z, y);
            const int len =
                static_cast<int>(z_tokens.size()) + 1 + static_cast<int>(y_tokens.size());
            total += std::exp(ll) / static_cast<double>(len);
        }
        marginals[y_tokens] = total;
    }
    return marginals;
}

std::vector<int> argmax_answer(const std::map<std::vector<int>, double>& scores) {
    if (scores.empty()) throw DataError("argmax_answer: empty map");
    const std::vector<int>* best = nullptr;
    double best_score = 0.0;
    for (const auto& [answer, score] : scores) {
        if (best == nullptr || score > best_score) {
            best = &answer;
            best_score = score;
        }
    }
    return *best;
}

}  // namespace flowcot
