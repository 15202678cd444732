#include "flowcot/policy.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "flowcot/errors.hpp"
#include "flowcot/numeric.hpp"

namespace flowcot {

using nlohmann::json;

PolicyParams::PolicyParams(int vocab_size) : vocab_size_(vocab_size) {
    if (vocab_size_ < 2) throw DataError("PolicyParams: vocab_size must be >= 2");
}

std::string PolicyParams::prefix_key(int instance_id, std::span<const int> prefix) {
    std::string key = std::to_string(instance_id);
    key += '|';
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (i) key += ',';
        key += std::to_string(prefix[i]);
    }
    return key;
}

std::vector<double> PolicyParams::action_logprobs(int instance_id, std::span<const int> prefix,
                                                  double temperature) const {
    if (!(temperature > 0.0)) throw DataError("action_logprobs: temperature must be > 0");
    const Entry* e = find(prefix_key(instance_id, prefix));
    if (e == nullptr) {
        std::vector<double> zeros(static_cast<std::size_t>(actions()), 0.0);
        return log_softmax(zeros, temperature);
    }
    return log_softmax(e->logits, temperature);
}

const PolicyParams::Entry* PolicyParams::find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

PolicyParams::Entry& PolicyParams::touch(const std::string& key) {
    auto [it, inserted] = entries_.try_emplace(key);
    if (inserted) {
        const auto n = static_cast<std::size_t>(actions());
        it->second.logits.assign(n, 0.0);
        it->second.m.assign(n, 0.0);
        it->second.v.assign(n, 0.0);
    }
    return it->second;
}

void PolicyParams::apply_gradient(const GradientTable& grads, double lr, double weight_decay) {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;

    for (const auto& [key, grad] : grads) {
        if (static_cast<int>(grad.size()) != actions())
            throw DataError("apply_gradient: gradient width mismatch for '" + key + "'");
        for (double g : grad)
            if (!std::isfinite(g))
                throw NumericError("apply_gradient: non-finite gradient for '" + key + "'");

        Entry& e = touch(key);
        e.steps += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(e.steps));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(e.steps));
        for (std::size_t i = 0; i < grad.size(); ++i) {
            e.m[i] = beta1 * e.m[i] + (1.0 - beta1) * grad[i];
            e.v[i] = beta2 * e.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            const double m_hat = e.m[i] / bc1;
            const double v_hat = e.v[i] / bc2;
            e.logits[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * e.logits[i]);
        }
    }
}

bool PolicyParams::operator==(const PolicyParams& other) const {
    return vocab_size_ == other.vocab_size_ &&
           [&] {
               if (entries_.size() != other.entries_.size()) return false;
               for (auto it1 = entries_.begin(), it2 = other.entries_.begin();
                    it1 != entries_.end(); ++it1, ++it2) {
                   if (it1->first != it2->first) return false;
                   const Entry& a = it1->second;
                   const Entry& b = it2->second;
                   if (a.logits != b.logits || a.m != b.m || a.v != b.v || a.steps != b.steps)
                       return false;
               }
               return true;
           }();
}

Trajectory sample_rationale(const PolicyParams& params, int instance_id, double temperature,
                            int min_len, int max_len, Rng& rng) {
    if (min_len < 0 || max_len < min_len || max_len < 1)
        throw DataError("sample_rationale: need 0 <= min_len <= max_len, max_len >= 1");
    Trajectory traj;
    traj.instance_id = instance_id;
    traj.sampling_temperature = temperature;

    const int terminal = params.terminal_action();
    for (;;) {
        const auto plain = params.action_logprobs(instance_id, traj.tokens, 1.0);
        const int len = traj.length();
        if (len == max_len) {
            traj.per_step_logprob.push_back(plain[terminal]);
            traj.terminated = false;
            break;
        }
        auto tempered = params.action_logprobs(instance_id, traj.tokens, temperature);
        std::vector<double> probs(tempered.size());
        for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(tempered[i]);
        if (len < min_len) probs[terminal] = 0.0;
        const auto action = static_cast<int>(rng.categorical(probs));
        traj.per_step_logprob.push_back(plain[action]);
        if (action == terminal) {
            traj.terminated = true;
            break;
        }
        traj.tokens.push_back(action);
    }
    return traj;
}

double trajectory_logprob(const PolicyParams& params, const Trajectory& traj) {
    double total = 0.0;
    for (int k = 0; k <= traj.length(); ++k) {
        const std::span<const int> prefix(traj.tokens.data(), static_cast<std::size_t>(k));
        const auto lp = params.action_logprobs(traj.instance_id, prefix, 1.0);
        const int action = k < traj.length() ? traj.tokens[k] : params.terminal_action();
        total += lp[action];
    }
    return total;
}

void save_checkpoint(const PolicyParams& params, std::int64_t step, const std::string& path) {
    json entries = json::object();
    for (const auto& [key, e] : params.entries()) {
        entries[key] = json{{"logits", e.logits}, {"m", e.m}, {"v", e.v}, {"t", e.steps}};
    }
    const json doc{{"version", 1},
                   {"step", step},
                   {"vocab_size", params.vocab_size()},
                   {"entries", entries}};
    std::ofstream out(path);
    if (!out) throw DataError("save_checkpoint: cannot open '" + path + "'");
    out << doc.dump(2) << '\n';
}

std::pair<PolicyParams, std::int64_t> load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_checkpoint: cannot open '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("load_checkpoint: invalid JSON in '" + path + "': " + e.what());
    }
    if (!doc.contains("version") || doc["version"].get<int>() != 1)
        throw DataError("load_checkpoint: unsupported checkpoint version");

    PolicyParams params(doc.at("vocab_size").get<int>());
    for (const auto& [key, j] : doc.at("entries").items()) {
        auto& e = params.touch(key);
        e.logits = j.at("logits").get<std::vector<double>>();
        e.m = j.at("m").get<std::vector<double>>();
        e.v = j.at("v").get<std::vector<double>>();
        e.steps = j.at("t").get<std::int64_t>();
        if (static_cast<int>(e.logits.size()) != params.actions())
            throw DataError("load_checkpoint: entry width mismatch for '" + key + "'");
        for (double l : e.logits)
            if (!std::isfinite(l))
                throw DataError("load_checkpoint: non-finite logit for '" + key + "'");
    }
    return {std::move(params), doc.at("step").get<std::int64_t>()};
}

}  // namespace flowcot
