#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace flowcot {

inline double log_sum_exp(std::span<const double> args) {
    if (args.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(args.begin(), args.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double a : args) s += std::exp(a - m);
    return m + std::log(s);
}

// log-softmax of logits / temperature.
inline std::vector<double> log_softmax(std::span<const double> logits, double temperature) {
    std::vector<double> scaled(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
    const double lse = log_sum_exp(scaled);
    for (auto& v : scaled) v -= lse;
    return scaled;
}

inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
    auto lp = log_softmax(logits, temperature);
    for (auto& v : lp) v = std::exp(v);
    return lp;
}

}  // namespace flowcot
