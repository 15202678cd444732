#pragma once

#include <string>
#include <vector>

#include "flowcot/toyworld.hpp"

namespace flowcot::testutil {

// All rows uniform over the V+1 next symbols, every context of length k.
inline JointModel uniform_model(int vocab_size, int order) {
    WorldSpec spec;
    spec.vocab_size = vocab_size;
    spec.order = order;
    spec.uniform_rows = true;
    spec.num_instances = 1;
    return make_world(spec, 0).model;
}

inline World small_world(std::uint64_t seed, double concentration = 1.0,
                         int vocab_size = 2, int order = 1) {
    WorldSpec spec;
    spec.vocab_size = vocab_size;
    spec.order = order;
    spec.concentration = concentration;
    spec.num_instances = 1;
    spec.x_len_min = 1;
    spec.x_len_max = 1;
    spec.y_len_min = 1;
    spec.y_len_max = 1;
    spec.min_rationale_len = 1;
    spec.max_rationale_len = 4;
    return make_world(spec, seed);
}

// All token sequences over {0..V-1} of length 0..max_len, shortest first.
inline std::vector<std::vector<int>> all_rationales(int vocab_size, int max_len) {
    std::vector<std::vector<int>> out = {{}};
    std::size_t begin = 0;
    for (int l = 1; l <= max_len; ++l) {
        const std::size_t end = out.size();
        for (std::size_t i = begin; i < end; ++i)
            for (int t = 0; t < vocab_size; ++t) {
                auto s = out[i];
                s.push_back(t);
                out.push_back(std::move(s));
            }
        begin = end;
    }
    return out;
}

inline std::string temp_path(const std::string& name) {
    return std::string("/tmp/flowcot_test_") + name;
}

}  // namespace flowcot::testutil
