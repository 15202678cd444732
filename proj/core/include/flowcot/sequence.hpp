#pragma once

#include <string>
#include <vector>

#include "flowcot/errors.hpp"

namespace flowcot {

// Token alphabet. Ids 0..size-1 are ordinary tokens; id `size` is the
// terminal symbol; id `size+1` is the context pad used for left-padding
// short contexts in the tabular joint model.
struct Vocabulary {
    int size = 0;

    int terminal_id() const { return size; }
    int pad_id() const { return size + 1; }

    void validate() const {
        if (size < 2) throw DataError("Vocabulary: size must be >= 2");
    }
};

enum class Role { Question, Rationale, Answer };

// Ordered token-id list; the terminal never appears inside a body.
struct Sequence {
    std::vector<int> tokens;
    Role role = Role::Rationale;

    int length() const { return static_cast<int>(tokens.size()); }

    void validate(const Vocabulary& vocab) const {
        for (int t : tokens) {
            if (t < 0 || t >= vocab.size)
                throw DataError("Sequence: token id " + std::to_string(t) +
                                " outside vocabulary of size " + std::to_string(vocab.size));
        }
    }
};

inline Sequence make_sequence(std::vector<int> tokens, Role role) {
    Sequence s;
    s.tokens = std::move(tokens);
    s.role = role;
    return s;
}

}  // namespace flowcot
