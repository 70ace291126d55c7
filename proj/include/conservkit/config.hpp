#pragma once

#include <stdexcept>
#include <string>

namespace ck {

struct JetOverflowError : std::runtime_error {
    explicit JetOverflowError(const std::string& what) : std::runtime_error(what) {}
};

// Global jet-index cap. Set once at startup (CONSERVKIT_NMAX / CLI); the
// symbolic kernel only reads it.
int jet_cap();
void set_jet_cap(int n);

inline void check_jet_index(int j) {
    if (j < 0) throw std::invalid_argument("negative jet index");
    if (j > jet_cap())
        throw JetOverflowError("jet index " + std::to_string(j) + " exceeds cap " +
                               std::to_string(jet_cap()));
}

}  // namespace ck
