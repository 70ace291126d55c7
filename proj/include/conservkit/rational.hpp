#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <optional>
#include <stdexcept>
#include <string>

namespace ck {

using Int = boost::multiprecision::cpp_int;
using Rat = boost::multiprecision::cpp_rational;

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

inline Int rat_num(const Rat& r) { return numerator(r); }
inline Int rat_den(const Rat& r) { return denominator(r); }

inline bool is_integer(const Rat& r) { return rat_den(r) == 1; }

// Largest integer <= r.
inline Int rat_floor(const Rat& r) {
    Int q = rat_num(r) / rat_den(r);
    if (rat_num(r) < 0 && q * rat_den(r) != rat_num(r)) --q;
    return q;
}

inline Int rat_ceil(const Rat& r) { return -rat_floor(-r); }

// r^e for integer e; e < 0 requires r != 0.
Rat rat_pow_int(const Rat& r, const Int& e);

// Exact n-th root if it exists.
std::optional<Int> int_root(const Int& v, unsigned n);

// v = root^n * residual with residual free of n-th power factors.
// Uses trial division; factors above the trial bound stay in the residual.
void split_nth_power(const Int& v, unsigned n, Int& root, Int& residual);

std::string rat_to_string(const Rat& r);

double rat_to_double(const Rat& r);

}  // namespace ck
