#include "conservkit/rational.hpp"

#include <cmath>

namespace ck {

Rat rat_pow_int(const Rat& r, const Int& e) {
    if (e == 0) return Rat(1);
    if (r == 0) {
        if (e < 0) throw DomainError("zero to a negative power");
        return Rat(0);
    }
    Int n = e < 0 ? Int(-e) : e;
    Rat base = e < 0 ? Rat(rat_den(r), rat_num(r)) : r;
    Rat acc(1);
    while (n > 0) {
        if ((n & 1) != 0) acc *= base;
        base *= base;
        n >>= 1;
    }
    return acc;
}

std::optional<Int> int_root(const Int& v, unsigned n) {
    if (n == 0) return std::nullopt;
    if (v < 0) {
        if (n % 2 == 0) return std::nullopt;
        auto r = int_root(-v, n);
        if (r) return Int(-*r);
        return std::nullopt;
    }
    if (v <= 1 || n == 1) return v;
    // Newton on integers.
    Int lo = 1, hi = v;
    while (lo < hi) {
        Int mid = (lo + hi + 1) / 2;
        Int p = 1;
        bool over = false;
        for (unsigned i = 0; i < n; ++i) {
            p *= mid;
            if (p > v) {
                over = true;
                break;
            }
        }
        if (over)
            hi = mid - 1;
        else
            lo = mid;
    }
    Int p = 1;
    for (unsigned i = 0; i < n; ++i) p *= lo;
    if (p == v) return lo;
    return std::nullopt;
}

void split_nth_power(const Int& v, unsigned n, Int& root, Int& residual) {
    root = 1;
    residual = 1;
    Int w = v;
    if (w < 0) throw DomainError("negative radicand");
    const long trial_bound = 1000000;
    for (long p = 2; p <= trial_bound && Int(p) * p <= w; p == 2 ? p = 3 : p += 2) {
        unsigned a = 0;
        while (w % p == 0) {
            w /= p;
            ++a;
        }
        if (a == 0) continue;
        for (unsigned i = 0; i < a / n; ++i) root *= p;
        for (unsigned i = 0; i < a % n; ++i) residual *= p;
    }
    if (w > 1) {
        if (auto r = int_root(w, n)) {
            root *= *r;
        } else {
            residual *= w;
        }
    }
}

std::string rat_to_string(const Rat& r) {
    if (is_integer(r)) return rat_num(r).str();
    return rat_num(r).str() + "/" + rat_den(r).str();
}

double rat_to_double(const Rat& r) { return static_cast<double>(r); }

}  // namespace ck
