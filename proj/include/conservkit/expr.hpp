#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "conservkit/config.hpp"
#include "conservkit/rational.hpp"
#include "conservkit/symbol.hpp"

namespace ck {

struct Base;
using BasePtr = std::shared_ptr<const Base>;

// One power factor base^exp of a monomial. exp != 0.
struct Factor {
    BasePtr base;
    Rat exp;
};

// Sorted by base order, one factor per base.
using Monomial = std::vector<Factor>;

struct Term {
    Rat coeff;
    Monomial mono;
};

struct ExprData {
    std::vector<Term> terms;  // sorted by monomial order, no zero coefficients
};

enum class VarKind : unsigned char { T, X, Jet };

struct VarRef {
    VarKind kind;
    int index = 0;  // jet index when kind == Jet

    static VarRef t() { return {VarKind::T, 0}; }
    static VarRef x() { return {VarKind::X, 0}; }
    static VarRef jet(int j) { return {VarKind::Jet, j}; }

    friend bool operator<(const VarRef& a, const VarRef& b) {
        if (a.kind != b.kind) return a.kind < b.kind;
        return a.index < b.index;
    }
    friend bool operator==(const VarRef& a, const VarRef& b) {
        return a.kind == b.kind && a.index == b.index;
    }
};

std::string var_name(VarRef v);

// A differential function in canonical form: a sum of rational-coefficient
// monomials over t, x, jet variables, opaque function applications, integer
// surds, and parenthesized-sum bases carrying negative or fractional powers.
// Values are immutable; all arithmetic goes through the canonicalizing
// constructors below.
class Expr {
public:
    Expr() : d_(empty_data()) {}

    static Expr num(const Rat& r);
    static Expr integer(long v) { return num(Rat(v)); }
    static Expr t();
    static Expr x();
    static Expr jet(int j);  // u_j; jet(0) is u itself
    static Expr var(VarRef v);
    static Expr func(const std::string& name, std::vector<Expr> args);
    static Expr unknown(int id);  // anonymous constant for linear-ansatz solving

    bool is_zero() const { return d_->terms.empty(); }
    bool is_number() const;
    Rat as_number() const;  // requires is_number()
    const std::vector<Term>& terms() const { return d_->terms; }
    size_t term_count() const { return d_->terms.size(); }

    friend Expr operator+(const Expr& a, const Expr& b);
    friend Expr operator-(const Expr& a, const Expr& b);
    friend Expr operator*(const Expr& a, const Expr& b);
    friend Expr operator/(const Expr& a, const Expr& b);
    Expr operator-() const;

    Expr& operator+=(const Expr& o) { return *this = *this + o; }
    Expr& operator-=(const Expr& o) { return *this = *this - o; }
    Expr& operator*=(const Expr& o) { return *this = *this * o; }

private:
    static std::shared_ptr<const ExprData> empty_data();
    explicit Expr(std::shared_ptr<const ExprData> d) : d_(std::move(d)) {}
    std::shared_ptr<const ExprData> d_;

    friend Expr make_expr(std::vector<Term> terms);
};

struct Base {
    enum class Kind : unsigned char { Var, Num, Func, Sum, Unknown };
    Kind kind;

    VarRef var{VarKind::T, 0};  // Kind::Var
    Int num;                    // Kind::Num: integer >= 2, prime within trial bound
    std::string func;           // Kind::Func
    bool unit = false;          // unit constant: base^2 == 1
    std::vector<Expr> args;     // Kind::Func
    Expr sum;                   // Kind::Sum: primitive sum, >= 2 terms
    int id = 0;                 // Kind::Unknown
};

int cmp(const Expr& a, const Expr& b);
int cmp_base(const Base& a, const Base& b);
inline bool same(const Expr& a, const Expr& b) { return cmp(a, b) == 0; }

Expr pow(const Expr& e, const Rat& exponent);
inline Expr inv(const Expr& e) { return pow(e, Rat(-1)); }

Expr mul(const Expr& a, const Expr& b);
Expr add(const Expr& a, const Expr& b);

// Rebuilds the canonical form from scratch (idempotent on valid input).
Expr normalize(const Expr& e);

Expr partial(const Expr& e, VarRef v);
Expr substitute(const Expr& e, const std::map<VarRef, Expr>& map);

// Greatest j with d(e)/d(u_j) != 0; 0 for functions of (t,x) alone.
int order(const Expr& e);
// Largest jet index appearing syntactically; -1 when none.
int max_jet(const Expr& e);
bool depends_on(const Expr& e, VarRef v);
void collect_symbols(const Expr& e, std::vector<std::string>& out);
void collect_unknowns(const Expr& e, std::vector<int>& out);

std::string to_string(const Expr& e);

enum class ZeroVerdict { Zero, NonZero, Undecided };
ZeroVerdict symbolic_zero(const Expr& e);
inline bool is_zero_symbolic(const Expr& e) { return symbolic_zero(e) == ZeroVerdict::Zero; }

struct EqualsResult {
    bool equal = false;
    bool decided = true;  // false: probabilistic verdict only
    std::string note;
};

EqualsResult equals_ex(const Expr& a, const Expr& b);
bool equals(const Expr& a, const Expr& b);

// Sink for symbolic-vs-numeric disagreement diagnostics (defaults to stderr).
void set_diagnostic_sink(std::function<void(const std::string&)> sink);

// e as num/den with den a product of cleared denominator factors; den == 1
// when e already has no negative powers.
void as_fraction(const Expr& e, Expr& num, Expr& den);

// --- numeric evaluation ---

struct EvalContext {
    double t = 0, x = 0;
    std::vector<double> jets;  // u_0, u_1, ...
    std::map<std::string, std::function<double(const std::vector<double>&)>> funcs;
    std::map<int, double> unknowns;

    double var_value(VarRef v) const;
};

double eval(const Expr& e, const EvalContext& ctx);

}  // namespace ck
