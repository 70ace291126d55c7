#include "conservkit/expr.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace ck {

namespace {

int cmp_rat(const Rat& a, const Rat& b) { return a < b ? -1 : (a == b ? 0 : 1); }
int cmp_int(const Int& a, const Int& b) { return a < b ? -1 : (a == b ? 0 : 1); }

int var_rank(VarRef v) { return v.kind == VarKind::T ? 0 : (v.kind == VarKind::X ? 1 : 2 + v.index); }

int cmp_monomial(const Monomial& a, const Monomial& b);

}  // namespace

int cmp_base(const Base& a, const Base& b) {
    if (a.kind != b.kind) return a.kind < b.kind ? -1 : 1;
    switch (a.kind) {
        case Base::Kind::Var: {
            int ra = var_rank(a.var), rb = var_rank(b.var);
            return ra < rb ? -1 : (ra == rb ? 0 : 1);
        }
        case Base::Kind::Num:
            return cmp_int(a.num, b.num);
        case Base::Kind::Func: {
            if (int c = a.func.compare(b.func)) return c < 0 ? -1 : 1;
            if (a.args.size() != b.args.size()) return a.args.size() < b.args.size() ? -1 : 1;
            for (size_t i = 0; i < a.args.size(); ++i)
                if (int c = cmp(a.args[i], b.args[i])) return c;
            return 0;
        }
        case Base::Kind::Sum:
            return cmp(a.sum, b.sum);
        case Base::Kind::Unknown:
            return a.id < b.id ? -1 : (a.id == b.id ? 0 : 1);
    }
    return 0;
}

namespace {

int cmp_factor(const Factor& a, const Factor& b) {
    if (int c = cmp_base(*a.base, *b.base)) return c;
    return cmp_rat(a.exp, b.exp);
}

int cmp_monomial(const Monomial& a, const Monomial& b) {
    size_t n = std::min(a.size(), b.size());
    for (size_t i = 0; i < n; ++i)
        if (int c = cmp_factor(a[i], b[i])) return c;
    if (a.size() != b.size()) return a.size() < b.size() ? -1 : 1;
    return 0;
}

}  // namespace

int cmp(const Expr& a, const Expr& b) {
    const auto& ta = a.terms();
    const auto& tb = b.terms();
    size_t n = std::min(ta.size(), tb.size());
    for (size_t i = 0; i < n; ++i) {
        if (int c = cmp_monomial(ta[i].mono, tb[i].mono)) return c;
        if (int c = cmp_rat(ta[i].coeff, tb[i].coeff)) return c;
    }
    if (ta.size() != tb.size()) return ta.size() < tb.size() ? -1 : 1;
    return 0;
}

// --- construction -----------------------------------------------------------

std::shared_ptr<const ExprData> Expr::empty_data() {
    static const auto d = std::make_shared<const ExprData>();
    return d;
}

Expr make_expr(std::vector<Term> terms) {
    std::sort(terms.begin(), terms.end(),
              [](const Term& a, const Term& b) { return cmp_monomial(a.mono, b.mono) < 0; });
    std::vector<Term> out;
    out.reserve(terms.size());
    for (auto& t : terms) {
        if (t.coeff == 0) continue;
        if (!out.empty() && cmp_monomial(out.back().mono, t.mono) == 0) {
            out.back().coeff += t.coeff;
            if (out.back().coeff == 0) out.pop_back();
        } else {
            out.push_back(std::move(t));
        }
    }
    auto d = std::make_shared<ExprData>();
    d->terms = std::move(out);
    struct Access : Expr {
        explicit Access(std::shared_ptr<const ExprData> p) : Expr(std::move(p)) {}
    };
    return Access(std::move(d));
}

namespace {

Expr term_make(Rat coeff, std::vector<Factor> factors);
Expr num_pow(const Rat& c, const Rat& q);
Expr pow_base(const BasePtr& b, const Rat& e);
Expr pow_sum_int(const Expr& sum, Int k);

Expr one_expr() { return Expr::num(Rat(1)); }

// Single positive-integer-exponent factor kept unexpanded; internal helper for
// denominator clearing and fraction assembly.
Expr raw_factor(const BasePtr& b, const Rat& e) {
    if (e == 0) return one_expr();
    return make_expr({Term{Rat(1), {Factor{b, e}}}});
}

// Central canonicalizer for a single product. Sorts and merges factors, folds
// numeric and unit powers, and expands positive integer powers of sum bases.
Expr term_make(Rat coeff, std::vector<Factor> factors) {
    if (coeff == 0) return Expr();
    std::sort(factors.begin(), factors.end(),
              [](const Factor& a, const Factor& b) { return cmp_base(*a.base, *b.base) < 0; });
    Monomial kept;
    std::vector<std::pair<Expr, Int>> expand;  // (sum, positive power)
    size_t i = 0;
    while (i < factors.size()) {
        BasePtr b = factors[i].base;
        Rat e = factors[i].exp;
        size_t j = i + 1;
        while (j < factors.size() && cmp_base(*factors[j].base, *b) == 0) {
            e += factors[j].exp;
            ++j;
        }
        i = j;
        if (e == 0) continue;
        switch (b->kind) {
            case Base::Kind::Num: {
                Int ip = rat_floor(e);
                coeff *= rat_pow_int(Rat(b->num), ip);
                Rat f = e - Rat(ip);
                if (f != 0) kept.push_back(Factor{b, f});
                break;
            }
            case Base::Kind::Func: {
                if (b->unit) {
                    if (!is_integer(e))
                        throw DomainError("fractional power of unit constant '" + b->func + "'");
                    Int m = rat_num(e) % 2;
                    if (m < 0) m += 2;
                    if (m != 0) kept.push_back(Factor{b, Rat(1)});
                    break;
                }
                kept.push_back(Factor{b, e});
                break;
            }
            case Base::Kind::Sum: {
                if (is_integer(e) && e > 0)
                    expand.emplace_back(b->sum, rat_num(e));
                else
                    kept.push_back(Factor{b, e});
                break;
            }
            default:
                kept.push_back(Factor{b, e});
                break;
        }
    }
    Expr result = make_expr({Term{std::move(coeff), std::move(kept)}});
    for (auto& [s, k] : expand) result = mul(result, pow_sum_int(s, k));
    return result;
}

Expr pow_sum_int(const Expr& sum, Int k) {
    Expr acc = one_expr();
    Expr base = sum;
    while (k > 0) {
        if ((k & 1) != 0) acc = mul(acc, base);
        base = mul(base, base);
        k >>= 1;
    }
    return acc;
}

Expr num_pow(const Rat& c, const Rat& q) {
    if (c == 0) {
        if (q > 0) return Expr();
        throw DomainError("zero to a non-positive power");
    }
    if (is_integer(q)) return Expr::num(rat_pow_int(c, rat_num(q)));
    if (c < 0) throw DomainError("fractional power of a negative constant");
    Rat coeff(1);
    std::vector<Factor> factors;
    auto absorb = [&](const Int& value, const Rat& exponent) {
        if (value == 1) return;
        unsigned r = static_cast<unsigned>(rat_den(exponent));
        Int root, residual;
        split_nth_power(value, r, root, residual);
        // value^exp = root^(num) * residual^exp with residual r-th-power free
        coeff *= rat_pow_int(Rat(root), rat_num(exponent));
        if (residual != 1) {
            Rat e = exponent;
            Int ip = rat_floor(e);
            coeff *= rat_pow_int(Rat(residual), ip);
            Rat f = e - Rat(ip);
            if (f != 0) {
                auto b = std::make_shared<Base>();
                b->kind = Base::Kind::Num;
                b->num = residual;
                factors.push_back(Factor{b, f});
            }
        }
    };
    absorb(rat_num(c), q);
    absorb(rat_den(c), -q);
    return term_make(coeff, std::move(factors));
}

Expr base_expr(const BasePtr& b) {
    switch (b->kind) {
        case Base::Kind::Var:
            return Expr::var(b->var);
        case Base::Kind::Num:
            return Expr::num(Rat(b->num));
        case Base::Kind::Func: {
            return raw_factor(b, Rat(1));
        }
        case Base::Kind::Sum:
            return b->sum;
        case Base::Kind::Unknown:
            return Expr::unknown(b->id);
    }
    return Expr();
}

Expr pow_base(const BasePtr& b, const Rat& e) {
    if (e == 0) return one_expr();
    switch (b->kind) {
        case Base::Kind::Num:
            return num_pow(Rat(b->num), e);
        case Base::Kind::Sum:
            if (is_integer(e) && e > 0) return pow_sum_int(b->sum, rat_num(e));
            return term_make(Rat(1), {Factor{b, e}});
        default:
            return term_make(Rat(1), {Factor{b, e}});
    }
}

// e = prefix * primitive, prefix a single monomial with the rational content
// and all shared or negative base powers pulled out. The primitive part has
// non-negative exponents everywhere, content 1 and positive leading sign.
void extract_content(const Expr& e, Rat& content, Monomial& prefix, Expr& primitive) {
    const auto& ts = e.terms();
    Int gnum = 0, glcm = 1;
    for (const auto& t : ts) {
        Int n = rat_num(t.coeff);
        if (n < 0) n = -n;
        gnum = boost::multiprecision::gcd(gnum, n);
        glcm = glcm / boost::multiprecision::gcd(glcm, rat_den(t.coeff)) * rat_den(t.coeff);
    }
    content = Rat(gnum, glcm);
    if (ts.front().coeff < 0) content = -content;

    // per-base minimum exponent, absent counting as zero
    std::vector<std::pair<BasePtr, Rat>> mins;
    for (const auto& t : ts) {
        for (const auto& f : t.mono) {
            bool found = false;
            for (auto& m : mins)
                if (cmp_base(*m.first, *f.base) == 0) {
                    found = true;
                    break;
                }
            if (!found) mins.emplace_back(f.base, f.exp);
        }
    }
    for (auto& m : mins) {
        for (const auto& t : ts) {
            Rat e_here(0);
            for (const auto& f : t.mono)
                if (cmp_base(*f.base, *m.first) == 0) {
                    e_here = f.exp;
                    break;
                }
            if (e_here < m.second) m.second = e_here;
        }
    }
    prefix.clear();
    for (auto& m : mins)
        if (m.second != 0) prefix.push_back(Factor{m.first, m.second});
    std::sort(prefix.begin(), prefix.end(),
              [](const Factor& a, const Factor& b) { return cmp_base(*a.base, *b.base) < 0; });

    Expr acc;
    for (const auto& t : ts) {
        Rat c = t.coeff / content;
        std::vector<Factor> fs = t.mono;
        for (const auto& p : prefix) fs.push_back(Factor{p.base, -p.exp});
        acc = add(acc, term_make(std::move(c), std::move(fs)));
    }
    primitive = acc;
}

}  // namespace

Expr Expr::num(const Rat& r) {
    if (r == 0) return Expr();
    return make_expr({Term{r, {}}});
}

Expr Expr::t() { return var(VarRef::t()); }
Expr Expr::x() { return var(VarRef::x()); }

Expr Expr::jet(int j) {
    check_jet_index(j);
    return var(VarRef::jet(j));
}

Expr Expr::var(VarRef v) {
    if (v.kind == VarKind::Jet) check_jet_index(v.index);
    auto b = std::make_shared<Base>();
    b->kind = Base::Kind::Var;
    b->var = v;
    return make_expr({Term{Rat(1), {Factor{b, Rat(1)}}}});
}

Expr Expr::func(const std::string& name, std::vector<Expr> args) {
    const FunctionSymbol* sym = global_symbols().find(name);
    if (!sym) throw DomainError("unknown function symbol '" + name + "'");
    if (static_cast<int>(args.size()) != sym->arity)
        throw DomainError("symbol '" + name + "' expects " + std::to_string(sym->arity) +
                          " argument(s)");
    auto b = std::make_shared<Base>();
    b->kind = Base::Kind::Func;
    b->func = name;
    b->unit = sym->unit;
    b->args = std::move(args);
    return term_make(Rat(1), {Factor{b, Rat(1)}});
}

Expr Expr::unknown(int id) {
    auto b = std::make_shared<Base>();
    b->kind = Base::Kind::Unknown;
    b->id = id;
    return make_expr({Term{Rat(1), {Factor{b, Rat(1)}}}});
}

bool Expr::is_number() const {
    return d_->terms.empty() || (d_->terms.size() == 1 && d_->terms[0].mono.empty());
}

Rat Expr::as_number() const {
    if (d_->terms.empty()) return Rat(0);
    if (!is_number()) throw DomainError("expression is not a constant");
    return d_->terms[0].coeff;
}

Expr add(const Expr& a, const Expr& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    std::vector<Term> ts = a.terms();
    ts.insert(ts.end(), b.terms().begin(), b.terms().end());
    return make_expr(std::move(ts));
}

Expr mul(const Expr& a, const Expr& b) {
    if (a.is_zero() || b.is_zero()) return Expr();
    std::vector<Term> acc;
    for (const auto& ta : a.terms()) {
        for (const auto& tb : b.terms()) {
            std::vector<Factor> fs = ta.mono;
            fs.insert(fs.end(), tb.mono.begin(), tb.mono.end());
            Expr piece = term_make(ta.coeff * tb.coeff, std::move(fs));
            acc.insert(acc.end(), piece.terms().begin(), piece.terms().end());
        }
    }
    return make_expr(std::move(acc));
}

Expr operator+(const Expr& a, const Expr& b) { return add(a, b); }
Expr operator-(const Expr& a, const Expr& b) { return add(a, b.operator-()); }
Expr operator*(const Expr& a, const Expr& b) { return mul(a, b); }
Expr operator/(const Expr& a, const Expr& b) { return mul(a, pow(b, Rat(-1))); }

Expr Expr::operator-() const {
    std::vector<Term> ts = terms();
    for (auto& t : ts) t.coeff = -t.coeff;
    return make_expr(std::move(ts));
}

Expr pow(const Expr& e, const Rat& q) {
    if (q == 0) return one_expr();
    if (e.is_zero()) {
        if (q > 0) return Expr();
        throw DomainError("zero to a negative power");
    }
    if (e.is_number()) return num_pow(e.as_number(), q);
    if (e.term_count() == 1) {
        const Term& t = e.terms()[0];
        Expr result = num_pow(t.coeff, q);
        for (const auto& f : t.mono) result = mul(result, pow_base(f.base, f.exp * q));
        return result;
    }
    if (is_integer(q) && q > 0) return pow_sum_int(e, rat_num(q));

    Rat content;
    Monomial prefix;
    Expr prim;
    extract_content(e, content, prefix, prim);
    Expr result = num_pow(content, q);
    for (const auto& f : prefix) result = mul(result, pow_base(f.base, f.exp * q));
    if (prim.is_number()) return mul(result, num_pow(prim.as_number(), q));
    if (prim.term_count() == 1) {
        const Term& t = prim.terms()[0];
        result = mul(result, num_pow(t.coeff, q));
        for (const auto& f : t.mono) result = mul(result, pow_base(f.base, f.exp * q));
        return result;
    }
    auto b = std::make_shared<Base>();
    b->kind = Base::Kind::Sum;
    b->sum = prim;
    return mul(result, term_make(Rat(1), {Factor{b, q}}));
}

// --- substitution / rebuild --------------------------------------------------

namespace {

Expr substitute_base(const BasePtr& b, const std::map<VarRef, Expr>& map) {
    switch (b->kind) {
        case Base::Kind::Var: {
            auto it = map.find(b->var);
            if (it != map.end()) return it->second;
            return Expr::var(b->var);
        }
        case Base::Kind::Func: {
            std::vector<Expr> args;
            args.reserve(b->args.size());
            for (const auto& a : b->args) args.push_back(substitute(a, map));
            return Expr::func(b->func, std::move(args));
        }
        case Base::Kind::Sum:
            return substitute(b->sum, map);
        case Base::Kind::Num:
            return Expr::num(Rat(b->num));
        case Base::Kind::Unknown:
            return Expr::unknown(b->id);
    }
    return Expr();
}

}  // namespace

Expr substitute(const Expr& e, const std::map<VarRef, Expr>& map) {
    Expr acc;
    for (const auto& t : e.terms()) {
        Expr piece = Expr::num(t.coeff);
        for (const auto& f : t.mono) piece = mul(piece, pow(substitute_base(f.base, map), f.exp));
        acc = add(acc, piece);
    }
    return acc;
}

Expr normalize(const Expr& e) { return substitute(e, {}); }

// --- differentiation ---------------------------------------------------------

namespace {

Expr dbase(const BasePtr& b, VarRef v) {
    switch (b->kind) {
        case Base::Kind::Var:
            return b->var == v ? one_expr() : Expr();
        case Base::Kind::Num:
        case Base::Kind::Unknown:
            return Expr();
        case Base::Kind::Func: {
            if (b->unit) return Expr();
            Expr acc;
            for (size_t k = 0; k < b->args.size(); ++k) {
                Expr da = partial(b->args[k], v);
                if (da.is_zero()) continue;
                Expr outer;
                if (b->func == "log") {
                    outer = pow(b->args[k], Rat(-1));
                } else {
                    const FunctionSymbol& sym = global_symbols().get(b->func);
                    if (!sym.has_rule(static_cast<int>(k)))
                        throw DomainError("no derivative rule for '" + b->func + "' argument " +
                                          std::to_string(k + 1));
                    outer = Expr::func(sym.d_rules[k], b->args);
                }
                acc = add(acc, mul(outer, da));
            }
            return acc;
        }
        case Base::Kind::Sum:
            return partial(b->sum, v);
    }
    return Expr();
}

}  // namespace

Expr partial(const Expr& e, VarRef v) {
    Expr acc;
    for (const auto& t : e.terms()) {
        for (size_t i = 0; i < t.mono.size(); ++i) {
            Expr db = dbase(t.mono[i].base, v);
            if (db.is_zero()) continue;
            Expr piece = Expr::num(t.coeff * t.mono[i].exp);
            for (size_t j = 0; j < t.mono.size(); ++j) {
                Rat ex = t.mono[j].exp;
                if (j == i) ex -= 1;
                piece = mul(piece, pow_base(t.mono[j].base, ex));
            }
            acc = add(acc, mul(piece, db));
        }
    }
    return acc;
}

// --- structural queries -------------------------------------------------------

namespace {

template <typename F>
void walk_bases(const Expr& e, F&& fn) {
    for (const auto& t : e.terms()) {
        for (const auto& f : t.mono) {
            fn(*f.base);
            if (f.base->kind == Base::Kind::Func)
                for (const auto& a : f.base->args) walk_bases(a, fn);
            else if (f.base->kind == Base::Kind::Sum)
                walk_bases(f.base->sum, fn);
        }
    }
}

}  // namespace

int max_jet(const Expr& e) {
    int m = -1;
    walk_bases(e, [&](const Base& b) {
        if (b.kind == Base::Kind::Var && b.var.kind == VarKind::Jet) m = std::max(m, b.var.index);
    });
    return m;
}

bool depends_on(const Expr& e, VarRef v) {
    bool found = false;
    walk_bases(e, [&](const Base& b) {
        if (b.kind == Base::Kind::Var && b.var == v) found = true;
    });
    return found;
}

void collect_symbols(const Expr& e, std::vector<std::string>& out) {
    walk_bases(e, [&](const Base& b) {
        if (b.kind == Base::Kind::Func)
            if (std::find(out.begin(), out.end(), b.func) == out.end()) out.push_back(b.func);
    });
}

void collect_unknowns(const Expr& e, std::vector<int>& out) {
    walk_bases(e, [&](const Base& b) {
        if (b.kind == Base::Kind::Unknown)
            if (std::find(out.begin(), out.end(), b.id) == out.end()) out.push_back(b.id);
    });
}

int order(const Expr& e) {
    for (int j = max_jet(e); j >= 0; --j) {
        VarRef v = VarRef::jet(j);
        try {
            Expr p = partial(e, v);
            if (p.is_zero()) continue;
            if (symbolic_zero(p) != ZeroVerdict::Zero) return j;
        } catch (const DomainError&) {
            if (depends_on(e, v)) return j;  // opaque dependence without a rule
        }
    }
    return 0;
}

// --- printing -----------------------------------------------------------------

std::string var_name(VarRef v) {
    switch (v.kind) {
        case VarKind::T:
            return "t";
        case VarKind::X:
            return "x";
        case VarKind::Jet:
            return v.index == 0 ? "u" : "u" + std::to_string(v.index);
    }
    return "?";
}

namespace {

std::string base_str(const Base& b) {
    switch (b.kind) {
        case Base::Kind::Var:
            return var_name(b.var);
        case Base::Kind::Num:
            return b.num.str();
        case Base::Kind::Func: {
            if (b.args.empty()) return b.func;
            std::string s = b.func + "(";
            for (size_t i = 0; i < b.args.size(); ++i) {
                if (i) s += ", ";
                s += to_string(b.args[i]);
            }
            return s + ")";
        }
        case Base::Kind::Sum:
            return "(" + to_string(b.sum) + ")";
        case Base::Kind::Unknown:
            return "@" + std::to_string(b.id);
    }
    return "?";
}

std::string factor_str(const Factor& f) {
    std::string s = base_str(*f.base);
    if (f.exp == 1) return s;
    if (is_integer(f.exp) && f.exp > 0) return s + "^" + rat_num(f.exp).str();
    return s + "^(" + rat_to_string(f.exp) + ")";
}

std::string term_str(const Term& t, bool strip_sign) {
    Rat c = t.coeff;
    if (strip_sign && c < 0) c = -c;
    std::vector<std::string> pieces;
    if (t.mono.empty() || c != 1) pieces.push_back(rat_to_string(c));
    for (const auto& f : t.mono) pieces.push_back(factor_str(f));
    std::string s;
    for (size_t i = 0; i < pieces.size(); ++i) {
        if (i) s += "*";
        s += pieces[i];
    }
    return s;
}

}  // namespace

std::string to_string(const Expr& e) {
    if (e.is_zero()) return "0";
    std::string s;
    for (size_t i = 0; i < e.terms().size(); ++i) {
        const Term& t = e.terms()[i];
        if (i == 0) {
            if (t.coeff < 0) s += "-";
            s += term_str(t, true);
        } else {
            s += t.coeff < 0 ? " - " : " + ";
            s += term_str(t, true);
        }
    }
    return s;
}

// --- zero testing -------------------------------------------------------------

namespace {

struct SumBaseInfo {
    BasePtr base;
    Rat min_exp;
};

ZeroVerdict symbolic_zero_impl(const Expr& e, int depth) {
    if (e.is_zero()) return ZeroVerdict::Zero;

    std::vector<SumBaseInfo> sums;
    for (const auto& t : e.terms())
        for (const auto& f : t.mono)
            if (f.base->kind == Base::Kind::Sum) {
                bool found = false;
                for (auto& s : sums)
                    if (cmp_base(*s.base, *f.base) == 0) {
                        found = true;
                        break;
                    }
                if (!found) sums.push_back({f.base, Rat(0)});
            }
    if (sums.empty()) return ZeroVerdict::NonZero;
    if (depth > 4) return ZeroVerdict::Undecided;

    for (auto& s : sums)
        for (const auto& t : e.terms()) {
            Rat here(0);
            for (const auto& f : t.mono)
                if (f.base->kind == Base::Kind::Sum && cmp_base(*f.base, *s.base) == 0) {
                    here = f.exp;
                    break;
                }
            if (here < s.min_exp) s.min_exp = here;
        }

    Expr cleared = e;
    for (auto& s : sums)
        if (s.min_exp < 0) cleared = mul(cleared, raw_factor(s.base, Rat(rat_ceil(-s.min_exp))));

    // Group by the fractional parts of remaining sum-base powers. Distinct
    // radical signatures are treated as independent.
    struct Group {
        std::vector<Factor> sig;
        std::vector<Term> terms;
    };
    std::vector<Group> groups;
    std::set<std::string> frac_bases;
    for (const auto& t : cleared.terms()) {
        std::vector<Factor> sig;
        for (const auto& f : t.mono)
            if (f.base->kind == Base::Kind::Sum) {
                Rat frac = f.exp - Rat(rat_floor(f.exp));
                if (frac != 0) {
                    sig.push_back(Factor{f.base, frac});
                    frac_bases.insert(to_string(f.base->sum));
                }
            }
        std::sort(sig.begin(), sig.end(),
                  [](const Factor& a, const Factor& b) { return cmp_base(*a.base, *b.base) < 0; });
        Group* g = nullptr;
        for (auto& gg : groups) {
            if (gg.sig.size() != sig.size()) continue;
            bool eq = true;
            for (size_t i = 0; i < sig.size(); ++i)
                if (cmp_base(*gg.sig[i].base, *sig[i].base) != 0 || gg.sig[i].exp != sig[i].exp) {
                    eq = false;
                    break;
                }
            if (eq) {
                g = &gg;
                break;
            }
        }
        if (!g) {
            groups.push_back(Group{sig, {}});
            g = &groups.back();
        }
        g->terms.push_back(t);
    }

    bool any_nonzero = false, any_undecided = false;
    for (auto& g : groups) {
        // Divide out the radical signature, leaving integer powers that the
        // term canonicalizer expands; then recurse.
        Expr cofactor;
        for (auto& t : g.terms) {
            std::vector<Factor> fs;
            for (const auto& f : t.mono) {
                Rat ex = f.exp;
                if (f.base->kind == Base::Kind::Sum) {
                    Rat frac = ex - Rat(rat_floor(ex));
                    if (frac != 0) ex = ex - frac;
                    if (ex == 0) continue;
                }
                fs.push_back(Factor{f.base, ex});
            }
            cofactor = add(cofactor, term_make(t.coeff, std::move(fs)));
        }
        switch (symbolic_zero_impl(cofactor, depth + 1)) {
            case ZeroVerdict::Zero:
                break;
            case ZeroVerdict::NonZero:
                any_nonzero = true;
                break;
            case ZeroVerdict::Undecided:
                any_undecided = true;
                break;
        }
    }
    if (!any_nonzero && !any_undecided) return ZeroVerdict::Zero;
    if (any_undecided) return ZeroVerdict::Undecided;
    // A nonzero verdict in the presence of several distinct radicals relies on
    // their independence, which we do not prove.
    if (frac_bases.size() >= 2) return ZeroVerdict::Undecided;
    return ZeroVerdict::NonZero;
}

}  // namespace

ZeroVerdict symbolic_zero(const Expr& e) { return symbolic_zero_impl(e, 0); }

void as_fraction(const Expr& e, Expr& num, Expr& den) {
    std::vector<std::pair<BasePtr, Rat>> mins;
    for (const auto& t : e.terms())
        for (const auto& f : t.mono) {
            bool found = false;
            for (auto& m : mins)
                if (cmp_base(*m.first, *f.base) == 0) found = true;
            if (!found) mins.emplace_back(f.base, Rat(0));
        }
    for (auto& m : mins)
        for (const auto& t : e.terms()) {
            Rat here(0);
            for (const auto& f : t.mono)
                if (cmp_base(*f.base, *m.first) == 0) {
                    here = f.exp;
                    break;
                }
            if (here < m.second) m.second = here;
        }
    den = one_expr();
    for (auto& m : mins)
        if (m.second < 0) den = mul(den, raw_factor(m.first, -m.second));
    num = mul(e, den);
}

// --- numeric evaluation ---------------------------------------------------------

double EvalContext::var_value(VarRef v) const {
    switch (v.kind) {
        case VarKind::T:
            return t;
        case VarKind::X:
            return x;
        case VarKind::Jet:
            if (v.index >= static_cast<int>(jets.size()))
                throw DomainError("no value assigned to " + var_name(v));
            return jets[static_cast<size_t>(v.index)];
    }
    return 0;
}

namespace {

double check_finite(double v) {
    if (!std::isfinite(v)) throw DomainError("non-finite value in evaluation");
    return v;
}

double eval_base(const Base& b, const EvalContext& ctx) {
    switch (b.kind) {
        case Base::Kind::Var:
            return ctx.var_value(b.var);
        case Base::Kind::Num:
            return static_cast<double>(b.num);
        case Base::Kind::Func: {
            auto it = ctx.funcs.find(b.func);
            if (b.func == "log" && it == ctx.funcs.end()) {
                double a = eval(b.args[0], ctx);
                if (a <= 0) throw DomainError("log of non-positive value");
                return std::log(a);
            }
            if (it == ctx.funcs.end())
                throw DomainError("no sample assigned to symbol '" + b.func + "'");
            std::vector<double> args;
            args.reserve(b.args.size());
            for (const auto& a : b.args) args.push_back(eval(a, ctx));
            return check_finite(it->second(args));
        }
        case Base::Kind::Sum:
            return eval(b.sum, ctx);
        case Base::Kind::Unknown: {
            auto it = ctx.unknowns.find(b.id);
            if (it == ctx.unknowns.end())
                throw DomainError("no value for unknown @" + std::to_string(b.id));
            return it->second;
        }
    }
    return 0;
}

}  // namespace

double eval(const Expr& e, const EvalContext& ctx) {
    double acc = 0;
    for (const auto& t : e.terms()) {
        double v = rat_to_double(t.coeff);
        for (const auto& f : t.mono) {
            double b = eval_base(*f.base, ctx);
            double ex = rat_to_double(f.exp);
            if (b == 0 && ex < 0) throw DomainError("division by zero in evaluation");
            if (b < 0 && !is_integer(f.exp)) throw DomainError("fractional power of negative value");
            double p = is_integer(f.exp) ? std::pow(b, static_cast<double>(rat_num(f.exp)))
                                         : std::pow(b, ex);
            v *= p;
        }
        acc += check_finite(v);
    }
    return check_finite(acc);
}

// --- equality with numeric guard -------------------------------------------------

namespace {

std::function<void(const std::string&)>& diagnostic_sink() {
    static std::function<void(const std::string&)> sink = [](const std::string& msg) {
        std::cerr << "[conservkit] " << msg << "\n";
    };
    return sink;
}

// Polynomial sample for an opaque symbol, exact under differentiation.
struct PolySample {
    int arity = 0;
    // exponent tuple -> coefficient
    std::map<std::vector<int>, double> coeffs;

    double eval(const std::vector<double>& args) const {
        double acc = 0;
        for (const auto& [es, c] : coeffs) {
            double v = c;
            for (size_t i = 0; i < es.size(); ++i)
                for (int k = 0; k < es[i]; ++k) v *= args[i];
            acc += v;
        }
        return acc;
    }

    PolySample derive(int arg) const {
        PolySample d;
        d.arity = arity;
        for (const auto& [es, c] : coeffs) {
            if (es[static_cast<size_t>(arg)] == 0) continue;
            std::vector<int> e2 = es;
            e2[static_cast<size_t>(arg)] -= 1;
            d.coeffs[e2] += c * es[static_cast<size_t>(arg)];
        }
        return d;
    }
};

void assign_symbol_samples(EvalContext& ctx, const std::vector<std::string>& names,
                           std::mt19937_64& rng) {
    const SymbolTable& table = global_symbols();
    // Close over derivative rules in both directions so chained symbols get
    // mutually consistent samples.
    std::set<std::string> need(names.begin(), names.end());
    bool grew = true;
    while (grew) {
        grew = false;
        for (const auto& n : table.names()) {
            const FunctionSymbol& s = table.get(n);
            bool relevant = need.count(n) != 0;
            for (const auto& r : s.d_rules)
                if (!r.empty() && need.count(r)) relevant = true;
            if (relevant) {
                if (need.insert(n).second) grew = true;
                for (const auto& r : s.d_rules)
                    if (!r.empty() && need.insert(r).second) grew = true;
            }
        }
    }

    std::uniform_real_distribution<double> coef(-1.5, 1.5);
    std::uniform_int_distribution<int> signdist(0, 1);
    std::map<std::string, PolySample> samples;

    std::set<std::string> targets;
    for (const auto& n : need) {
        if (!table.has(n)) continue;
        for (const auto& r : table.get(n).d_rules)
            if (!r.empty()) targets.insert(r);
    }

    std::function<void(const std::string&)> emit = [&](const std::string& n) {
        if (samples.count(n) || !table.has(n)) return;
        const FunctionSymbol& s = table.get(n);
        if (s.unit) return;
        if (n == "log") return;
        PolySample ps;
        ps.arity = s.arity;
        if (s.arity == 0) {
            ps.coeffs[{}] = coef(rng);
        } else {
            // dense polynomial of per-argument degree <= 3
            std::vector<int> es(static_cast<size_t>(s.arity), 0);
            std::function<void(size_t)> fill = [&](size_t i) {
                if (i == es.size()) {
                    ps.coeffs[es] = coef(rng) / (1.0 + 2.0 * es[0]);
                    return;
                }
                for (int d = 0; d <= 3; ++d) {
                    es[i] = d;
                    fill(i + 1);
                }
                es[i] = 0;
            };
            fill(0);
        }
        samples[n] = ps;
        // propagate along derivative rules
        std::function<void(const std::string&)> prop = [&](const std::string& m) {
            const FunctionSymbol& ms = table.get(m);
            for (int k = 0; k < ms.arity; ++k) {
                if (!ms.has_rule(k)) continue;
                const std::string& tgt = ms.d_rules[static_cast<size_t>(k)];
                PolySample d = samples.at(m).derive(k);
                samples[tgt] = d;
                prop(tgt);
            }
        };
        prop(n);
    };

    // sources first (symbols that are nobody's derivative), then leftovers
    for (const auto& n : need)
        if (!targets.count(n)) emit(n);
    for (const auto& n : need) emit(n);

    for (const auto& n : need) {
        if (!table.has(n)) continue;
        const FunctionSymbol& s = table.get(n);
        if (s.unit) {
            double sign = signdist(rng) ? 1.0 : -1.0;
            ctx.funcs[n] = [sign](const std::vector<double>&) { return sign; };
        } else if (samples.count(n)) {
            PolySample ps = samples.at(n);
            ctx.funcs[n] = [ps](const std::vector<double>& args) { return ps.eval(args); };
        }
    }
}

}  // namespace

void set_diagnostic_sink(std::function<void(const std::string&)> sink) {
    diagnostic_sink() = std::move(sink);
}

EqualsResult equals_ex(const Expr& a, const Expr& b) {
    Expr d = a - b;
    ZeroVerdict v = symbolic_zero(d);

    // numeric guard at random positive points
    const int K = 8;
    std::mt19937_64 rng(0x5eedULL ^ (d.term_count() * 1315423911ULL));
    std::uniform_real_distribution<double> val(0.3, 2.3);
    int mj = std::max(max_jet(a), max_jet(b));
    std::vector<std::string> syms;
    collect_symbols(a, syms);
    collect_symbols(b, syms);
    std::vector<int> unks;
    collect_unknowns(a, unks);
    collect_unknowns(b, unks);

    int agree = 0, disagree = 0, done = 0;
    for (int attempt = 0; attempt < 60 && done < K; ++attempt) {
        EvalContext ctx;
        ctx.t = val(rng);
        ctx.x = val(rng);
        ctx.jets.resize(static_cast<size_t>(mj + 1), 1.0);
        for (auto& j : ctx.jets) j = val(rng);
        for (int id : unks) ctx.unknowns[id] = val(rng);
        assign_symbol_samples(ctx, syms, rng);
        try {
            double ea = eval(a, ctx);
            double eb = eval(b, ctx);
            double scale = std::max({1.0, std::fabs(ea), std::fabs(eb)});
            if (std::fabs(ea - eb) <= 1e-9 * scale)
                ++agree;
            else
                ++disagree;
            ++done;
        } catch (const DomainError&) {
            continue;  // singular sample; retry
        }
    }

    EqualsResult r;
    if (v == ZeroVerdict::Zero) {
        r.equal = true;
        r.decided = true;
        if (done > 0 && disagree > 0) {
            r.note = "numeric guard disagrees with symbolic zero";
            diagnostic_sink()("equals: " + r.note + " for " + to_string(d));
        }
        return r;
    }
    if (v == ZeroVerdict::NonZero) {
        r.equal = false;
        r.decided = true;
        if (done > 0 && disagree == 0) {
            r.note = "numeric guard suggests equality despite symbolic nonzero";
            diagnostic_sink()("equals: " + r.note + " for " + to_string(d));
        }
        return r;
    }
    r.decided = false;
    r.equal = done > 0 && disagree == 0;
    r.note = "probabilistic verdict (outside decidable fragment)";
    return r;
}

bool equals(const Expr& a, const Expr& b) { return equals_ex(a, b).equal; }

}  // namespace ck
