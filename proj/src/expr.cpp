#include "pbump/expr.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace pbump {

namespace {

std::int64_t checked(__int128 v, const char* what) {
    if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min())
        throw std::overflow_error(std::string("Rational: overflow in ") + what);
    return static_cast<std::int64_t>(v);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

Rational::Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
    if (den == 0) throw std::invalid_argument("Rational: zero denominator");
    if (den < 0) { num = -num; den = -den; }
    std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) { num /= g; den /= g; }
}

Rational operator+(const Rational& a, const Rational& b) {
    __int128 n = (__int128)a.num * b.den + (__int128)b.num * a.den;
    __int128 d = (__int128)a.den * b.den;
    return Rational(checked(n, "+"), checked(d, "+"));
}

Rational operator-(const Rational& a, const Rational& b) { return a + Rational(-b.num, b.den); }

Rational operator*(const Rational& a, const Rational& b) {
    Rational x(a.num, b.den), y(b.num, a.den);  // cross-reduce first
    __int128 n = (__int128)x.num * y.num;
    __int128 d = (__int128)x.den * y.den;
    return Rational(checked(n, "*"), checked(d, "*"));
}

Rational operator/(const Rational& a, const Rational& b) {
    if (b.num == 0) throw std::invalid_argument("Rational: division by zero");
    return a * Rational(b.den, b.num);
}

Rational operator-(const Rational& a) { return Rational(-a.num, a.den); }

bool operator<(const Rational& a, const Rational& b) {
    return (__int128)a.num * b.den < (__int128)b.num * a.den;
}

Rational Rational::pow(int k) const {
    if (k == 0) return Rational(1);
    Rational base = k > 0 ? *this : Rational(den, num);
    int n = k > 0 ? k : -k;
    Rational out(1);
    for (int i = 0; i < n; ++i) out = out * base;
    return out;
}

std::string Rational::str() const {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
}

Rational rational_from_double(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("rational_from_double: non-finite");
    if (x == std::floor(x) && std::abs(x) < 9e15) return Rational((std::int64_t)x);
    int exp = 0;
    double m = std::frexp(x, &exp);  // x = m * 2^exp, |m| in [0.5,1)
    // scale mantissa to integer (53 bits)
    std::int64_t num = (std::int64_t)std::ldexp(m, 53);
    exp -= 53;
    while (num != 0 && (num & 1) == 0 && exp < 0) { num >>= 1; ++exp; }
    if (exp >= 0) {
        if (exp > 10) throw std::invalid_argument("rational_from_double: exponent too large for int64");
        return Rational(num << exp, 1);
    }
    if (exp < -62) throw std::invalid_argument("rational_from_double: exponent too small for int64");
    return Rational(num, (std::int64_t)1 << (-exp));
}

Rational rational_approx(double x, std::int64_t max_den) {
    if (!std::isfinite(x)) throw std::invalid_argument("rational_approx: non-finite");
    if (x == std::floor(x) && std::abs(x) < 9e15) return Rational((std::int64_t)x);
    bool negate = x < 0;
    double v = std::abs(x);
    std::int64_t p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    double frac = v;
    for (int it = 0; it < 64; ++it) {
        std::int64_t a = (std::int64_t)std::floor(frac);
        std::int64_t p2 = a * p1 + p0, q2 = a * q1 + q0;
        if (q2 > max_den) break;
        p0 = p1; q0 = q1; p1 = p2; q1 = q2;
        if (std::abs(v - (double)p1 / (double)q1) < 1e-15 * std::max(1.0, v)) break;
        double rem = frac - (double)a;
        if (rem < 1e-18) break;
        frac = 1.0 / rem;
    }
    if (q1 == 0) throw std::invalid_argument("rational_approx: failed");
    return Rational(negate ? -p1 : p1, q1);
}

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::Const: return "const";
        case Kind::Var: return "var";
        case Kind::Sum: return "sum";
        case Kind::Prod: return "prod";
        case Kind::Quot: return "quot";
        case Kind::IntPow: return "ipow";
        case Kind::Exp: return "exp";
        case Kind::Ln: return "ln";
        case Kind::Sqrt: return "sqrt";
        case Kind::FlatExp1: return "flatexp1";
        case Kind::FlatExp2: return "flatexp2";
        case Kind::PiecewiseFlat: return "pw";
        case Kind::SmoothStep: return "smoothstep";
    }
    return "?";
}

static std::atomic<std::uint32_t> g_next_id{1};

Expr::Expr(Kind k) : kind(k), id(g_next_id.fetch_add(1, std::memory_order_relaxed)) {}

// --- builders ---------------------------------------------------------------

ScalarExpr cst(Rational r) {
    auto n = std::make_shared<Expr>(Kind::Const);
    n->q = r;
    return ScalarExpr(n);
}
ScalarExpr cst(std::int64_t n) { return cst(Rational(n)); }
ScalarExpr cst(std::int64_t n, std::int64_t d) { return cst(Rational(n, d)); }

ScalarExpr var(int slot, std::string name) {
    if (slot < 0) throw std::invalid_argument("var: negative slot");
    auto n = std::make_shared<Expr>(Kind::Var);
    n->var = slot;
    n->var_name = std::move(name);
    return ScalarExpr(n);
}

ScalarExpr add(std::vector<ScalarExpr> terms) {
    std::vector<ExprPtr> flat;
    Rational c(0);
    for (auto& t : terms) {
        if (t.empty()) throw std::invalid_argument("add: empty expression");
        if (t->kind == Kind::Const) { c = c + t->q; continue; }
        if (t->kind == Kind::Sum) {
            for (auto& ch : t->ch) {
                if (ch->kind == Kind::Const) c = c + ch->q;
                else flat.push_back(ch);
            }
            continue;
        }
        flat.push_back(t.ptr());
    }
    if (!c.is_zero() || flat.empty()) flat.push_back(cst(c).ptr());
    if (flat.size() == 1) return ScalarExpr(flat[0]);
    auto n = std::make_shared<Expr>(Kind::Sum);
    n->ch = std::move(flat);
    return ScalarExpr(n);
}

ScalarExpr add(ScalarExpr a, ScalarExpr b) { return add(std::vector<ScalarExpr>{std::move(a), std::move(b)}); }
ScalarExpr neg(ScalarExpr a) { return mul(cst(-1), std::move(a)); }
ScalarExpr sub(ScalarExpr a, ScalarExpr b) { return add(std::move(a), neg(std::move(b))); }

ScalarExpr mul(std::vector<ScalarExpr> factors) {
    std::vector<ExprPtr> flat;
    Rational c(1);
    for (auto& f : factors) {
        if (f.empty()) throw std::invalid_argument("mul: empty expression");
        if (f->kind == Kind::Const) { c = c * f->q; continue; }
        if (f->kind == Kind::Prod) {
            for (auto& ch : f->ch) {
                if (ch->kind == Kind::Const) c = c * ch->q;
                else flat.push_back(ch);
            }
            continue;
        }
        flat.push_back(f.ptr());
    }
    if (c.is_zero()) return cst(0);
    if (flat.empty()) return cst(c);
    if (!c.is_one()) flat.insert(flat.begin(), cst(c).ptr());
    if (flat.size() == 1) return ScalarExpr(flat[0]);
    auto n = std::make_shared<Expr>(Kind::Prod);
    n->ch = std::move(flat);
    return ScalarExpr(n);
}

ScalarExpr mul(ScalarExpr a, ScalarExpr b) { return mul(std::vector<ScalarExpr>{std::move(a), std::move(b)}); }

ScalarExpr quot(ScalarExpr a, ScalarExpr b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("quot: empty expression");
    if (b.is_const()) {
        if (b->q.is_zero()) throw std::invalid_argument("quot: division by constant zero");
        return mul(cst(Rational(1) / b->q), std::move(a));
    }
    if (a.is_zero()) return cst(0);
    if (a.is_const() && b.is_const()) return cst(a->q / b->q);
    auto n = std::make_shared<Expr>(Kind::Quot);
    n->ch = {a.ptr(), b.ptr()};
    return ScalarExpr(n);
}

ScalarExpr ipow(ScalarExpr a, int k) {
    if (a.empty()) throw std::invalid_argument("ipow: empty expression");
    if (k == 0) return cst(1);
    if (k == 1) return a;
    if (a.is_const()) {
        if (a->q.is_zero() && k < 0) throw std::invalid_argument("ipow: 0 to negative power");
        return cst(a->q.pow(k));
    }
    auto n = std::make_shared<Expr>(Kind::IntPow);
    n->power = k;
    n->ch = {a.ptr()};
    return ScalarExpr(n);
}

ScalarExpr expn(ScalarExpr a) {
    if (a.is_zero()) return cst(1);
    auto n = std::make_shared<Expr>(Kind::Exp);
    n->ch = {a.ptr()};
    return ScalarExpr(n);
}

ScalarExpr ln(ScalarExpr a) {
    if (a.is_one()) return cst(0);
    auto n = std::make_shared<Expr>(Kind::Ln);
    n->ch = {a.ptr()};
    return ScalarExpr(n);
}

ScalarExpr sqrt_(ScalarExpr a) {
    if (a.is_zero()) return cst(0);
    if (a.is_one()) return cst(1);
    auto n = std::make_shared<Expr>(Kind::Sqrt);
    n->ch = {a.ptr()};
    return ScalarExpr(n);
}

ScalarExpr flat_exp1(ScalarExpr u) {
    auto n = std::make_shared<Expr>(Kind::FlatExp1);
    n->ch = {u.ptr()};
    return ScalarExpr(n);
}

ScalarExpr flat_exp2(ScalarExpr u) {
    auto n = std::make_shared<Expr>(Kind::FlatExp2);
    n->ch = {u.ptr()};
    return ScalarExpr(n);
}

ScalarExpr piecewise_flat(ScalarExpr sw, double b, ScalarExpr left, ScalarExpr right) {
    if (sw.empty() || left.empty() || right.empty())
        throw std::invalid_argument("piecewise_flat: empty expression");
    auto n = std::make_shared<Expr>(Kind::PiecewiseFlat);
    n->breakpoint = b;
    n->ch = {sw.ptr(), left.ptr(), right.ptr()};
    return ScalarExpr(n);
}

ScalarExpr smooth_step(ScalarExpr u) {
    auto n = std::make_shared<Expr>(Kind::SmoothStep);
    n->ch = {u.ptr()};
    return ScalarExpr(n);
}

// --- simplify ----------------------------------------------------------------

ScalarExpr simplify(const ScalarExpr& e) {
    if (e.empty()) throw std::invalid_argument("simplify: empty expression");
    const Expr& n = *e;
    auto rec = [](const ExprPtr& p) { return simplify(ScalarExpr(p)); };
    switch (n.kind) {
        case Kind::Const:
        case Kind::Var: return e;
        case Kind::Sum: {
            std::vector<ScalarExpr> ts;
            for (auto& c : n.ch) ts.push_back(rec(c));
            return add(std::move(ts));
        }
        case Kind::Prod: {
            std::vector<ScalarExpr> fs;
            for (auto& c : n.ch) fs.push_back(rec(c));
            return mul(std::move(fs));
        }
        case Kind::Quot: return quot(rec(n.ch[0]), rec(n.ch[1]));
        case Kind::IntPow: return ipow(rec(n.ch[0]), n.power);
        case Kind::Exp: return expn(rec(n.ch[0]));
        case Kind::Ln: return ln(rec(n.ch[0]));
        case Kind::Sqrt: return sqrt_(rec(n.ch[0]));
        case Kind::FlatExp1: return flat_exp1(rec(n.ch[0]));
        case Kind::FlatExp2: return flat_exp2(rec(n.ch[0]));
        case Kind::PiecewiseFlat:
            return piecewise_flat(rec(n.ch[0]), n.breakpoint, rec(n.ch[1]), rec(n.ch[2]));
        case Kind::SmoothStep: return smooth_step(rec(n.ch[0]));
    }
    throw std::logic_error("simplify: unknown node kind");
}

// --- diff --------------------------------------------------------------------

namespace {

// d/du of SmoothStep(u), guarded so the branch formula is only reachable on
// 0 < u < 1 where e^{-1/u} and e^{-1/(1-u)} are evaluable.
ScalarExpr smooth_step_derivative(const ScalarExpr& u) {
    ScalarExpr one_minus_u = sub(cst(1), u);
    ScalarExpr A = expn(neg(quot(cst(1), u)));
    ScalarExpr B = expn(neg(quot(cst(1), one_minus_u)));
    ScalarExpr numer = mul({A, B, add(ipow(u, -2), ipow(one_minus_u, -2))});
    ScalarExpr denom = ipow(add(A, B), 2);
    ScalarExpr body = quot(numer, denom);
    ScalarExpr inner = piecewise_flat(neg(u), 0.0, body, cst(0));
    return piecewise_flat(u, 1.0, inner, cst(0));
}

struct DiffCtx {
    int var;
    std::map<const Expr*, ScalarExpr> memo;
};

ScalarExpr diff_rec(const ScalarExpr& e, DiffCtx& ctx) {
    auto it = ctx.memo.find(e.ptr().get());
    if (it != ctx.memo.end()) return it->second;
    const Expr& n = *e;
    ScalarExpr out;
    auto child = [&](int i) { return ScalarExpr(n.ch[i]); };
    auto d = [&](int i) { return diff_rec(child(i), ctx); };
    switch (n.kind) {
        case Kind::Const: out = cst(0); break;
        case Kind::Var: out = cst(n.var == ctx.var ? 1 : 0); break;
        case Kind::Sum: {
            std::vector<ScalarExpr> ts;
            for (size_t i = 0; i < n.ch.size(); ++i) ts.push_back(d((int)i));
            out = add(std::move(ts));
            break;
        }
        case Kind::Prod: {
            std::vector<ScalarExpr> ts;
            for (size_t i = 0; i < n.ch.size(); ++i) {
                std::vector<ScalarExpr> fs;
                fs.push_back(d((int)i));
                for (size_t j = 0; j < n.ch.size(); ++j)
                    if (j != i) fs.push_back(child((int)j));
                ts.push_back(mul(std::move(fs)));
            }
            out = add(std::move(ts));
            break;
        }
        case Kind::Quot: {
            ScalarExpr a = child(0), b = child(1);
            out = quot(sub(mul(d(0), b), mul(a, d(1))), ipow(b, 2));
            break;
        }
        case Kind::IntPow:
            out = mul({cst(n.power), ipow(child(0), n.power - 1), d(0)});
            break;
        case Kind::Exp: out = mul(ScalarExpr(e), d(0)); break;
        case Kind::Ln: out = quot(d(0), child(0)); break;
        case Kind::Sqrt: out = quot(d(0), mul(cst(2), ScalarExpr(e))); break;
        case Kind::FlatExp1:
            out = mul({ScalarExpr(e), quot(d(0), ipow(sub(cst(1), child(0)), 2))});
            break;
        case Kind::FlatExp2:
            out = mul({ScalarExpr(e), flat_exp1(child(0)), quot(d(0), ipow(sub(cst(1), child(0)), 2))});
            break;
        case Kind::PiecewiseFlat:
            out = piecewise_flat(child(0), n.breakpoint, d(1), d(2));
            break;
        case Kind::SmoothStep:
            out = mul(smooth_step_derivative(child(0)), d(0));
            break;
    }
    ctx.memo.emplace(e.ptr().get(), out);
    return out;
}

}  // namespace

ScalarExpr diff(const ScalarExpr& e, int var_slot) {
    if (e.empty()) throw std::invalid_argument("diff: empty expression");
    if (var_slot < 0) throw std::invalid_argument("diff: unknown variable");
    DiffCtx ctx{var_slot, {}};
    return diff_rec(e, ctx);
}

// --- substitute ---------------------------------------------------------------

namespace {
ScalarExpr subst_rec(const ScalarExpr& e, const std::vector<ScalarExpr>& repl,
                     std::map<const Expr*, ScalarExpr>& memo) {
    auto it = memo.find(e.ptr().get());
    if (it != memo.end()) return it->second;
    const Expr& n = *e;
    ScalarExpr out;
    auto rec = [&](const ExprPtr& p) { return subst_rec(ScalarExpr(p), repl, memo); };
    switch (n.kind) {
        case Kind::Const: out = e; break;
        case Kind::Var:
            if (n.var >= (int)repl.size() || repl[n.var].empty())
                throw std::invalid_argument("substitute: no replacement for variable " + n.var_name);
            out = repl[n.var];
            break;
        case Kind::Sum: {
            std::vector<ScalarExpr> ts;
            for (auto& c : n.ch) ts.push_back(rec(c));
            out = add(std::move(ts));
            break;
        }
        case Kind::Prod: {
            std::vector<ScalarExpr> fs;
            for (auto& c : n.ch) fs.push_back(rec(c));
            out = mul(std::move(fs));
            break;
        }
        case Kind::Quot: out = quot(rec(n.ch[0]), rec(n.ch[1])); break;
        case Kind::IntPow: out = ipow(rec(n.ch[0]), n.power); break;
        case Kind::Exp: out = expn(rec(n.ch[0])); break;
        case Kind::Ln: out = ln(rec(n.ch[0])); break;
        case Kind::Sqrt: out = sqrt_(rec(n.ch[0])); break;
        case Kind::FlatExp1: out = flat_exp1(rec(n.ch[0])); break;
        case Kind::FlatExp2: out = flat_exp2(rec(n.ch[0])); break;
        case Kind::PiecewiseFlat:
            out = piecewise_flat(rec(n.ch[0]), n.breakpoint, rec(n.ch[1]), rec(n.ch[2]));
            break;
        case Kind::SmoothStep: out = smooth_step(rec(n.ch[0])); break;
    }
    memo.emplace(e.ptr().get(), out);
    return out;
}
}  // namespace

ScalarExpr substitute(const ScalarExpr& e, const std::vector<ScalarExpr>& repl) {
    if (e.empty()) throw std::invalid_argument("substitute: empty expression");
    std::map<const Expr*, ScalarExpr> memo;
    return subst_rec(e, repl, memo);
}

// --- structural equality -------------------------------------------------------

bool expr_equal(const ScalarExpr& a, const ScalarExpr& b) {
    if (a.ptr() == b.ptr()) return true;
    if (a.empty() || b.empty()) return false;
    const Expr& x = *a;
    const Expr& y = *b;
    if (x.kind != y.kind || x.ch.size() != y.ch.size()) return false;
    switch (x.kind) {
        case Kind::Const:
            if (!(x.q == y.q)) return false;
            break;
        case Kind::Var:
            if (x.var != y.var) return false;
            break;
        case Kind::IntPow:
            if (x.power != y.power) return false;
            break;
        case Kind::PiecewiseFlat:
            if (x.breakpoint != y.breakpoint) return false;
            break;
        default: break;
    }
    for (size_t i = 0; i < x.ch.size(); ++i)
        if (!expr_equal(ScalarExpr(x.ch[i]), ScalarExpr(y.ch[i]))) return false;
    return true;
}

std::string to_string(const ScalarExpr& e) {
    if (e.empty()) return "<empty>";
    const Expr& n = *e;
    switch (n.kind) {
        case Kind::Const: return n.q.str();
        case Kind::Var: return n.var_name.empty() ? ("x" + std::to_string(n.var)) : n.var_name;
        default: break;
    }
    std::ostringstream os;
    os << "(" << kind_name(n.kind);
    if (n.kind == Kind::IntPow) os << " " << n.power;
    if (n.kind == Kind::PiecewiseFlat) os << " @" << n.breakpoint;
    for (auto& c : n.ch) os << " " << to_string(ScalarExpr(c));
    os << ")";
    return os.str();
}

// --- evaluation ----------------------------------------------------------------

double LogValue::value() const {
    if (sign == 0) return 0.0;
    return sign * std::exp(log);
}

void Evaluator::ensure(std::uint32_t id) {
    if (id >= stamp_.size()) {
        size_t ns = std::max<size_t>(id + 1, stamp_.size() * 2 + 16);
        stamp_.resize(ns, 0);
        val_.resize(ns, 0.0);
        log_stamp_.resize(ns, 0);
        log_val_.resize(ns);
    }
}

double Evaluator::eval(const ScalarExpr& e, std::span<const double> point) {
    if (e.empty()) throw std::invalid_argument("eval: empty expression");
    pt_ = point;
    ++epoch_;
    return ev(*e);
}

LogValue Evaluator::eval_log(const ScalarExpr& e, std::span<const double> point) {
    if (e.empty()) throw std::invalid_argument("eval_log: empty expression");
    pt_ = point;
    ++epoch_;
    return evlog(*e);
}

double Evaluator::ev(const Expr& n) {
    ensure(n.id);
    if (stamp_[n.id] == epoch_) return val_[n.id];
    double r = 0.0;
    switch (n.kind) {
        case Kind::Const: r = n.q.value(); break;
        case Kind::Var:
            if (n.var >= (int)pt_.size())
                throw EvalError("eval: point has no coordinate for variable", n.var_name);
            r = pt_[n.var];
            break;
        case Kind::Sum: {
            r = 0.0;
            for (auto& c : n.ch) r += ev(*c);
            if (std::isnan(r)) r = evlog(n).value();
            break;
        }
        case Kind::Prod: {
            r = 1.0;
            for (auto& c : n.ch) r *= ev(*c);
            if (std::isnan(r)) {
                LogValue lv = evlog(n);
                r = lv.value();
            }
            break;
        }
        case Kind::Quot: {
            double den = ev(*n.ch[1]);
            if (den == 0.0) {
                LogValue lv = evlog(n);  // throws on a genuine pole
                r = lv.value();
            } else {
                r = ev(*n.ch[0]) / den;
                if (std::isnan(r)) r = evlog(n).value();
            }
            break;
        }
        case Kind::IntPow: {
            double b = ev(*n.ch[0]);
            int k = n.power;
            if (b == 0.0 && k < 0) throw EvalError("eval: zero base with negative power", kind_name(n.kind));
            double acc = 1.0;
            double base = k > 0 ? b : 1.0 / b;
            for (int i = 0, m = k > 0 ? k : -k; i < m; ++i) acc *= base;
            r = acc;
            break;
        }
        case Kind::Exp: r = std::exp(ev(*n.ch[0])); break;
        case Kind::Ln: {
            double a = ev(*n.ch[0]);
            if (!(a > 0.0)) throw EvalError("eval: ln of non-positive value", to_string(ScalarExpr(n.ch[0])));
            r = std::log(a);
            break;
        }
        case Kind::Sqrt: {
            double a = ev(*n.ch[0]);
            if (a < 0.0) throw EvalError("eval: sqrt of negative value", to_string(ScalarExpr(n.ch[0])));
            r = std::sqrt(a);
            break;
        }
        case Kind::FlatExp1: {
            double u = ev(*n.ch[0]);
            if (u >= 1.0) throw EvalError("eval: FlatExp1 argument >= 1", kind_name(n.kind));
            r = std::exp(1.0 / (1.0 - u));
            break;
        }
        case Kind::FlatExp2: {
            double u = ev(*n.ch[0]);
            if (u >= 1.0) throw EvalError("eval: FlatExp2 argument >= 1", kind_name(n.kind));
            r = std::exp(std::exp(1.0 / (1.0 - u)));
            break;
        }
        case Kind::PiecewiseFlat: {
            double s = ev(*n.ch[0]);
            r = (s < n.breakpoint) ? ev(*n.ch[1]) : ev(*n.ch[2]);
            break;
        }
        case Kind::SmoothStep: {
            double u = ev(*n.ch[0]);
            if (u <= 0.0) r = 0.0;
            else if (u >= 1.0) r = 1.0;
            else {
                double a = std::exp(-1.0 / u);
                double b = std::exp(-1.0 / (1.0 - u));
                r = a / (a + b);
            }
            break;
        }
    }
    stamp_[n.id] = epoch_;
    val_[n.id] = r;
    return r;
}

LogValue Evaluator::evlog(const Expr& n) {
    ensure(n.id);
    if (log_stamp_[n.id] == epoch_) return log_val_[n.id];
    auto from_scalar = [](double v) -> LogValue {
        if (v == 0.0) return {0, -kInf};
        return {v > 0 ? 1 : -1, std::log(std::abs(v))};
    };
    LogValue r;
    switch (n.kind) {
        case Kind::Const: r = from_scalar(n.q.value()); break;
        case Kind::Var: r = from_scalar(ev(n)); break;
        case Kind::Sum: {
            std::vector<LogValue> ls;
            ls.reserve(n.ch.size());
            double m = -kInf;
            for (auto& c : n.ch) {
                LogValue l = evlog(*c);
                if (l.sign != 0) m = std::max(m, l.log);
                ls.push_back(l);
            }
            if (m == -kInf) { r = {0, -kInf}; break; }
            if (m == kInf) throw EvalError("eval: overflow in sum (log-domain)", kind_name(n.kind));
            double acc = 0.0;
            for (auto& l : ls)
                if (l.sign != 0) acc += l.sign * std::exp(l.log - m);
            if (acc == 0.0) r = {0, -kInf};
            else r = {acc > 0 ? 1 : -1, m + std::log(std::abs(acc))};
            break;
        }
        case Kind::Prod: {
            int sign = 1;
            double lg = 0.0;
            for (auto& c : n.ch) {
                LogValue l = evlog(*c);
                if (l.sign == 0) { sign = 0; break; }
                sign *= l.sign;
                lg += l.log;
            }
            r = sign == 0 ? LogValue{0, -kInf} : LogValue{sign, lg};
            if (std::isnan(r.log)) throw EvalError("eval: indeterminate product (log-domain)", kind_name(n.kind));
            break;
        }
        case Kind::Quot: {
            LogValue a = evlog(*n.ch[0]);
            LogValue b = evlog(*n.ch[1]);
            if (b.sign == 0) throw EvalError("eval: division by zero", to_string(ScalarExpr(n.ch[1])));
            if (a.sign == 0) { r = {0, -kInf}; break; }
            double lg = a.log - b.log;
            if (std::isnan(lg)) throw EvalError("eval: indeterminate flat quotient", kind_name(n.kind));
            r = {a.sign * b.sign, lg};
            break;
        }
        case Kind::IntPow: {
            LogValue a = evlog(*n.ch[0]);
            if (a.sign == 0) {
                if (n.power < 0) throw EvalError("eval: zero base with negative power", kind_name(n.kind));
                r = n.power == 0 ? LogValue{1, 0.0} : LogValue{0, -kInf};
            } else {
                int s = (n.power % 2 == 0) ? 1 : a.sign;
                r = {s, n.power * a.log};
            }
            break;
        }
        case Kind::Exp: r = {1, ev(*n.ch[0])}; break;
        case Kind::Ln: r = from_scalar(ev(n)); break;
        case Kind::Sqrt: {
            LogValue a = evlog(*n.ch[0]);
            if (a.sign < 0) throw EvalError("eval: sqrt of negative value", kind_name(n.kind));
            r = a.sign == 0 ? LogValue{0, -kInf} : LogValue{1, a.log / 2};
            break;
        }
        case Kind::FlatExp1: {
            double u = ev(*n.ch[0]);
            if (u >= 1.0) throw EvalError("eval: FlatExp1 argument >= 1", kind_name(n.kind));
            r = {1, 1.0 / (1.0 - u)};
            break;
        }
        case Kind::FlatExp2: {
            double u = ev(*n.ch[0]);
            if (u >= 1.0) throw EvalError("eval: FlatExp2 argument >= 1", kind_name(n.kind));
            r = {1, std::exp(1.0 / (1.0 - u))};
            break;
        }
        case Kind::PiecewiseFlat: {
            double s = ev(*n.ch[0]);
            r = (s < n.breakpoint) ? evlog(*n.ch[1]) : evlog(*n.ch[2]);
            break;
        }
        case Kind::SmoothStep: r = from_scalar(ev(n)); break;
    }
    log_stamp_[n.id] = epoch_;
    log_val_[n.id] = r;
    return r;
}

double eval(const ScalarExpr& e, std::span<const double> point) {
    Evaluator ev;
    return ev.eval(e, point);
}

LogValue eval_log(const ScalarExpr& e, std::span<const double> point) {
    Evaluator ev;
    return ev.eval_log(e, point);
}

// --- sparse polynomials ----------------------------------------------------------

SparsePoly SparsePoly::zero(int nvars) {
    SparsePoly p;
    p.nvars = nvars;
    return p;
}

SparsePoly SparsePoly::constant(int nvars, Rational c) {
    SparsePoly p = zero(nvars);
    if (!c.is_zero()) p.terms[std::vector<int>(nvars, 0)] = c;
    return p;
}

SparsePoly SparsePoly::variable(int nvars, int slot) {
    if (slot < 0 || slot >= nvars) throw std::invalid_argument("SparsePoly: bad variable slot");
    SparsePoly p = zero(nvars);
    std::vector<int> e(nvars, 0);
    e[slot] = 1;
    p.terms[e] = Rational(1);
    return p;
}

int SparsePoly::total_degree() const {
    int d = -1;
    for (auto& [e, c] : terms) d = std::max(d, std::accumulate(e.begin(), e.end(), 0));
    return d;
}

SparsePoly SparsePoly::homogeneous_part(int degree) const {
    SparsePoly p = zero(nvars);
    for (auto& [e, c] : terms)
        if (std::accumulate(e.begin(), e.end(), 0) == degree) p.terms[e] = c;
    return p;
}

SparsePoly operator+(const SparsePoly& a, const SparsePoly& b) {
    if (a.nvars != b.nvars) throw std::invalid_argument("SparsePoly: arity mismatch");
    SparsePoly p = a;
    for (auto& [e, c] : b.terms) {
        auto it = p.terms.find(e);
        if (it == p.terms.end()) p.terms[e] = c;
        else {
            it->second = it->second + c;
            if (it->second.is_zero()) p.terms.erase(it);
        }
    }
    return p;
}

SparsePoly operator-(const SparsePoly& a, const SparsePoly& b) { return a + b.scaled(Rational(-1)); }

SparsePoly operator*(const SparsePoly& a, const SparsePoly& b) {
    if (a.nvars != b.nvars) throw std::invalid_argument("SparsePoly: arity mismatch");
    SparsePoly p = SparsePoly::zero(a.nvars);
    for (auto& [ea, ca] : a.terms)
        for (auto& [eb, cb] : b.terms) {
            std::vector<int> e(a.nvars);
            for (int i = 0; i < a.nvars; ++i) e[i] = ea[i] + eb[i];
            Rational c = ca * cb;
            auto it = p.terms.find(e);
            if (it == p.terms.end()) p.terms[e] = c;
            else {
                it->second = it->second + c;
                if (it->second.is_zero()) p.terms.erase(it);
            }
        }
    return p;
}

SparsePoly SparsePoly::pow(int k) const {
    if (k < 0) throw std::invalid_argument("SparsePoly: negative power");
    SparsePoly out = constant(nvars, Rational(1));
    for (int i = 0; i < k; ++i) out = out * *this;
    return out;
}

SparsePoly SparsePoly::scaled(const Rational& c) const {
    SparsePoly p = zero(nvars);
    if (c.is_zero()) return p;
    for (auto& [e, q] : terms) p.terms[e] = q * c;
    return p;
}

SparsePoly SparsePoly::shifted(const std::vector<Rational>& c) const {
    if ((int)c.size() != nvars) throw std::invalid_argument("SparsePoly: shift arity mismatch");
    // binomial expansion, one variable at a time
    SparsePoly cur = *this;
    for (int v = 0; v < nvars; ++v) {
        if (c[v].is_zero()) continue;
        SparsePoly next = zero(nvars);
        for (auto& [e, q] : cur.terms) {
            int deg = e[v];
            // (x+c)^deg = sum_m C(deg,m) c^{deg-m} x^m
            Rational binom(1);
            for (int m = deg; m >= 0; --m) {
                // C(deg, m)
                Rational bc(1);
                for (int i = 0; i < m; ++i) bc = bc * Rational(deg - i) / Rational(i + 1);
                std::vector<int> e2 = e;
                e2[v] = m;
                Rational coeff = q * bc * c[v].pow(deg - m);
                if (coeff.is_zero()) continue;
                auto it = next.terms.find(e2);
                if (it == next.terms.end()) next.terms[e2] = coeff;
                else {
                    it->second = it->second + coeff;
                    if (it->second.is_zero()) next.terms.erase(it);
                }
            }
            (void)binom;
        }
        cur = next;
    }
    return cur;
}

SparsePoly SparsePoly::truncated(int d) const {
    SparsePoly p = zero(nvars);
    for (auto& [e, c] : terms)
        if (std::accumulate(e.begin(), e.end(), 0) <= d) p.terms[e] = c;
    return p;
}

double SparsePoly::eval(std::span<const double> point) const {
    double out = 0.0;
    for (auto& [e, c] : terms) {
        double t = c.value();
        for (int i = 0; i < nvars; ++i)
            for (int k = 0; k < e[i]; ++k) t *= point[i];
        out += t;
    }
    return out;
}

ScalarExpr SparsePoly::to_expr(const std::vector<std::string>& names) const {
    std::vector<ScalarExpr> ts;
    for (auto& [e, c] : terms) {
        std::vector<ScalarExpr> fs;
        fs.push_back(cst(c));
        for (int i = 0; i < nvars; ++i)
            if (e[i] > 0) fs.push_back(ipow(var(i, i < (int)names.size() ? names[i] : "x" + std::to_string(i)), e[i]));
        ts.push_back(mul(std::move(fs)));
    }
    if (ts.empty()) return cst(0);
    return add(std::move(ts));
}

std::optional<SparsePoly> as_polynomial(const ScalarExpr& e, int nvars) {
    if (e.empty()) return std::nullopt;
    const Expr& n = *e;
    switch (n.kind) {
        case Kind::Const: return SparsePoly::constant(nvars, n.q);
        case Kind::Var:
            if (n.var >= nvars) return std::nullopt;
            return SparsePoly::variable(nvars, n.var);
        case Kind::Sum: {
            SparsePoly p = SparsePoly::zero(nvars);
            for (auto& c : n.ch) {
                auto q = as_polynomial(ScalarExpr(c), nvars);
                if (!q) return std::nullopt;
                p = p + *q;
            }
            return p;
        }
        case Kind::Prod: {
            SparsePoly p = SparsePoly::constant(nvars, Rational(1));
            for (auto& c : n.ch) {
                auto q = as_polynomial(ScalarExpr(c), nvars);
                if (!q) return std::nullopt;
                p = p * *q;
            }
            return p;
        }
        case Kind::Quot: {
            auto den = as_polynomial(ScalarExpr(n.ch[1]), nvars);
            if (!den || den->total_degree() > 0) return std::nullopt;
            if (den->is_zero()) return std::nullopt;
            auto num = as_polynomial(ScalarExpr(n.ch[0]), nvars);
            if (!num) return std::nullopt;
            Rational c = den->terms.begin()->second;
            return num->scaled(Rational(1) / c);
        }
        case Kind::IntPow: {
            if (n.ch[0]->kind == Kind::Sqrt && n.power % 2 == 0 && n.power >= 0) {
                auto base = as_polynomial(ScalarExpr(n.ch[0]->ch[0]), nvars);
                if (!base) return std::nullopt;
                return base->pow(n.power / 2);
            }
            if (n.power < 0) {
                auto base = as_polynomial(ScalarExpr(n.ch[0]), nvars);
                if (!base || base->total_degree() > 0 || base->is_zero()) return std::nullopt;
                Rational c = base->terms.begin()->second;
                return SparsePoly::constant(nvars, c.pow(n.power));
            }
            auto base = as_polynomial(ScalarExpr(n.ch[0]), nvars);
            if (!base) return std::nullopt;
            return base->pow(n.power);
        }
        default: return std::nullopt;
    }
}

std::optional<std::pair<SparsePoly, SparsePoly>> as_rational_function(const ScalarExpr& e, int nvars) {
    if (e.empty()) return std::nullopt;
    const Expr& n = *e;
    auto lift = [&](const SparsePoly& p) {
        return std::make_pair(p, SparsePoly::constant(nvars, Rational(1)));
    };
    switch (n.kind) {
        case Kind::Const:
        case Kind::Var: {
            auto p = as_polynomial(e, nvars);
            if (!p) return std::nullopt;
            return lift(*p);
        }
        case Kind::Sum: {
            auto acc = lift(SparsePoly::zero(nvars));
            for (auto& c : n.ch) {
                auto q = as_rational_function(ScalarExpr(c), nvars);
                if (!q) return std::nullopt;
                acc = std::make_pair(acc.first * q->second + q->first * acc.second,
                                     acc.second * q->second);
            }
            return acc;
        }
        case Kind::Prod: {
            auto acc = lift(SparsePoly::constant(nvars, Rational(1)));
            for (auto& c : n.ch) {
                auto q = as_rational_function(ScalarExpr(c), nvars);
                if (!q) return std::nullopt;
                acc = std::make_pair(acc.first * q->first, acc.second * q->second);
            }
            return acc;
        }
        case Kind::Quot: {
            auto a = as_rational_function(ScalarExpr(n.ch[0]), nvars);
            auto b = as_rational_function(ScalarExpr(n.ch[1]), nvars);
            if (!a || !b || b->first.is_zero()) return std::nullopt;
            return std::make_pair(a->first * b->second, a->second * b->first);
        }
        case Kind::IntPow: {
            if (n.ch[0]->kind == Kind::Sqrt && n.power % 2 == 0) {
                auto base = as_rational_function(ScalarExpr(n.ch[0]->ch[0]), nvars);
                if (!base) return std::nullopt;
                int k = n.power / 2;
                if (k >= 0) return std::make_pair(base->first.pow(k), base->second.pow(k));
                return std::make_pair(base->second.pow(-k), base->first.pow(-k));
            }
            auto base = as_rational_function(ScalarExpr(n.ch[0]), nvars);
            if (!base) return std::nullopt;
            if (n.power >= 0) return std::make_pair(base->first.pow(n.power), base->second.pow(n.power));
            if (base->first.is_zero()) return std::nullopt;
            return std::make_pair(base->second.pow(-n.power), base->first.pow(-n.power));
        }
        default: return std::nullopt;
    }
}

bool provably_equal(const ScalarExpr& a, const ScalarExpr& b, int nvars) {
    ScalarExpr sa = simplify(a), sb = simplify(b);
    if (expr_equal(sa, sb)) return true;
    auto ra = as_rational_function(sa, nvars);
    auto rb = as_rational_function(sb, nvars);
    if (ra && rb) {
        SparsePoly crossdiff = ra->first * rb->second - rb->first * ra->second;
        return crossdiff.is_zero() && !ra->second.is_zero() && !rb->second.is_zero();
    }
    return false;
}

// --- flat order ------------------------------------------------------------------

FlatOrderResult est_flat_order(const std::function<double(double)>& f, double b,
                               const FlatOrderOptions& opt) {
    FlatOrderResult res;
    if (opt.kmax < 0 || opt.kmax > 8) throw std::invalid_argument("est_flat_order: kmax out of range");
    auto safe = [&](double t) -> double { return f(t); };

    double v0;
    try {
        v0 = safe(b);
    } catch (const std::exception&) {
        double hmin = opt.h_seq.back();
        v0 = 0.5 * (safe(b + hmin / 2) + safe(b - hmin / 2));
    }
    if (std::abs(v0) > opt.tau_flat) {
        res.order = 0;
        res.detail = "value at breakpoint is " + std::to_string(v0);
        return res;
    }

    static const double binom[9][9] = {
        {1}, {1, 1}, {1, 2, 1}, {1, 3, 3, 1}, {1, 4, 6, 4, 1},
        {1, 5, 10, 10, 5, 1}, {1, 6, 15, 20, 15, 6, 1},
        {1, 7, 21, 35, 35, 21, 7, 1}, {1, 8, 28, 56, 70, 56, 28, 8, 1}};

    int order = 1;  // value itself vanishes
    for (int k = 1; k <= opt.kmax && order <= opt.kmax; ++k) {
        std::vector<double> est;
        for (double h : opt.h_seq) {
            double acc = 0.0;
            for (int j = 0; j <= k; ++j) {
                double off = (k / 2.0 - j) * h;
                double sign = (j % 2 == 0) ? 1.0 : -1.0;
                acc += sign * binom[k][j] * safe(b + off);
            }
            double hk = 1.0;
            for (int i = 0; i < k; ++i) hk *= h;
            est.push_back(acc / hk);
        }
        double last = std::abs(est.back());
        double mx = 0.0;
        for (double d : est) mx = std::max(mx, std::abs(d));
        bool vanish = last <= opt.tau_flat || last <= opt.collapse_ratio * mx;
        bool clearly_nonzero = !vanish && last >= 0.5 * mx && mx > opt.tau_flat;
        if (vanish) {
            ++order;
            continue;
        }
        if (!clearly_nonzero) {
            res.warning = true;
            res.detail = "order " + std::to_string(k) + ": non-convergent difference quotients";
        }
        break;
    }
    // order counts the vanishing value plus consecutive vanishing derivative
    // estimates, capped at kmax
    res.order = std::min(order, opt.kmax);
    return res;
}

FlatOrderResult est_flat_order(const ScalarExpr& e, std::span<const double> base, int var,
                               double b, const FlatOrderOptions& opt) {
    std::vector<double> p(base.begin(), base.end());
    if (var < 0 || var >= (int)p.size()) throw std::invalid_argument("est_flat_order: unknown variable");
    Evaluator ev;
    auto f = [&](double t) {
        p[var] = t;
        return ev.eval(e, p);
    };
    return est_flat_order(f, b, opt);
}

}  // namespace pbump
