// Scalar symbolic expressions with exact differentiation and flat gadgets.
//
// The node grammar is fixed: rational constants, variables, sum, product,
// quotient, integer power, exp, ln, sqrt, FlatExp1, FlatExp2, PiecewiseFlat
// and SmoothStep.  FlatExp1(u) denotes e^{1/(1-u)} and FlatExp2(u) denotes
// e^{e^{1/(1-u)}}, both only meaningful for u < 1.  PiecewiseFlat carries a
// switch expression and a breakpoint; the right branch wins at the
// breakpoint.  Extensions by zero across a breakpoint are represented by a
// literal zero branch, so "vanishes beyond t" is a structural fact, not a
// numerical one.

#ifndef PBUMP_EXPR_HPP
#define PBUMP_EXPR_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pbump {

// ---------------------------------------------------------------------------
// Exact rationals.  int64 numerator/denominator, always normalized with
// positive denominator.  Overflow in intermediates is detected via __int128
// and reported, never silently wrapped.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    Rational() = default;
    Rational(std::int64_t n) : num(n), den(1) {}
    Rational(std::int64_t n, std::int64_t d);

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    bool is_zero() const { return num == 0; }
    bool is_one() const { return num == 1 && den == 1; }
    bool is_integer() const { return den == 1; }

    friend Rational operator+(const Rational& a, const Rational& b);
    friend Rational operator-(const Rational& a, const Rational& b);
    friend Rational operator*(const Rational& a, const Rational& b);
    friend Rational operator/(const Rational& a, const Rational& b);
    friend Rational operator-(const Rational& a);
    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num == b.num && a.den == b.den;
    }
    friend bool operator<(const Rational& a, const Rational& b);
    Rational pow(int k) const;
    std::string str() const;
};

// Exact rational from a double (every finite double is p/2^k).
Rational rational_from_double(double x);

// Nearest rational with bounded denominator (continued fractions).  Used for
// numeric parameters (taper delta, bump endpoints) so downstream exact
// arithmetic keeps small denominators.
Rational rational_approx(double x, std::int64_t max_den = 1000000);

enum class Kind : std::uint8_t {
    Const,
    Var,
    Sum,
    Prod,
    Quot,
    IntPow,
    Exp,
    Ln,
    Sqrt,
    FlatExp1,
    FlatExp2,
    PiecewiseFlat,
    SmoothStep,
};

const char* kind_name(Kind k);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    Kind kind;
    Rational q;                  // Const
    int var = -1;                // Var: slot in the owning patch
    std::string var_name;        // Var
    int power = 0;               // IntPow exponent (may be negative)
    double breakpoint = 0.0;     // PiecewiseFlat
    std::vector<ExprPtr> ch;     // children; PiecewiseFlat: {switch, left, right}
    std::uint32_t id = 0;        // globally unique, used by evaluation caches

    explicit Expr(Kind k);
};

// Value handle.  Expressions are immutable after construction and share
// subtrees freely; all operations below are pure.
class ScalarExpr {
public:
    ScalarExpr() = default;
    explicit ScalarExpr(ExprPtr n) : node_(std::move(n)) {}

    const Expr& operator*() const { return *node_; }
    const Expr* operator->() const { return node_.get(); }
    const ExprPtr& ptr() const { return node_; }
    bool empty() const { return node_ == nullptr; }

    bool is_const() const { return node_ && node_->kind == Kind::Const; }
    bool is_zero() const { return is_const() && node_->q.is_zero(); }
    bool is_one() const { return is_const() && node_->q.is_one(); }

private:
    ExprPtr node_;
};

// --- builders (conservative folding: exact constants, 0/1 identities) ------
ScalarExpr cst(Rational r);
ScalarExpr cst(std::int64_t n);
ScalarExpr cst(std::int64_t n, std::int64_t d);
ScalarExpr var(int slot, std::string name);
ScalarExpr add(std::vector<ScalarExpr> terms);
ScalarExpr add(ScalarExpr a, ScalarExpr b);
ScalarExpr sub(ScalarExpr a, ScalarExpr b);
ScalarExpr neg(ScalarExpr a);
ScalarExpr mul(std::vector<ScalarExpr> factors);
ScalarExpr mul(ScalarExpr a, ScalarExpr b);
ScalarExpr quot(ScalarExpr a, ScalarExpr b);
ScalarExpr ipow(ScalarExpr a, int k);
ScalarExpr expn(ScalarExpr a);
ScalarExpr ln(ScalarExpr a);
ScalarExpr sqrt_(ScalarExpr a);
ScalarExpr flat_exp1(ScalarExpr u);
ScalarExpr flat_exp2(ScalarExpr u);
// left branch for sw < b, right branch for sw >= b
ScalarExpr piecewise_flat(ScalarExpr sw, double b, ScalarExpr left, ScalarExpr right);
ScalarExpr smooth_step(ScalarExpr u);

inline ScalarExpr operator+(ScalarExpr a, ScalarExpr b) { return add(std::move(a), std::move(b)); }
inline ScalarExpr operator-(ScalarExpr a, ScalarExpr b) { return sub(std::move(a), std::move(b)); }
inline ScalarExpr operator-(ScalarExpr a) { return neg(std::move(a)); }
inline ScalarExpr operator*(ScalarExpr a, ScalarExpr b) { return mul(std::move(a), std::move(b)); }
inline ScalarExpr operator/(ScalarExpr a, ScalarExpr b) { return quot(std::move(a), std::move(b)); }

// Rebuilds the tree through the folding builders.  Idempotent; never touches
// branch structure of PiecewiseFlat nodes.
ScalarExpr simplify(const ScalarExpr& e);

// Exact partial derivative with respect to variable slot.  Derivatives of
// PiecewiseFlat differentiate both branches (the construction guarantees the
// one-sided derivatives agree at the breakpoint).
ScalarExpr diff(const ScalarExpr& e, int var_slot);

// Replace Var(slot) by repl[slot].  Slots without a replacement are an error.
ScalarExpr substitute(const ScalarExpr& e, const std::vector<ScalarExpr>& repl);

// Structural equality (same kinds, payloads, children).
bool expr_equal(const ScalarExpr& a, const ScalarExpr& b);

std::string to_string(const ScalarExpr& e);

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalError : std::runtime_error {
    std::string node_path;
    EvalError(const std::string& msg, std::string path)
        : std::runtime_error(msg + " at " + path), node_path(std::move(path)) {}
};

// sign in {-1,0,+1}; log is log|value| (-inf when sign==0).
struct LogValue {
    int sign = 0;
    double log = 0.0;
    double value() const;
};

// Per-point evaluation with a node cache, so shared subtrees (tapers, radial
// factors) are computed once per point.  Not thread-safe; use one Evaluator
// per thread.
class Evaluator {
public:
    double eval(const ScalarExpr& e, std::span<const double> point);
    LogValue eval_log(const ScalarExpr& e, std::span<const double> point);

private:
    double ev(const Expr& n);
    LogValue evlog(const Expr& n);
    void ensure(std::uint32_t id);

    std::span<const double> pt_;
    std::uint64_t epoch_ = 0;
    std::vector<std::uint64_t> stamp_;
    std::vector<double> val_;
    std::vector<std::uint64_t> log_stamp_;
    std::vector<LogValue> log_val_;
};

// One-shot helpers.
double eval(const ScalarExpr& e, std::span<const double> point);
LogValue eval_log(const ScalarExpr& e, std::span<const double> point);

// ---------------------------------------------------------------------------
// Sparse polynomial canonical form, used wherever "symbolically zero" has to
// be exact: Schouten residuals of polynomial bivectors, germ equality,
// rational-function identities.
struct SparsePoly {
    // exponent vector (one entry per variable slot) -> coefficient
    std::map<std::vector<int>, Rational> terms;
    int nvars = 0;

    static SparsePoly zero(int nvars);
    static SparsePoly constant(int nvars, Rational c);
    static SparsePoly variable(int nvars, int slot);

    bool is_zero() const { return terms.empty(); }
    int total_degree() const;
    SparsePoly homogeneous_part(int degree) const;

    friend SparsePoly operator+(const SparsePoly& a, const SparsePoly& b);
    friend SparsePoly operator-(const SparsePoly& a, const SparsePoly& b);
    friend SparsePoly operator*(const SparsePoly& a, const SparsePoly& b);
    SparsePoly pow(int k) const;
    SparsePoly scaled(const Rational& c) const;
    // substitute x_i -> x_i + c_i (exact shift)
    SparsePoly shifted(const std::vector<Rational>& c) const;
    // drop all terms of total degree > d
    SparsePoly truncated(int d) const;
    double eval(std::span<const double> point) const;
    ScalarExpr to_expr(const std::vector<std::string>& names) const;
    bool operator==(const SparsePoly& o) const { return nvars == o.nvars && terms == o.terms; }
};

// Polynomial canonicalization; nullopt when the tree is not a polynomial
// with rational coefficients.  ipow(sqrt(a), 2k) is folded to a^k.
std::optional<SparsePoly> as_polynomial(const ScalarExpr& e, int nvars);

// Rational-function canonical pair p/q, for identities involving quotients.
std::optional<std::pair<SparsePoly, SparsePoly>> as_rational_function(const ScalarExpr& e, int nvars);

// True when a-b is provably the zero function: structural equality, or
// polynomial/rational-function canonical difference is exactly zero.
bool provably_equal(const ScalarExpr& a, const ScalarExpr& b, int nvars);

// ---------------------------------------------------------------------------
// Flat-order estimation: the number of leading derivatives (starting at the
// value itself) that vanish at the breakpoint, judged from divided central
// differences over a shrinking step sequence.  Capped at kmax.
struct FlatOrderOptions {
    int kmax = 6;
    double tau_flat = 1e-7;
    std::vector<double> h_seq = {1e-1, 3.1622776601683795e-2, 1e-2};
    // an order counts as vanishing when the smallest-h estimate is below
    // tau_flat or has collapsed below collapse_ratio times the sequence max
    double collapse_ratio = 0.1;
};

struct FlatOrderResult {
    int order = 0;
    bool warning = false;    // some order was neither clearly zero nor clearly not
    std::string detail;
};

// f: one-variable callable; order of vanishing at b.
FlatOrderResult est_flat_order(const std::function<double(double)>& f, double b,
                               const FlatOrderOptions& opt = {});

// Symbolic version: e over a patch, varied along variable slot `var` with the
// remaining coordinates frozen at `base`.
FlatOrderResult est_flat_order(const ScalarExpr& e, std::span<const double> base, int var,
                               double b, const FlatOrderOptions& opt = {});

}  // namespace pbump

#endif  // PBUMP_EXPR_HPP
