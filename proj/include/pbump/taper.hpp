// Flat tapers and bumps.
//
// A FlatTaper is a diffeomorphism f : [0,1) -> [0,infinity) equal to t below
// delta and to a prescribed exponential above 1-delta:
//   single regime:  f(t) = e^{1/(1-t)}        near t = 1
//   double regime:  f(t) = e^{e^{1/(1-t)}}    near t = 1
// Between the two regimes f is a SmoothStep blend; monotonicity is verified
// on a grid at construction.  The quotients 1/f^i, 1/(f' f^i) and (for the
// double regime) f/f' vanish to infinite order at t = 1; they are exposed as
// piecewise expressions that are exactly zero for t >= 1.

#ifndef PBUMP_TAPER_HPP
#define PBUMP_TAPER_HPP

#include "pbump/expr.hpp"
#include "pbump/patch.hpp"

namespace pbump {

enum class TaperRegime { SingleExp, DoubleExp };

struct FlatTaper {
    TaperRegime regime = TaperRegime::SingleExp;
    double delta = 0.1;
    PatchPtr tpatch;   // one variable "t"
    ScalarExpr f;      // over tpatch; valid for t < 1
    ScalarExpr fp;     // f'

    // Gadgets over tpatch, exactly zero for t >= 1.  i >= 1 for inv_f_pow.
    ScalarExpr inv_f_pow(int i) const;
    ScalarExpr inv_fp_f_pow(int i) const;  // 1/(f' f^i), i >= 0
    ScalarExpr f_over_fp() const;
    // Raw expressions valid only for t < 1 (callers provide the extension).
    ScalarExpr exp_lambda_f(const Rational& lambda) const;  // e^{lambda f}, lambda <= 0
    ScalarExpr inv_fp_raw() const;                          // 1/f'

    // Compose a gadget built over tpatch with an arbitrary argument expression.
    static ScalarExpr on(const ScalarExpr& gadget, const ScalarExpr& u);
};

// delta in (0, 0.2]; throws on monotonicity failure or when a flat quotient
// misses the configured vanishing-order cap at t = 1.
FlatTaper make_taper(TaperRegime regime, double delta, int flat_cap = 6);

struct CasimirBump {
    double a = 1.0, b = 2.0;
    PatchPtr tpatch;
    ScalarExpr g;  // 1 for t <= a, strictly decreasing on (a,b), 0 for t >= b

    static ScalarExpr on(const ScalarExpr& gadget, const ScalarExpr& u);
};

CasimirBump make_bump(double a, double b, int flat_cap = 6);

// chi = 1 on the support box, 0 outside the enclosing box, built as a product
// of per-axis one-sided steps.  Boxes must nest strictly.
struct BoxBump {
    std::vector<std::array<double, 2>> support;
    std::vector<std::array<double, 2>> enclosing;
    ScalarExpr chi;  // over the patch passed to make_separating_bumps
};

BoxBump make_separating_bumps(const PatchPtr& patch,
                              std::vector<std::array<double, 2>> support_box,
                              std::vector<std::array<double, 2>> enclosing_box);

}  // namespace pbump

#endif  // PBUMP_TAPER_HPP
