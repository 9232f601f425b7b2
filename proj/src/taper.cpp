#include "pbump/taper.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pbump {

namespace {

ScalarExpr one_minus(const ScalarExpr& t) { return sub(cst(1), t); }

// closed forms of the flat quotients on the pure regime t >= 1-delta, written
// exp-of-negative so extreme arguments underflow to zero instead of forming
// inf/inf ratios
ScalarExpr pure_inv_f_pow(TaperRegime reg, const ScalarExpr& t, int i) {
    if (reg == TaperRegime::SingleExp)
        return expn(neg(quot(cst(i), one_minus(t))));
    return expn(mul(cst(-i), flat_exp1(t)));
}

ScalarExpr pure_inv_fp_f_pow(TaperRegime reg, const ScalarExpr& t, int i) {
    if (reg == TaperRegime::SingleExp)
        return mul(ipow(one_minus(t), 2), expn(neg(quot(cst(i + 1), one_minus(t)))));
    return mul({ipow(one_minus(t), 2), expn(neg(quot(cst(1), one_minus(t)))),
                expn(mul(cst(-(i + 1)), flat_exp1(t)))});
}

ScalarExpr pure_f_over_fp(TaperRegime reg, const ScalarExpr& t) {
    if (reg == TaperRegime::SingleExp) return ipow(one_minus(t), 2);
    return mul(ipow(one_minus(t), 2), expn(neg(quot(cst(1), one_minus(t)))));
}

}  // namespace

ScalarExpr FlatTaper::on(const ScalarExpr& gadget, const ScalarExpr& u) {
    return substitute(gadget, {u});
}

ScalarExpr CasimirBump::on(const ScalarExpr& gadget, const ScalarExpr& u) {
    return substitute(gadget, {u});
}

ScalarExpr FlatTaper::inv_f_pow(int i) const {
    if (i < 1) throw std::invalid_argument("FlatTaper::inv_f_pow: need i >= 1");
    ScalarExpr t = tpatch->v(0);
    ScalarExpr generic = quot(cst(1), ipow(f, i));
    ScalarExpr dual = piecewise_flat(t, 1.0 - delta, generic, pure_inv_f_pow(regime, t, i));
    return piecewise_flat(t, 1.0, dual, cst(0));
}

ScalarExpr FlatTaper::inv_fp_f_pow(int i) const {
    if (i < 0) throw std::invalid_argument("FlatTaper::inv_fp_f_pow: need i >= 0");
    ScalarExpr t = tpatch->v(0);
    ScalarExpr generic = i == 0 ? quot(cst(1), fp) : quot(cst(1), mul(fp, ipow(f, i)));
    ScalarExpr dual = piecewise_flat(t, 1.0 - delta, generic, pure_inv_fp_f_pow(regime, t, i));
    return piecewise_flat(t, 1.0, dual, cst(0));
}

ScalarExpr FlatTaper::f_over_fp() const {
    ScalarExpr t = tpatch->v(0);
    ScalarExpr dual = piecewise_flat(t, 1.0 - delta, quot(f, fp), pure_f_over_fp(regime, t));
    return piecewise_flat(t, 1.0, dual, cst(0));
}

ScalarExpr FlatTaper::exp_lambda_f(const Rational& lambda) const {
    if (Rational(0) < lambda)
        throw std::invalid_argument("FlatTaper::exp_lambda_f: positive weight");
    if (lambda.is_zero()) return cst(1);
    return expn(mul(cst(lambda), f));
}

ScalarExpr FlatTaper::inv_fp_raw() const {
    ScalarExpr t = tpatch->v(0);
    return piecewise_flat(t, 1.0 - delta, quot(cst(1), fp), pure_inv_fp_f_pow(regime, t, 0));
}

FlatTaper make_taper(TaperRegime regime, double delta, int flat_cap) {
    if (!(delta > 0.0 && delta <= 0.2))
        throw std::invalid_argument("make_taper: delta must lie in (0, 0.2], got " + std::to_string(delta));
    FlatTaper tp;
    tp.regime = regime;
    tp.delta = delta;
    tp.tpatch = patch_box({"t"}, {{0.0, 1.0}});
    ScalarExpr t = tp.tpatch->v(0);

    Rational d = rational_approx(delta);
    ScalarExpr s = smooth_step(quot(sub(t, cst(d)), cst(Rational(1) - d - d)));
    ScalarExpr grow = regime == TaperRegime::SingleExp ? flat_exp1(t) : flat_exp2(t);
    tp.f = add(mul(sub(cst(1), s), t), mul(s, grow));
    tp.fp = diff(tp.f, 0);

    // diffeomorphism check
    Evaluator ev;
    const int n = 10000;
    for (int i = 0; i <= n; ++i) {
        double tv = 0.999 * i / n;
        double fpv = ev.eval(tp.fp, std::span<const double>(&tv, 1));
        if (!(fpv > 0.0))
            throw std::runtime_error("make_taper: monotonicity failure, f' = " +
                                     std::to_string(fpv) + " at t = " + std::to_string(tv));
    }

    // flat-quotient vanishing order at t = 1
    FlatOrderOptions opt;
    opt.kmax = flat_cap;
    std::vector<std::pair<std::string, ScalarExpr>> quots = {
        {"1/f", tp.inv_f_pow(1)},
        {"1/f^2", tp.inv_f_pow(2)},
        {"1/f'", tp.inv_fp_f_pow(0)},
        {"1/(f'f)", tp.inv_fp_f_pow(1)},
    };
    if (regime == TaperRegime::DoubleExp) quots.push_back({"f/f'", tp.f_over_fp()});
    double base = 0.0;
    for (auto& [name, q] : quots) {
        auto r = est_flat_order(q, std::span<const double>(&base, 1), 0, 1.0, opt);
        if (r.order < flat_cap)
            throw std::runtime_error("make_taper: flat quotient " + name +
                                     " reached order " + std::to_string(r.order) +
                                     " < cap " + std::to_string(flat_cap));
    }
    return tp;
}

CasimirBump make_bump(double a, double b, int flat_cap) {
    if (!(a < b)) throw std::invalid_argument("make_bump: need a < b");
    CasimirBump cb;
    cb.a = a;
    cb.b = b;
    cb.tpatch = patch_box({"t"}, {{a - 1.0, b + 1.0}});
    ScalarExpr t = cb.tpatch->v(0);
    Rational ra = rational_approx(a), rb = rational_approx(b);
    cb.g = smooth_step(quot(sub(cst(rb), t), cst(rb - ra)));

    FlatOrderOptions opt;
    opt.kmax = flat_cap;
    double base = 0.0;
    auto at_b = est_flat_order(cb.g, std::span<const double>(&base, 1), 0, b, opt);
    auto at_a = est_flat_order(sub(cb.g, cst(1)), std::span<const double>(&base, 1), 0, a, opt);
    if (at_b.order < flat_cap || at_a.order < flat_cap)
        throw std::runtime_error("make_bump: flat matching failed at an endpoint");
    return cb;
}

BoxBump make_separating_bumps(const PatchPtr& patch,
                              std::vector<std::array<double, 2>> support_box,
                              std::vector<std::array<double, 2>> enclosing_box) {
    int n = patch->dim();
    if ((int)support_box.size() != n || (int)enclosing_box.size() != n)
        throw std::invalid_argument("make_separating_bumps: box arity mismatch");
    for (int i = 0; i < n; ++i) {
        if (!(enclosing_box[i][0] < support_box[i][0] && support_box[i][1] < enclosing_box[i][1]))
            throw std::invalid_argument("make_separating_bumps: boxes not strictly nested on axis " +
                                        std::to_string(i));
    }
    std::vector<ScalarExpr> factors;
    for (int i = 0; i < n; ++i) {
        ScalarExpr x = patch->v(i);
        Rational A = rational_approx(enclosing_box[i][0]);
        Rational a = rational_approx(support_box[i][0]);
        Rational bq = rational_approx(support_box[i][1]);
        Rational B = rational_approx(enclosing_box[i][1]);
        factors.push_back(smooth_step(quot(sub(x, cst(A)), cst(a - A))));
        factors.push_back(smooth_step(quot(sub(cst(B), x), cst(B - bq))));
    }
    BoxBump out;
    out.support = std::move(support_box);
    out.enclosing = std::move(enclosing_box);
    out.chi = mul(std::move(factors));
    return out;
}

}  // namespace pbump
