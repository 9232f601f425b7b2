#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pbump/expr.hpp"
#include "pbump/patch.hpp"

using namespace pbump;

namespace {
double ev1(const ScalarExpr& e, double t) {
    return eval(e, std::span<const double>(&t, 1));
}
}  // namespace

TEST_SUITE("expr") {

TEST_CASE("rational arithmetic is exact") {
    Rational a(1, 3), b(1, 6);
    CHECK((a + b) == Rational(1, 2));
    CHECK((a - b) == Rational(1, 6));
    CHECK((a * b) == Rational(1, 18));
    CHECK((a / b) == Rational(2));
    CHECK(Rational(-4, -8) == Rational(1, 2));
    CHECK(rational_from_double(0.25) == Rational(1, 4));
    CHECK(rational_from_double(3.0) == Rational(3));
}

TEST_CASE("polynomial differentiation") {
    auto p = patch_box({"x", "y"}, {{-1, 1}, {-1, 1}});
    ScalarExpr x = p->v("x");
    ScalarExpr e = ipow(x, 2);
    ScalarExpr d = diff(e, 0);
    // d(x^2)/dx = 2x
    CHECK(provably_equal(d, mul(cst(2), x), 2));
    // constants die
    CHECK(diff(cst(7), 0).is_zero());
    // unknown variable is an identifier error at the patch level
    CHECK_THROWS_AS((void)p->slot("z"), std::invalid_argument);
}

TEST_CASE("flat gadget derivative matches finite differences") {
    auto p = patch_box({"t"}, {{0, 1}});
    ScalarExpr t = p->v(0);
    ScalarExpr e = flat_exp1(t);
    ScalarExpr d = diff(e, 0);
    // chain-rule oracle at t = 0.5
    double sym = ev1(d, 0.5);
    double fd = oracles::fd_derivative([&](double u) { return ev1(e, u); }, 0.5);
    CHECK(std::abs(sym - fd) / std::abs(fd) < 1e-8);
    // structure: FlatExp1(t)/(1-t)^2 at 0.5 equals e^2 * 4
    CHECK(sym == doctest::Approx(std::exp(2.0) * 4.0).epsilon(1e-12));
}

TEST_CASE("evaluation basics and flat decay") {
    auto p = patch_box({"t"}, {{0, 1}});
    ScalarExpr t = p->v(0);
    CHECK(ev1(flat_exp1(t), 0.0) == doctest::Approx(std::exp(1.0)));
    auto p2 = patch_box({"x", "y"}, {{0, 3}, {0, 3}});
    std::vector<double> pt = {2.0, 3.0};
    CHECK(eval(mul(p2->v(0), p2->v(1)), pt) == doctest::Approx(6.0));

    // 1/FlatExp2 decreases to 0 faster than any power of (1-t); by t = 0.99
    // it underflows below the smallest double
    ScalarExpr q = quot(cst(1), flat_exp2(t));
    double prev_ratio = 1e300;
    for (double tv : {0.3, 0.5, 0.7}) {
        double val = ev1(q, tv);
        double pow6 = std::pow(1.0 - tv, 6);
        CHECK(val / pow6 < prev_ratio);
        prev_ratio = val / pow6;
    }
    CHECK(prev_ratio < 1e-8);
    CHECK(ev1(q, 0.99) == 0.0);
}

TEST_CASE("eval reports domain violations with a node path") {
    auto p = patch_box({"x"}, {{-2, 2}});
    ScalarExpr bad = ln(p->v(0));
    double m1 = -1.0;
    CHECK_THROWS_AS((void)eval(bad, std::span<const double>(&m1, 1)), EvalError);
}

TEST_CASE("log-domain evaluation exposes exponents") {
    auto p = patch_box({"t"}, {{0, 1}});
    ScalarExpr t = p->v(0);
    double tv = 1.0 - 1e-3;
    LogValue lv = eval_log(flat_exp1(t), std::span<const double>(&tv, 1));
    CHECK(lv.sign == 1);
    CHECK(lv.log == doctest::Approx(1000.0).epsilon(1e-9));
}

TEST_CASE("est_flat_order on reference profiles") {
    auto p = patch_box({"t"}, {{-1, 3}});
    ScalarExpr t = p->v(0);
    double base = 0.0;
    auto span1 = std::span<const double>(&base, 1);

    // cubic zero
    ScalarExpr cubic = ipow(sub(cst(1), t), 3);
    FlatOrderOptions o5;
    o5.kmax = 5;
    CHECK(est_flat_order(cubic, span1, 0, 1.0, o5).order == 3);

    // extension by zero of 1/FlatExp1 reaches the cap
    ScalarExpr flat = piecewise_flat(t, 1.0, quot(cst(1), flat_exp1(t)), cst(0));
    FlatOrderOptions o6;
    o6.kmax = 6;
    CHECK(est_flat_order(flat, span1, 0, 1.0, o6).order == 6);
    for (int cap = 1; cap <= 6; ++cap) {
        FlatOrderOptions oc;
        oc.kmax = cap;
        CHECK(est_flat_order(flat, span1, 0, 1.0, oc).order >= cap);
    }

    // non-vanishing value
    CHECK(est_flat_order(sub(cst(1), t), span1, 0, 0.0).order == 0);
    // simple zero
    CHECK(est_flat_order(sub(cst(1), t), span1, 0, 1.0).order == 1);
}

TEST_CASE("derivatives of every node kind agree with finite differences") {
    auto p = patch_box({"x", "y"}, {{0.2, 0.8}, {0.2, 0.8}});
    ScalarExpr x = p->v("x"), y = p->v("y");
    std::vector<ScalarExpr> zoo = {
        add(x, mul(cst(3), y)),
        mul({x, y, add(x, cst(1))}),
        quot(x, add(y, cst(2))),
        ipow(add(x, y), 3),
        ipow(add(x, cst(1)), -2),
        expn(mul(x, y)),
        ln(add(cst(1), x)),
        sqrt_(add(cst(1), mul(x, x))),
        flat_exp1(mul(x, y)),
        flat_exp2(mul(cst(1, 2), x)),
        smooth_step(x),
        piecewise_flat(sub(x, y), 0.0, mul(x, y), mul(x, y)),
    };
    auto pts = oracles::random_points(p->bounding_box(), 100, 2024);
    Evaluator ev;
    for (auto& e : zoo) {
        for (int v = 0; v < 2; ++v) {
            ScalarExpr d = diff(e, v);
            for (auto& pt : pts) {
                double sym = ev.eval(d, pt);
                auto f = [&](double u) {
                    std::vector<double> q = pt;
                    q[v] = u;
                    return eval(e, q);
                };
                double fd = oracles::fd_derivative2(f, pt[v]);
                CHECK(std::abs(sym - fd) / std::max(1.0, std::abs(sym)) < 1e-6);
            }
        }
    }
}

TEST_CASE("simplify commutes with evaluation") {
    auto p = patch_box({"x", "y"}, {{0.1, 0.9}, {0.1, 0.9}});
    ScalarExpr x = p->v("x"), y = p->v("y");
    ScalarExpr e = add(mul(cst(0), flat_exp2(x)),
                       mul(cst(1), add(mul(x, y), quot(ipow(y, 2), cst(2)))));
    ScalarExpr s = simplify(e);
    auto pts = oracles::random_points(p->bounding_box(), 50, 7);
    for (auto& pt : pts) {
        double a = eval(e, pt), b = eval(s, pt);
        CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
    }
}

TEST_CASE("smooth step has exact plateaus and a grammar-closed derivative") {
    auto p = patch_box({"u"}, {{-1, 2}});
    ScalarExpr u = p->v(0);
    ScalarExpr s = smooth_step(u);
    CHECK(ev1(s, -0.5) == 0.0);
    CHECK(ev1(s, 0.0) == 0.0);
    CHECK(ev1(s, 1.0) == 1.0);
    CHECK(ev1(s, 2.0) == 1.0);
    CHECK(ev1(s, 0.5) == doctest::Approx(0.5));
    ScalarExpr d = diff(s, 0);
    CHECK(ev1(d, -0.5) == 0.0);
    CHECK(ev1(d, 0.0) == 0.0);
    CHECK(ev1(d, 1.0) == 0.0);
    CHECK(ev1(d, 0.5) > 0.0);
    double fd = oracles::fd_derivative([&](double t) { return ev1(s, t); }, 0.3);
    CHECK(ev1(d, 0.3) == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("sparse polynomial canonicalization") {
    auto p = patch_box({"x", "y"}, {{-1, 1}, {-1, 1}});
    ScalarExpr x = p->v("x"), y = p->v("y");
    // (x+y)^2 - x^2 - 2xy - y^2 == 0
    ScalarExpr e = sub(ipow(add(x, y), 2),
                       add({ipow(x, 2), mul({cst(2), x, y}), ipow(y, 2)}));
    auto poly = as_polynomial(e, 2);
    REQUIRE(poly.has_value());
    CHECK(poly->is_zero());

    // ipow(sqrt(a), 2) folds to a
    ScalarExpr sq = ipow(sqrt_(add(cst(1), x)), 2);
    auto poly2 = as_polynomial(sq, 2);
    REQUIRE(poly2.has_value());
    CHECK(*poly2 == *as_polynomial(add(cst(1), x), 2));

    // shift and truncate
    SparsePoly q = *as_polynomial(add(ipow(x, 2), mul(cst(3), y)), 2);
    SparsePoly shifted = q.shifted({Rational(1), Rational(0)});
    std::vector<double> pt = {0.5, 2.0};
    std::vector<double> pt_shift = {1.5, 2.0};
    CHECK(shifted.eval(pt) == doctest::Approx(q.eval(pt_shift)));
    CHECK(q.truncated(1).total_degree() <= 1);
}

TEST_CASE("rational function identity proving") {
    auto p = patch_box({"x", "y"}, {{0.1, 0.9}, {0.1, 0.9}});
    ScalarExpr x = p->v("x"), y = p->v("y");
    ScalarExpr a = quot(sub(ipow(x, 2), ipow(y, 2)), sub(x, y));
    ScalarExpr b = add(x, y);
    CHECK(provably_equal(a, b, 2));
    CHECK(!provably_equal(a, add(x, mul(cst(2), y)), 2));
}

}  // TEST_SUITE
