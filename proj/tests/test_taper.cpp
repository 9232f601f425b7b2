#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pbump/taper.hpp"

using namespace pbump;

namespace {
double ev1(const ScalarExpr& e, double t) {
    return eval(e, std::span<const double>(&t, 1));
}
}  // namespace

TEST_SUITE("taper") {

TEST_CASE("single-exp taper is the identity below delta") {
    FlatTaper tp = make_taper(TaperRegime::SingleExp, 0.1);
    CHECK(ev1(tp.f, 0.05) == doctest::Approx(0.05).epsilon(1e-14));
    CHECK(ev1(tp.f, 0.0) == 0.0);
    CHECK(ev1(tp.fp, 0.05) == doctest::Approx(1.0).epsilon(1e-12));
    // pure regime above 1 - delta
    CHECK(ev1(tp.f, 0.95) == doctest::Approx(std::exp(1.0 / 0.05)).epsilon(1e-12));
}

TEST_CASE("taper is strictly increasing") {
    FlatTaper tp = make_taper(TaperRegime::SingleExp, 0.1);
    std::mt19937_64 rng(99);
    auto u01 = [&]() { return (rng() >> 11) * 0x1.0p-53; };
    Evaluator ev;
    for (int i = 0; i < 1000; ++i) {
        double t1 = 0.98 * u01(), t2 = 0.98 * u01();
        if (t1 > t2) std::swap(t1, t2);
        if (t2 - t1 < 1e-9) continue;
        double f1 = ev.eval(tp.f, std::span<const double>(&t1, 1));
        double f2 = ev.eval(tp.f, std::span<const double>(&t2, 1));
        CHECK(f2 > f1);
    }
}

TEST_CASE("double-exp flat quotients reach the cap at t=1") {
    FlatTaper tp = make_taper(TaperRegime::DoubleExp, 0.1);
    ScalarExpr q = tp.inv_fp_f_pow(1);  // 1/(f' f)
    double base = 0.0;
    FlatOrderOptions opt;
    opt.kmax = 6;
    auto r = est_flat_order(q, std::span<const double>(&base, 1), 0, 1.0, opt);
    CHECK(r.order >= 6);
    // gadget is exactly zero past the breakpoint, by branch selection
    CHECK(ev1(q, 1.0) == 0.0);
    CHECK(ev1(q, 1.7) == 0.0);
}

TEST_CASE("log-domain evaluation of the taper near t=1") {
    FlatTaper tp = make_taper(TaperRegime::SingleExp, 0.1);
    double tv = 1.0 - 1e-3;
    LogValue lv = eval_log(tp.f, std::span<const double>(&tv, 1));
    CHECK(lv.sign == 1);
    CHECK(lv.log == doctest::Approx(1000.0).epsilon(1e-9));
}

TEST_CASE("quotient identity f/f' * 1/f = 1/f'") {
    for (auto reg : {TaperRegime::SingleExp, TaperRegime::DoubleExp}) {
        FlatTaper tp = make_taper(reg, 0.1);
        ScalarExpr lhs = mul(tp.f_over_fp(), tp.inv_f_pow(1));
        ScalarExpr rhs = tp.inv_fp_f_pow(0);
        Evaluator ev;
        for (double t = 0.2; t <= 0.999; t += 0.0123) {
            double a = ev.eval(lhs, std::span<const double>(&t, 1));
            double b = ev.eval(rhs, std::span<const double>(&t, 1));
            CHECK(std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(b)));
        }
    }
}

TEST_CASE("taper rejects out-of-range delta") {
    CHECK_THROWS_AS(make_taper(TaperRegime::SingleExp, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(make_taper(TaperRegime::SingleExp, 0.0), std::invalid_argument);
}

TEST_CASE("casimir bump plateaus are exact branches") {
    CasimirBump g = make_bump(1.0, 2.0);
    CHECK(ev1(g.g, 0.5) == 1.0);
    CHECK(ev1(g.g, 1.0) == 1.0);
    double mid = ev1(g.g, 1.5);
    CHECK(mid > 0.0);
    CHECK(mid < 1.0);
    CHECK(ev1(g.g, 2.0) == 0.0);
    CHECK(ev1(g.g, 3.0) == 0.0);
    // derivative vanishes identically on the plateaus
    ScalarExpr dg = diff(g.g, 0);
    CHECK(ev1(dg, 0.7) == 0.0);
    CHECK(ev1(dg, 2.5) == 0.0);
    CHECK(ev1(dg, 1.5) < 0.0);  // strictly decreasing inside
    CHECK_THROWS_AS(make_bump(2.0, 1.0), std::invalid_argument);
}

TEST_CASE("separating box bumps") {
    auto p = patch_box({"x", "y"}, {{-3, 3}, {-3, 3}});
    BoxBump chi = make_separating_bumps(p, {{-1, 1}, {-1, 1}}, {{-2, 2}, {-2, 2}});
    std::vector<double> origin = {0.0, 0.0};
    std::vector<double> out = {3.0, 0.0};
    std::vector<double> out2 = {0.0, -3.0};
    CHECK(eval(chi.chi, origin) == 1.0);
    CHECK(eval(chi.chi, out) == 0.0);
    CHECK(eval(chi.chi, out2) == 0.0);
    // exact plateau derivative inside the support box
    ScalarExpr d0 = diff(chi.chi, 0);
    std::vector<double> inner = {0.5, -0.25};
    CHECK(eval(d0, inner) == 0.0);
    CHECK_THROWS_AS(make_separating_bumps(p, {{-2, 2}, {-1, 1}}, {{-2, 2}, {-2, 2}}),
                    std::invalid_argument);
}

}  // TEST_SUITE
