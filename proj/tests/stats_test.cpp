#include <catch2/catch_amalgamated.hpp>

#include "tablebench/stats.hpp"

using namespace tablebench;

TEST_CASE("t_test on identical vectors with spread gives t=0, p=1") {
    std::vector<double> a{1, 2, 3};
    TTestResult r = t_test(a, a);
    REQUIRE(r.t == 0.0);
    REQUIRE(r.p == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("t_test matches the reference implementation (equal variance)") {
    // reference values computed with an independent statistics library
    std::vector<double> a{1, 2, 3, 4, 5};
    std::vector<double> b{2, 3, 4, 5, 6};
    TTestResult r = t_test(a, b, TTestVariant::Student);
    REQUIRE(r.t == Catch::Approx(-1.0).margin(1e-9));
    REQUIRE(r.p == Catch::Approx(0.34659350708733416).margin(1e-9));

    std::vector<double> c{1, 2, 3, 4, 5};
    std::vector<double> d{2, 4, 4, 5, 6};
    TTestResult r2 = t_test(c, d, TTestVariant::Student);
    REQUIRE(r2.t == Catch::Approx(-1.2377054955105522).margin(1e-9));
    REQUIRE(r2.p == Catch::Approx(0.25091713765155527).margin(1e-9));
}

TEST_CASE("t_test welch variant matches the reference implementation") {
    std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<double> b{10, 30, 50};
    TTestResult student = t_test(a, b, TTestVariant::Student);
    REQUIRE(student.t == Catch::Approx(-3.894167856575346).margin(1e-9));
    REQUIRE(student.p == Catch::Approx(0.0036516969153648693).margin(1e-9));
    TTestResult welch = t_test(a, b, TTestVariant::Welch);
    REQUIRE(welch.t == Catch::Approx(-2.2021798342492707).margin(1e-9));
    REQUIRE(welch.p == Catch::Approx(0.15714857472906954).margin(1e-9));
}

TEST_CASE("t_test rejects degenerate inputs") {
    std::vector<double> zeros(10, 0.0);
    REQUIRE_THROWS_AS(t_test(zeros, zeros), DegenerateVarianceError);
    std::vector<double> ones(10, 1.0);
    REQUIRE_THROWS_AS(t_test(zeros, ones), DegenerateVarianceError);
    std::vector<double> tiny{1.0};
    std::vector<double> ok{1.0, 2.0};
    REQUIRE_THROWS_AS(t_test(tiny, ok), Error);
}

TEST_CASE("t is antisymmetric under swapping groups; p is invariant") {
    std::vector<double> a{1, 2, 3, 4, 8};
    std::vector<double> b{2, 2, 5, 6, 7};
    for (TTestVariant v : {TTestVariant::Student, TTestVariant::Welch}) {
        TTestResult ab = t_test(a, b, v);
        TTestResult ba = t_test(b, a, v);
        REQUIRE(ab.t == Catch::Approx(-ba.t).margin(1e-12));
        REQUIRE(ab.p == Catch::Approx(ba.p).margin(1e-12));
    }
}

TEST_CASE("p decreases monotonically as the mean difference grows") {
    std::vector<double> base{0.1, 0.4, 0.2, 0.5, 0.3, 0.25, 0.45, 0.15};
    double last_p = 1.1;
    for (double shift : {0.0, 0.1, 0.2, 0.4, 0.8, 1.6}) {
        std::vector<double> shifted;
        for (double x : base) shifted.push_back(x + shift);
        TTestResult r = t_test(base, shifted);
        if (shift == 0.0) {
            REQUIRE(r.p == Catch::Approx(1.0).margin(1e-12));
        } else {
            REQUIRE(r.p < last_p);
        }
        last_p = r.p;
    }
}

TEST_CASE("bonferroni_threshold") {
    REQUIRE(bonferroni_threshold(0.01, 8) == 0.00125);
    REQUIRE(bonferroni_threshold(0.01, 7) == Catch::Approx(0.0014285714285714286).margin(1e-18));
    REQUIRE(bonferroni_threshold(0.05, 1) == 0.05);
    REQUIRE_THROWS_AS(bonferroni_threshold(0.01, 0), Error);
}

TEST_CASE("delta_table of identical conditions is identically zero") {
    std::map<std::string, ScoreSamples> cells;
    cells["NavigationTests"] = ScoreSamples{{0.2, 0.4, 0.6, 0.8}};
    cells["RowLookupTests"] = ScoreSamples{{1.0, 0.0, 1.0, 0.5}};
    auto deltas = delta_table(cells, cells, 0.01, 8);
    for (const auto& [key, cell] : deltas) {
        REQUIRE(cell.delta_pct == 0.0);
        REQUIRE_FALSE(cell.significant);
    }
}

TEST_CASE("delta_table reproduces published-style deltas from the means") {
    // baseline mean 71.43%, noisy mean 92.29% -> delta +20.86 points
    auto with_mean = [](double pct, std::size_t n) {
        ScoreSamples s;
        std::size_t ones = static_cast<std::size_t>(pct / 100.0 * double(n) + 0.5);
        for (std::size_t i = 0; i < n; ++i) s.per_instance.push_back(i < ones ? 1.0 : 0.0);
        return s;
    };
    std::map<std::string, ScoreSamples> base, noisy;
    base["NavigationTests"] = with_mean(71.43, 10000);
    noisy["NavigationTests"] = with_mean(92.29, 10000);
    base["DataTypeLookupTests"] = with_mean(96.43, 10000);
    noisy["DataTypeLookupTests"] = with_mean(84.00, 10000);
    auto deltas = delta_table(base, noisy, 0.01, 8);
    REQUIRE(deltas["NavigationTests"].delta_pct == Catch::Approx(20.86).margin(0.005));
    REQUIRE(deltas["DataTypeLookupTests"].delta_pct == Catch::Approx(-12.43).margin(0.005));
    // differences this large over 10k 0/1 samples are overwhelmingly significant
    REQUIRE(deltas["NavigationTests"].significant);
    REQUIRE(deltas["DataTypeLookupTests"].significant);
}

TEST_CASE("delta_table rejects mismatched cell sets") {
    std::map<std::string, ScoreSamples> a, b;
    a["x"] = ScoreSamples{{0.1, 0.2}};
    b["y"] = ScoreSamples{{0.1, 0.2}};
    REQUIRE_THROWS_AS(delta_table(a, b, 0.01, 8), Error);
}

TEST_CASE("comparison thresholds follow the corrected alpha") {
    // p just below/above alpha/m flips significance
    std::vector<double> a(40, 0.0), b(40, 0.0);
    for (std::size_t i = 0; i < 40; ++i) {
        a[i] = (i % 2) ? 0.4 : 0.6;
        b[i] = ((i % 2) ? 0.4 : 0.6) + 0.12;
    }
    Comparison strict = compare(a, b, 0.01, 8);
    Comparison loose = compare(a, b, 0.5, 1);
    REQUIRE(strict.p_value == loose.p_value);
    REQUIRE(loose.significant);
    REQUIRE(strict.significant == (strict.p_value < 0.00125));
}
