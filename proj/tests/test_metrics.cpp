// Copyright 2026 The thinseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <numbers>
#include <sstream>

#include "support.hpp"
#include "thinseg/errors.hpp"
#include "thinseg/metrics.hpp"

using namespace thinseg;

namespace {

double boost_two_sided(double t, int dof) {
    const boost::math::students_t dist(dof);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("confusion examples") {
    Rng rng(1);
    const BinaryMask m = test::random_mask(9, 9, rng);
    const ConfusionCounts same = confusion(m, m);
    CHECK(same.fp == 0);
    CHECK(same.fn == 0);
    CHECK(same.total() == 81);

    const ConfusionCounts all = confusion(BinaryMask::Ones(4, 4), BinaryMask::Zero(4, 4));
    CHECK(all.fp == 16);
    CHECK(all.tp == 0);
    CHECK(all.fn == 0);
    CHECK(all.tn == 0);

    BinaryMask pred = m, roi = BinaryMask::Ones(9, 9);
    pred(2, 3) ^= 1;
    pred(7, 7) ^= 1;
    roi(2, 3) = 0;
    roi(7, 7) = 0;
    const ConfusionCounts restricted = confusion(pred, m, &roi);
    CHECK(restricted.fp == 0);
    CHECK(restricted.fn == 0);
    CHECK(restricted.total() == 79);

    CHECK_THROWS_AS(confusion(m, BinaryMask::Zero(3, 3)), ParameterError);
    const BinaryMask empty_roi = BinaryMask::Zero(9, 9);
    CHECK_THROWS_AS(confusion(m, m, &empty_roi), ParameterError);
    const BinaryMask small_roi = BinaryMask::Ones(3, 3);
    CHECK_THROWS_AS(confusion(m, m, &small_roi), ParameterError);
}

TEST_CASE("score examples") {
    Rng rng(2);
    BinaryMask m = test::random_mask(6, 6, rng);
    m(0, 0) = 1;
    const ConfusionCounts same = confusion(m, m);
    CHECK(dsc(same) == 1.0);
    CHECK(recall(same) == 1.0);
    CHECK(precision(same) == 1.0);

    BinaryMask a = BinaryMask::Zero(1, 6), b = BinaryMask::Zero(1, 6);
    a << 1, 1, 1, 1, 0, 0;
    b << 0, 0, 1, 1, 1, 1;
    const ConfusionCounts half = confusion(a, b);
    CHECK(dsc(half) == 0.5);
    CHECK(recall(half) == 0.5);
    CHECK(precision(half) == 0.5);

    const ConfusionCounts none = confusion(BinaryMask::Zero(3, 3), BinaryMask::Zero(3, 3));
    CHECK(dsc(none) == 1.0);
    CHECK(recall(none) == 1.0);
    CHECK(precision(none) == 1.0);

    const ConfusionCounts missed = confusion(BinaryMask::Zero(3, 3), BinaryMask::Ones(3, 3));
    CHECK(dsc(missed) == 0.0);
    CHECK(recall(missed) == 0.0);
    CHECK(precision(missed) == 1.0);
    const ConfusionCounts spurious = confusion(BinaryMask::Ones(3, 3), BinaryMask::Zero(3, 3));
    CHECK(recall(spurious) == 1.0);
    CHECK(precision(spurious) == 0.0);
}

TEST_CASE("score properties on random masks") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const BinaryMask a = test::random_mask(8, 8, rng, uniform01(rng));
        const BinaryMask b = test::random_mask(8, 8, rng, uniform01(rng));
        const ConfusionCounts ab = confusion(a, b), ba = confusion(b, a);
        CHECK(dsc(ab) == dsc(ba));
        CHECK(precision(ab) == recall(ba));
        for (double s : {dsc(ab), recall(ab), precision(ab)}) CHECK((s >= 0.0 && s <= 1.0));
        const double p = precision(ab), r = recall(ab);
        if (ab.tp > 0) CHECK(dsc(ab) == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-14));

        const BinaryMask roi = test::random_mask(8, 8, rng);
        if (roi.cast<int>().sum() == 0) continue;
        BinaryMask a2 = a, b2 = b;
        for (Eigen::Index i = 0; i < a.size(); ++i)
            if (!roi.data()[i]) a2.data()[i] = static_cast<std::uint8_t>(bernoulli(rng, 0.5)), b2.data()[i] = 0;
        const ConfusionCounts c1 = confusion(a, b, &roi), c2 = confusion(a2, b2, &roi);
        CHECK(c1.tp == c2.tp);
        CHECK(c1.fp == c2.fp);
        CHECK(c1.fn == c2.fn);
        CHECK(c1.tn == c2.tn);
    }
}

TEST_CASE("evaluate_case") {
    Rng rng(4);
    const BinaryMask pred = test::random_mask(10, 10, rng), ref = test::random_mask(10, 10, rng);
    BinaryMask left = BinaryMask::Zero(10, 10), right = BinaryMask::Zero(10, 10);
    left.leftCols(5) = 1;
    right.rightCols(5) = 1;
    const auto rows = evaluate_case(pred, ref, {{"whole", BinaryMask::Ones(10, 10)}, {"left", left}, {"right", right}});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].roi == "left");
    CHECK(rows[1].roi == "right");
    CHECK(rows[2].roi == "whole");
    const ConfusionCounts global = confusion(pred, ref);
    CHECK(rows[2].dsc == dsc(global));
    CHECK(rows[2].recall == recall(global));
    CHECK(rows[2].precision == precision(global));

    BinaryMask changed = pred;
    changed.rightCols(5) = 1 - changed.rightCols(5);
    const auto rows2 = evaluate_case(changed, ref, {{"left", left}});
    CHECK(rows2[0].dsc == rows[0].dsc);
    CHECK(rows2[0].recall == rows[0].recall);

    BinaryMask wall = BinaryMask::Zero(12, 12);
    wall.col(6) = 1;
    BinaryMask gapped = wall;
    gapped.block(4, 6, 3, 1) = 0;
    const NamedRois thin{{"thin", wall}};
    CHECK(evaluate_case(wall, wall, thin)[0].recall > evaluate_case(gapped, wall, thin)[0].recall);
}

TEST_CASE("t-test examples") {
    const std::vector<double> a{0.2, 0.5, 0.9, 0.4};
    const TTestResult same = paired_t_test(a, a);
    CHECK(same.t == 0.0);
    CHECK(same.p == 1.0);
    CHECK_FALSE(same.degenerate);

    const TTestResult flat = paired_t_test({2, 3, 4, 5}, {1, 2, 3, 4});
    CHECK(flat.degenerate);
    CHECK(flat.p == 0.0);

    const TTestResult r = paired_t_test({1, 2, 3}, {0, 0, 0});
    CHECK(r.dof == 2);
    CHECK(r.t == doctest::Approx(2.0 * std::sqrt(3.0)).epsilon(1e-14));
    CHECK(r.t == doctest::Approx(3.4641).epsilon(1e-4));
    // Two degrees of freedom: P(|T| > t) = 1 - t / sqrt(2 + t^2).
    CHECK(r.p == doctest::Approx(1.0 - r.t / std::sqrt(2.0 + r.t * r.t)).epsilon(1e-12));
    CHECK(r.p == doctest::Approx(0.0742).epsilon(1e-3));
    CHECK(r.p == doctest::Approx(boost_two_sided(r.t, 2)).epsilon(1e-12));

    CHECK_THROWS_AS(paired_t_test({1.0}, {0.0}), ParameterError);
    CHECK_THROWS_AS(paired_t_test({1.0, 2.0}, {0.0}), ParameterError);
}

TEST_CASE("t-test against a reference Student t implementation") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<std::size_t>(uniform_int(rng, 2, 40));
        std::vector<double> a(n), b(n);
        const double shift = 0.5 * standard_normal(rng);
        for (std::size_t i = 0; i < n; ++i) {
            b[i] = uniform01(rng);
            a[i] = b[i] + shift + standard_normal(rng);
        }
        const TTestResult ab = paired_t_test(a, b), ba = paired_t_test(b, a);
        CHECK(ab.t == doctest::Approx(-ba.t).epsilon(1e-14));
        CHECK(ab.p == doctest::Approx(ba.p).epsilon(1e-14));
        const double expect = boost_two_sided(ab.t, ab.dof);
        CHECK(std::abs(ab.p - expect) <= 1e-10 * std::max(expect, 1e-300) + 1e-15);
    }
}

TEST_CASE("incomplete beta and Student CDF") {
    Rng rng(6);
    for (int trial = 0; trial < 300; ++trial) {
        const double a = 0.1 + 30 * uniform01(rng), b = 0.1 + 30 * uniform01(rng), x = uniform01(rng);
        CHECK(incomplete_beta(a, b, x) == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-10));
    }
    CHECK(incomplete_beta(2, 3, 0.0) == 0.0);
    CHECK(incomplete_beta(2, 3, 1.0) == 1.0);
    CHECK(student_t_cdf(0.0, 5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(student_t_cdf(1.0, 1) == doctest::Approx(0.75).epsilon(1e-13));
    CHECK(student_t_cdf(-2.5, 7) == doctest::Approx(1 - student_t_cdf(2.5, 7)).epsilon(1e-13));
    for (double t : {-5.0, -1.2, 0.3, 2.0, 9.0})
        for (double dof : {1.0, 3.0, 12.0, 100.0})
            CHECK(student_t_cdf(t, dof) ==
                  doctest::Approx(boost::math::cdf(boost::math::students_t(dof), t)).epsilon(1e-11));
}

TEST_CASE("results CSV layout") {
    std::vector<ScoreRow> rows;
    const double base_dsc[3] = {0.5, 0.6, 0.7}, corr_dsc[3] = {0.6, 0.8, 1.0};
    for (int k = 0; k < 3; ++k) {
        const std::string id = "case_000" + std::to_string(k);
        rows.push_back({id, "baseline", {"thin", base_dsc[k], 0.5, 0.5}});
        rows.push_back({id, "corrected", {"thin", corr_dsc[k], 0.5, 0.5}});
    }
    std::ostringstream out;
    write_results_csv(out, rows, "baseline");
    const auto l = lines(out.str());
    REQUIRE(l.size() == 1 + 6 + 2);
    CHECK(l[0] == "case_id,method,roi,dsc,recall,precision,t_dsc,p_dsc,t_recall,p_recall,t_precision,p_precision");
    CHECK(l[1] == "case_0000,baseline,thin,0.500000,0.500000,0.500000,,,,,,");
    CHECK(l[7] == "mean,baseline,thin,0.600000,0.500000,0.500000,,,,,,");
    const TTestResult t = paired_t_test({0.6, 0.8, 1.0}, {0.5, 0.6, 0.7});
    std::ostringstream expect;
    expect << std::setprecision(6) << std::fixed << "mean,corrected,thin,0.800000,0.500000,0.500000," << t.t << ','
           << t.p << ",0.000000,1.000000,0.000000,1.000000";
    CHECK(l[8] == expect.str());
}
