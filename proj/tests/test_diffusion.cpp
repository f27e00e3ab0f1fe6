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

#include <cmath>

#include "support.hpp"
#include "thinseg/denoiser.hpp"
#include "thinseg/diffusion.hpp"
#include "thinseg/errors.hpp"

using namespace thinseg;

namespace {

class ConstantDenoiser final : public Denoiser {
public:
    explicit ConstantDenoiser(double v, Eigen::Index shrink = 0) : v_(v), shrink_(shrink) {}
    ProbMap denoise(const BinaryMask& xt, int, const GrayImage&) const override {
        return ProbMap::Constant(xt.rows() - shrink_, xt.cols(), v_);
    }

private:
    double v_;
    Eigen::Index shrink_;
};

GrayImage blank(Eigen::Index rows, Eigen::Index cols) {
    GrayImage g;
    g.values = Raster<std::uint8_t>::Zero(rows, cols);
    return g;
}

NoiseSchedule random_schedule(Rng& rng) {
    const int steps = static_cast<int>(thinseg::uniform_int(rng, 1, 40));
    std::vector<double> betas;
    for (int t = 0; t < steps; ++t) betas.push_back(0.001 + 0.998 * uniform01(rng));
    return NoiseSchedule(betas);
}

// One forward step q(x_t = a | x_{t-1} = b).
double step(int a, int b, double beta) {
    const double p1 = b * (1.0 - beta) + beta / 2.0;
    return a ? p1 : 1.0 - p1;
}

}  // namespace

TEST_CASE("linear schedule") {
    const NoiseSchedule one = linear_schedule(1);
    REQUIRE(one.steps() == 1);
    CHECK(one.beta(1) == 1e-4);
    CHECK(one.alpha_bar(0) == 1.0);
    CHECK(one.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-14));

    const NoiseSchedule flat = linear_schedule(2, 0.5, 0.5);
    CHECK(flat.alpha_bar(1) == 0.5);
    CHECK(flat.alpha_bar(2) == 0.25);

    // Independent evaluation in log space.
    const NoiseSchedule full = linear_schedule();
    double log_ab = 0.0;
    for (int t = 1; t <= 1000; ++t) log_ab += std::log1p(-(1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0));
    CHECK(full.alpha_bar(1000) == doctest::Approx(std::exp(log_ab)).epsilon(1e-10));
    CHECK(full.alpha_bar(1000) == doctest::Approx(4.04e-5).epsilon(5e-3));
    CHECK(full.beta(1) == 1e-4);
    CHECK(full.beta(1000) == doctest::Approx(0.02).epsilon(1e-14));

    CHECK_THROWS_AS(linear_schedule(0), ParameterError);
    CHECK_THROWS_AS(linear_schedule(10, 0.0, 0.1), ParameterError);
    CHECK_THROWS_AS(linear_schedule(10, 0.2, 0.1), ParameterError);
    CHECK_THROWS_AS(linear_schedule(10, 0.1, 1.0), ParameterError);
    CHECK_THROWS_AS(NoiseSchedule({}), ParameterError);
    CHECK_THROWS_AS(NoiseSchedule({0.1, 1.0}), ParameterError);
}

TEST_CASE("alpha bar strictly decreasing on random schedules") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const NoiseSchedule s = random_schedule(rng);
        for (int t = 1; t <= s.steps(); ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
}

TEST_CASE("forward marginal") {
    const NoiseSchedule s({0.5});
    CHECK(forward_marginal(1.0, 0, s) == 1.0);
    CHECK(forward_marginal(0.0, 0, s) == 0.0);
    CHECK(forward_marginal(1.0, 1, s) == 0.75);
    CHECK(forward_marginal(0.0, 1, s) == 0.25);
    const NoiseSchedule full = linear_schedule();
    CHECK(forward_marginal(1.0, 1000, full) == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(forward_marginal(0.0, 1000, full) == doctest::Approx(0.5).epsilon(1e-4));
    CHECK_THROWS_AS(forward_marginal(1.0, 2, s), ParameterError);
    CHECK_THROWS_AS(forward_marginal(1.0, -1, s), ParameterError);

    // The closed form equals the one-step recurrence.
    Rng rng(3);
    const NoiseSchedule r = random_schedule(rng);
    for (int x0 = 0; x0 <= 1; ++x0) {
        double p = x0;
        for (int t = 1; t <= r.steps(); ++t) {
            p = p * (1.0 - r.beta(t)) + r.beta(t) / 2.0;
            CHECK(forward_marginal(x0, t, r) == doctest::Approx(p).epsilon(1e-12));
        }
    }
}

TEST_CASE("sample_forward statistics") {
    Rng rng(5);
    const BinaryMask zeros = BinaryMask::Zero(316, 317);
    CHECK((sample_forward(zeros, 0, linear_schedule(), rng) == zeros).all());
    const double noise = sample_forward(zeros, 1000, linear_schedule(), rng).cast<double>().mean();
    CHECK(std::abs(noise - 0.5) <= 0.005);
    const BinaryMask ones = BinaryMask::Ones(316, 317);
    const double freq = sample_forward(ones, 1, NoiseSchedule({0.5}), rng).cast<double>().mean();
    CHECK(std::abs(freq - 0.75) <= 0.005);
}

TEST_CASE("posterior examples") {
    CHECK(bernoulli_posterior(1, 1.0, 0.8, 0.2) == doctest::Approx(0.81 / 0.82).epsilon(1e-14));
    CHECK(bernoulli_posterior(1, 1.0, 0.8, 0.2) == doctest::Approx(0.9878).epsilon(1e-4));
    const NoiseSchedule quiet({1e-8});
    CHECK(std::abs(posterior_prob(1, 1.0, 1, quiet) - 1.0) <= 1e-6);
    CHECK(std::abs(posterior_prob(0, 0.0, 1, quiet)) <= 1e-6);
    CHECK_THROWS_AS(posterior_prob(1, 0.5, 0, quiet), ParameterError);
    CHECK_THROWS_AS(posterior_prob(1, 0.5, 2, quiet), ParameterError);
}

TEST_CASE("posterior Bayes identity on random schedules") {
    Rng rng(17);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const NoiseSchedule s = random_schedule(rng);
        const int t = static_cast<int>(thinseg::uniform_int(rng, 1, s.steps()));
        for (int x0 = 0; x0 <= 1; ++x0)
            for (int xt = 0; xt <= 1; ++xt)
                for (int xprev = 0; xprev <= 1; ++xprev) {
                    const double post1 = posterior_prob(xt, x0, t, s);
                    const double post = xprev ? post1 : 1.0 - post1;
                    const double qt = forward_marginal(x0, t, s);
                    const double qprev = forward_marginal(x0, t - 1, s);
                    const double lhs = post * (xt ? qt : 1.0 - qt);
                    const double rhs = step(xt, xprev, s.beta(t)) * (xprev ? qprev : 1.0 - qprev);
                    worst = std::max(worst, std::abs(lhs - rhs));
                }
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("flip composition") {
    const NoiseSchedule two({0.1, 0.1});
    const NoiseSchedule one({0.19});
    for (int x0 = 0; x0 <= 1; ++x0) {
        CHECK(forward_marginal(x0, 2, two) == doctest::Approx(forward_marginal(x0, 1, one)).epsilon(1e-15));
        // Enumerate the intermediate state.
        double p = 0.0;
        for (int x1 = 0; x1 <= 1; ++x1) p += step(1, x1, 0.1) * step(x1, x0, 0.1);
        CHECK(p == doctest::Approx(step(1, x0, 0.19)).epsilon(1e-15));
    }
    // Effective jump parameter over an arbitrary span.
    Rng rng(23);
    const NoiseSchedule s = random_schedule(rng);
    const int hi = s.steps(), lo = hi / 2;
    const double beta = 1.0 - s.alpha_bar(hi) / s.alpha_bar(lo);
    for (int x0 = 0; x0 <= 1; ++x0) {
        const double start = forward_marginal(x0, lo, s);
        CHECK(start * (1.0 - beta) + beta / 2.0 == doctest::Approx(forward_marginal(x0, hi, s)).epsilon(1e-12));
    }
}

TEST_CASE("skip timesteps") {
    const auto taus = skip_timesteps(1000, 50);
    REQUIRE(taus.size() == 51);
    CHECK(taus.front() == 0);
    CHECK(taus.back() == 1000);
    for (std::size_t k = 1; k < taus.size(); ++k) CHECK(taus[k] - taus[k - 1] == 20);
    const auto all = skip_timesteps(7, 7);
    for (int k = 0; k <= 7; ++k) CHECK(all[static_cast<std::size_t>(k)] == k);
    const auto uneven = skip_timesteps(10, 3);
    CHECK(uneven == std::vector<int>{0, 3, 6, 10});
    CHECK_THROWS_AS(skip_timesteps(10, 0), ParameterError);
    CHECK_THROWS_AS(skip_timesteps(10, 11), ParameterError);
}

TEST_CASE("noiseless single step returns the denoiser mask") {
    const NoiseSchedule s({1e-8});
    const ConstantDenoiser ones(1.0);
    int all_ones = 0;
    for (int run = 0; run < 100; ++run) {
        Rng rng = make_stream(99, static_cast<std::uint64_t>(run));
        all_ones += (ancestral_sample(ones, blank(8, 8), s, rng) == 1).all();
    }
    CHECK(all_ones == 100);
}

TEST_CASE("single-mask oracle reproduces its mask") {
    Rng gen(31);
    const BinaryMask m = test::random_mask(8, 8, gen);
    TabularOracle oracle;
    oracle.add_case("a", {m});
    const NoiseSchedule s = linear_schedule(50, 2e-3, 0.4);
    const OracleDenoiser d(oracle, s, "a");
    int hits = 0;
    for (int run = 0; run < 100; ++run) {
        Rng rng = make_stream(7, static_cast<std::uint64_t>(run));
        hits += (ancestral_sample(d, blank(8, 8), s, rng) == m).all();
    }
    CHECK(hits >= 99);
}

TEST_CASE("samplers are deterministic and skip with steps = T is ancestral") {
    Rng gen(41);
    const BinaryMask a = test::random_mask(6, 6, gen), b = test::random_mask(6, 6, gen);
    TabularOracle oracle;
    oracle.add_case("c", {a, b}, {0.7, 0.3});
    const NoiseSchedule s = linear_schedule(100);
    const OracleDenoiser d(oracle, s, "c");
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        Rng r1(seed), r2(seed), r3(seed);
        const BinaryMask x1 = ancestral_sample(d, blank(6, 6), s, r1);
        const BinaryMask x2 = ancestral_sample(d, blank(6, 6), s, r2);
        const BinaryMask x3 = skip_sample(d, blank(6, 6), s, 100, r3);
        CHECK((x1 == x2).all());
        CHECK((x1 == x3).all());
    }
}

TEST_CASE("denoiser contract is enforced") {
    const NoiseSchedule s = linear_schedule(5);
    Rng rng(1);
    CHECK_THROWS_AS(ancestral_sample(ConstantDenoiser(1.5), blank(4, 4), s, rng), ContractError);
    CHECK_THROWS_AS(ancestral_sample(ConstantDenoiser(-0.1), blank(4, 4), s, rng), ContractError);
    CHECK_THROWS_AS(ancestral_sample(ConstantDenoiser(0.5, 1), blank(4, 4), s, rng), ContractError);
    CHECK_THROWS_AS(skip_sample(ConstantDenoiser(0.5), blank(4, 4), s, 6, rng), ParameterError);
}

TEST_CASE("ensembles") {
    const NoiseSchedule s = linear_schedule(20);
    const ConstantDenoiser half(0.5);
    SampleRunConfig cfg;
    cfg.num_samples = 1;
    cfg.skip_steps = 5;
    cfg.seed = 1234;
    const auto single = sample_ensemble(half, blank(5, 5), s, cfg);
    REQUIRE(single.size() == 1);
    Rng stream = make_stream(1234, 0);
    CHECK((single[0] == skip_sample(half, blank(5, 5), s, 5, stream)).all());

    cfg.num_samples = 2;
    const auto p1 = sample_ensemble(half, blank(5, 5), s, cfg);
    const auto p2 = sample_ensemble(half, blank(5, 5), s, cfg);
    CHECK((p1[0] == p2[0]).all());
    CHECK((p1[1] == p2[1]).all());
    CHECK((p1[0] != p1[1]).any());

    cfg.num_samples = 200;
    CHECK(sample_ensemble(half, blank(3, 3), s, cfg).size() == 200);

    cfg.num_samples = 0;
    CHECK_THROWS_AS(sample_ensemble(half, blank(5, 5), s, cfg), ParameterError);
    cfg.num_samples = 1;
    cfg.skip_steps = 21;
    CHECK_THROWS_AS(sample_ensemble(half, blank(5, 5), s, cfg), ParameterError);
}

TEST_CASE("ensemble files") {
    test::TempDir dir("ensemble");
    Rng rng(8);
    std::vector<BinaryMask> masks;
    for (int k = 0; k < 3; ++k) masks.push_back(test::random_mask(4, 5, rng));
    SampleRunConfig cfg;
    cfg.seed = 77;
    cfg.kind = SamplerKind::ancestral;
    write_ensemble(dir.path(), masks, cfg);
    CHECK(std::filesystem::exists(dir / "sample_0000.pgm"));
    CHECK(std::filesystem::exists(dir / "sample_0002.pgm"));
    CHECK(test::slurp(dir / "manifest.txt") == "seed=77 num_samples=3 sampler=ancestral steps=50\n");
    const auto back = read_ensemble(dir.path());
    REQUIRE(back.size() == 3);
    for (int k = 0; k < 3; ++k) CHECK((back[static_cast<std::size_t>(k)] == masks[static_cast<std::size_t>(k)]).all());
    CHECK_THROWS_AS(read_ensemble(dir / "nope"), IoError);
    CHECK(parse_sampler_kind("skip") == SamplerKind::skip);
    CHECK_THROWS_AS(parse_sampler_kind("ddim"), ParameterError);
}
