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

#include "thinseg/staple.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "thinseg/errors.hpp"

namespace thinseg {

namespace {

double clamp_rate(double v) { return std::clamp(v, kStapleClamp, 1.0 - kStapleClamp); }

void check_raters(const std::vector<BinaryMask>& masks) {
    if (masks.size() < 2) throw ParameterError("staple: need at least two masks");
    for (const auto& m : masks) {
        check_mask(m, "rater mask");
        if (!same_shape(m, masks.front())) throw ParameterError("staple: rater masks differ in shape");
    }
}

// Log-space evidence for T_i = 1 and T_i = 0 at every pixel.
void log_evidence(const std::vector<BinaryMask>& masks, const std::vector<RaterPerformance>& perf, double prior,
                  Raster<double>& log_a, Raster<double>& log_b) {
    const auto rows = masks.front().rows(), cols = masks.front().cols();
    log_a = Raster<double>::Constant(rows, cols, std::log(prior));
    log_b = Raster<double>::Constant(rows, cols, std::log(1.0 - prior));
    for (std::size_t j = 0; j < masks.size(); ++j) {
        const double lp = std::log(perf[j].sensitivity), lnp = std::log(1.0 - perf[j].sensitivity);
        const double lq = std::log(perf[j].specificity), lnq = std::log(1.0 - perf[j].specificity);
        const auto d = masks[j].cast<double>();
        log_a += d * lp + (1.0 - d) * lnp;
        log_b += d * lnq + (1.0 - d) * lq;
    }
}

}  // namespace

ProbMap staple_posterior(const std::vector<BinaryMask>& masks, const std::vector<RaterPerformance>& performances,
                         double prior) {
    Raster<double> log_a, log_b;
    log_evidence(masks, performances, prior, log_a, log_b);
    // W = a / (a + b) = 1 / (1 + exp(log b - log a))
    return 1.0 / (1.0 + (log_b - log_a).exp());
}

double staple_log_likelihood(const std::vector<BinaryMask>& masks,
                             const std::vector<RaterPerformance>& performances, double prior) {
    Raster<double> log_a, log_b;
    log_evidence(masks, performances, prior, log_a, log_b);
    const Raster<double> top = log_a.max(log_b);
    return (top + ((log_a - top).exp() + (log_b - top).exp()).log()).sum();
}

std::vector<RaterPerformance> staple_performances(const std::vector<BinaryMask>& masks, const ProbMap& weights) {
    const double fg_mass = weights.sum();
    const double bg_mass = (1.0 - weights).sum();
    std::vector<RaterPerformance> out(masks.size());
    for (std::size_t j = 0; j < masks.size(); ++j) {
        const auto d = masks[j].cast<double>();
        const double p = fg_mass > 0.0 ? (weights * d).sum() / fg_mass : 1.0;
        const double q = bg_mass > 0.0 ? ((1.0 - weights) * (1.0 - d)).sum() / bg_mass : 1.0;
        out[j] = {clamp_rate(p), clamp_rate(q)};
    }
    return out;
}

StapleResult staple_fuse(const std::vector<BinaryMask>& masks, const StapleOptions& options) {
    check_raters(masks);
    if (options.max_iterations < 1) throw ParameterError("staple: max_iterations must be >= 1");
    if (!(options.tolerance > 0.0)) throw ParameterError("staple: tolerance must be positive");

    StapleResult result;
    const auto rows = masks.front().rows(), cols = masks.front().cols();

    double mean_fraction = 0.0;
    for (const auto& m : masks) mean_fraction += m.cast<double>().mean();
    mean_fraction /= static_cast<double>(masks.size());

    // Every rater empty or every rater full: the truth is not in question.
    if (mean_fraction == 0.0 || mean_fraction == 1.0) {
        const bool full = mean_fraction == 1.0;
        result.weights = ProbMap::Constant(rows, cols, full ? 1.0 : 0.0);
        result.fused = BinaryMask::Constant(rows, cols, full ? 1 : 0);
        result.performances.assign(masks.size(), {1.0 - kStapleClamp, 1.0 - kStapleClamp});
        result.converged = true;
        result.prior = mean_fraction;
        return result;
    }

    const double prior = std::clamp(options.prior.value_or(mean_fraction), kStapleClamp, 1.0 - kStapleClamp);
    result.prior = prior;
    const double init = clamp_rate(options.initial_performance);
    result.performances.assign(masks.size(), {init, init});

    result.weights = ProbMap::Zero(rows, cols);
    for (int it = 1; it <= options.max_iterations; ++it) {
        ProbMap w = staple_posterior(masks, result.performances, prior);
        const double change = (w - result.weights).abs().maxCoeff();
        result.weights = std::move(w);
        result.performances = staple_performances(masks, result.weights);
        result.iterations = it;
        if (it > 1 && change < options.tolerance) {
            result.converged = true;
            break;
        }
    }
    result.weights = staple_posterior(masks, result.performances, prior);
    result.fused = (result.weights >= 0.5).cast<std::uint8_t>();
    return result;
}

void write_staple_report(const std::filesystem::path& path, const StapleResult& result) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(10);
    out << "prior=" << result.prior << "\n";
    out << "iterations=" << result.iterations << "\n";
    out << "converged=" << (result.converged ? 1 : 0) << "\n";
    for (std::size_t j = 0; j < result.performances.size(); ++j)
        out << "rater" << j << " sensitivity=" << result.performances[j].sensitivity
            << " specificity=" << result.performances[j].specificity << "\n";
}

}  // namespace thinseg
