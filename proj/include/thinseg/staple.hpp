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

#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "thinseg/imaging.hpp"

namespace thinseg {

struct RaterPerformance {
    double sensitivity = 0.0;  // p_j = P(D_ij = 1 | T_i = 1)
    double specificity = 0.0;  // q_j = P(D_ij = 0 | T_i = 0)
};

struct StapleResult {
    ProbMap weights;  // W_i = P(T_i = 1 | D, p, q)
    std::vector<RaterPerformance> performances;
    BinaryMask fused;  // W >= 0.5
    int iterations = 0;
    bool converged = false;
    double prior = 0.0;
};

struct StapleOptions {
    /// Foreground prior; defaults to the mean foreground fraction over raters.
    std::optional<double> prior;
    int max_iterations = 100;
    double tolerance = 1e-6;
    double initial_performance = 0.99999;
};

constexpr double kStapleClamp = 1e-6;

/// Simultaneous truth and performance level estimation (binary, spatially
/// uniform prior). EM alternates the posterior W with closed-form rater updates.
StapleResult staple_fuse(const std::vector<BinaryMask>& masks, const StapleOptions& options = {});

/// Posterior foreground probabilities W.
inline const ProbMap& staple_soft(const StapleResult& result) { return result.weights; }

/// E-step for fixed performances.
ProbMap staple_posterior(const std::vector<BinaryMask>& masks, const std::vector<RaterPerformance>& performances,
                         double prior);

/// Observed-data log-likelihood
///   sum_i log(f1 prod_j p_j^D (1-p_j)^(1-D) + (1-f1) prod_j (1-q_j)^D q_j^(1-D)).
double staple_log_likelihood(const std::vector<BinaryMask>& masks,
                             const std::vector<RaterPerformance>& performances, double prior);

/// M-step for fixed W, clamped to [eps, 1 - eps].
std::vector<RaterPerformance> staple_performances(const std::vector<BinaryMask>& masks, const ProbMap& weights);

/// Text report: prior, iterations, convergence, then one line per rater.
void write_staple_report(const std::filesystem::path& path, const StapleResult& result);

}  // namespace thinseg
