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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "thinseg/imaging.hpp"
#include "thinseg/rng.hpp"

namespace thinseg {

/// Bernoulli noise schedule. Each forward step keeps a label with
/// probability 1 - beta_t and otherwise resamples it from Bernoulli(1/2):
///   q(x_t = 1 | x_{t-1}) = (1 - beta_t) x_{t-1} + beta_t / 2.
class NoiseSchedule {
public:
    /// betas[t-1] is beta_t for t = 1..T; all must lie in (0,1).
    explicit NoiseSchedule(std::vector<double> betas);

    int steps() const { return static_cast<int>(betas_.size()); }
    /// beta_t, t in [1, T].
    double beta(int t) const;
    /// Cumulative product prod_{s<=t} (1 - beta_s), t in [0, T]; alpha_bar(0) = 1.
    double alpha_bar(int t) const;

    const std::vector<double>& betas() const { return betas_; }

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bar_;
};

/// beta_t interpolated linearly from beta_start at t = 1 to beta_end at t = T.
NoiseSchedule linear_schedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

/// P(x_t = 1 | x_0) = alpha_bar_t x0 + (1 - alpha_bar_t) / 2. x0 may be soft.
double forward_marginal(double x0, int t, const NoiseSchedule& schedule);

/// Draws x_t ~ q(x_t | x_0) independently per pixel.
BinaryMask sample_forward(const BinaryMask& mask, int t, const NoiseSchedule& schedule, Rng& rng);

/// P(x_prev = 1 | x_t, x0hat) for a jump whose prior at x_prev has cumulative
/// product `alpha_bar_prev` and whose flip parameter is `beta`.
double bernoulli_posterior(int xt, double x0hat, double alpha_bar_prev, double beta);

/// P(x_{t-1} = 1 | x_t, x0hat) for the single schedule step t >= 1.
double posterior_prob(int xt, double x0hat, int t, const NoiseSchedule& schedule);

/// Estimates per-pixel P(x_0 = 1) from a noisy mask.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual ProbMap denoise(const BinaryMask& xt, int t, const GrayImage& cond) const = 0;
};

enum class SamplerKind { ancestral, skip };

std::string to_string(SamplerKind kind);
SamplerKind parse_sampler_kind(const std::string& name);

struct SampleRunConfig {
    int num_samples = 200;
    SamplerKind kind = SamplerKind::skip;
    int skip_steps = 50;
    std::uint64_t seed = 0;

    /// Throws ParameterError on K < 1 or steps outside [1, steps].
    void validate(const NoiseSchedule& schedule) const;
};

/// Reverse chain over every timestep, x_T ~ Bernoulli(1/2).
BinaryMask ancestral_sample(const Denoiser& denoiser, const GrayImage& cond, const NoiseSchedule& schedule, Rng& rng);

/// tau_0 = 0 < tau_1 < ... < tau_steps = T, tau_k = floor(k T / steps).
std::vector<int> skip_timesteps(int total_steps, int steps);

/// Reverse chain over skip_timesteps(T, steps). A jump tau_k -> tau_{k-1}
/// composes the intermediate flips into one with
/// beta = 1 - alpha_bar(tau_k) / alpha_bar(tau_{k-1}).
BinaryMask skip_sample(const Denoiser& denoiser, const GrayImage& cond, const NoiseSchedule& schedule, int steps,
                       Rng& rng);

/// K chains; chain i runs on make_stream(cfg.seed, i).
std::vector<BinaryMask> sample_ensemble(const Denoiser& denoiser, const GrayImage& cond,
                                        const NoiseSchedule& schedule, const SampleRunConfig& cfg);

/// sample_0000.pgm, sample_0001.pgm, ... plus manifest.txt.
void write_ensemble(const std::filesystem::path& dir, const std::vector<BinaryMask>& masks,
                    const SampleRunConfig& cfg);
std::vector<BinaryMask> read_ensemble(const std::filesystem::path& dir);

}  // namespace thinseg
