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

#include "thinseg/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "thinseg/errors.hpp"

namespace thinseg {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) throw ParameterError("schedule: need at least one timestep");
    alpha_bar_.reserve(betas_.size() + 1);
    alpha_bar_.push_back(1.0);
    for (double b : betas_) {
        if (!(b > 0.0 && b < 1.0)) throw ParameterError("schedule: every beta must lie in (0,1)");
        alpha_bar_.push_back(alpha_bar_.back() * (1.0 - b));
    }
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > steps()) throw ParameterError("schedule: beta index out of range");
    return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > steps()) throw ParameterError("schedule: timestep out of range");
    return alpha_bar_[static_cast<std::size_t>(t)];
}

NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw ParameterError("linear_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ParameterError("linear_schedule: need 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int t = 1; t <= steps; ++t) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
        betas[static_cast<std::size_t>(t - 1)] = beta_start + (beta_end - beta_start) * frac;
    }
    return NoiseSchedule(std::move(betas));
}

double forward_marginal(double x0, int t, const NoiseSchedule& schedule) {
    const double ab = schedule.alpha_bar(t);
    return ab * x0 + (1.0 - ab) / 2.0;
}

BinaryMask sample_forward(const BinaryMask& mask, int t, const NoiseSchedule& schedule, Rng& rng) {
    const double p1 = forward_marginal(1.0, t, schedule);
    const double p0 = forward_marginal(0.0, t, schedule);
    BinaryMask out(mask.rows(), mask.cols());
    for (Eigen::Index k = 0; k < mask.size(); ++k)
        out.data()[k] = bernoulli(rng, mask.data()[k] ? p1 : p0) ? 1 : 0;
    return out;
}

double bernoulli_posterior(int xt, double x0hat, double alpha_bar_prev, double beta) {
    const double prior = alpha_bar_prev * x0hat + (1.0 - alpha_bar_prev) / 2.0;
    // q(x_t = 1 | x_prev = v) = v (1 - beta) + beta / 2
    const double up1 = 1.0 - beta / 2.0;
    const double up0 = beta / 2.0;
    const double like1 = xt ? up1 : 1.0 - up1;
    const double like0 = xt ? up0 : 1.0 - up0;
    const double num = prior * like1;
    return num / (num + (1.0 - prior) * like0);
}

double posterior_prob(int xt, double x0hat, int t, const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.steps()) throw ParameterError("posterior_prob: t must lie in [1, T]");
    return bernoulli_posterior(xt, x0hat, schedule.alpha_bar(t - 1), schedule.beta(t));
}

std::string to_string(SamplerKind kind) { return kind == SamplerKind::ancestral ? "ancestral" : "skip"; }

SamplerKind parse_sampler_kind(const std::string& name) {
    if (name == "ancestral") return SamplerKind::ancestral;
    if (name == "skip") return SamplerKind::skip;
    throw ParameterError("unknown sampler kind '" + name + "'");
}

void SampleRunConfig::validate(const NoiseSchedule& schedule) const {
    if (num_samples < 1) throw ParameterError("sampler: num_samples must be >= 1");
    if (skip_steps < 1 || skip_steps > schedule.steps())
        throw ParameterError("sampler: skip steps must lie in [1, T]");
}

namespace {

ProbMap checked_denoise(const Denoiser& denoiser, const BinaryMask& xt, int t, const GrayImage& cond) {
    ProbMap x0hat = denoiser.denoise(xt, t, cond);
    if (!same_shape(x0hat, xt)) throw ContractError("denoiser returned a map of the wrong shape");
    if (!((x0hat >= 0.0) && (x0hat <= 1.0)).all()) throw ContractError("denoiser output outside [0,1]");
    return x0hat;
}

// Runs the reverse chain along `timesteps` (ascending, starting at 0).
BinaryMask reverse_chain(const Denoiser& denoiser, const GrayImage& cond, const NoiseSchedule& schedule,
                         const std::vector<int>& timesteps, Rng& rng) {
    if (cond.values.size() == 0) throw ParameterError("sampler: empty conditioning image");
    BinaryMask x(cond.rows(), cond.cols());
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = bernoulli(rng, 0.5) ? 1 : 0;

    for (std::size_t k = timesteps.size() - 1; k >= 1; --k) {
        const int t = timesteps[k];
        const int prev = timesteps[k - 1];
        // Unit jumps use beta_t directly so a full-length skip chain is bitwise the ancestral chain.
        const double beta =
            t - prev == 1 ? schedule.beta(t) : 1.0 - schedule.alpha_bar(t) / schedule.alpha_bar(prev);
        const double ab_prev = schedule.alpha_bar(prev);
        const ProbMap x0hat = checked_denoise(denoiser, x, t, cond);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double p = bernoulli_posterior(x.data()[i], x0hat.data()[i], ab_prev, beta);
            x.data()[i] = bernoulli(rng, p) ? 1 : 0;
        }
    }
    return x;
}

}  // namespace

std::vector<int> skip_timesteps(int total_steps, int steps) {
    if (steps < 1 || steps > total_steps) throw ParameterError("skip_timesteps: steps must lie in [1, T]");
    std::vector<int> taus(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k)
        taus[static_cast<std::size_t>(k)] =
            static_cast<int>(static_cast<long long>(k) * total_steps / steps);
    return taus;
}

BinaryMask ancestral_sample(const Denoiser& denoiser, const GrayImage& cond, const NoiseSchedule& schedule,
                            Rng& rng) {
    return reverse_chain(denoiser, cond, schedule, skip_timesteps(schedule.steps(), schedule.steps()), rng);
}

BinaryMask skip_sample(const Denoiser& denoiser, const GrayImage& cond, const NoiseSchedule& schedule, int steps,
                       Rng& rng) {
    return reverse_chain(denoiser, cond, schedule, skip_timesteps(schedule.steps(), steps), rng);
}

std::vector<BinaryMask> sample_ensemble(const Denoiser& denoiser, const GrayImage& cond,
                                        const NoiseSchedule& schedule, const SampleRunConfig& cfg) {
    cfg.validate(schedule);
    std::vector<BinaryMask> out;
    out.reserve(static_cast<std::size_t>(cfg.num_samples));
    for (int i = 0; i < cfg.num_samples; ++i) {
        Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(i));
        out.push_back(cfg.kind == SamplerKind::ancestral ? ancestral_sample(denoiser, cond, schedule, rng)
                                                         : skip_sample(denoiser, cond, schedule, cfg.skip_steps, rng));
    }
    return out;
}

namespace {

std::filesystem::path sample_path(const std::filesystem::path& dir, std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%04zu.pgm", i);
    return dir / name;
}

}  // namespace

void write_ensemble(const std::filesystem::path& dir, const std::vector<BinaryMask>& masks,
                    const SampleRunConfig& cfg) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < masks.size(); ++i) write_mask(sample_path(dir, i), masks[i]);
    std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
    if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
    manifest << "seed=" << cfg.seed << " num_samples=" << masks.size() << " sampler=" << to_string(cfg.kind)
             << " steps=" << cfg.skip_steps << "\n";
}

std::vector<BinaryMask> read_ensemble(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<BinaryMask> masks;
    for (std::size_t i = 0;; ++i) {
        const auto path = sample_path(dir, i);
        if (!std::filesystem::exists(path)) break;
        masks.push_back(read_mask(path));
    }
    if (masks.empty()) throw IoError("no sample_XXXX.pgm files in " + dir.string());
    return masks;
}

}  // namespace thinseg
