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
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "thinseg/diffusion.hpp"
#include "thinseg/imaging.hpp"
#include "thinseg/rng.hpp"

namespace thinseg {

// ---------------------------------------------------------------------------
// Enumeration oracle: exact E[x_0 | x_t] when the clean mask is known to be
// one of a finite set of annotations with prior weights.

struct WeightedMask {
    BinaryMask mask;
    double weight = 0.0;
};

class TabularOracle {
public:
    /// Registers the annotation set for `cond_id`. Weights are normalised to
    /// sum to one; an empty weight list means uniform.
    void add_case(const std::string& cond_id, const std::vector<BinaryMask>& masks,
                  std::vector<double> weights = {});

    /// Throws LookupError for unknown ids.
    const std::vector<WeightedMask>& entries(const std::string& cond_id) const;
    std::vector<std::string> ids() const;

    /// `<dir>/weights.txt` lists "<cond_id> <file> <weight>" per mask.
    void save(const std::filesystem::path& dir) const;
    static TabularOracle load(const std::filesystem::path& dir);

private:
    std::map<std::string, std::vector<WeightedMask>> cases_;
};

/// P(m | x_t) over the annotation set, accumulated in log space.
Eigen::VectorXd oracle_posterior(const TabularOracle& oracle, const BinaryMask& xt, int t,
                                 const NoiseSchedule& schedule, const std::string& cond_id);

/// sum_m P(m | x_t) m, per pixel.
ProbMap oracle_denoise(const TabularOracle& oracle, const BinaryMask& xt, int t, const NoiseSchedule& schedule,
                       const std::string& cond_id);

/// Denoiser bound to one oracle case; the conditioning image is ignored.
/// `oracle` and `schedule` must outlive the denoiser.
class OracleDenoiser final : public Denoiser {
public:
    OracleDenoiser(const TabularOracle& oracle, const NoiseSchedule& schedule, std::string cond_id);
    ProbMap denoise(const BinaryMask& xt, int t, const GrayImage& cond) const override;

private:
    const TabularOracle& oracle_;
    const NoiseSchedule& schedule_;
    std::string cond_id_;
};

// ---------------------------------------------------------------------------
// Patch-logistic denoiser: x0hat_i = sigmoid(w . f_i), with
// f_i = [x_t patch, cond patch / 255, alpha_bar_t, 1], patches (2r+1)^2 row-major
// and zero-padded outside the image.

struct PatchLogisticModel {
    int radius = 2;
    Eigen::VectorXd weights;

    static Eigen::Index feature_length(int radius) {
        const Eigen::Index side = 2 * radius + 1;
        return 2 * side * side + 2;
    }
};

Eigen::VectorXd extract_features(const BinaryMask& xt, const GrayImage& cond, Eigen::Index row, Eigen::Index col,
                                 int radius, double alpha_bar);

/// One feature row per pixel, pixels in row-major order.
Eigen::MatrixXd feature_matrix(const BinaryMask& xt, const GrayImage& cond, int radius, double alpha_bar);

ProbMap logistic_denoise(const PatchLogisticModel& model, const BinaryMask& xt, int t, const GrayImage& cond,
                         const NoiseSchedule& schedule);

class LogisticDenoiser final : public Denoiser {
public:
    LogisticDenoiser(PatchLogisticModel model, const NoiseSchedule& schedule);
    ProbMap denoise(const BinaryMask& xt, int t, const GrayImage& cond) const override;
    const PatchLogisticModel& model() const { return model_; }

private:
    PatchLogisticModel model_;
    const NoiseSchedule& schedule_;
};

struct TrainingCase {
    GrayImage cond;
    std::vector<BinaryMask> annotations;
};

using TrainingSet = std::vector<TrainingCase>;

struct TrainOptions {
    int iterations = 2000;
    double learning_rate = 0.05;
    int radius = 2;
};

struct TrainResult {
    PatchLogisticModel model;
    /// Pixel-mean cross-entropy of each iteration's draw, before its update.
    std::vector<double> loss_trace;
};

/// Pixel-mean Bernoulli cross-entropy of sigmoid(X w) against targets y.
double cross_entropy(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, const Eigen::VectorXd& weights);
/// Analytic gradient X^T (sigmoid(X w) - y) / N.
Eigen::VectorXd cross_entropy_gradient(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                                       const Eigen::VectorXd& weights);

/// Plain gradient descent on a fixed problem; returns the loss before each
/// step followed by the final loss.
std::vector<double> full_batch_descent(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                                       Eigen::VectorXd& weights, int iterations, double learning_rate);

/// SGD with one random (case, annotation, t) draw per iteration.
TrainResult train_logistic(const TrainingSet& data, const NoiseSchedule& schedule, const TrainOptions& options,
                           Rng& rng);

void save_model(const std::filesystem::path& path, const PatchLogisticModel& model);
PatchLogisticModel load_model(const std::filesystem::path& path);

}  // namespace thinseg
