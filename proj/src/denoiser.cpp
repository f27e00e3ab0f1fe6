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

#include "thinseg/denoiser.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "thinseg/errors.hpp"

namespace thinseg {

void TabularOracle::add_case(const std::string& cond_id, const std::vector<BinaryMask>& masks,
                             std::vector<double> weights) {
    if (masks.empty()) throw ParameterError("oracle: case '" + cond_id + "' needs at least one mask");
    if (weights.empty()) weights.assign(masks.size(), 1.0);
    if (weights.size() != masks.size()) throw ParameterError("oracle: one weight per mask required");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterError("oracle: weights must be finite and >= 0");
        total += w;
    }
    if (!(total > 0.0)) throw ParameterError("oracle: weights must not all be zero");

    std::vector<WeightedMask> entries;
    for (std::size_t k = 0; k < masks.size(); ++k) {
        check_mask(masks[k]);
        if (!same_shape(masks[k], masks.front())) throw ParameterError("oracle: masks must share one shape");
        entries.push_back({masks[k], weights[k] / total});
    }
    cases_[cond_id] = std::move(entries);
}

const std::vector<WeightedMask>& TabularOracle::entries(const std::string& cond_id) const {
    const auto it = cases_.find(cond_id);
    if (it == cases_.end()) throw LookupError("oracle: unknown case id '" + cond_id + "'");
    return it->second;
}

std::vector<std::string> TabularOracle::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : cases_) out.push_back(id);
    return out;
}

void TabularOracle::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "weights.txt", std::ios::trunc);
    if (!manifest) throw IoError("cannot write " + (dir / "weights.txt").string());
    manifest << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& [id, entries] : cases_) {
        for (std::size_t k = 0; k < entries.size(); ++k) {
            const std::string file = id + "_mask_" + std::to_string(k) + ".pgm";
            write_mask(dir / file, entries[k].mask);
            manifest << id << ' ' << file << ' ' << entries[k].weight << '\n';
        }
    }
}

TabularOracle TabularOracle::load(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "weights.txt");
    if (!manifest) throw IoError("cannot open " + (dir / "weights.txt").string());
    std::map<std::string, std::pair<std::vector<BinaryMask>, std::vector<double>>> staged;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string id, file;
        double weight = 0.0;
        if (!(fields >> id >> file >> weight)) throw FormatError("oracle: malformed manifest line '" + line + "'");
        staged[id].first.push_back(read_mask(dir / file));
        staged[id].second.push_back(weight);
    }
    TabularOracle oracle;
    for (auto& [id, entry] : staged) oracle.add_case(id, entry.first, entry.second);
    return oracle;
}

namespace {

// n * log(p), with 0 * log(0) = 0.
double count_log(double n, double p) { return n == 0.0 ? 0.0 : n * std::log(p); }

}  // namespace

Eigen::VectorXd oracle_posterior(const TabularOracle& oracle, const BinaryMask& xt, int t,
                                 const NoiseSchedule& schedule, const std::string& cond_id) {
    const auto& entries = oracle.entries(cond_id);
    if (!same_shape(xt, entries.front().mask)) throw ParameterError("oracle: x_t shape does not match annotations");

    const double p1 = forward_marginal(1.0, t, schedule);  // P(x_t = 1 | m_i = 1)
    const double p0 = forward_marginal(0.0, t, schedule);  // P(x_t = 1 | m_i = 0)
    const auto x = xt.cast<double>();
    const double ones = x.sum();
    const double n = static_cast<double>(xt.size());

    const auto count = static_cast<Eigen::Index>(entries.size());
    Eigen::VectorXd log_post(count);
    for (Eigen::Index k = 0; k < count; ++k) {
        const auto m = entries[static_cast<std::size_t>(k)].mask.cast<double>();
        const double n11 = (x * m).sum();
        const double m1 = m.sum();
        const double n01 = m1 - n11;          // x=0, m=1
        const double n10 = ones - n11;        // x=1, m=0
        const double n00 = n - m1 - n10;      // x=0, m=0
        const double w = entries[static_cast<std::size_t>(k)].weight;
        log_post(k) = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) + count_log(n11, p1) +
                      count_log(n01, 1.0 - p1) + count_log(n10, p0) + count_log(n00, 1.0 - p0);
    }

    const double top = log_post.maxCoeff();
    Eigen::VectorXd post(count);
    if (!std::isfinite(top)) {
        // x_t is impossible under every annotation (only at t = 0); fall back to the prior.
        for (Eigen::Index k = 0; k < count; ++k) post(k) = entries[static_cast<std::size_t>(k)].weight;
        return post;
    }
    post = log_post.unaryExpr([top](double v) { return std::exp(v - top); });
    return post / post.sum();
}

ProbMap oracle_denoise(const TabularOracle& oracle, const BinaryMask& xt, int t, const NoiseSchedule& schedule,
                       const std::string& cond_id) {
    const Eigen::VectorXd post = oracle_posterior(oracle, xt, t, schedule, cond_id);
    const auto& entries = oracle.entries(cond_id);
    ProbMap out = ProbMap::Zero(xt.rows(), xt.cols());
    for (std::size_t k = 0; k < entries.size(); ++k)
        out += post(static_cast<Eigen::Index>(k)) * entries[k].mask.cast<double>();
    return out.min(1.0).max(0.0);
}

OracleDenoiser::OracleDenoiser(const TabularOracle& oracle, const NoiseSchedule& schedule, std::string cond_id)
    : oracle_(oracle), schedule_(schedule), cond_id_(std::move(cond_id)) {
    oracle_.entries(cond_id_);
}

ProbMap OracleDenoiser::denoise(const BinaryMask& xt, int t, const GrayImage&) const {
    return oracle_denoise(oracle_, xt, t, schedule_, cond_id_);
}

// ---------------------------------------------------------------------------

namespace {

// Writes the feature row for pixel (row, col) into `out`.
template <typename Derived>
void fill_features(const BinaryMask& xt, const GrayImage& cond, Eigen::Index row, Eigen::Index col, int radius,
                   double alpha_bar, Eigen::MatrixBase<Derived>&& out) {
    const Eigen::Index side = 2 * radius + 1;
    const Eigen::Index block = side * side;
    Eigen::Index k = 0;
    for (Eigen::Index dr = -radius; dr <= radius; ++dr) {
        for (Eigen::Index dc = -radius; dc <= radius; ++dc, ++k) {
            const Eigen::Index r = row + dr;
            const Eigen::Index c = col + dc;
            const bool inside = r >= 0 && r < xt.rows() && c >= 0 && c < xt.cols();
            out(k) = inside ? static_cast<double>(xt(r, c)) : 0.0;
            out(block + k) = inside ? static_cast<double>(cond.values(r, c)) / 255.0 : 0.0;
        }
    }
    out(2 * block) = alpha_bar;
    out(2 * block + 1) = 1.0;
}

void check_inputs(const BinaryMask& xt, const GrayImage& cond, int radius) {
    if (radius < 0) throw ParameterError("features: patch radius must be >= 0");
    if (!same_shape(xt, cond.values)) throw ParameterError("features: x_t and cond shapes differ");
}

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& z) { return 1.0 / (1.0 + (-z).exp()); }

}  // namespace

Eigen::VectorXd extract_features(const BinaryMask& xt, const GrayImage& cond, Eigen::Index row, Eigen::Index col,
                                 int radius, double alpha_bar) {
    check_inputs(xt, cond, radius);
    if (row < 0 || row >= xt.rows() || col < 0 || col >= xt.cols())
        throw ParameterError("features: pixel outside the image");
    Eigen::VectorXd f(PatchLogisticModel::feature_length(radius));
    fill_features(xt, cond, row, col, radius, alpha_bar, f.head(f.size()));
    return f;
}

Eigen::MatrixXd feature_matrix(const BinaryMask& xt, const GrayImage& cond, int radius, double alpha_bar) {
    check_inputs(xt, cond, radius);
    Eigen::MatrixXd x(xt.size(), PatchLogisticModel::feature_length(radius));
    for (Eigen::Index r = 0; r < xt.rows(); ++r)
        for (Eigen::Index c = 0; c < xt.cols(); ++c)
            fill_features(xt, cond, r, c, radius, alpha_bar, x.row(r * xt.cols() + c).transpose());
    return x;
}

ProbMap logistic_denoise(const PatchLogisticModel& model, const BinaryMask& xt, int t, const GrayImage& cond,
                         const NoiseSchedule& schedule) {
    if (model.weights.size() != PatchLogisticModel::feature_length(model.radius))
        throw ContractError("logistic model: weight length does not match patch radius");
    const Eigen::MatrixXd x = feature_matrix(xt, cond, model.radius, schedule.alpha_bar(t));
    const Eigen::ArrayXd y = sigmoid((x * model.weights).array());
    return Eigen::Map<const ProbMap>(y.data(), xt.rows(), xt.cols());
}

LogisticDenoiser::LogisticDenoiser(PatchLogisticModel model, const NoiseSchedule& schedule)
    : model_(std::move(model)), schedule_(schedule) {
    if (model_.weights.size() != PatchLogisticModel::feature_length(model_.radius))
        throw ContractError("logistic model: weight length does not match patch radius");
}

ProbMap LogisticDenoiser::denoise(const BinaryMask& xt, int t, const GrayImage& cond) const {
    return logistic_denoise(model_, xt, t, cond, schedule_);
}

double cross_entropy(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, const Eigen::VectorXd& weights) {
    const Eigen::ArrayXd z = (features * weights).array();
    // softplus(z) - y z, stable for large |z|
    const Eigen::ArrayXd softplus = z.max(0.0) + (-z.abs()).exp().log1p();
    return (softplus - targets.array() * z).mean();
}

Eigen::VectorXd cross_entropy_gradient(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                                       const Eigen::VectorXd& weights) {
    const Eigen::VectorXd residual = (sigmoid((features * weights).array()) - targets.array()).matrix();
    return features.transpose() * residual / static_cast<double>(features.rows());
}

std::vector<double> full_batch_descent(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                                       Eigen::VectorXd& weights, int iterations, double learning_rate) {
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(iterations) + 1);
    for (int it = 0; it < iterations; ++it) {
        trace.push_back(cross_entropy(features, targets, weights));
        weights -= learning_rate * cross_entropy_gradient(features, targets, weights);
    }
    trace.push_back(cross_entropy(features, targets, weights));
    return trace;
}

TrainResult train_logistic(const TrainingSet& data, const NoiseSchedule& schedule, const TrainOptions& options,
                           Rng& rng) {
    if (data.empty()) throw ParameterError("train_logistic: empty training set");
    if (options.iterations < 1) throw ParameterError("train_logistic: iterations must be >= 1");
    if (!(options.learning_rate > 0.0)) throw ParameterError("train_logistic: learning rate must be positive");
    for (const auto& c : data) {
        if (c.annotations.empty()) throw ParameterError("train_logistic: case without annotations");
        for (const auto& a : c.annotations)
            if (!same_shape(a, c.cond.values)) throw ParameterError("train_logistic: annotation shape mismatch");
    }

    TrainResult result;
    result.model.radius = options.radius;
    result.model.weights = Eigen::VectorXd::Zero(PatchLogisticModel::feature_length(options.radius));
    result.loss_trace.reserve(static_cast<std::size_t>(options.iterations));

    for (int it = 0; it < options.iterations; ++it) {
        const auto& sample = data[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(data.size()) - 1))];
        const auto& target =
            sample.annotations[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(sample.annotations.size()) - 1))];
        const int t = static_cast<int>(uniform_int(rng, 1, schedule.steps()));
        const BinaryMask xt = sample_forward(target, t, schedule, rng);

        const Eigen::MatrixXd x = feature_matrix(xt, sample.cond, options.radius, schedule.alpha_bar(t));
        const Eigen::VectorXd y = Eigen::Map<const Raster<std::uint8_t>>(target.data(), 1, target.size())
                                      .cast<double>()
                                      .transpose()
                                      .matrix();
        result.loss_trace.push_back(cross_entropy(x, y, result.model.weights));
        result.model.weights -= options.learning_rate * cross_entropy_gradient(x, y, result.model.weights);
    }
    return result;
}

void save_model(const std::filesystem::path& path, const PatchLogisticModel& model) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << model.radius << ' ' << model.weights.size() << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (Eigen::Index k = 0; k < model.weights.size(); ++k) out << model.weights(k) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

PatchLogisticModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    PatchLogisticModel model;
    Eigen::Index length = 0;
    if (!(in >> model.radius >> length)) throw FormatError("model: malformed header in " + path.string());
    if (model.radius < 0 || length != PatchLogisticModel::feature_length(model.radius))
        throw FormatError("model: feature length does not match patch radius");
    model.weights.resize(length);
    for (Eigen::Index k = 0; k < length; ++k)
        if (!(in >> model.weights(k)) || !std::isfinite(model.weights(k)))
            throw FormatError("model: bad weight in " + path.string());
    return model;
}

}  // namespace thinseg
