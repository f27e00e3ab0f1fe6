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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "thinseg/errors.hpp"
#include "thinseg/imaging.hpp"
#include "thinseg/permutohedral.hpp"

namespace thinseg {

// Consensus-driven correction. Labels x minimise
//
//   E(x) = sum_i -log P(x_i) + sum_{i<j} [x_i != x_j] K(i,j)
//   K(i,j) = w1 exp(-|p_i-p_j|^2/2ta^2 - |c_i-c_j|^2/2tb^2 - dd^2/2tg^2)
//          + w2 exp(-|p_i-p_j|^2/2td^2)
//
// over all pixel pairs, where p is position, c = 255 * consensus and dd the
// wrapped difference of gradient directions. Inference is mean-field on the
// dense model followed by an ICM polish.

enum class UpdateMode { parallel, sequential };
enum class MessageBackend { naive, window, lattice };
enum class DirectionSource { consensus, image };

inline std::string to_string(UpdateMode m) { return m == UpdateMode::parallel ? "parallel" : "sequential"; }
inline std::string to_string(MessageBackend b) {
    switch (b) {
        case MessageBackend::naive: return "naive";
        case MessageBackend::window: return "window";
        case MessageBackend::lattice: return "lattice";
    }
    return "naive";
}
inline std::string to_string(DirectionSource s) { return s == DirectionSource::consensus ? "consensus" : "image"; }

inline UpdateMode parse_update_mode(const std::string& s) {
    if (s == "parallel") return UpdateMode::parallel;
    if (s == "sequential") return UpdateMode::sequential;
    throw ParameterError("unknown mean-field update mode '" + s + "'");
}
inline MessageBackend parse_backend(const std::string& s) {
    if (s == "naive") return MessageBackend::naive;
    if (s == "window") return MessageBackend::window;
    if (s == "lattice") return MessageBackend::lattice;
    throw ParameterError("unknown message-passing backend '" + s + "'");
}
inline DirectionSource parse_direction_source(const std::string& s) {
    if (s == "consensus") return DirectionSource::consensus;
    if (s == "image") return DirectionSource::image;
    throw ParameterError("unknown direction source '" + s + "'");
}

template <typename Scalar = double>
struct CorrectionParamsT {
    Scalar w1 = 15;           // appearance kernel weight
    Scalar w2 = 1;            // smoothness kernel weight
    Scalar theta_alpha = 80;  // px, appearance position width
    Scalar theta_beta = 60;   // consensus width on the 0-255 scale
    Scalar theta_gamma = 2;   // rad, gradient direction width
    Scalar theta_delta = 3;   // px, smoothness position width
    int iterations = 10;
    UpdateMode mode = UpdateMode::parallel;
    MessageBackend backend = MessageBackend::naive;
    DirectionSource direction = DirectionSource::consensus;
    /// Window backend truncates each kernel at window_sigmas * theta.
    Scalar window_sigmas = 3;
    int lattice_blur_passes = 2;
    int icm_sweeps = 20;

    void validate() const {
        if (!(theta_alpha > 0 && theta_beta > 0 && theta_gamma > 0 && theta_delta > 0))
            throw ParameterError("correction: every theta must be positive");
        if (!(w1 >= 0 && w2 >= 0)) throw ParameterError("correction: kernel weights must be >= 0");
        if (iterations < 1) throw ParameterError("correction: iterations must be >= 1");
        if (!(window_sigmas > 0)) throw ParameterError("correction: window_sigmas must be positive");
        if (lattice_blur_passes < 1) throw ParameterError("correction: lattice_blur_passes must be >= 1");
        if (icm_sweeps < 0) throw ParameterError("correction: icm_sweeps must be >= 0");
    }
};
using CorrectionParams = CorrectionParamsT<double>;

template <typename Scalar = double>
struct PixelFeature {
    Scalar row = 0;
    Scalar col = 0;
    Scalar level = 0;      // 255 * consensus
    Scalar direction = 0;  // radians in (-pi, pi]
    bool flat = true;      // gradient magnitude below threshold, direction undefined
};

/// Per-pixel kernel features, stored as planes.
template <typename Scalar = double>
struct FeatureField {
    ProbMapT<Scalar> probability;  // consensus p, the unary evidence
    Raster<Scalar> level;
    Raster<Scalar> direction;
    BinaryMask flat;

    Eigen::Index rows() const { return level.rows(); }
    Eigen::Index cols() const { return level.cols(); }
    Eigen::Index size() const { return level.size(); }

    PixelFeature<Scalar> pixel(Eigen::Index i) const {
        return {static_cast<Scalar>(i / cols()), static_cast<Scalar>(i % cols()), level.data()[i],
                direction.data()[i], flat.data()[i] != 0};
    }
};

template <typename Scalar>
constexpr Scalar kFlatGradient = Scalar(1e-6);
template <typename Scalar>
constexpr Scalar kUnaryClamp = Scalar(1e-6);

/// 3x3 Sobel gradient with replicated border; returns (gx, gy) with gx
/// positive towards increasing column and gy towards increasing row.
template <typename Scalar>
std::pair<Raster<Scalar>, Raster<Scalar>> sobel(const Raster<Scalar>& image) {
    const Eigen::Index rows = image.rows();
    const Eigen::Index cols = image.cols();
    auto at = [&](Eigen::Index r, Eigen::Index c) {
        return image(std::clamp<Eigen::Index>(r, 0, rows - 1), std::clamp<Eigen::Index>(c, 0, cols - 1));
    };
    Raster<Scalar> gx(rows, cols), gy(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            gx(r, c) = (at(r - 1, c + 1) - at(r - 1, c - 1)) + Scalar(2) * (at(r, c + 1) - at(r, c - 1)) +
                       (at(r + 1, c + 1) - at(r + 1, c - 1));
            gy(r, c) = (at(r + 1, c - 1) - at(r - 1, c - 1)) + Scalar(2) * (at(r + 1, c) - at(r - 1, c)) +
                       (at(r + 1, c + 1) - at(r - 1, c + 1));
        }
    return {gx, gy};
}

/// Features from a consensus map; gradient directions come from
/// `direction_image` (same shape) when given, otherwise from the map itself.
template <typename Scalar>
FeatureField<Scalar> compute_features(const ProbMapT<Scalar>& consensus,
                                      const std::type_identity_t<Raster<Scalar>>* direction_image = nullptr) {
    if (consensus.size() == 0) throw ParameterError("compute_features: empty consensus map");
    if (!((consensus >= Scalar(0)) && (consensus <= Scalar(1))).all())
        throw ParameterError("compute_features: consensus outside [0,1]");
    if (direction_image && !same_shape(*direction_image, consensus))
        throw ParameterError("compute_features: direction image shape mismatch");

    FeatureField<Scalar> f;
    f.probability = consensus;
    f.level = Scalar(255) * consensus;
    const auto [gx, gy] = sobel<Scalar>(direction_image ? *direction_image : Raster<Scalar>(consensus));
    f.direction.resize(consensus.rows(), consensus.cols());
    f.flat.resize(consensus.rows(), consensus.cols());
    for (Eigen::Index i = 0; i < consensus.size(); ++i) {
        const Scalar x = gx.data()[i];
        const Scalar y = gy.data()[i];
        if (std::hypot(x, y) < kFlatGradient<Scalar>) {
            f.flat.data()[i] = 1;
            f.direction.data()[i] = 0;
        } else {
            Scalar d = std::atan2(y, x);
            if (d <= -std::numbers::pi_v<Scalar>) d = std::numbers::pi_v<Scalar>;
            f.flat.data()[i] = 0;
            f.direction.data()[i] = d;
        }
    }
    return f;
}

/// -log P(label) with P clamped to [1e-6, 1 - 1e-6].
template <typename Scalar>
Scalar unary(Scalar consensus, int label) {
    const Scalar p = std::clamp(label ? consensus : Scalar(1) - consensus, kUnaryClamp<Scalar>,
                                Scalar(1) - kUnaryClamp<Scalar>);
    return -std::log(p);
}

/// Wrapped angular distance in [0, pi].
template <typename Scalar>
Scalar angle_distance(Scalar a, Scalar b) {
    const Scalar diff = std::abs(a - b);
    return std::min(diff, Scalar(2) * std::numbers::pi_v<Scalar> - diff);
}

/// K(i,j), without the Potts factor. Flat pixels match every direction.
template <typename Scalar>
Scalar pairwise_kernel(const PixelFeature<Scalar>& a, const PixelFeature<Scalar>& b,
                       const CorrectionParamsT<Scalar>& params) {
    const Scalar dr = a.row - b.row;
    const Scalar dc = a.col - b.col;
    const Scalar pos2 = dr * dr + dc * dc;
    const Scalar dl = a.level - b.level;
    const Scalar dd = (a.flat || b.flat) ? Scalar(0) : angle_distance(a.direction, b.direction);
    const Scalar ta = params.theta_alpha, tb = params.theta_beta, tg = params.theta_gamma, td = params.theta_delta;
    return params.w1 * std::exp(-pos2 / (Scalar(2) * ta * ta) - dl * dl / (Scalar(2) * tb * tb) -
                                dd * dd / (Scalar(2) * tg * tg)) +
           params.w2 * std::exp(-pos2 / (Scalar(2) * td * td));
}

namespace detail {

template <typename Scalar>
void check_labels(const BinaryMask& labels, const FeatureField<Scalar>& features) {
    if (!same_shape(labels, features.level)) throw ParameterError("correction: label field shape mismatch");
    check_mask(labels, "label field");
}

template <typename Scalar>
Scalar unary_energy(const BinaryMask& labels, const FeatureField<Scalar>& features) {
    Scalar e = 0;
    for (Eigen::Index i = 0; i < labels.size(); ++i) e += unary(features.probability.data()[i], labels.data()[i]);
    return e;
}

}  // namespace detail

/// Energy of a labelling, each unordered pair counted once.
template <typename Scalar>
Scalar total_energy(const BinaryMask& labels, const FeatureField<Scalar>& features,
                    const CorrectionParamsT<Scalar>& params) {
    detail::check_labels(labels, features);
    const Eigen::Index n = labels.size();
    std::vector<Eigen::Index> fg, bg;
    for (Eigen::Index i = 0; i < n; ++i) (labels.data()[i] ? fg : bg).push_back(i);
    Scalar pair = 0;
    for (Eigen::Index i : fg) {
        const auto fi = features.pixel(i);
        for (Eigen::Index j : bg) pair += pairwise_kernel(fi, features.pixel(j), params);
    }
    return detail::unary_energy(labels, features) + pair;
}

/// sum_{j != i} K(i,j) Q_j and sum_{j != i} K(i,j) (1 - Q_j).
template <typename Scalar = double>
struct PairwiseMessages {
    Raster<Scalar> foreground;
    Raster<Scalar> background;
};

namespace detail {

template <typename Scalar>
PairwiseMessages<Scalar> naive_messages(const ProbMapT<Scalar>& q, const FeatureField<Scalar>& features,
                                        const CorrectionParamsT<Scalar>& params) {
    const Eigen::Index n = q.size();
    PairwiseMessages<Scalar> m{Raster<Scalar>::Zero(q.rows(), q.cols()), Raster<Scalar>::Zero(q.rows(), q.cols())};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto fi = features.pixel(i);
        Scalar fg = 0, bg = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const Scalar k = pairwise_kernel(fi, features.pixel(j), params);
            fg += k * q.data()[j];
            bg += k * (Scalar(1) - q.data()[j]);
        }
        m.foreground.data()[i] = fg;
        m.background.data()[i] = bg;
    }
    return m;
}

template <typename Scalar>
PairwiseMessages<Scalar> window_messages(const ProbMapT<Scalar>& q, const FeatureField<Scalar>& features,
                                         const CorrectionParamsT<Scalar>& params) {
    const Eigen::Index rows = q.rows(), cols = q.cols();
    const Scalar ra = std::ceil(params.window_sigmas * params.theta_alpha);
    const Scalar rd = std::ceil(params.window_sigmas * params.theta_delta);
    const auto reach = static_cast<Eigen::Index>(std::min<Scalar>(std::max(ra, rd), Scalar(rows + cols)));
    CorrectionParamsT<Scalar> appearance = params, smoothness = params;
    appearance.w2 = 0;
    smoothness.w1 = 0;

    PairwiseMessages<Scalar> m{Raster<Scalar>::Zero(rows, cols), Raster<Scalar>::Zero(rows, cols)};
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            const Eigen::Index i = r * cols + c;
            const auto fi = features.pixel(i);
            Scalar fg = 0, bg = 0;
            for (Eigen::Index rr = std::max<Eigen::Index>(0, r - reach); rr <= std::min(rows - 1, r + reach); ++rr)
                for (Eigen::Index cc = std::max<Eigen::Index>(0, c - reach); cc <= std::min(cols - 1, c + reach);
                     ++cc) {
                    const Eigen::Index j = rr * cols + cc;
                    if (j == i) continue;
                    const auto dist2 = static_cast<Scalar>((rr - r) * (rr - r) + (cc - c) * (cc - c));
                    const auto fj = features.pixel(j);
                    Scalar k = 0;
                    if (dist2 <= ra * ra && dist2 <= rd * rd) {
                        k = pairwise_kernel(fi, fj, params);
                    } else {
                        if (dist2 <= ra * ra) k += pairwise_kernel(fi, fj, appearance);
                        if (dist2 <= rd * rd) k += pairwise_kernel(fi, fj, smoothness);
                    }
                    fg += k * q.data()[j];
                    bg += k * (Scalar(1) - q.data()[j]);
                }
            m.foreground.data()[i] = fg;
            m.background.data()[i] = bg;
        }
    return m;
}

template <typename Scalar>
PairwiseMessages<Scalar> lattice_messages(const ProbMapT<Scalar>& q, const FeatureField<Scalar>& features,
                                          const CorrectionParamsT<Scalar>& params) {
    using Values = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const Eigen::Index n = q.size();
    const int passes = params.lattice_blur_passes;

    // Smoothness: Gaussian over position only.
    Eigen::Matrix<Scalar, Eigen::Dynamic, 2> pos(n, 2);
    // Appearance without the direction term: position and consensus level.
    Eigen::Matrix<Scalar, Eigen::Dynamic, 3> app3(n, 3);
    Values v2(n, 2), v4(n, 4);
    std::vector<Eigen::Index> oriented;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto f = features.pixel(i);
        pos.row(i) << f.row / params.theta_delta, f.col / params.theta_delta;
        app3.row(i) << f.row / params.theta_alpha, f.col / params.theta_alpha, f.level / params.theta_beta;
        const Scalar qi = q.data()[i];
        v2.row(i) << qi, Scalar(1) - qi;
        // Channels 2,3 carry only flat sources; they feed oriented targets,
        // whose kernel to a flat source has no direction term.
        v4.row(i) << qi, Scalar(1) - qi, f.flat ? qi : Scalar(0), f.flat ? Scalar(1) - qi : Scalar(0);
        if (!f.flat) oriented.push_back(i);
    }

    const PermutohedralLattice<2, Scalar> smooth_lattice(pos, passes);
    const PermutohedralLattice<3, Scalar> app_lattice(app3, passes);
    const Values smooth = smooth_lattice.filter(v2);
    const Values app = app_lattice.filter(v4);
    // Each filter includes j = i; remove exactly what the lattice put there.
    Raster<Scalar> self(q.rows(), q.cols());
    const auto smooth_self = smooth_lattice.self_response();
    const auto app_self = app_lattice.self_response();
    for (Eigen::Index i = 0; i < n; ++i)
        self.data()[i] = params.w2 * smooth_self(i) + (features.flat.data()[i] ? params.w1 * app_self(i) : Scalar(0));

    // Oriented pairs: the wrapped angular Gaussian is embedded as a unit
    // circle scaled by 1/theta_gamma, exact to second order in the angle.
    Values oriented_sum;
    if (!oriented.empty()) {
        const auto m = static_cast<Eigen::Index>(oriented.size());
        Eigen::Matrix<Scalar, Eigen::Dynamic, 5> app5(m, 5);
        Values v(m, 2);
        for (Eigen::Index k = 0; k < m; ++k) {
            const Eigen::Index i = oriented[static_cast<std::size_t>(k)];
            const auto f = features.pixel(i);
            app5.row(k) << f.row / params.theta_alpha, f.col / params.theta_alpha, f.level / params.theta_beta,
                std::cos(f.direction) / params.theta_gamma, std::sin(f.direction) / params.theta_gamma;
            v.row(k) = v2.row(i);
        }
        const PermutohedralLattice<5, Scalar> oriented_lattice(app5, passes);
        oriented_sum = oriented_lattice.filter(v);
        const auto oriented_self = oriented_lattice.self_response();
        for (Eigen::Index k = 0; k < m; ++k)
            self.data()[oriented[static_cast<std::size_t>(k)]] += params.w1 * oriented_self(k);
    }

    PairwiseMessages<Scalar> out{Raster<Scalar>(q.rows(), q.cols()), Raster<Scalar>(q.rows(), q.cols())};
    for (Eigen::Index i = 0; i < n; ++i) {
        out.foreground.data()[i] = params.w2 * smooth(i, 0);
        out.background.data()[i] = params.w2 * smooth(i, 1);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (features.flat.data()[i]) {
            out.foreground.data()[i] += params.w1 * app(i, 0);
            out.background.data()[i] += params.w1 * app(i, 1);
        } else {
            out.foreground.data()[i] += params.w1 * app(i, 2);
            out.background.data()[i] += params.w1 * app(i, 3);
        }
    }
    for (std::size_t k = 0; k < oriented.size(); ++k) {
        const Eigen::Index i = oriented[k];
        out.foreground.data()[i] += params.w1 * oriented_sum(static_cast<Eigen::Index>(k), 0);
        out.background.data()[i] += params.w1 * oriented_sum(static_cast<Eigen::Index>(k), 1);
    }
    out.foreground -= self * q;
    out.background -= self * (Scalar(1) - q);
    return out;
}

}  // namespace detail

template <typename Scalar>
PairwiseMessages<Scalar> message_pass(const ProbMapT<Scalar>& q, const FeatureField<Scalar>& features,
                                      const CorrectionParamsT<Scalar>& params, MessageBackend backend) {
    if (!same_shape(q, features.level)) throw ParameterError("message_pass: marginal field shape mismatch");
    switch (backend) {
        case MessageBackend::naive: return detail::naive_messages(q, features, params);
        case MessageBackend::window: return detail::window_messages(q, features, params);
        case MessageBackend::lattice: return detail::lattice_messages(q, features, params);
    }
    throw ParameterError("message_pass: unknown backend");
}

/// Mean-field free energy
///   F(Q) = sum_i sum_l Q_i(l) psi_i(l) + sum_{i<j} K(i,j) [Q_i(0)Q_j(1) + Q_i(1)Q_j(0)] - H(Q).
template <typename Scalar>
Scalar free_energy(const ProbMapT<Scalar>& q, const FeatureField<Scalar>& features,
                   const CorrectionParamsT<Scalar>& params) {
    if (!same_shape(q, features.level)) throw ParameterError("free_energy: marginal field shape mismatch");
    const Eigen::Index n = q.size();
    auto xlogx = [](Scalar v) { return v > Scalar(0) ? v * std::log(v) : Scalar(0); };
    Scalar e = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar qi = q.data()[i];
        const Scalar p = features.probability.data()[i];
        e += qi * unary(p, 1) + (Scalar(1) - qi) * unary(p, 0) + xlogx(qi) + xlogx(Scalar(1) - qi);
        const auto fi = features.pixel(i);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const Scalar qj = q.data()[j];
            e += pairwise_kernel(fi, features.pixel(j), params) * ((Scalar(1) - qi) * qj + qi * (Scalar(1) - qj));
        }
    }
    return e;
}

template <typename Scalar = double>
struct MeanFieldResult {
    ProbMapT<Scalar> marginals;
    /// Free energy after each iteration (empty unless requested).
    std::vector<Scalar> free_energy_trace;
};

namespace detail {

// Q_i(1) = exp(-psi(1) - bg) / (exp(-psi(1) - bg) + exp(-psi(0) - fg))
template <typename Scalar>
Scalar mean_field_update(Scalar p, Scalar fg_mass, Scalar bg_mass) {
    const Scalar e1 = unary(p, 1) + bg_mass;
    const Scalar e0 = unary(p, 0) + fg_mass;
    return Scalar(1) / (Scalar(1) + std::exp(e1 - e0));
}

}  // namespace detail

/// Mean-field inference started from Q = consensus. Parallel mode updates
/// every pixel from the previous sweep's messages (computed by the configured
/// backend); sequential mode updates pixels in place in row-major order with
/// exact messages, each update being the coordinate minimiser of F.
/// `on_update`, when given, is called after every single-pixel update in
/// sequential mode and after every sweep in parallel mode.
template <typename Scalar, typename OnUpdate>
MeanFieldResult<Scalar> mean_field(const FeatureField<Scalar>& features, const CorrectionParamsT<Scalar>& params,
                                   bool trace, OnUpdate&& on_update) {
    params.validate();
    MeanFieldResult<Scalar> result;
    ProbMapT<Scalar>& q = result.marginals;
    q = features.probability;
    const Eigen::Index n = q.size();

    for (int it = 0; it < params.iterations; ++it) {
        if (params.mode == UpdateMode::parallel) {
            const auto m = message_pass(q, features, params, params.backend);
            ProbMapT<Scalar> next(q.rows(), q.cols());
            for (Eigen::Index i = 0; i < n; ++i)
                next.data()[i] = detail::mean_field_update(features.probability.data()[i], m.foreground.data()[i],
                                                           m.background.data()[i]);
            q.swap(next);
            on_update(static_cast<const ProbMapT<Scalar>&>(q));
        } else {
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto fi = features.pixel(i);
                Scalar fg = 0, bg = 0;
                for (Eigen::Index j = 0; j < n; ++j) {
                    if (j == i) continue;
                    const Scalar k = pairwise_kernel(fi, features.pixel(j), params);
                    fg += k * q.data()[j];
                    bg += k * (Scalar(1) - q.data()[j]);
                }
                q.data()[i] = detail::mean_field_update(features.probability.data()[i], fg, bg);
                on_update(static_cast<const ProbMapT<Scalar>&>(q));
            }
        }
        if (trace) result.free_energy_trace.push_back(free_energy(q, features, params));
    }
    return result;
}

template <typename Scalar>
MeanFieldResult<Scalar> mean_field(const FeatureField<Scalar>& features, const CorrectionParamsT<Scalar>& params,
                                   bool trace = false) {
    return mean_field(features, params, trace, [](const ProbMapT<Scalar>&) {});
}

/// Foreground iff Q >= 0.5.
template <typename Derived>
BinaryMask map_labels(const Eigen::ArrayBase<Derived>& q) {
    return (q.derived() >= typename Derived::Scalar(0.5)).template cast<std::uint8_t>();
}

/// Greedy single-pixel flips in row-major sweeps; a flip is taken only when
/// it lowers E by more than a rounding margin, so E never increases.
template <typename Scalar>
BinaryMask icm_refine(const BinaryMask& start, const FeatureField<Scalar>& features,
                      const CorrectionParamsT<Scalar>& params, int max_sweeps = 20) {
    detail::check_labels(start, features);
    BinaryMask x = start;
    const Eigen::Index n = x.size();
    // mass1_i = sum_{j != i} K(i,j) x_j,  mass0_i = sum_{j != i} K(i,j) (1 - x_j)
    std::vector<Scalar> mass1(static_cast<std::size_t>(n), 0), mass0(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto fi = features.pixel(i);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const Scalar k = pairwise_kernel(fi, features.pixel(j), params);
            (x.data()[j] ? mass1 : mass0)[static_cast<std::size_t>(i)] += k;
            (x.data()[i] ? mass1 : mass0)[static_cast<std::size_t>(j)] += k;
        }
    }

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool flipped = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto si = static_cast<std::size_t>(i);
            const int cur = x.data()[i];
            const Scalar p = features.probability.data()[i];
            // Pairwise cost of label l at i is the mass of the other label.
            const Scalar cost_cur = unary(p, cur) + (cur ? mass0[si] : mass1[si]);
            const Scalar cost_flip = unary(p, 1 - cur) + (cur ? mass1[si] : mass0[si]);
            const Scalar margin = Scalar(1e-9) * (Scalar(1) + std::abs(cost_cur) + std::abs(cost_flip));
            if (cost_flip < cost_cur - margin) {
                x.data()[i] = static_cast<std::uint8_t>(1 - cur);
                flipped = true;
                const auto fi = features.pixel(i);
                for (Eigen::Index j = 0; j < n; ++j) {
                    if (j == i) continue;
                    const Scalar k = pairwise_kernel(fi, features.pixel(j), params);
                    const auto sj = static_cast<std::size_t>(j);
                    if (cur) {
                        mass1[sj] -= k;
                        mass0[sj] += k;
                    } else {
                        mass0[sj] -= k;
                        mass1[sj] += k;
                    }
                }
            }
        }
        if (!flipped) break;
    }
    return x;
}

constexpr Eigen::Index kBruteForceMaxPixels = 20;

/// Exhaustive minimiser of E over all 2^N labellings. Labelling codes put
/// pixel i (row-major) at bit i; ties go to the smallest code.
template <typename Scalar>
BinaryMask brute_force_map(const FeatureField<Scalar>& features, const CorrectionParamsT<Scalar>& params) {
    const Eigen::Index n = features.size();
    if (n > kBruteForceMaxPixels)
        throw SizeError("brute_force_map: " + std::to_string(n) + " pixels exceeds the limit of 20");
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> k = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) k(i, j) = pairwise_kernel(features.pixel(i), features.pixel(j), params);
    std::vector<Scalar> u0(static_cast<std::size_t>(n)), u1(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        u0[static_cast<std::size_t>(i)] = unary(features.probability.data()[i], 0);
        u1[static_cast<std::size_t>(i)] = unary(features.probability.data()[i], 1);
    }

    std::uint32_t best_code = 0;
    Scalar best = std::numeric_limits<Scalar>::infinity();
    const std::uint32_t total = 1u << n;
    for (std::uint32_t code = 0; code < total; ++code) {
        Scalar e = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool xi = (code >> i) & 1u;
            e += xi ? u1[static_cast<std::size_t>(i)] : u0[static_cast<std::size_t>(i)];
            for (Eigen::Index j = i + 1; j < n; ++j)
                if (xi != static_cast<bool>((code >> j) & 1u)) e += k(i, j);
        }
        if (e < best) {
            best = e;
            best_code = code;
        }
    }
    BinaryMask out(features.rows(), features.cols());
    for (Eigen::Index i = 0; i < n; ++i) out.data()[i] = static_cast<std::uint8_t>((best_code >> i) & 1u);
    return out;
}

template <typename Scalar = double>
struct CorrectionResult {
    BinaryMask labels;
    ProbMapT<Scalar> marginals;
    std::vector<Scalar> free_energy_trace;
    Scalar energy_mean_field = 0;  // E(map_labels(Q))
    Scalar energy = 0;             // E(labels) after ICM
};

/// Full correction: features, mean-field, MAP labels, ICM polish.
template <typename Scalar>
CorrectionResult<Scalar> correct(const ProbMapT<Scalar>& consensus, const CorrectionParamsT<Scalar>& params,
                                 const std::type_identity_t<Raster<Scalar>>* direction_image = nullptr, bool trace = false) {
    params.validate();
    if (params.direction == DirectionSource::image && direction_image == nullptr)
        throw ParameterError("correct: direction source 'image' needs a conditioning image");
    const auto features =
        compute_features(consensus, params.direction == DirectionSource::image ? direction_image : nullptr);
    auto mf = mean_field(features, params, trace);
    CorrectionResult<Scalar> out;
    const BinaryMask start = map_labels(mf.marginals);
    out.energy_mean_field = total_energy(start, features, params);
    out.labels = icm_refine(start, features, params, params.icm_sweeps);
    out.energy = total_energy(out.labels, features, params);
    out.marginals = std::move(mf.marginals);
    out.free_energy_trace = std::move(mf.free_energy_trace);
    return out;
}

}  // namespace thinseg
