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

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace thinseg {

/// Sparse permutohedral lattice for Gaussian filtering in D dimensions.
///
/// filter() approximates  out_i = sum_j exp(-|f_i - f_j|^2 / 2) v_j  for the
/// construction points f (features pre-divided by their kernel widths).
/// Splatting and slicing use barycentric weights on the enclosing simplex;
/// the blur is `blur_passes` rounds of [1 2 1]/4 along each of the D+1
/// lattice directions. Vertices reachable by the blur are allocated up front,
/// so no mass is dropped and the result keeps its absolute scale.
template <int D, typename Scalar = double>
class PermutohedralLattice {
public:
    using Features = Eigen::Matrix<Scalar, Eigen::Dynamic, D>;
    using Values = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Key = std::array<int, D>;

    explicit PermutohedralLattice(const Features& features, int blur_passes = 1) : passes_(blur_passes) {
        const auto n = features.rows();
        // Elevated-space variance: blur contributes (D+1)^2 / 2 per pass, splat
        // and slice together (D+1)^2 / 6.
        const double var = (D + 1.0) * (D + 1.0) * (0.5 * passes_ + 1.0 / 6.0);
        const double inv_std = std::sqrt(var);
        std::array<double, D> scale{};
        for (int i = 0; i < D; ++i) scale[i] = inv_std / std::sqrt((i + 1.0) * (i + 2.0));

        // Vertex density (D+1)^-(D-1/2) and Gaussian normaliser (2 pi var)^(D/2).
        norm_ = std::pow(2.0 * std::numbers::pi * var, 0.5 * D) / std::pow(D + 1.0, D - 0.5);

        vertex_.resize(static_cast<std::size_t>(n) * (D + 1));
        weight_.resize(static_cast<std::size_t>(n) * (D + 1));

        std::array<double, D + 1> elevated{};
        std::array<int, D + 1> rem0{};
        std::array<int, D + 1> rank{};
        std::array<double, D + 2> bary{};
        for (Eigen::Index p = 0; p < n; ++p) {
            double sm = 0.0;
            for (int i = D; i > 0; --i) {
                const double cf = static_cast<double>(features(p, i - 1)) * scale[i - 1];
                elevated[i] = sm - i * cf;
                sm += cf;
            }
            elevated[0] = sm;

            // Closest remainder-zero point, then fix the coordinate sum.
            int sum = 0;
            for (int i = 0; i <= D; ++i) {
                const double v = elevated[i] / (D + 1);
                const int up = static_cast<int>(std::ceil(v)) * (D + 1);
                const int down = static_cast<int>(std::floor(v)) * (D + 1);
                rem0[i] = (up - elevated[i] < elevated[i] - down) ? up : down;
                sum += rem0[i];
            }
            sum /= D + 1;
            rank.fill(0);
            for (int i = 0; i < D; ++i)
                for (int j = i + 1; j <= D; ++j) {
                    if (elevated[i] - rem0[i] < elevated[j] - rem0[j])
                        ++rank[i];
                    else
                        ++rank[j];
                }
            if (sum > 0) {
                for (int i = 0; i <= D; ++i) {
                    if (rank[i] >= D + 1 - sum) {
                        rem0[i] -= D + 1;
                        rank[i] += sum - (D + 1);
                    } else {
                        rank[i] += sum;
                    }
                }
            } else if (sum < 0) {
                for (int i = 0; i <= D; ++i) {
                    if (rank[i] < -sum) {
                        rem0[i] += D + 1;
                        rank[i] += (D + 1) + sum;
                    } else {
                        rank[i] += sum;
                    }
                }
            }

            bary.fill(0.0);
            for (int i = 0; i <= D; ++i) {
                const double delta = (elevated[i] - rem0[i]) / (D + 1);
                bary[D - rank[i]] += delta;
                bary[D + 1 - rank[i]] -= delta;
            }
            bary[0] += 1.0 + bary[D + 1];

            for (int r = 0; r <= D; ++r) {
                Key key{};
                for (int i = 0; i < D; ++i) key[i] = rem0[i] + (rank[i] <= D - r ? r : r - (D + 1));
                const std::size_t slot = static_cast<std::size_t>(p) * (D + 1) + r;
                vertex_[slot] = insert(key);
                weight_[slot] = static_cast<Scalar>(bary[r]);
            }
        }

        // Allocate everything the blur can reach, one direction at a time.
        for (int dir = 0; dir <= D; ++dir)
            for (int pass = 0; pass < passes_; ++pass) {
                const std::size_t existing = keys_.size();
                for (std::size_t v = 0; v < existing; ++v) {
                    insert(neighbour(keys_[v], dir, +1));
                    insert(neighbour(keys_[v], dir, -1));
                }
            }

        neighbours_.assign(static_cast<std::size_t>(D + 1), std::vector<std::array<int, 2>>(keys_.size()));
        for (int dir = 0; dir <= D; ++dir)
            for (std::size_t v = 0; v < keys_.size(); ++v)
                neighbours_[dir][v] = {find(neighbour(keys_[v], dir, +1)), find(neighbour(keys_[v], dir, -1))};
    }

    std::size_t vertex_count() const { return keys_.size(); }
    Eigen::Index point_count() const { return static_cast<Eigen::Index>(vertex_.size() / (D + 1)); }

    /// values: one row per construction point, one column per channel.
    Values filter(const Values& values) const {
        const auto n = point_count();
        const auto channels = values.cols();
        Values grid = Values::Zero(static_cast<Eigen::Index>(keys_.size()), channels);
        for (Eigen::Index p = 0; p < n; ++p)
            for (int r = 0; r <= D; ++r) {
                const std::size_t slot = static_cast<std::size_t>(p) * (D + 1) + r;
                grid.row(vertex_[slot]) += weight_[slot] * values.row(p);
            }

        Values next(grid.rows(), channels);
        for (int dir = 0; dir <= D; ++dir)
            for (int pass = 0; pass < passes_; ++pass) {
                for (Eigen::Index v = 0; v < grid.rows(); ++v) {
                    const auto& nb = neighbours_[dir][static_cast<std::size_t>(v)];
                    next.row(v) = Scalar(0.5) * grid.row(v);
                    if (nb[0] >= 0) next.row(v) += Scalar(0.25) * grid.row(nb[0]);
                    if (nb[1] >= 0) next.row(v) += Scalar(0.25) * grid.row(nb[1]);
                }
                grid.swap(next);
            }

        Values out = Values::Zero(n, channels);
        for (Eigen::Index p = 0; p < n; ++p)
            for (int r = 0; r <= D; ++r) {
                const std::size_t slot = static_cast<std::size_t>(p) * (D + 1) + r;
                out.row(p) += weight_[slot] * grid.row(vertex_[slot]);
            }
        return out * static_cast<Scalar>(norm_);
    }

    /// Response of each construction point to its own unit value, i.e. the
    /// diagonal of the operator applied by filter().
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> self_response() const {
        // Blur impulse response: per direction, binomial(2P, P + k) / 4^P for
        // a step of k along it; summed over every combination of steps.
        std::vector<double> taps(static_cast<std::size_t>(2 * passes_ + 1));
        for (int k = -passes_; k <= passes_; ++k)
            taps[static_cast<std::size_t>(k + passes_)] =
                std::exp(std::lgamma(2.0 * passes_ + 1) - std::lgamma(passes_ + k + 1.0) -
                         std::lgamma(passes_ - k + 1.0) - 2.0 * passes_ * std::log(2.0));
        std::unordered_map<Key, double, KeyHash> impulse;
        std::array<int, D + 1> steps{};
        steps.fill(-passes_);
        for (;;) {
            Key offset{};
            double w = 1.0;
            for (int dir = 0; dir <= D; ++dir) {
                w *= taps[static_cast<std::size_t>(steps[dir] + passes_)];
                for (int i = 0; i < D; ++i) offset[i] += steps[dir] * (i == dir ? -D : 1);
            }
            impulse[offset] += w;
            int d = 0;
            while (d <= D && ++steps[d] > passes_) steps[d++] = -passes_;
            if (d > D) break;
        }
        const auto n = point_count();
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(n);
        for (Eigen::Index p = 0; p < n; ++p) {
            double acc = 0.0;
            for (int r = 0; r <= D; ++r)
                for (int s = 0; s <= D; ++s) {
                    const std::size_t a = static_cast<std::size_t>(p) * (D + 1) + r;
                    const std::size_t b = static_cast<std::size_t>(p) * (D + 1) + s;
                    Key offset{};
                    for (int i = 0; i < D; ++i) offset[i] = keys_[vertex_[b]][i] - keys_[vertex_[a]][i];
                    const auto it = impulse.find(offset);
                    if (it != impulse.end()) acc += weight_[a] * weight_[b] * it->second;
                }
            out(p) = static_cast<Scalar>(acc * norm_);
        }
        return out;
    }

private:
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::size_t h = 0xcbf29ce484222325ULL;
            for (int v : k) h = (h ^ static_cast<std::uint32_t>(v)) * 0x100000001b3ULL;
            return h;
        }
    };

    // Lattice step along direction `dir`: -D on that coordinate, +1 on the
    // others (the implicit last coordinate is dropped from the key).
    static Key neighbour(const Key& key, int dir, int sign) {
        Key out = key;
        for (int i = 0; i < D; ++i) out[i] += sign * (i == dir ? -D : 1);
        return out;
    }

    int insert(const Key& key) {
        const auto [it, inserted] = index_.try_emplace(key, static_cast<int>(keys_.size()));
        if (inserted) keys_.push_back(key);
        return it->second;
    }

    int find(const Key& key) const {
        const auto it = index_.find(key);
        return it == index_.end() ? -1 : it->second;
    }

    int passes_;
    double norm_ = 1.0;
    std::vector<int> vertex_;
    std::vector<Scalar> weight_;
    std::vector<Key> keys_;
    std::unordered_map<Key, int, KeyHash> index_;
    std::vector<std::vector<std::array<int, 2>>> neighbours_;
};

}  // namespace thinseg
