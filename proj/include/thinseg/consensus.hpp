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

#include <vector>

#include "thinseg/errors.hpp"
#include "thinseg/imaging.hpp"

namespace thinseg {

/// Per-pixel fraction of ensemble members voting foreground.
template <typename Scalar = double>
struct ConsensusMapT {
    ProbMapT<Scalar> level;
    int ensemble_size = 0;
};
using ConsensusMap = ConsensusMapT<double>;

template <typename Scalar = double>
ConsensusMapT<Scalar> aggregate(const std::vector<BinaryMask>& masks) {
    if (masks.empty()) throw ParameterError("aggregate: empty ensemble");
    Raster<int> votes = Raster<int>::Zero(masks.front().rows(), masks.front().cols());
    for (const auto& m : masks) {
        if (!same_shape(m, votes)) throw ParameterError("aggregate: ensemble masks differ in shape");
        check_mask(m, "ensemble mask");
        votes += m.template cast<int>();
    }
    const int k = static_cast<int>(masks.size());
    // count / K per pixel keeps every level an exact (correctly rounded) multiple of 1/K.
    return {votes.unaryExpr([k](int v) { return static_cast<Scalar>(v) / static_cast<Scalar>(k); }), k};
}

/// u = 1 - |2p - 1|: 0 where the ensemble is unanimous, 1 at an even split.
template <typename Derived>
auto uncertainty(const Eigen::ArrayBase<Derived>& level) {
    using Scalar = typename Derived::Scalar;
    return ProbMapT<Scalar>(Scalar(1) - (Scalar(2) * level.derived() - Scalar(1)).abs());
}

template <typename Scalar>
ProbMapT<Scalar> uncertainty(const ConsensusMapT<Scalar>& consensus) {
    return uncertainty(consensus.level);
}

/// Foreground iff level >= tau.
template <typename Derived>
BinaryMask threshold(const Eigen::ArrayBase<Derived>& level, typename Derived::Scalar tau = 0.5) {
    if (!(tau > 0 && tau < 1)) throw ParameterError("threshold: tau must lie in (0,1)");
    return (level.derived() >= tau).template cast<std::uint8_t>();
}

template <typename Scalar>
BinaryMask threshold(const ConsensusMapT<Scalar>& consensus, Scalar tau = 0.5) {
    return threshold(consensus.level, tau);
}

}  // namespace thinseg
