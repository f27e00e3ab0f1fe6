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

/// How one simulated annotator departs from the truth.
struct AnnotatorProfile {
    int jitter = 0;               // max boundary displacement, px
    double gap_probability = 0.0;  // chance of dropping one stretch of the thin wall
    int gap_length = 6;           // rows removed by a gap
};

/// Synthetic thin-structure case: a thick block with a thin sinusoidal wall
/// rising from its top edge.
struct PhantomSpec {
    int size = 64;
    int wall_thickness = 2;
    double wall_amplitude = 3.0;  // px
    double wall_period = 32.0;    // px
    int block_height = 16;
    int block_width = 28;
    double dim_factor = 0.5;  // intensity multiplier on the wall
    double noise_sigma = 10.0;
    int blur_radius = 1;
    std::vector<AnnotatorProfile> annotators = {{0, 0.3, 6}, {1, 0.6, 8}, {1, 0.6, 8}};
    std::uint64_t seed = 0;

    void validate() const;
};

struct PhantomGeometry {
    BinaryMask truth;
    BinaryMask block;
    BinaryMask wall;  // truth minus block
    int wall_top = 0;     // first wall row
    int wall_bottom = 0;  // one past the last wall row
};

struct PhantomCase {
    GrayImage cond;
    BinaryMask truth;
    std::vector<BinaryMask> annotations;
    ROIMask thin_roi;
    PhantomGeometry geometry;
};

/// Euclidean disk dilation / erosion with radius `r` (r = 0 is identity).
BinaryMask dilate(const BinaryMask& mask, int r);
BinaryMask erode(const BinaryMask& mask, int r);

PhantomGeometry make_geometry(const PhantomSpec& spec, Rng& rng);

/// Boundary jitter everywhere, then (with the profile's probability) one gap
/// in the thin wall.
BinaryMask simulate_annotator(const PhantomGeometry& geometry, const AnnotatorProfile& profile, Rng& rng);

/// Convenience for a truth mask whose wall is everything but `block`.
BinaryMask simulate_annotator(const BinaryMask& truth, const BinaryMask& block, const AnnotatorProfile& profile,
                              Rng& rng);

PhantomCase generate_case(const PhantomSpec& spec, Rng& rng);

/// Case i uses make_stream(spec.seed, i).
std::vector<PhantomCase> generate_suite(const PhantomSpec& spec, int count);

/// Case directory: cond.pgm, truth.pgm, ann_<k>.pgm, roi_thin.pgm, case.cfg.
void write_case(const std::filesystem::path& dir, const PhantomCase& c, const PhantomSpec& spec);
PhantomCase read_case(const std::filesystem::path& dir);

/// Writes case_0000 ... plus manifest.txt listing them; returns the directories.
std::vector<std::filesystem::path> write_suite(const std::filesystem::path& root, const std::vector<PhantomCase>& cases,
                                               const PhantomSpec& spec);
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& root);

std::string format_profiles(const std::vector<AnnotatorProfile>& profiles);
std::vector<AnnotatorProfile> parse_profiles(const std::string& text);

}  // namespace thinseg
