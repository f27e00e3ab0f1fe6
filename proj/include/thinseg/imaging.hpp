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

#include <Eigen/Core>

namespace thinseg {

/// Row-major dense 2D raster; (row, col) indexing, row 0 at the top.
template <typename T>
using Raster = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// {0,1} labels.
using BinaryMask = Raster<std::uint8_t>;
/// {0,1} evaluation region.
using ROIMask = BinaryMask;
/// Per-pixel probabilities in [0,1].
template <typename Scalar = double>
using ProbMapT = Raster<Scalar>;
using ProbMap = ProbMapT<double>;

/// Physical pixel size in millimetres.
struct Spacing {
    double row = 1.0;
    double col = 1.0;
};

/// Raw CT slice in Hounsfield units.
struct HUImage {
    Raster<std::int32_t> values;
    Spacing spacing;
};

/// 8-bit conditioning image.
struct GrayImage {
    Raster<std::uint8_t> values;
    Spacing spacing;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

template <typename A, typename B>
bool same_shape(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b) {
    return a.rows() == b.rows() && a.cols() == b.cols();
}

/// Throws ParameterError unless every label is 0 or 1 and the mask is non-empty.
void check_mask(const BinaryMask& mask, const char* what = "mask");
/// Throws ParameterError unless every value lies in [0,1].
void check_prob(const ProbMap& map, const char* what = "probability map");

// ---------------------------------------------------------------------------
// Binary PGM (P5). Header is written as "P5\n<w> <h>\n<maxval>\n" followed by
// big-endian samples (one byte per sample when maxval < 256). The reader also
// accepts arbitrary whitespace and '#' comments in the header.

/// Raw PGM samples, before interpretation as image, mask or probabilities.
struct PgmData {
    Raster<std::uint16_t> samples;
    std::uint16_t maxval = 255;
};

PgmData read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const PgmData& data);

/// 8-bit image. Spacing is not stored in PGM and is set to `spacing`.
GrayImage read_gray(const std::filesystem::path& path, Spacing spacing = {});
void write_gray(const std::filesystem::path& path, const GrayImage& image);

/// Masks are stored as {0,255}; samples >= 128 read back as 1.
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// Probabilities are stored as 16-bit words round(p * 65535).
ProbMap read_prob(const std::filesystem::path& path);
void write_prob(const std::filesystem::path& path, const ProbMap& map);

/// Quantisation used by write_prob.
std::uint16_t quantize_prob(double p);

// ---------------------------------------------------------------------------
// Preprocessing

/// Linear HU window: clamp(round_half_up((hu - (level - width/2)) / width * 255), 0, 255).
GrayImage hu_window(const HUImage& image, double level = 100.0, double width = 600.0);

/// Output shape for resampling `rows x cols` from `from` spacing to `to` spacing.
Eigen::Index resampled_extent(Eigen::Index extent, double from, double to);

/// Bilinear resampling to isotropic `target_spacing` mm. Pixel centres are
/// aligned, so equal spacing is an exact identity.
GrayImage resample_bilinear(const GrayImage& image, double target_spacing = 0.4);

/// Nearest-neighbour variant for label rasters.
BinaryMask resample_nearest(const BinaryMask& mask, Spacing spacing, double target_spacing = 0.4);

}  // namespace thinseg
