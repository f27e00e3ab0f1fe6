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

#include "thinseg/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "thinseg/errors.hpp"

namespace thinseg {

void check_mask(const BinaryMask& mask, const char* what) {
    if (mask.size() == 0) throw ParameterError(std::string(what) + " is empty");
    if ((mask > 1).any()) throw ParameterError(std::string(what) + " has labels outside {0,1}");
}

void check_prob(const ProbMap& map, const char* what) {
    if (map.size() == 0) throw ParameterError(std::string(what) + " is empty");
    if (!((map >= 0.0) && (map <= 1.0)).all())
        throw ParameterError(std::string(what) + " has values outside [0,1]");
}

namespace {

class HeaderReader {
public:
    HeaderReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

    std::string token() {
        skip_space_and_comments();
        std::string out;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) out.push_back(static_cast<char>(bytes_[pos_++]));
        if (out.empty()) throw FormatError("pgm: truncated header");
        return out;
    }

    long number() {
        const std::string tok = token();
        if (!std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
            throw FormatError("pgm: expected a number in header, got '" + tok + "'");
        if (tok.size() > 9) throw FormatError("pgm: header value too large");
        return std::stol(tok);
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_start() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw FormatError("pgm: missing raster separator");
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<unsigned char>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

PgmData read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    HeaderReader header(bytes);
    if (header.token() != "P5") throw FormatError("pgm: " + path.string() + " is not a binary PGM (P5)");
    const long width = header.number();
    const long height = header.number();
    const long maxval = header.number();
    if (width <= 0 || height <= 0) throw FormatError("pgm: non-positive dimensions in " + path.string());
    if (maxval != 255 && maxval != 65535)
        throw UnsupportedError("pgm: maxval " + std::to_string(maxval) + " not supported (255 or 65535)");

    const std::size_t start = header.raster_start();
    const std::size_t bytes_per = maxval > 255 ? 2 : 1;
    const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() < start + count * bytes_per) throw FormatError("pgm: truncated raster in " + path.string());

    PgmData data;
    data.maxval = static_cast<std::uint16_t>(maxval);
    data.samples.resize(height, width);
    const unsigned char* p = bytes.data() + start;
    for (std::size_t k = 0; k < count; ++k) {
        std::uint16_t v = bytes_per == 2 ? static_cast<std::uint16_t>((p[2 * k] << 8) | p[2 * k + 1]) : p[k];
        if (v > maxval) throw FormatError("pgm: sample exceeds maxval");
        data.samples.data()[k] = v;
    }
    return data;
}

void write_pgm(const std::filesystem::path& path, const PgmData& data) {
    if (data.maxval != 255 && data.maxval != 65535) throw UnsupportedError("pgm: maxval must be 255 or 65535");
    if (data.samples.size() == 0) throw ParameterError("pgm: empty raster");
    if ((data.samples > data.maxval).any()) throw ParameterError("pgm: sample exceeds maxval");

    std::string out = "P5\n" + std::to_string(data.samples.cols()) + " " + std::to_string(data.samples.rows()) + "\n" +
                      std::to_string(data.maxval) + "\n";
    const bool wide = data.maxval > 255;
    out.reserve(out.size() + static_cast<std::size_t>(data.samples.size()) * (wide ? 2 : 1));
    for (Eigen::Index k = 0; k < data.samples.size(); ++k) {
        const std::uint16_t v = data.samples.data()[k];
        if (wide) out.push_back(static_cast<char>(v >> 8));
        out.push_back(static_cast<char>(v & 0xff));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

GrayImage read_gray(const std::filesystem::path& path, Spacing spacing) {
    PgmData data = read_pgm(path);
    if (data.maxval != 255) throw UnsupportedError("pgm: expected an 8-bit image in " + path.string());
    return {data.samples.cast<std::uint8_t>(), spacing};
}

void write_gray(const std::filesystem::path& path, const GrayImage& image) {
    write_pgm(path, {image.values.cast<std::uint16_t>(), 255});
}

BinaryMask read_mask(const std::filesystem::path& path) {
    PgmData data = read_pgm(path);
    if (data.maxval != 255) throw UnsupportedError("pgm: expected an 8-bit mask in " + path.string());
    return (data.samples >= 128).cast<std::uint8_t>();
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
    check_mask(mask);
    write_pgm(path, {(mask.cast<std::uint16_t>() * std::uint16_t(255)), 255});
}

std::uint16_t quantize_prob(double p) {
    return static_cast<std::uint16_t>(std::lround(std::clamp(p, 0.0, 1.0) * 65535.0));
}

ProbMap read_prob(const std::filesystem::path& path) {
    PgmData data = read_pgm(path);
    if (data.maxval != 65535) throw UnsupportedError("pgm: expected a 16-bit probability map in " + path.string());
    return data.samples.cast<double>() / 65535.0;
}

void write_prob(const std::filesystem::path& path, const ProbMap& map) {
    check_prob(map);
    write_pgm(path, {map.unaryExpr([](double p) { return quantize_prob(p); }), 65535});
}

GrayImage hu_window(const HUImage& image, double level, double width) {
    if (!(width > 0.0)) throw ParameterError("hu_window: width must be positive");
    if (image.values.size() == 0) throw ParameterError("hu_window: empty image");
    const double low = level - width / 2.0;
    GrayImage out;
    out.spacing = image.spacing;
    out.values = image.values.unaryExpr([&](std::int32_t hu) {
        const double v = std::floor((hu - low) / width * 255.0 + 0.5);
        return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    });
    return out;
}

Eigen::Index resampled_extent(Eigen::Index extent, double from, double to) {
    if (!(to > 0.0)) throw ParameterError("resample: target spacing must be positive");
    if (!(from > 0.0)) throw ParameterError("resample: input spacing must be positive");
    const auto n = static_cast<Eigen::Index>(std::lround(static_cast<double>(extent) * from / to));
    return std::max<Eigen::Index>(n, 1);
}

namespace {

// Source coordinate of output sample `k` under pixel-centre alignment.
double source_coord(Eigen::Index k, Eigen::Index in, Eigen::Index out) {
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    return std::clamp((static_cast<double>(k) + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
}

}  // namespace

GrayImage resample_bilinear(const GrayImage& image, double target_spacing) {
    const Eigen::Index rows = resampled_extent(image.rows(), image.spacing.row, target_spacing);
    const Eigen::Index cols = resampled_extent(image.cols(), image.spacing.col, target_spacing);
    GrayImage out;
    out.spacing = {target_spacing, target_spacing};
    out.values.resize(rows, cols);
    const Raster<double> src = image.values.cast<double>();
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double y = source_coord(r, image.rows(), rows);
        const auto y0 = static_cast<Eigen::Index>(std::floor(y));
        const Eigen::Index y1 = std::min(y0 + 1, image.rows() - 1);
        const double fy = y - static_cast<double>(y0);
        for (Eigen::Index c = 0; c < cols; ++c) {
            const double x = source_coord(c, image.cols(), cols);
            const auto x0 = static_cast<Eigen::Index>(std::floor(x));
            const Eigen::Index x1 = std::min(x0 + 1, image.cols() - 1);
            const double fx = x - static_cast<double>(x0);
            const double top = (1.0 - fx) * src(y0, x0) + fx * src(y0, x1);
            const double bottom = (1.0 - fx) * src(y1, x0) + fx * src(y1, x1);
            const double v = (1.0 - fy) * top + fy * bottom;
            out.values(r, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
        }
    }
    return out;
}

BinaryMask resample_nearest(const BinaryMask& mask, Spacing spacing, double target_spacing) {
    const Eigen::Index rows = resampled_extent(mask.rows(), spacing.row, target_spacing);
    const Eigen::Index cols = resampled_extent(mask.cols(), spacing.col, target_spacing);
    BinaryMask out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto y = static_cast<Eigen::Index>(std::lround(source_coord(r, mask.rows(), rows)));
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto x = static_cast<Eigen::Index>(std::lround(source_coord(c, mask.cols(), cols)));
            out(r, c) = mask(y, x);
        }
    }
    return out;
}

}  // namespace thinseg
