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

#include "thinseg/phantom.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "thinseg/errors.hpp"

namespace thinseg {

void PhantomSpec::validate() const {
    if (size < 16) throw ParameterError("phantom: size must be >= 16");
    if (wall_thickness < 1) throw ParameterError("phantom: wall thickness must be >= 1");
    if (block_height < 1 || block_width < 1 || block_width > size - 2 || block_height > size - 12)
        throw ParameterError("phantom: block does not fit the image");
    if (!(wall_period > 0.0) || !(wall_amplitude >= 0.0)) throw ParameterError("phantom: bad wall curvature");
    if (!(dim_factor > 0.0 && dim_factor <= 1.0)) throw ParameterError("phantom: dim factor must lie in (0,1]");
    if (!(noise_sigma >= 0.0) || blur_radius < 0) throw ParameterError("phantom: noise and blur must be >= 0");
    if (annotators.empty()) throw ParameterError("phantom: need at least one annotator profile");
    for (const auto& a : annotators) {
        if (a.jitter < 0 || a.gap_length < 1) throw ParameterError("phantom: bad annotator jitter or gap length");
        if (!(a.gap_probability >= 0.0 && a.gap_probability <= 1.0))
            throw ParameterError("phantom: gap probability must lie in [0,1]");
    }
}

namespace {

BinaryMask morph(const BinaryMask& mask, int r, bool grow) {
    if (r <= 0) return mask;
    const Eigen::Index rows = mask.rows(), cols = mask.cols();
    BinaryMask out(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            bool hit = !grow;
            for (int dy = -r; dy <= r && hit != grow; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (dy * dy + dx * dx > r * r) continue;
                    const Eigen::Index yy = y + dy, xx = x + dx;
                    // Outside the image counts as background.
                    const bool v = yy >= 0 && yy < rows && xx >= 0 && xx < cols && mask(yy, xx);
                    if (grow && v) {
                        hit = true;
                        break;
                    }
                    if (!grow && !v) {
                        hit = false;
                        break;
                    }
                }
            out(y, x) = hit ? 1 : 0;
        }
    return out;
}

void paint_disk(BinaryMask& target, Eigen::Index y, Eigen::Index x, int r) {
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            if (dy * dy + dx * dx > r * r) continue;
            const Eigen::Index yy = y + dy, xx = x + dx;
            if (yy >= 0 && yy < target.rows() && xx >= 0 && xx < target.cols()) target(yy, xx) = 1;
        }
}

bool on_boundary(const BinaryMask& m, Eigen::Index y, Eigen::Index x) {
    if (!m(y, x)) return false;
    constexpr int dy[] = {-1, 1, 0, 0};
    constexpr int dx[] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
        const Eigen::Index yy = y + dy[k], xx = x + dx[k];
        if (yy < 0 || yy >= m.rows() || xx < 0 || xx >= m.cols() || !m(yy, xx)) return true;
    }
    return false;
}

Raster<double> gaussian_blur(const Raster<double>& image, double sigma) {
    if (sigma <= 0.0) return image;
    const int half = static_cast<int>(std::ceil(2.5 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * half + 1));
    double total = 0.0;
    for (int k = -half; k <= half; ++k) total += taps[static_cast<std::size_t>(k + half)] = std::exp(-0.5 * k * k / (sigma * sigma));
    for (double& t : taps) t /= total;
    const Eigen::Index rows = image.rows(), cols = image.cols();
    Raster<double> tmp(rows, cols), out(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            double acc = 0.0;
            for (int k = -half; k <= half; ++k)
                acc += taps[static_cast<std::size_t>(k + half)] * image(y, std::clamp<Eigen::Index>(x + k, 0, cols - 1));
            tmp(y, x) = acc;
        }
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            double acc = 0.0;
            for (int k = -half; k <= half; ++k)
                acc += taps[static_cast<std::size_t>(k + half)] * tmp(std::clamp<Eigen::Index>(y + k, 0, rows - 1), x);
            out(y, x) = acc;
        }
    return out;
}

}  // namespace

BinaryMask dilate(const BinaryMask& mask, int r) { return morph(mask, r, true); }
BinaryMask erode(const BinaryMask& mask, int r) { return morph(mask, r, false); }

PhantomGeometry make_geometry(const PhantomSpec& spec, Rng& rng) {
    spec.validate();
    const int s = spec.size;
    PhantomGeometry g;
    g.block = BinaryMask::Zero(s, s);
    g.wall = BinaryMask::Zero(s, s);

    const int margin = 4;
    const int block_top = s - margin - spec.block_height;
    const int shift = static_cast<int>(uniform_int(rng, -3, 3));
    const int block_left = std::clamp((s - spec.block_width) / 2 + shift, 1, s - 1 - spec.block_width);
    g.block.block(block_top, block_left, spec.block_height, spec.block_width).setOnes();

    const double phase = 2.0 * std::numbers::pi * uniform01(rng);
    const double centre = s / 2.0 + static_cast<double>(uniform_int(rng, -4, 4));
    g.wall_top = margin;
    g.wall_bottom = block_top;
    for (int r = g.wall_top; r < g.wall_bottom; ++r) {
        const double x = centre + spec.wall_amplitude * std::sin(2.0 * std::numbers::pi * r / spec.wall_period + phase);
        const int left = static_cast<int>(std::lround(x - (spec.wall_thickness - 1) / 2.0));
        for (int c = left; c < left + spec.wall_thickness; ++c)
            if (c >= 0 && c < s) g.wall(r, c) = 1;
    }
    g.truth = (g.block != 0 || g.wall != 0).cast<std::uint8_t>();
    return g;
}

BinaryMask simulate_annotator(const PhantomGeometry& geometry, const AnnotatorProfile& profile, Rng& rng) {
    const BinaryMask& truth = geometry.truth;
    BinaryMask grown = BinaryMask::Zero(truth.rows(), truth.cols());
    BinaryMask removed = BinaryMask::Zero(truth.rows(), truth.cols());
    if (profile.jitter > 0) {
        // Each boundary pixel moves the boundary by k in [-jitter, jitter]:
        // outwards paints a disk of radius k, inwards clears radius |k| - 1.
        for (Eigen::Index y = 0; y < truth.rows(); ++y)
            for (Eigen::Index x = 0; x < truth.cols(); ++x) {
                if (!on_boundary(truth, y, x)) continue;
                const int k = static_cast<int>(uniform_int(rng, -profile.jitter, profile.jitter));
                if (k > 0) paint_disk(grown, y, x, k);
                if (k < 0) paint_disk(removed, y, x, -k - 1);
            }
    }
    BinaryMask out = ((truth != 0 && removed == 0) || grown != 0).cast<std::uint8_t>();

    const int wall_rows = geometry.wall_bottom - geometry.wall_top;
    if (wall_rows > 0 && bernoulli(rng, profile.gap_probability)) {
        const int len = std::min(profile.gap_length, wall_rows);
        const int start = geometry.wall_top + static_cast<int>(uniform_int(rng, 0, wall_rows - len));
        // Everything the annotator drew around the wall in those rows, never the block.
        const BinaryMask reach = dilate(geometry.wall, profile.jitter + 1);
        // A gap over the tip also takes whatever jitter grew above it.
        const int first = start == geometry.wall_top ? std::max(0, start - profile.jitter - 1) : start;
        for (int y = first; y < start + len; ++y)
            for (Eigen::Index x = 0; x < out.cols(); ++x)
                if (reach(y, x) && !geometry.block(y, x)) out(y, x) = 0;
    }
    return out;
}

BinaryMask simulate_annotator(const BinaryMask& truth, const BinaryMask& block, const AnnotatorProfile& profile,
                              Rng& rng) {
    PhantomGeometry g;
    g.truth = truth;
    g.block = block;
    g.wall = (truth != 0 && block == 0).cast<std::uint8_t>();
    g.wall_top = static_cast<int>(truth.rows());
    g.wall_bottom = 0;
    for (Eigen::Index y = 0; y < truth.rows(); ++y)
        if (g.wall.row(y).any()) {
            g.wall_top = std::min(g.wall_top, static_cast<int>(y));
            g.wall_bottom = static_cast<int>(y) + 1;
        }
    return simulate_annotator(g, profile, rng);
}

PhantomCase generate_case(const PhantomSpec& spec, Rng& rng) {
    spec.validate();
    PhantomCase c;
    Rng geometry_rng(rng());
    Rng image_rng(rng());
    c.geometry = make_geometry(spec, geometry_rng);
    c.truth = c.geometry.truth;

    Raster<double> intensity = 255.0 * c.truth.cast<double>();
    intensity = (c.geometry.wall != 0).select(intensity * spec.dim_factor, intensity);
    intensity = gaussian_blur(intensity, static_cast<double>(spec.blur_radius));
    if (spec.noise_sigma > 0.0)
        for (Eigen::Index k = 0; k < intensity.size(); ++k)
            intensity.data()[k] += spec.noise_sigma * standard_normal(image_rng);
    c.cond.values = intensity.unaryExpr([](double v) {
        return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    });

    for (const auto& profile : spec.annotators) {
        Rng annotator_rng(rng());
        c.annotations.push_back(simulate_annotator(c.geometry, profile, annotator_rng));
    }
    c.thin_roi = (dilate(c.geometry.wall, 3) != 0 && c.geometry.block == 0).cast<std::uint8_t>();
    return c;
}

std::vector<PhantomCase> generate_suite(const PhantomSpec& spec, int count) {
    if (count < 1) throw ParameterError("phantom: count must be >= 1");
    std::vector<PhantomCase> out;
    for (int i = 0; i < count; ++i) {
        Rng rng = make_stream(spec.seed, static_cast<std::uint64_t>(i));
        out.push_back(generate_case(spec, rng));
    }
    return out;
}

std::string format_profiles(const std::vector<AnnotatorProfile>& profiles) {
    std::string out;
    for (std::size_t k = 0; k < profiles.size(); ++k) {
        char prob[32];
        const auto end = std::to_chars(prob, prob + sizeof prob, profiles[k].gap_probability).ptr;
        if (k) out += ',';
        out += std::to_string(profiles[k].jitter) + ':' + std::string(prob, end) + ':' +
               std::to_string(profiles[k].gap_length);
    }
    return out;
}

std::vector<AnnotatorProfile> parse_profiles(const std::string& text) {
    std::vector<AnnotatorProfile> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        AnnotatorProfile p;
        char c1 = 0, c2 = 0;
        std::istringstream fields(item);
        if (!(fields >> p.jitter >> c1 >> p.gap_probability >> c2 >> p.gap_length) || c1 != ':' || c2 != ':' ||
            !(fields >> std::ws).eof())
            throw ParameterError("phantom: annotator profile '" + item + "' is not jitter:gap_probability:gap_length");
        out.push_back(p);
    }
    if (out.empty()) throw ParameterError("phantom: no annotator profiles given");
    return out;
}

void write_case(const std::filesystem::path& dir, const PhantomCase& c, const PhantomSpec& spec) {
    std::filesystem::create_directories(dir);
    write_gray(dir / "cond.pgm", c.cond);
    write_mask(dir / "truth.pgm", c.truth);
    for (std::size_t k = 0; k < c.annotations.size(); ++k)
        write_mask(dir / ("ann_" + std::to_string(k) + ".pgm"), c.annotations[k]);
    write_mask(dir / "roi_thin.pgm", c.thin_roi);
    write_mask(dir / "block.pgm", c.geometry.block);

    std::ofstream cfg(dir / "case.cfg", std::ios::trunc);
    if (!cfg) throw IoError("cannot write " + (dir / "case.cfg").string());
    cfg.precision(17);
    cfg << "size=" << spec.size << "\nwall_thickness=" << spec.wall_thickness
        << "\nwall_amplitude=" << spec.wall_amplitude << "\nwall_period=" << spec.wall_period
        << "\nblock_height=" << spec.block_height << "\nblock_width=" << spec.block_width
        << "\ndim_factor=" << spec.dim_factor << "\nnoise_sigma=" << spec.noise_sigma
        << "\nblur_radius=" << spec.blur_radius << "\nannotators=" << format_profiles(spec.annotators)
        << "\nseed=" << spec.seed << "\nwall_rows=" << c.geometry.wall_top << ':' << c.geometry.wall_bottom << "\n";
}

PhantomCase read_case(const std::filesystem::path& dir) {
    PhantomCase c;
    c.cond = read_gray(dir / "cond.pgm");
    c.truth = read_mask(dir / "truth.pgm");
    for (int k = 0;; ++k) {
        const auto path = dir / ("ann_" + std::to_string(k) + ".pgm");
        if (!std::filesystem::exists(path)) break;
        c.annotations.push_back(read_mask(path));
    }
    if (c.annotations.empty()) throw IoError("case " + dir.string() + " has no annotations");
    c.thin_roi = read_mask(dir / "roi_thin.pgm");
    c.geometry.truth = c.truth;
    c.geometry.block = std::filesystem::exists(dir / "block.pgm") ? read_mask(dir / "block.pgm")
                                                                  : BinaryMask::Zero(c.truth.rows(), c.truth.cols());
    c.geometry.wall = (c.truth != 0 && c.geometry.block == 0).cast<std::uint8_t>();
    c.geometry.wall_top = static_cast<int>(c.truth.rows());
    for (Eigen::Index y = 0; y < c.truth.rows(); ++y)
        if (c.geometry.wall.row(y).any()) {
            c.geometry.wall_top = std::min(c.geometry.wall_top, static_cast<int>(y));
            c.geometry.wall_bottom = static_cast<int>(y) + 1;
        }
    return c;
}

std::vector<std::filesystem::path> write_suite(const std::filesystem::path& root, const std::vector<PhantomCase>& cases,
                                               const PhantomSpec& spec) {
    std::filesystem::create_directories(root);
    std::vector<std::filesystem::path> dirs;
    std::ofstream manifest(root / "manifest.txt", std::ios::trunc);
    if (!manifest) throw IoError("cannot write " + (root / "manifest.txt").string());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "case_%04zu", i);
        PhantomSpec echo = spec;
        echo.seed = derive_seed(spec.seed, i);
        write_case(root / name, cases[i], echo);
        manifest << name << "\n";
        dirs.push_back(root / name);
    }
    return dirs;
}

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& root) {
    std::ifstream in(root / "manifest.txt");
    if (!in) throw IoError("cannot open " + (root / "manifest.txt").string());
    std::vector<std::filesystem::path> dirs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto dir = root / line;
        for (const char* f : {"cond.pgm", "truth.pgm", "ann_0.pgm", "roi_thin.pgm", "case.cfg"})
            if (!std::filesystem::exists(dir / f)) throw IoError("case " + dir.string() + " is missing " + f);
        dirs.push_back(dir);
    }
    if (dirs.empty()) throw IoError("empty manifest in " + root.string());
    return dirs;
}

}  // namespace thinseg
