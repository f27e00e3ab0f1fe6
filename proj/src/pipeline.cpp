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

#include "thinseg/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include "thinseg/errors.hpp"

namespace thinseg {

std::uint64_t stage_seed(std::uint64_t seed, Stage stage) {
    return derive_seed(seed, 0x7a5e000000000000ULL + static_cast<std::uint64_t>(stage));
}

NamedRois build_rois(const PhantomCase& c, const std::vector<std::string>& names) {
    NamedRois rois;
    for (const auto& name : names) {
        if (name == "thin")
            rois[name] = c.thin_roi;
        else if (name == "all")
            rois[name] = ROIMask::Ones(c.truth.rows(), c.truth.cols());
        else
            throw ParameterError("unknown ROI '" + name + "'");
    }
    return rois;
}

BinaryMask make_reference(const PhantomCase& c, const PipelineConfig& cfg, StapleResult* staple) {
    if (cfg.eval.reference == ReferenceKind::truth) return c.truth;
    StapleResult fused = staple_fuse(c.annotations, cfg.staple);
    BinaryMask out = fused.fused;
    if (staple) *staple = std::move(fused);
    return out;
}

Raster<double> direction_image(const GrayImage& cond) { return cond.values.cast<double>() / 255.0; }

TrainResult train_denoiser(const PipelineConfig& cfg) {
    PhantomSpec spec = cfg.phantom;
    spec.seed = stage_seed(cfg.seed, Stage::training_data);
    TrainingSet data;
    for (auto& c : generate_suite(spec, cfg.denoiser.train_cases)) data.push_back({c.cond, c.annotations});
    Rng rng(stage_seed(cfg.seed, Stage::training));
    return train_logistic(data, cfg.make_schedule(), cfg.denoiser.train, rng);
}

namespace {

void write_energy(const std::filesystem::path& path, const CaseResult& r) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "baseline_energy=" << r.baseline_energy << "\n"
        << "mean_field_energy=" << r.correction.energy_mean_field << "\n"
        << "corrected_energy=" << r.correction.energy << "\n";
    for (std::size_t k = 0; k < r.correction.free_energy_trace.size(); ++k)
        out << "free_energy[" << k + 1 << "]=" << r.correction.free_energy_trace[k] << "\n";
}

}  // namespace

CaseResult process_case(const PhantomCase& c, const std::string& id, const Denoiser& denoiser,
                        const PipelineConfig& cfg, std::uint64_t sample_seed, const std::filesystem::path& out) {
    const NoiseSchedule schedule = cfg.make_schedule();
    const auto masks = sample_ensemble(denoiser, c.cond, schedule, cfg.sample_config(sample_seed));

    CaseResult r;
    r.id = id;
    r.consensus = aggregate<double>(masks);
    r.baseline = threshold(r.consensus, cfg.tau);
    const Raster<double> image = direction_image(c.cond);
    r.correction = correct(r.consensus.level, cfg.correction, &image, !out.empty());
    r.baseline_energy = total_energy(
        r.baseline,
        compute_features(r.consensus.level, cfg.correction.direction == DirectionSource::image ? &image : nullptr),
        cfg.correction);

    StapleResult staple;
    r.reference = make_reference(c, cfg, &staple);
    const NamedRois rois = build_rois(c, cfg.eval.rois);
    r.baseline_scores = evaluate_case(r.baseline, r.reference, rois);
    r.corrected_scores = evaluate_case(r.correction.labels, r.reference, rois);

    if (!out.empty()) {
        std::filesystem::create_directories(out);
        if (cfg.write_samples) write_ensemble(out / "samples", masks, cfg.sample_config(sample_seed));
        write_prob(out / "consensus.pgm", r.consensus.level);
        write_prob(out / "uncertainty.pgm", uncertainty(r.consensus));
        write_mask(out / "baseline.pgm", r.baseline);
        write_mask(out / "corrected.pgm", r.correction.labels);
        write_prob(out / "marginals.pgm", r.correction.marginals);
        write_mask(out / "reference.pgm", r.reference);
        if (cfg.eval.reference == ReferenceKind::staple) write_staple_report(out / "staple_report.txt", staple);
        write_energy(out / "energy.txt", r);
    }
    return r;
}

std::vector<double> score_column(const PipelineSummary& s, const std::string& method, const std::string& roi,
                                 double CaseScores::*metric) {
    std::vector<double> out;
    for (const auto& row : s.rows)
        if (row.method == method && row.scores.roi == roi) out.push_back(row.scores.*metric);
    return out;
}

PipelineSummary run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out) {
    cfg.validate();
    PhantomSpec spec = cfg.phantom;
    spec.seed = stage_seed(cfg.seed, Stage::phantom);
    const auto suite = generate_suite(spec, cfg.cases);
    const NoiseSchedule schedule = cfg.make_schedule();

    std::filesystem::create_directories(out);
    {
        std::ofstream echo(out / "config.cfg", std::ios::trunc);
        if (!echo) throw IoError("cannot write " + (out / "config.cfg").string());
        echo << serialize_config(cfg);
    }
    write_suite(out / "phantom", suite, spec);

    std::unique_ptr<LogisticDenoiser> logistic;
    if (cfg.denoiser.kind == DenoiserKind::logistic) {
        TrainResult trained = train_denoiser(cfg);
        save_model(out / "model.txt", trained.model);
        logistic = std::make_unique<LogisticDenoiser>(trained.model, schedule);
    }

    TabularOracle oracle;
    PipelineSummary summary;
    const std::uint64_t sampling = stage_seed(cfg.seed, Stage::sampling);
    for (std::size_t i = 0; i < suite.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "case_%04zu", i);
        const PhantomCase& c = suite[i];
        CaseResult r;
        if (logistic) {
            r = process_case(c, name, *logistic, cfg, derive_seed(sampling, i), out / "results" / name);
        } else {
            oracle.add_case(name, c.annotations);
            const OracleDenoiser denoiser(oracle, schedule, name);
            r = process_case(c, name, denoiser, cfg, derive_seed(sampling, i), out / "results" / name);
        }
        for (const auto& s : r.baseline_scores) summary.rows.push_back({name, "baseline", s});
        for (const auto& s : r.corrected_scores) summary.rows.push_back({name, "corrected", s});
        summary.cases.push_back(std::move(r));
    }

    std::ofstream csv(out / "summary.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (out / "summary.csv").string());
    write_results_csv(csv, summary.rows, "baseline");
    return summary;
}

}  // namespace thinseg
