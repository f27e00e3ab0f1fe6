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
#include <memory>
#include <string>
#include <vector>

#include "thinseg/config.hpp"
#include "thinseg/consensus.hpp"
#include "thinseg/metrics.hpp"

namespace thinseg {

enum class Stage : std::uint64_t { phantom = 1, training_data = 2, training = 3, sampling = 4 };

/// Seed for one stage of a run, independent of every other stage.
std::uint64_t stage_seed(std::uint64_t seed, Stage stage);

NamedRois build_rois(const PhantomCase& c, const std::vector<std::string>& names);

/// STAPLE fusion of the annotations, or the phantom truth.
BinaryMask make_reference(const PhantomCase& c, const PipelineConfig& cfg, StapleResult* staple = nullptr);

/// Cond image on [0,1], used when correction directions come from the image.
Raster<double> direction_image(const GrayImage& cond);

TrainResult train_denoiser(const PipelineConfig& cfg);

struct CaseResult {
    std::string id;
    ConsensusMap consensus;
    BinaryMask baseline;
    CorrectionResult<double> correction;
    BinaryMask reference;
    double baseline_energy = 0.0;
    std::vector<CaseScores> baseline_scores;
    std::vector<CaseScores> corrected_scores;
};

/// Sampling, consensus, threshold baseline, correction, reference and scores
/// for one case. Writes per-case artefacts under `out` when it is non-empty.
CaseResult process_case(const PhantomCase& c, const std::string& id, const Denoiser& denoiser,
                        const PipelineConfig& cfg, std::uint64_t sample_seed, const std::filesystem::path& out = {});

struct PipelineSummary {
    std::vector<CaseResult> cases;
    std::vector<ScoreRow> rows;  // per case, per method, per ROI
};

/// Per-ROI score vectors of one method, in case order.
std::vector<double> score_column(const PipelineSummary& s, const std::string& method, const std::string& roi,
                                 double CaseScores::*metric);

/// Full run: phantom suite, optional training, per-case processing and
/// summary.csv with baseline and corrected rows under `out`.
PipelineSummary run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out);

}  // namespace thinseg
