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
#include <iosfwd>
#include <string>
#include <vector>

#include "thinseg/correction.hpp"
#include "thinseg/diffusion.hpp"
#include "thinseg/denoiser.hpp"
#include "thinseg/phantom.hpp"
#include "thinseg/staple.hpp"

namespace thinseg {

enum class DenoiserKind { oracle, logistic };
enum class ReferenceKind { staple, truth };

std::string to_string(DenoiserKind kind);
std::string to_string(ReferenceKind kind);

struct ScheduleConfig {
    int steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

struct DenoiserConfig {
    DenoiserKind kind = DenoiserKind::oracle;
    TrainOptions train;
    int train_cases = 10;
};

struct SamplerConfig {
    SamplerKind kind = SamplerKind::skip;
    int steps = 50;
    int samples = 200;
};

struct EvalConfig {
    ReferenceKind reference = ReferenceKind::staple;
    std::vector<std::string> rois = {"thin", "all"};
};

/// Everything a run needs. Serialised as flat `dotted.key=value` lines.
struct PipelineConfig {
    std::uint64_t seed = 20240501;
    std::string output = "thinseg_out";
    int cases = 10;
    bool write_samples = false;
    PhantomSpec phantom;
    ScheduleConfig schedule;
    DenoiserConfig denoiser;
    SamplerConfig sampler;
    double tau = 0.5;
    CorrectionParams correction;
    StapleOptions staple;
    EvalConfig eval;

    /// Throws ParameterError on the first violated module invariant.
    void validate() const;

    NoiseSchedule make_schedule() const;
    SampleRunConfig sample_config(std::uint64_t run_seed) const;
};

/// Sorted list of every accepted key.
std::vector<std::string> config_keys();

/// Applies one key=value assignment; unknown keys and bad values throw ParameterError.
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const PipelineConfig& cfg, const std::string& key);

/// Parses key=value lines ('#' starts a comment) on top of the defaults and validates.
PipelineConfig parse_config(std::istream& in);
PipelineConfig parse_config_text(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical form: every key, sorted, shortest round-trip numbers.
std::string serialize_config(const PipelineConfig& cfg);

/// FNV-1a of the canonical form, 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);

}  // namespace thinseg
