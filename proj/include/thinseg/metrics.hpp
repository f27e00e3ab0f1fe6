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
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "thinseg/imaging.hpp"

namespace thinseg {

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }
};

/// Counts over the ROI pixels (every pixel when no ROI is given).
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& ref, const ROIMask* roi = nullptr);

// Empty-set convention: a score whose reference and prediction sides are both
// empty is 1; if only the numerator side is empty it is 0.
double dsc(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);

struct CaseScores {
    std::string roi;
    double dsc = 0.0;
    double recall = 0.0;
    double precision = 0.0;
};

using NamedRois = std::map<std::string, ROIMask>;

/// One score row per named ROI, in name order.
std::vector<CaseScores> evaluate_case(const BinaryMask& pred, const BinaryMask& ref, const NamedRois& rois);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    int dof = 0;
    /// Differences have zero variance but nonzero mean.
    bool degenerate = false;
};

/// Paired two-sided t-test on per-case scores.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Regularised incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Student t CDF with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

struct ScoreRow {
    std::string case_id;
    std::string method;
    CaseScores scores;
};

/// case_id,method,roi,dsc,recall,precision; then per (method, roi) a mean row
/// and, for methods other than `baseline`, paired t-test columns against it.
void write_results_csv(std::ostream& out, const std::vector<ScoreRow>& rows, const std::string& baseline);

}  // namespace thinseg
