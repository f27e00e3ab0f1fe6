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

#include "thinseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>

#include "thinseg/errors.hpp"

namespace thinseg {

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& ref, const ROIMask* roi) {
    if (!same_shape(pred, ref)) throw ParameterError("confusion: prediction and reference shapes differ");
    if (roi) {
        if (!same_shape(*roi, ref)) throw ParameterError("confusion: ROI shape differs");
        if (!(*roi != 0).any()) throw ParameterError("confusion: empty ROI");
    }
    ConfusionCounts c;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        if (roi && !roi->data()[i]) continue;
        const bool p = pred.data()[i] != 0;
        const bool r = ref.data()[i] != 0;
        if (p && r)
            ++c.tp;
        else if (p)
            ++c.fp;
        else if (r)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

double dsc(const ConfusionCounts& c) {
    const auto denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double recall(const ConfusionCounts& c) {
    const auto denom = c.tp + c.fn;
    return denom == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double precision(const ConfusionCounts& c) {
    const auto denom = c.tp + c.fp;
    return denom == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

std::vector<CaseScores> evaluate_case(const BinaryMask& pred, const BinaryMask& ref, const NamedRois& rois) {
    std::vector<CaseScores> out;
    for (const auto& [name, roi] : rois) {
        const ConfusionCounts c = confusion(pred, ref, &roi);
        out.push_back({name, dsc(c), recall(c), precision(c)});
    }
    return out;
}

namespace {

// Continued fraction for I_x(a,b) (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw ParameterError("incomplete_beta: a and b must be positive");
    if (x < 0.0 || x > 1.0) throw ParameterError("incomplete_beta: x outside [0,1]");
    if (x == 0.0 || x == 1.0) return x;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
    if (!(dof > 0.0)) throw ParameterError("student_t_cdf: degrees of freedom must be positive");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double tail = 0.5 * incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
    return t > 0.0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ParameterError("paired_t_test: score sequences differ in length");
    if (a.size() < 2) throw ParameterError("paired_t_test: need at least two pairs");
    const auto n = static_cast<double>(a.size());
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
    double ss = 0.0;
    for (double d : diff) ss += (d - mean) * (d - mean);
    const double sd = std::sqrt(ss / (n - 1.0));

    TTestResult r;
    r.dof = static_cast<int>(a.size()) - 1;
    if (sd == 0.0) {
        if (mean == 0.0) return r;  // t = 0, p = 1
        r.degenerate = true;
        r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p = 0.0;
        return r;
    }
    r.t = mean / (sd / std::sqrt(n));
    r.p = incomplete_beta(r.dof / 2.0, 0.5, r.dof / (r.dof + r.t * r.t));
    return r;
}

void write_results_csv(std::ostream& out, const std::vector<ScoreRow>& rows, const std::string& baseline) {
    out << "case_id,method,roi,dsc,recall,precision,t_dsc,p_dsc,t_recall,p_recall,t_precision,p_precision\n";
    out << std::setprecision(6) << std::fixed;
    for (const auto& r : rows)
        out << r.case_id << ',' << r.method << ',' << r.scores.roi << ',' << r.scores.dsc << ',' << r.scores.recall
            << ',' << r.scores.precision << ",,,,,,\n";

    std::vector<std::string> methods;
    std::set<std::string> rois;
    for (const auto& r : rows) {
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
        rois.insert(r.scores.roi);
    }
    // Per-case scores keyed by (method, roi), in row order.
    auto series = [&](const std::string& method, const std::string& roi) {
        std::vector<std::string> ids;
        std::vector<CaseScores> scores;
        for (const auto& r : rows)
            if (r.method == method && r.scores.roi == roi) {
                ids.push_back(r.case_id);
                scores.push_back(r.scores);
            }
        return std::pair{ids, scores};
    };
    auto column = [](const std::vector<CaseScores>& s, double CaseScores::*field) {
        std::vector<double> v;
        for (const auto& c : s) v.push_back(c.*field);
        return v;
    };
    auto mean = [](const std::vector<double>& v) {
        return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };

    for (const auto& roi : rois) {
        const auto [base_ids, base] = series(baseline, roi);
        for (const auto& method : methods) {
            const auto [ids, s] = series(method, roi);
            if (s.empty()) continue;
            out << "mean," << method << ',' << roi << ',' << mean(column(s, &CaseScores::dsc)) << ','
                << mean(column(s, &CaseScores::recall)) << ',' << mean(column(s, &CaseScores::precision));
            const bool comparable = method != baseline && ids == base_ids && ids.size() >= 2;
            for (auto field : {&CaseScores::dsc, &CaseScores::recall, &CaseScores::precision}) {
                if (!comparable) {
                    out << ",,";
                    continue;
                }
                const auto t = paired_t_test(column(s, field), column(base, field));
                out << ',' << t.t << ',' << t.p;
            }
            out << '\n';
        }
    }
}

}  // namespace thinseg
