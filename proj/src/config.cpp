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

#include "thinseg/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "thinseg/errors.hpp"

namespace thinseg {

std::string to_string(DenoiserKind kind) { return kind == DenoiserKind::oracle ? "oracle" : "logistic"; }
std::string to_string(ReferenceKind kind) { return kind == ReferenceKind::staple ? "staple" : "truth"; }

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* first = text.data();
    const char* last = first + text.size();
    if (!text.empty() && text.front() == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty())
        throw ParameterError("config: '" + key + "' expects a number, got '" + text + "'");
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ParameterError("config: '" + key + "' expects true or false, got '" + text + "'");
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

template <typename F>
auto rethrow_as(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ParameterError& e) {
        throw ParameterError("config: '" + key + "': " + e.what());
    }
}

struct Field {
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
};

template <typename M>
Field int_field(M member) {
    return {[member](const PipelineConfig& c) { return std::to_string(member(c)); },
            [member](PipelineConfig& c, const std::string& k, const std::string& v) {
                member(c) = parse_number<int>(k, v);
            }};
}

template <typename M>
Field double_field(M member) {
    return {[member](const PipelineConfig& c) { return format_double(member(c)); },
            [member](PipelineConfig& c, const std::string& k, const std::string& v) {
                member(c) = parse_number<double>(k, v);
            }};
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
    return out;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        t["seed"] = {[](const PipelineConfig& c) { return std::to_string(c.seed); },
                     [](PipelineConfig& c, const std::string& k, const std::string& v) {
                         c.seed = parse_number<std::uint64_t>(k, v);
                     }};
        t["output"] = {[](const PipelineConfig& c) { return c.output; },
                       [](PipelineConfig& c, const std::string&, const std::string& v) { c.output = v; }};
        t["cases"] = int_field([](auto& c) -> auto& { return c.cases; });
        t["write_samples"] = {[](const PipelineConfig& c) { return std::string(c.write_samples ? "true" : "false"); },
                              [](PipelineConfig& c, const std::string& k, const std::string& v) {
                                  c.write_samples = parse_bool(k, v);
                              }};

        t["phantom.size"] = int_field([](auto& c) -> auto& { return c.phantom.size; });
        t["phantom.wall_thickness"] = int_field([](auto& c) -> auto& { return c.phantom.wall_thickness; });
        t["phantom.wall_amplitude"] =
            double_field([](auto& c) -> auto& { return c.phantom.wall_amplitude; });
        t["phantom.wall_period"] = double_field([](auto& c) -> auto& { return c.phantom.wall_period; });
        t["phantom.block_height"] = int_field([](auto& c) -> auto& { return c.phantom.block_height; });
        t["phantom.block_width"] = int_field([](auto& c) -> auto& { return c.phantom.block_width; });
        t["phantom.dim_factor"] = double_field([](auto& c) -> auto& { return c.phantom.dim_factor; });
        t["phantom.noise_sigma"] = double_field([](auto& c) -> auto& { return c.phantom.noise_sigma; });
        t["phantom.blur_radius"] = int_field([](auto& c) -> auto& { return c.phantom.blur_radius; });
        t["phantom.annotators"] = {
            [](const PipelineConfig& c) { return format_profiles(c.phantom.annotators); },
            [](PipelineConfig& c, const std::string& k, const std::string& v) {
                c.phantom.annotators = rethrow_as(k, [&] { return parse_profiles(v); });
            }};

        t["schedule.steps"] = int_field([](auto& c) -> auto& { return c.schedule.steps; });
        t["schedule.beta_start"] = double_field([](auto& c) -> auto& { return c.schedule.beta_start; });
        t["schedule.beta_end"] = double_field([](auto& c) -> auto& { return c.schedule.beta_end; });

        t["denoiser.kind"] = {[](const PipelineConfig& c) { return to_string(c.denoiser.kind); },
                              [](PipelineConfig& c, const std::string& k, const std::string& v) {
                                  if (v == "oracle")
                                      c.denoiser.kind = DenoiserKind::oracle;
                                  else if (v == "logistic")
                                      c.denoiser.kind = DenoiserKind::logistic;
                                  else
                                      throw ParameterError("config: '" + k + "' must be oracle or logistic");
                              }};
        t["denoiser.radius"] = int_field([](auto& c) -> auto& { return c.denoiser.train.radius; });
        t["denoiser.iterations"] = int_field([](auto& c) -> auto& { return c.denoiser.train.iterations; });
        t["denoiser.learning_rate"] =
            double_field([](auto& c) -> auto& { return c.denoiser.train.learning_rate; });
        t["denoiser.train_cases"] = int_field([](auto& c) -> auto& { return c.denoiser.train_cases; });

        t["sampler.kind"] = {[](const PipelineConfig& c) { return to_string(c.sampler.kind); },
                             [](PipelineConfig& c, const std::string& k, const std::string& v) {
                                 c.sampler.kind = rethrow_as(k, [&] { return parse_sampler_kind(v); });
                             }};
        t["sampler.steps"] = int_field([](auto& c) -> auto& { return c.sampler.steps; });
        t["sampler.samples"] = int_field([](auto& c) -> auto& { return c.sampler.samples; });

        t["consensus.tau"] = double_field([](auto& c) -> auto& { return c.tau; });

        t["correction.w1"] = double_field([](auto& c) -> auto& { return c.correction.w1; });
        t["correction.w2"] = double_field([](auto& c) -> auto& { return c.correction.w2; });
        t["correction.theta_alpha"] = double_field([](auto& c) -> auto& { return c.correction.theta_alpha; });
        t["correction.theta_beta"] = double_field([](auto& c) -> auto& { return c.correction.theta_beta; });
        t["correction.theta_gamma"] = double_field([](auto& c) -> auto& { return c.correction.theta_gamma; });
        t["correction.theta_delta"] = double_field([](auto& c) -> auto& { return c.correction.theta_delta; });
        t["correction.iterations"] = int_field([](auto& c) -> auto& { return c.correction.iterations; });
        t["correction.mode"] = {[](const PipelineConfig& c) { return to_string(c.correction.mode); },
                                [](PipelineConfig& c, const std::string& k, const std::string& v) {
                                    c.correction.mode = rethrow_as(k, [&] { return parse_update_mode(v); });
                                }};
        t["correction.backend"] = {[](const PipelineConfig& c) { return to_string(c.correction.backend); },
                                   [](PipelineConfig& c, const std::string& k, const std::string& v) {
                                       c.correction.backend = rethrow_as(k, [&] { return parse_backend(v); });
                                   }};
        t["correction.direction"] = {
            [](const PipelineConfig& c) { return to_string(c.correction.direction); },
            [](PipelineConfig& c, const std::string& k, const std::string& v) {
                c.correction.direction = rethrow_as(k, [&] { return parse_direction_source(v); });
            }};
        t["correction.window_sigmas"] =
            double_field([](auto& c) -> auto& { return c.correction.window_sigmas; });
        t["correction.lattice_blur_passes"] =
            int_field([](auto& c) -> auto& { return c.correction.lattice_blur_passes; });
        t["correction.icm_sweeps"] = int_field([](auto& c) -> auto& { return c.correction.icm_sweeps; });

        t["staple.prior"] = {[](const PipelineConfig& c) {
                                 return c.staple.prior ? format_double(*c.staple.prior) : std::string("auto");
                             },
                             [](PipelineConfig& c, const std::string& k, const std::string& v) {
                                 if (v == "auto")
                                     c.staple.prior.reset();
                                 else
                                     c.staple.prior = parse_number<double>(k, v);
                             }};
        t["staple.max_iterations"] = int_field([](auto& c) -> auto& { return c.staple.max_iterations; });
        t["staple.tolerance"] = double_field([](auto& c) -> auto& { return c.staple.tolerance; });
        t["staple.initial_performance"] =
            double_field([](auto& c) -> auto& { return c.staple.initial_performance; });

        t["eval.reference"] = {[](const PipelineConfig& c) { return to_string(c.eval.reference); },
                               [](PipelineConfig& c, const std::string& k, const std::string& v) {
                                   if (v == "staple")
                                       c.eval.reference = ReferenceKind::staple;
                                   else if (v == "truth")
                                       c.eval.reference = ReferenceKind::truth;
                                   else
                                       throw ParameterError("config: '" + k + "' must be staple or truth");
                               }};
        t["eval.rois"] = {[](const PipelineConfig& c) { return join(c.eval.rois); },
                          [](PipelineConfig& c, const std::string&, const std::string& v) {
                              c.eval.rois = split_list(v);
                          }};
        return t;
    }();
    return table;
}

}  // namespace

void PipelineConfig::validate() const {
    if (cases < 1) throw ParameterError("config: cases must be >= 1");
    if (output.empty()) throw ParameterError("config: output must not be empty");
    phantom.validate();
    const NoiseSchedule sched = make_schedule();
    sample_config(seed).validate(sched);
    if (denoiser.train.radius < 0) throw ParameterError("config: denoiser.radius must be >= 0");
    if (denoiser.train.iterations < 1) throw ParameterError("config: denoiser.iterations must be >= 1");
    if (!(denoiser.train.learning_rate > 0.0)) throw ParameterError("config: denoiser.learning_rate must be positive");
    if (denoiser.train_cases < 1) throw ParameterError("config: denoiser.train_cases must be >= 1");
    if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("config: consensus.tau must lie in (0,1)");
    correction.validate();
    if (staple.max_iterations < 1) throw ParameterError("config: staple.max_iterations must be >= 1");
    if (!(staple.tolerance > 0.0)) throw ParameterError("config: staple.tolerance must be positive");
    if (!(staple.initial_performance > 0.0 && staple.initial_performance < 1.0))
        throw ParameterError("config: staple.initial_performance must lie in (0,1)");
    if (staple.prior && !(*staple.prior > 0.0 && *staple.prior < 1.0))
        throw ParameterError("config: staple.prior must be auto or lie in (0,1)");
    if (eval.rois.empty()) throw ParameterError("config: eval.rois must name at least one ROI");
    std::set<std::string> seen;
    for (const auto& roi : eval.rois) {
        if (roi != "thin" && roi != "all") throw ParameterError("config: unknown ROI '" + roi + "' (thin, all)");
        if (!seen.insert(roi).second) throw ParameterError("config: ROI '" + roi + "' listed twice");
    }
}

NoiseSchedule PipelineConfig::make_schedule() const {
    return linear_schedule(schedule.steps, schedule.beta_start, schedule.beta_end);
}

SampleRunConfig PipelineConfig::sample_config(std::uint64_t run_seed) const {
    SampleRunConfig s;
    s.num_samples = sampler.samples;
    s.kind = sampler.kind;
    s.skip_steps = sampler.steps;
    s.seed = run_seed;
    return s;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, f] : fields()) keys.push_back(k);
    return keys;
}

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ParameterError("config: unknown key '" + key + "'");
    it->second.set(cfg, key, value);
}

std::string get_config_value(const PipelineConfig& cfg, const std::string& key) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ParameterError("config: unknown key '" + key + "'");
    return it->second.get(cfg);
}

PipelineConfig parse_config(std::istream& in) {
    PipelineConfig cfg;
    std::set<std::string> seen;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParameterError("config line " + std::to_string(number) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        if (!seen.insert(key).second) throw ParameterError("config: key '" + key + "' given twice");
        set_config_value(cfg, key, trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

PipelineConfig parse_config_text(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    return parse_config(in);
}

std::string serialize_config(const PipelineConfig& cfg) {
    std::string out;
    for (const auto& [key, field] : fields()) out += key + "=" + field.get(cfg) + "\n";
    return out;
}

std::string config_hash(const PipelineConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : serialize_config(cfg)) h = (h ^ ch) * 0x100000001b3ULL;
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace thinseg
