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

#include "commands.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "thinseg/config.hpp"
#include "thinseg/consensus.hpp"
#include "thinseg/errors.hpp"
#include "thinseg/metrics.hpp"
#include "thinseg/pipeline.hpp"

namespace thinseg::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out;
};

PipelineConfig load(const Common& c) {
    PipelineConfig cfg;
    std::ostringstream text;
    if (!c.config_path.empty()) {
        std::ifstream in(c.config_path);
        if (!in) throw IoError("cannot open config " + c.config_path);
        text << in.rdbuf() << "\n";
    }
    cfg = parse_config_text(text.str());
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParameterError("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

fs::path output_root(const PipelineConfig& cfg) {
    const char* env = std::getenv("THINSEG_OUTPUT_ROOT");
    return env && *env ? fs::path(env) : fs::path(cfg.output);
}

fs::path out_dir(const Common& c, const PipelineConfig& cfg, const std::string& command) {
    return c.out.empty() ? output_root(cfg) / command : fs::path(c.out);
}

void log_run(const fs::path& dir, const std::string& command, const PipelineConfig& cfg) {
    fs::create_directories(dir);
    std::ofstream log(dir / "run.log", std::ios::app);
    if (!log) throw IoError("cannot write " + (dir / "run.log").string());
    log << "command=" << command << " config_hash=" << config_hash(cfg) << " seed=" << cfg.seed << "\n";
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "key=value config file");
    sub->add_option("--set", c.overrides, "override one config key (key=value)");
    sub->add_option("--out", c.out, "output directory");
}

void require_dir(const fs::path& p, const char* what) {
    if (!fs::is_directory(p)) throw IoError(std::string(what) + " is not a directory: " + p.string());
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Thin-structure segmentation: diffusion ensembles and consensus-driven correction"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    std::function<void()> action;

    Common phantom_c;
    int count = 0;
    auto* phantom = app.add_subcommand("phantom", "generate a synthetic case suite");
    add_common(phantom, phantom_c);
    phantom->add_option("--count", count, "number of cases (default: config 'cases')");
    phantom->callback([&] {
        action = [&] {
            PipelineConfig cfg = load(phantom_c);
            if (count > 0) cfg.cases = count;
            if (cfg.cases < 1) throw ParameterError("--count must be >= 1");
            PhantomSpec spec = cfg.phantom;
            spec.seed = stage_seed(cfg.seed, Stage::phantom);
            const fs::path dir = out_dir(phantom_c, cfg, "phantom");
            const auto dirs = write_suite(dir, generate_suite(spec, cfg.cases), spec);
            log_run(dir, "phantom", cfg);
            out << "wrote " << dirs.size() << " cases to " << dir.string() << "\n";
        };
    });

    Common train_c;
    std::string data_dir, model_path;
    auto* train = app.add_subcommand("train", "fit the patch-logistic denoiser");
    add_common(train, train_c);
    train->add_option("--data", data_dir, "phantom suite directory")->required();
    train->add_option("--out-model", model_path, "model file (default <out>/model.txt)");
    train->callback([&] {
        action = [&] {
            const PipelineConfig cfg = load(train_c);
            TrainingSet data;
            for (const auto& dir : read_manifest(data_dir)) {
                PhantomCase c = read_case(dir);
                data.push_back({c.cond, c.annotations});
            }
            Rng rng(stage_seed(cfg.seed, Stage::training));
            const TrainResult r = train_logistic(data, cfg.make_schedule(), cfg.denoiser.train, rng);
            const fs::path dir = out_dir(train_c, cfg, "train");
            const fs::path path = model_path.empty() ? dir / "model.txt" : fs::path(model_path);
            fs::create_directories(dir);
            if (path.has_parent_path()) fs::create_directories(path.parent_path());
            save_model(path, r.model);
            std::ofstream trace(dir / "loss.txt", std::ios::trunc);
            trace.precision(17);
            for (double l : r.loss_trace) trace << l << "\n";
            log_run(dir, "train", cfg);
            out << "final loss " << (r.loss_trace.empty() ? 0.0 : r.loss_trace.back()) << "\n";
        };
    });

    Common sample_c;
    std::string case_dir, sample_model, oracle_dir, oracle_id;
    bool use_oracle = false;
    std::uint64_t index = 0;
    auto* sample = app.add_subcommand("sample", "draw an ensemble of segmentations for one case");
    add_common(sample, sample_c);
    sample->add_option("--case", case_dir, "case directory")->required();
    auto* model_opt = sample->add_option("--model", sample_model, "logistic model file");
    auto* oracle_flag = sample->add_flag("--oracle", use_oracle, "exact oracle over the case annotations");
    auto* oracle_dir_opt = sample->add_option("--oracle-dir", oracle_dir, "saved oracle table");
    sample->add_option("--oracle-id", oracle_id, "case id inside --oracle-dir (default: case directory name)");
    sample->add_option("--index", index, "stream index for the sampling seed");
    model_opt->excludes(oracle_flag)->excludes(oracle_dir_opt);
    oracle_flag->excludes(oracle_dir_opt);
    sample->callback([&] {
        action = [&] {
            const PipelineConfig cfg = load(sample_c);
            if (sample_model.empty() && !use_oracle && oracle_dir.empty())
                throw ParameterError("sample: one of --model, --oracle or --oracle-dir is required");
            require_dir(case_dir, "--case");
            const PhantomCase c = read_case(case_dir);
            const NoiseSchedule schedule = cfg.make_schedule();
            const std::uint64_t seed = derive_seed(stage_seed(cfg.seed, Stage::sampling), index);
            std::vector<BinaryMask> masks;
            if (!sample_model.empty()) {
                const LogisticDenoiser d(load_model(sample_model), schedule);
                masks = sample_ensemble(d, c.cond, schedule, cfg.sample_config(seed));
            } else {
                TabularOracle oracle;
                std::string id = fs::path(case_dir).lexically_normal().filename().string();
                if (id.empty()) id = fs::path(case_dir).lexically_normal().parent_path().filename().string();
                if (use_oracle) {
                    oracle.add_case(id, c.annotations);
                } else {
                    oracle = TabularOracle::load(oracle_dir);
                    if (!oracle_id.empty()) id = oracle_id;
                }
                const OracleDenoiser d(oracle, schedule, id);
                masks = sample_ensemble(d, c.cond, schedule, cfg.sample_config(seed));
            }
            const fs::path dir = out_dir(sample_c, cfg, "sample");
            write_ensemble(dir, masks, cfg.sample_config(seed));
            log_run(dir, "sample", cfg);
            out << "wrote " << masks.size() << " samples to " << dir.string() << "\n";
        };
    });

    Common consensus_c;
    std::string samples_dir;
    auto* consensus = app.add_subcommand("consensus", "aggregate an ensemble into consensus and uncertainty maps");
    add_common(consensus, consensus_c);
    consensus->add_option("--samples", samples_dir, "ensemble directory")->required();
    consensus->callback([&] {
        action = [&] {
            const PipelineConfig cfg = load(consensus_c);
            const auto map = aggregate<double>(read_ensemble(samples_dir));
            const fs::path dir = out_dir(consensus_c, cfg, "consensus");
            fs::create_directories(dir);
            write_prob(dir / "consensus.pgm", map.level);
            write_prob(dir / "uncertainty.pgm", uncertainty(map));
            write_mask(dir / "baseline.pgm", threshold(map, cfg.tau));
            log_run(dir, "consensus", cfg);
            out << "aggregated " << map.ensemble_size << " samples\n";
        };
    });

    Common correct_c;
    std::string consensus_path, cond_path;
    auto* corr = app.add_subcommand("correct", "consensus-driven correction of a consensus map");
    add_common(corr, correct_c);
    corr->add_option("--consensus", consensus_path, "16-bit consensus PGM")->required();
    corr->add_option("--cond", cond_path, "conditioning image, needed when correction.direction=image");
    corr->callback([&] {
        action = [&] {
            const PipelineConfig cfg = load(correct_c);
            const ProbMap p = read_prob(consensus_path);
            std::optional<Raster<double>> image;
            if (!cond_path.empty()) {
                image = direction_image(read_gray(cond_path));
                if (!same_shape(*image, p)) throw ParameterError("correct: --cond shape differs from the consensus map");
            }
            const auto r = correct(p, cfg.correction, image ? &*image : nullptr, true);
            const fs::path dir = out_dir(correct_c, cfg, "correct");
            fs::create_directories(dir);
            write_mask(dir / "corrected.pgm", r.labels);
            write_prob(dir / "marginals.pgm", r.marginals);
            std::ofstream trace(dir / "energy.txt", std::ios::trunc);
            if (!trace) throw IoError("cannot write " + (dir / "energy.txt").string());
            trace.precision(17);
            trace << "mean_field_energy=" << r.energy_mean_field << "\ncorrected_energy=" << r.energy << "\n";
            for (std::size_t k = 0; k < r.free_energy_trace.size(); ++k)
                trace << "free_energy[" << k + 1 << "]=" << r.free_energy_trace[k] << "\n";
            log_run(dir, "correct", cfg);
            out << "energy " << r.energy << "\n";
        };
    });

    Common staple_c;
    std::vector<std::string> mask_paths;
    auto* staple = app.add_subcommand("staple", "fuse rater masks with STAPLE");
    add_common(staple, staple_c);
    staple->add_option("--masks", mask_paths, "rater masks")->required();
    staple->callback([&] {
        action = [&] {
            const PipelineConfig cfg = load(staple_c);
            std::vector<BinaryMask> masks;
            for (const auto& m : mask_paths) masks.push_back(read_mask(m));
            const StapleResult r = staple_fuse(masks, cfg.staple);
            const fs::path dir = out_dir(staple_c, cfg, "staple");
            fs::create_directories(dir);
            write_mask(dir / "fused.pgm", r.fused);
            write_prob(dir / "weights.pgm", r.weights);
            write_staple_report(dir / "staple_report.txt", r);
            log_run(dir, "staple", cfg);
            out << "staple " << (r.converged ? "converged" : "stopped") << " after " << r.iterations
                << " iterations\n";
        };
    });

    Common eval_c;
    std::string pred_path, ref_path, case_id = "case", method = "pred";
    std::vector<std::string> roi_specs;
    auto* evaluate = app.add_subcommand("evaluate", "score a prediction against a reference");
    add_common(evaluate, eval_c);
    evaluate->add_option("--pred", pred_path, "predicted mask")->required();
    evaluate->add_option("--ref", ref_path, "reference mask")->required();
    evaluate->add_option("--roi", roi_specs, "name=mask.pgm; default is the whole image as 'all'");
    evaluate->add_option("--case-id", case_id, "case id column");
    evaluate->add_option("--method", method, "method column");
    evaluate->callback([&] {
        action = [&] {
            const PipelineConfig cfg = load(eval_c);
            const BinaryMask pred = read_mask(pred_path);
            const BinaryMask ref = read_mask(ref_path);
            NamedRois rois;
            for (const auto& spec : roi_specs) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos || eq == 0) throw ParameterError("--roi expects name=path, got '" + spec + "'");
                rois[spec.substr(0, eq)] = read_mask(spec.substr(eq + 1));
            }
            if (rois.empty()) rois["all"] = ROIMask::Ones(ref.rows(), ref.cols());
            std::vector<ScoreRow> rows;
            for (const auto& s : evaluate_case(pred, ref, rois)) rows.push_back({case_id, method, s});
            const fs::path dir = out_dir(eval_c, cfg, "evaluate");
            fs::create_directories(dir);
            std::ofstream csv(dir / "scores.csv", std::ios::trunc);
            if (!csv) throw IoError("cannot write " + (dir / "scores.csv").string());
            write_results_csv(csv, rows, method);
            log_run(dir, "evaluate", cfg);
            write_results_csv(out, rows, method);
        };
    });

    Common pipe_c;
    auto* pipeline = app.add_subcommand("pipeline", "full run: phantoms, sampling, correction, evaluation");
    add_common(pipeline, pipe_c);
    pipeline->callback([&] {
        action = [&] {
            const PipelineConfig cfg = load(pipe_c);
            const fs::path dir = pipe_c.out.empty() ? output_root(cfg) : fs::path(pipe_c.out);
            const PipelineSummary s = run_pipeline(cfg, dir);
            log_run(dir, "pipeline", cfg);
            out << "processed " << s.cases.size() << " cases; summary in " << (dir / "summary.csv").string() << "\n";
        };
    });

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return validation;
    }

    return action ? guarded(action, err) : ok;
}

int guarded(const std::function<void()>& action, std::ostream& err) {
    try {
        action();
        return ok;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << "\n";
        return validation;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return io;
    } catch (const fs::filesystem_error& e) {
        err << "I/O error: " << e.what() << "\n";
        return io;
    } catch (const ContractError& e) {
        err << "contract violation: " << e.what() << "\n";
        return contract;
    }
}

}  // namespace thinseg::cli
