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

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "commands.hpp"
#include "support.hpp"
#include "thinseg/config.hpp"
#include "thinseg/errors.hpp"
#include "thinseg/imaging.hpp"

using namespace thinseg;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kSmall = {
    "--set", "phantom.size=32",         "--set", "schedule.steps=50",   "--set", "sampler.samples=6",
    "--set", "sampler.steps=10",        "--set", "correction.iterations=3", "--set", "denoiser.iterations=40",
    "--set", "denoiser.radius=1",       "--set", "cases=1"};

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args, bool small = true) {
    args.insert(args.begin(), "thinseg");
    if (small && args.size() > 1) args.insert(args.begin() + 2, kSmall.begin(), kSmall.end());
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// Every file under `dir` except the append-only run log, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "run.log")
            files[fs::relative(e.path(), dir).string()] = test::slurp(e.path());
    return files;
}

int count_lines(const std::string& text, const std::string& needle) {
    int n = 0;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) n += line.find(needle) != std::string::npos;
    return n;
}

}  // namespace

TEST_CASE("help and usage errors") {
    CHECK(invoke({"--help"}, false).code == cli::ok);
    const Result sub = invoke({"correct", "--help"}, false);
    CHECK(sub.code == cli::ok);
    CHECK(sub.out.find("--consensus") != std::string::npos);
    CHECK(invoke({}, false).code == cli::validation);
    CHECK(invoke({"frobnicate"}, false).code == cli::validation);
    CHECK(invoke({"sample"}, false).code == cli::validation);
    CHECK(invoke({"phantom", "--count", "two"}, false).code == cli::validation);
}

TEST_CASE("exit codes follow the error category") {
    std::ostringstream err;
    CHECK(cli::guarded([] {}, err) == cli::ok);
    CHECK(cli::guarded([] { throw ParameterError("p"); }, err) == cli::validation);
    CHECK(cli::guarded([] { throw LookupError("l"); }, err) == cli::validation);
    CHECK(cli::guarded([] { throw IoError("i"); }, err) == cli::io);
    CHECK(cli::guarded([] { throw FormatError("f"); }, err) == cli::io);
    CHECK(cli::guarded([] { throw ContractError("c"); }, err) == cli::contract);
    CHECK(err.str().find("contract violation: c") != std::string::npos);
}

TEST_CASE("validation failures stop before any output") {
    test::TempDir dir("cli_invalid");
    const Result r = invoke({"phantom", "--set", "correction.theta_alpha=0", "--out", (dir / "ph").string()});
    CHECK(r.code == cli::validation);
    CHECK(r.err.find("theta") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "ph"));
    CHECK(invoke({"pipeline", "--set", "correction.theta_alpha=-1", "--out", (dir / "p").string()}).code ==
          cli::validation);
    CHECK_FALSE(fs::exists(dir / "p"));
    CHECK(invoke({"phantom", "--set", "bogus=1", "--out", (dir / "ph").string()}).code == cli::validation);
    CHECK(invoke({"phantom", "--set", "novalue", "--out", (dir / "ph").string()}).code == cli::validation);
    {
        std::ofstream cfg(dir / "bad.cfg");
        cfg << "cases=2\ncases=3\n";
    }
    CHECK(invoke({"phantom", "--config", (dir / "bad.cfg").string(), "--out", (dir / "ph").string()}).code ==
          cli::validation);
}

TEST_CASE("missing inputs are I/O errors") {
    test::TempDir dir("cli_io");
    CHECK(invoke({"phantom", "--config", (dir / "none.cfg").string()}).code == cli::io);
    CHECK(invoke({"consensus", "--samples", (dir / "none").string(), "--out", (dir / "c").string()}).code == cli::io);
    CHECK(invoke({"train", "--data", (dir / "none").string(), "--out", (dir / "t").string()}).code == cli::io);
    CHECK(invoke({"sample", "--case", (dir / "none").string(), "--oracle", "--out", (dir / "s").string()}).code ==
          cli::io);
    CHECK(invoke({"correct", "--consensus", (dir / "none.pgm").string(), "--out", (dir / "k").string()}).code ==
          cli::io);
    {
        std::ofstream bad(dir / "bad.pgm");
        bad << "P2\n2 2\n255\n0 0 0 0\n";
    }
    CHECK(invoke({"evaluate", "--pred", (dir / "bad.pgm").string(), "--ref", (dir / "bad.pgm").string(), "--out",
               (dir / "e").string()})
              .code == cli::io);
}

TEST_CASE("every subcommand end to end, deterministically") {
    test::TempDir dir("cli_chain");
    const auto path = [&](const std::string& p) { return (dir / p).string(); };

    for (const std::string run : {"a", "b"}) {
        REQUIRE(invoke({"phantom", "--count", "2", "--out", path(run + "/phantom")}).code == cli::ok);
        const std::string case0 = path(run + "/phantom/case_0000");
        REQUIRE(invoke({"train", "--data", path(run + "/phantom"), "--out", path(run + "/train")}).code == cli::ok);
        REQUIRE(invoke({"sample", "--case", case0, "--oracle", "--out", path(run + "/sample")}).code == cli::ok);
        REQUIRE(invoke({"sample", "--case", case0, "--model", path(run + "/train/model.txt"), "--index", "3", "--out",
                     path(run + "/sample_model")})
                    .code == cli::ok);
        REQUIRE(invoke({"consensus", "--samples", path(run + "/sample"), "--out", path(run + "/consensus")}).code ==
                cli::ok);
        REQUIRE(invoke({"correct", "--consensus", path(run + "/consensus/consensus.pgm"), "--out",
                     path(run + "/correct")})
                    .code == cli::ok);
        REQUIRE(invoke({"correct", "--consensus", path(run + "/consensus/consensus.pgm"), "--cond", case0 + "/cond.pgm",
                     "--set", "correction.direction=image", "--out", path(run + "/correct_image")})
                    .code == cli::ok);
        REQUIRE(invoke({"staple", "--masks", case0 + "/ann_0.pgm", case0 + "/ann_1.pgm", case0 + "/ann_2.pgm", "--out",
                     path(run + "/staple")})
                    .code == cli::ok);
        const Result e = invoke({"evaluate", "--pred", path(run + "/correct/corrected.pgm"), "--ref",
                              path(run + "/staple/fused.pgm"), "--roi", "thin=" + case0 + "/roi_thin.pgm", "--roi",
                              "all=" + case0 + "/truth.pgm", "--case-id", "case_0000", "--method", "corrected",
                              "--out", path(run + "/evaluate")});
        REQUIRE(e.code == cli::ok);
        CHECK(e.out.find("case_0000,corrected,thin,") != std::string::npos);
    }

    CHECK(snapshot(dir / "a") == snapshot(dir / "b"));
    const auto files = snapshot(dir / "a");
    for (const char* f : {"phantom/manifest.txt", "phantom/case_0001/case.cfg", "train/model.txt", "train/loss.txt",
                          "sample/manifest.txt", "sample/sample_0005.pgm", "sample_model/sample_0000.pgm",
                          "consensus/consensus.pgm", "consensus/uncertainty.pgm", "consensus/baseline.pgm",
                          "correct/corrected.pgm", "correct/marginals.pgm", "correct/energy.txt",
                          "staple/fused.pgm", "staple/weights.pgm", "staple/staple_report.txt",
                          "evaluate/scores.csv"})
        CHECK_MESSAGE(files.count(f) == 1, f);
    CHECK(files.at("sample/manifest.txt") != files.at("sample_model/manifest.txt"));
    CHECK(read_mask(dir / "a/correct/corrected.pgm").rows() == 32);
    CHECK(files.at("correct/energy.txt").find("free_energy[3]=") != std::string::npos);

    CHECK(invoke({"correct", "--consensus", path("a/consensus/consensus.pgm"), "--set", "correction.direction=image",
               "--out", path("x")})
              .code == cli::validation);
    CHECK(invoke({"sample", "--case", path("a/phantom/case_0000"), "--oracle", "--model", path("a/train/model.txt"),
               "--out", path("x")})
              .code == cli::validation);
    CHECK(invoke({"sample", "--case", path("a/phantom/case_0000"), "--out", path("x")}).code == cli::validation);
    CHECK(invoke({"staple", "--masks", path("a/phantom/case_0000/ann_0.pgm"), "--out", path("x")}).code ==
          cli::validation);
}

TEST_CASE("run log appends one line per invocation") {
    test::TempDir dir("cli_log");
    const std::string out = (dir / "ph").string();
    REQUIRE(invoke({"phantom", "--out", out}).code == cli::ok);
    REQUIRE(invoke({"phantom", "--out", out}).code == cli::ok);
    const std::string log = test::slurp(dir / "ph" / "run.log");
    PipelineConfig cfg;
    for (std::size_t k = 0; k + 1 < kSmall.size(); k += 2) {
        const auto& kv = kSmall[k + 1];
        set_config_value(cfg, kv.substr(0, kv.find('=')), kv.substr(kv.find('=') + 1));
    }
    const std::string line = "command=phantom config_hash=" + config_hash(cfg) + " seed=20240501";
    CHECK(count_lines(log, line) == 2);
}

TEST_CASE("output root from the environment") {
    test::TempDir dir("cli_env");
    ::setenv("THINSEG_OUTPUT_ROOT", dir.path().c_str(), 1);
    const Result r = invoke({"phantom"});
    ::unsetenv("THINSEG_OUTPUT_ROOT");
    REQUIRE(r.code == cli::ok);
    CHECK(fs::exists(dir / "phantom" / "manifest.txt"));
    CHECK(fs::exists(dir / "phantom" / "case_0000" / "cond.pgm"));
}

TEST_CASE("one-case pipeline emits baseline and corrected rows") {
    test::TempDir dir("cli_pipeline");
    const Result r = invoke({"pipeline", "--out", (dir / "run").string()});
    REQUIRE(r.code == cli::ok);
    const std::string csv = test::slurp(dir / "run" / "summary.csv");
    CHECK(count_lines(csv, "case_0000,baseline,") == 2);
    CHECK(count_lines(csv, "case_0000,corrected,") == 2);
    CHECK(count_lines(csv, "mean,corrected,thin,") == 1);
    CHECK(fs::exists(dir / "run" / "config.cfg"));
    CHECK(fs::exists(dir / "run" / "results" / "case_0000" / "corrected.pgm"));
    CHECK(fs::exists(dir / "run" / "run.log"));

    const Result again = invoke({"pipeline", "--out", (dir / "run2").string()});
    REQUIRE(again.code == cli::ok);
    CHECK(snapshot(dir / "run") == snapshot(dir / "run2"));

    const Result logistic =
        invoke({"pipeline", "--set", "denoiser.kind=logistic", "--set", "denoiser.train_cases=1", "--out",
             (dir / "logistic").string()});
    REQUIRE(logistic.code == cli::ok);
    CHECK(fs::exists(dir / "logistic" / "model.txt"));
}

TEST_CASE("installed binary reports exit codes") {
    test::TempDir dir("cli_binary");
    const std::string bin = THINSEG_CLI_PATH;
    auto status = [](const std::string& cmd) {
        const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    CHECK(status(bin + " --help") == 0);
    CHECK(status(bin + " phantom --set correction.theta_alpha=0 --out " + (dir / "x").string()) == 1);
    CHECK(status(bin + " consensus --samples " + (dir / "missing").string()) == 2);
    CHECK(status(bin + " phantom --count 1 --set phantom.size=32 --out " + (dir / "ok").string()) == 0);
    CHECK(fs::exists(dir / "ok" / "case_0000" / "truth.pgm"));
}
