// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "forgetlab/checkpoint.hpp"
#include "forgetlab/cli/cli.hpp"
#include "forgetlab/qa_format.hpp"
#include "forgetlab/rfp.hpp"

using namespace forgetlab;
using namespace forgetlab::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;

    [[nodiscard]] nlohmann::json summary() const {
        std::istringstream in(out);
        std::string line, last;
        while (std::getline(in, line)) {
            if (!line.empty()) last = line;
        }
        return nlohmann::json::parse(last);
    }
};

Result invoke(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Result r;
    r.code = run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("forgetlab_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string write(const fs::path& path, const std::string& text) {
    io::write_file(path.string(), text);
    return path.string();
}

std::string short_dataset(const fs::path& path, int n) {
    qa::Dataset d("vqa");
    for (int i = 0; i < n; ++i) {
        qa::InstructionSample s;
        s.id = "q" + std::to_string(i);
        s.question = "What is on the table?";
        s.rfp = std::string(asd::kRfpShort);
        s.gt_label = i % 2 ? "cup" : "plate";
        s.format = qa::QuestionFormat::ShortAnswer;
        d.add(s);
    }
    qa::save_dataset(d, path.string());
    return path.string();
}

}  // namespace

TEST(CliParse, DefaultsAndPrecedence) {
    const auto dir = scratch("precedence");
    const auto cfg = write(dir / "cfg.json",
                           R"({"train": {"lambda": 5000, "epochs": 7}, "seeds": [3, 4], "suite": {"mix": 0}})");

    const auto defaults = parse_invocation({"train", "--out", "o"});
    EXPECT_EQ(defaults.command, "train");
    EXPECT_EQ(defaults.config.train.reg.lambda, 2.5e3);
    EXPECT_EQ(defaults.config.train.reg.m_percent, 2.0);
    EXPECT_EQ(defaults.config.seeds, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
    EXPECT_EQ(defaults.config.suite.style_mix_percent, 20.0);

    const auto from_file = parse_invocation({"train", "--out", "o", "--config", cfg});
    EXPECT_EQ(from_file.config.train.reg.lambda, 5000.0);
    EXPECT_EQ(from_file.config.train.epochs, 7);
    EXPECT_EQ(from_file.config.seeds, (std::vector<std::uint64_t>{3, 4}));
    EXPECT_EQ(from_file.config.suite.style_mix_percent, 0.0);

    // Flags win over the file per field; other file fields survive.
    const auto flagged = parse_invocation({"train", "--config", cfg, "--lambda", "1e3", "--out", "o", "--mix", "20"});
    EXPECT_EQ(flagged.config.train.reg.lambda, 1e3);
    EXPECT_EQ(flagged.config.train.epochs, 7);
    EXPECT_EQ(flagged.config.suite.style_mix_percent, 20.0);

    const auto modes = parse_invocation({"train", "--out", "o", "--mode", "plain,reglora", "--seeds", "0,5"});
    EXPECT_EQ(modes.config.modes, (std::vector<train::Mode>{train::Mode::PlainLoRA, train::Mode::RegLoRA}));
    EXPECT_EQ(modes.config.seeds, (std::vector<std::uint64_t>{0, 5}));
}

TEST(CliParse, EndpointFromEnvironmentOnlyAsFallback) {
    ::setenv("FORGETLAB_REWRITER_URL", "http://env.example/rewrite", 1);
    const auto env = parse_invocation({"asd", "--input", "a.jsonl", "--output", "b.jsonl", "--rewriter", "http"});
    EXPECT_EQ(env.config.asd.rewriter.endpoint, "http://env.example/rewrite");
    const auto flag = parse_invocation({"asd", "--input", "a.jsonl", "--output", "b.jsonl", "--rewriter", "http",
                                        "--endpoint", "http://flag.example/rewrite"});
    EXPECT_EQ(flag.config.asd.rewriter.endpoint, "http://flag.example/rewrite");
    ::unsetenv("FORGETLAB_REWRITER_URL");
}

TEST(CliParse, Errors) {
    EXPECT_THROW((void)parse_invocation({"train"}), UsageError);  // no --out
    EXPECT_THROW((void)parse_invocation({"asd", "--input", "a"}), UsageError);
    EXPECT_THROW((void)parse_invocation({"asd", "--input", "a", "--output", "b", "--x", "150"}), ValidationError);
    EXPECT_THROW((void)parse_invocation({"train", "--out", "o", "--tasks", "t.flab", "--mix", "20"}), ValidationError);
    EXPECT_THROW((void)parse_invocation({"train", "--out", "o", "--mode", "ewc"}), ValidationError);
    EXPECT_THROW((void)parse_invocation({"train", "--out", "o", "--seeds", ""}), ValidationError);

    const auto dir = scratch("errors");
    const auto bad = write(dir / "bad.json", R"({"train": {"lamda": 1}})");
    EXPECT_THROW((void)parse_invocation({"train", "--out", "o", "--config", bad}), ValidationError);
    EXPECT_EQ(parse_invocation({"--version"}).command, "version");
    EXPECT_EQ(parse_invocation({"--help"}).command, "help");
}

TEST(CliRun, ExitCodes) {
    EXPECT_EQ(invoke({"frobnicate"}).code, kExitUsage);
    EXPECT_EQ(invoke({"train", "--bogus-flag"}).code, kExitUsage);
    EXPECT_EQ(invoke({"report"}).code, kExitUsage);

    const auto dir = scratch("exit");
    const auto input = short_dataset(dir / "vqa.jsonl", 20);
    EXPECT_EQ(invoke({"asd", "--input", input, "--output", (dir / "o.jsonl").string(), "--x", "150"}).code,
              kExitValidation);
    EXPECT_EQ(invoke({"asd", "--input", (dir / "missing.jsonl").string(), "--output", (dir / "o.jsonl").string()}).code,
              kExitValidation);

    const auto strict = invoke({"asd", "--input", input, "--output", (dir / "o.jsonl").string(), "--x", "100",
                                "--rewriter", "http", "--endpoint", "http://127.0.0.1:9/rewrite", "--timeout-ms",
                                "200", "--retries", "0", "--strict"});
    EXPECT_EQ(strict.code, kExitRewriter) << strict.err;

    const auto diverge = invoke({"train", "--out", (dir / "run").string(), "--seeds", "0", "--mode", "plain",
                                 "--optimizer", "sgd", "--lr", "1e12", "--epochs", "20", "--samples", "60"});
    EXPECT_EQ(diverge.code, kExitDivergence) << diverge.err;

    const auto version = invoke({"--version"});
    EXPECT_EQ(version.code, kExitOk);
    EXPECT_EQ(version.out, "forgetlab 0.1.0\n");
}

TEST(CliRun, AsdWritesOutputsAndResolvedConfig) {
    const auto dir = scratch("asd");
    const auto input = short_dataset(dir / "vqa.jsonl", 50);
    const auto output = (dir / "out" / "vqa_asd.jsonl").string();
    const auto r = invoke({"asd", "--input", input, "--output", output, "--x", "40", "--seed", "3"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto s = r.summary();
    EXPECT_EQ(s["command"], "asd");
    EXPECT_EQ(s["input_samples"], 50);
    EXPECT_EQ(s["output_samples"], 50);
    EXPECT_EQ(s["transformed"], 20);
    EXPECT_EQ(qa::load_dataset(output).size(), 50u);
    EXPECT_TRUE(fs::exists(output + ".log.json"));

    const auto resolved = nlohmann::json::parse(io::read_file(output + ".config.json"));
    EXPECT_EQ(resolved["asd"]["x"], 40.0);
    EXPECT_EQ(resolved["asd"]["seed"], 3);
    EXPECT_EQ(resolved["asd"]["rewriter"]["kind"], "template");

    // Same inputs, same bytes.
    const auto again = (dir / "again.jsonl").string();
    ASSERT_EQ(invoke({"asd", "--input", input, "--output", again, "--x", "40", "--seed", "3"}).code, kExitOk);
    EXPECT_EQ(io::read_file(again), io::read_file(output));
}

TEST(CliRun, SynthTrainReportEval) {
    const auto dir = scratch("pipeline");
    const auto tasks = (dir / "suite.flab").string();
    const auto synth = invoke({"synth", "--out", tasks, "--mix", "20", "--seed", "1", "--samples", "100"});
    ASSERT_EQ(synth.code, kExitOk) << synth.err;
    EXPECT_EQ(synth.summary()["tasks"], 3);
    EXPECT_EQ(io::read_task_suite(tasks).size(), 3u);
    EXPECT_TRUE(fs::exists(tasks + ".config.json"));

    const auto run_dir = (dir / "run").string();
    const auto train = invoke({"train", "--tasks", tasks, "--mode", "plain,reglora", "--seeds", "0,1", "--epochs",
                               "3", "--out", run_dir});
    ASSERT_EQ(train.code, kExitOk) << train.err;
    EXPECT_EQ(train.summary()["runs"], 4);
    const auto manifest = nlohmann::json::parse(io::read_file(run_dir + "/manifest.json"));
    EXPECT_EQ(manifest["runs"].size(), 4u);
    const auto resolved = nlohmann::json::parse(io::read_file(run_dir + "/config.json"));
    EXPECT_EQ(resolved["train"]["epochs"], 3);
    EXPECT_TRUE(fs::exists(run_dir + "/reglora/seed1/joint.csv"));
    EXPECT_TRUE(fs::exists(run_dir + "/plain/seed0/task2.flab"));

    const auto report = invoke({"report", "--run", run_dir});
    ASSERT_EQ(report.code, kExitOk) << report.err;
    EXPECT_NE(report.out.find("MFT"), std::string::npos);
    EXPECT_TRUE(report.summary()["means"].contains("reglora"));

    const auto eval = invoke({"eval", "--checkpoint", run_dir + "/reglora/seed0/task2.flab", "--tasks", tasks});
    ASSERT_EQ(eval.code, kExitOk) << eval.err;
    const auto es = eval.summary();
    EXPECT_EQ(es["tasks"].size(), 3u);
    EXPECT_EQ(es["tasks_completed"], 3);
    EXPECT_TRUE(es.contains("config"));
}

TEST(CliRun, ReportOnHandBuiltRun) {
    const auto dir = scratch("report");
    fs::create_directories(dir / "plain" / "seed0");
    write(dir / "plain" / "seed0" / "joint.csv", "60,\n40,80\n");
    write(dir / "manifest.json",
          R"({"version":1,"runs":[{"mode":"plain","seed":0,"matrices":{"joint":"plain/seed0/joint.csv"}}]})");
    const auto r = invoke({"report", "--run", dir.string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto m = r.summary()["means"]["plain"]["joint"];
    EXPECT_EQ(m["mft"], 70.0);
    EXPECT_EQ(m["mfn"], 60.0);
    EXPECT_EQ(m["maa"], 60.0);
    EXPECT_EQ(m["bwt"], -10.0);
    EXPECT_NE(r.out.find("plain    0     joint       70.00    60.00    60.00   -10.00"), std::string::npos) << r.out;
}
