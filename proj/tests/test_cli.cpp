#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "trithp/checkpoint.hpp"
#include "trithp/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("trithp_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RunResult run(const std::string& args, const fs::path& dir) {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(TRITHP_CLI) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

}  // namespace

TEST(Cli, SimulateIsByteIdenticalOnRerun) {
    const fs::path dir = scratch("simulate");
    ASSERT_EQ(run("simulate --K 5 --seqs 100 --seed 7 --out " + (dir / "a").string(), dir).code, 0);
    ASSERT_EQ(run("simulate --K 5 --seqs 100 --seed 7 --out " + (dir / "b").string(), dir).code, 0);
    for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json"}) {
        const std::string a = slurp(dir / "a" / f);
        EXPECT_FALSE(a.empty()) << f;
        EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
    }
    const auto ds = trithp::load_dataset(dir / "a" / "train.jsonl");
    EXPECT_EQ(ds.sequences.size(), 70u);
    EXPECT_EQ(ds.num_types, 5u);
    fs::remove_all(dir);
}

TEST(Cli, GradcheckPassesAndExitsZero) {
    const fs::path dir = scratch("gradcheck");
    const RunResult r = run("gradcheck --seed 1 --out " + dir.string(), dir);
    EXPECT_EQ(r.code, 0) << r.err;
    const std::string csv = slurp(dir / "gradcheck.csv");
    EXPECT_NE(csv.find("objective_mc"), std::string::npos);
    EXPECT_NE(csv.find("objective_ni"), std::string::npos);
    EXPECT_EQ(csv.find(",0\n"), std::string::npos) << csv;
    fs::remove_all(dir);
}

TEST(Cli, TrainThenEvalReproducesBestDevMetrics) {
    const fs::path dir = scratch("train");
    ASSERT_EQ(run("simulate --K 3 --seqs 60 --seed 3 --horizon 10 --min-len 5 --max-len 40 --out " + (dir / "data").string(),
                  dir)
                  .code,
              0);
    {
        std::ofstream cfg(dir / "c.json");
        cfg << R"({"model": {"layers": 1, "model_dim": 8, "key_dim": 4, "value_dim": 4, "hidden_dim": 16},
                  "epochs": 3, "batch_size": 8, "mc_samples": 5, "seed": 5,
                  "train": ")" << (dir / "data" / "train.jsonl").string()
            << R"(", "dev": ")" << (dir / "data" / "dev.jsonl").string() << R"("})";
    }
    const RunResult t = run("train --config " + (dir / "c.json").string() + " --out " + (dir / "run").string(), dir);
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_NE(t.err.find("epoch 3"), std::string::npos) << t.err;
    EXPECT_TRUE(fs::exists(dir / "run" / "history.csv"));

    const auto summary = trithp::read_json_file(dir / "run" / "summary.json");
    const RunResult e = run("eval --model " + (dir / "run" / "best_model.json").string() + " --data " +
                                (dir / "data" / "dev.jsonl").string() + " --out " + (dir / "eval").string(),
                            dir);
    ASSERT_EQ(e.code, 0) << e.err;
    const auto report = trithp::read_json_file(dir / "eval" / "eval.json");
    EXPECT_EQ(report.at("ll_per_event").get<double>(), summary.at("best_dev").at("ll_per_event").get<double>());
    EXPECT_EQ(report.at("accuracy").get<double>(), summary.at("best_dev").at("accuracy").get<double>());
    EXPECT_EQ(report.at("rmse").get<double>(), summary.at("best_dev").at("rmse").get<double>());
    EXPECT_TRUE(fs::exists(dir / "eval" / "eval.csv"));
    fs::remove_all(dir);
}

TEST(Cli, FlagsOverrideTheConfigFile) {
    const fs::path dir = scratch("override");
    ASSERT_EQ(run("simulate --K 2 --seqs 20 --seed 1 --horizon 10 --min-len 5 --max-len 40 --out " + (dir / "data").string(),
                  dir)
                  .code,
              0);
    {
        std::ofstream cfg(dir / "c.json");
        cfg << R"({"model": {"layers": 1, "model_dim": 4, "key_dim": 2, "value_dim": 2, "hidden_dim": 4},
                  "epochs": 5, "seed": 1, "method": "mc"})";
    }
    const RunResult t = run("train --config " + (dir / "c.json").string() + " --epochs 1 --seed 9 --method ni --train " +
                                (dir / "data" / "train.jsonl").string() + " --out " + (dir / "run").string(),
                            dir);
    ASSERT_EQ(t.code, 0) << t.err;
    const auto used = trithp::read_json_file(dir / "run" / "config.json");
    EXPECT_EQ(used.at("epochs"), 1);
    EXPECT_EQ(used.at("seed"), 9);
    EXPECT_EQ(used.at("method"), "ni");
    EXPECT_EQ(used.at("model").at("num_types"), 2);
    fs::remove_all(dir);
}

TEST(Cli, UnknownFlagPrintsUsageAndExitsOne) {
    const fs::path dir = scratch("unknown");
    const RunResult r = run("simulate --bogus 3 --out " + dir.string(), dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
    EXPECT_EQ(run("", dir).code, 1);
    EXPECT_EQ(run("frobnicate", dir).code, 1);
    fs::remove_all(dir);
}

TEST(Cli, ValidationErrorsExitOne) {
    const fs::path dir = scratch("invalid");
    EXPECT_EQ(run("simulate --K 1 --alpha 2 --beta 1 --out " + (dir / "x").string(), dir).code, 1);
    EXPECT_FALSE(fs::exists(dir / "x"));
    EXPECT_EQ(run("eval --model /nonexistent.json --data /nonexistent.jsonl", dir).code, 1);
    EXPECT_EQ(run("train --out " + (dir / "y").string(), dir).code, 1);
    fs::remove_all(dir);
}

TEST(Cli, NumericFailureExitsTwo) {
    const fs::path dir = scratch("numeric");
    trithp::ModelConfig cfg;
    cfg.num_types = 2;
    trithp::TriThpModel m = trithp::TriThpModel::create(cfg, 1);
    for (double& b : m.intensity.base.mutable_values()) b = 1e308;
    trithp::save_model(dir / "huge.json", m);
    {
        std::ofstream data(dir / "d.jsonl");
        data << R"({"seq": [{"t": 1, "k": 1}, {"t": 2, "k": 2}, {"t": 3.5, "k": 1}]})" << "\n";
    }
    const RunResult r = run("eval --model " + (dir / "huge.json").string() + " --data " + (dir / "d.jsonl").string(), dir);
    EXPECT_EQ(r.code, 2) << r.err;
    fs::remove_all(dir);
}
