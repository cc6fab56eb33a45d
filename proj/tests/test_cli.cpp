#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "gace/cli.hpp"

namespace fs = std::filesystem;
using gace::read_file;
using gace::write_atomic;

namespace {

struct CaptureStreams {
    std::stringstream out, err;
    std::streambuf* old_out;
    std::streambuf* old_err;
    CaptureStreams() : old_out(std::cout.rdbuf(out.rdbuf())), old_err(std::cerr.rdbuf(err.rdbuf())) {}
    ~CaptureStreams() {
        std::cout.rdbuf(old_out);
        std::cerr.rdbuf(old_err);
    }
};

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr,
            std::string* err = nullptr) {
    CaptureStreams cap;
    const int rc = gace::cli::run(args);
    if (out) *out = cap.out.str();
    if (err) *err = cap.err.str();
    return rc;
}

class CliPipeline : public ::testing::Test {
  protected:
    void SetUp() override {
        dir = (fs::temp_directory_path() / "gace_cli_test").string();
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (fs::path(dir) / name).string(); }

    std::string dir;
};

// Dyadic rates so the canonical %.17g form is short and stable.
const char* kItemsFixture =
    "a0\tp0\t0\t10\t20\t0.1250\t0.0625\t0.875,0.125\n"
    "# a comment line\n"
    "a1\tp0\t0\t12\t22\t0.25\t0.125\t0.75,0.25\n"
    "a2\tp1\t0\t14\t24\t0.375\t0.1875\t0.625,0.375\n"
    "a3\tp1\t0\t16\t26\t0.5\t0.25\t0.5,0.5\n"
    "a4\tp0\t1\t0\t0\t0\t0\t0.8125,0.1875\n"
    "a5\tp1\t1\t0\t0\t0\t0\t0.6875,0.3125\n";

}  // namespace

TEST(CliBasics, HelpExitsCleanly) {
    std::string out;
    EXPECT_EQ(run_cli({"--help"}, &out), 0);
    EXPECT_NE(out.find("build-graph"), std::string::npos);
    EXPECT_NE(out.find("pretrain"), std::string::npos);

    out.clear();
    EXPECT_EQ(run_cli({"pretrain", "--help"}, &out), 0);
    EXPECT_NE(out.find("--epochs"), std::string::npos);
    EXPECT_NE(out.find("--kl-weight"), std::string::npos);
}

TEST(CliBasics, UsageMistakesExitWithTwo) {
    std::string err;
    EXPECT_EQ(run_cli({"build-graph"}, nullptr, &err), 2);
    EXPECT_NE(err.find("usage error:"), std::string::npos);
    EXPECT_EQ(run_cli({"no-such-command"}, nullptr, &err), 2);
    EXPECT_EQ(run_cli({}, nullptr, &err), 2);
    EXPECT_EQ(run_cli({"pretrain", "--graph", "g", "--out", "o", "--optimizer", "sgd"}, nullptr, &err), 2);
}

TEST(CliBasics, MissingInputFileExitsWithOne) {
    std::string err;
    EXPECT_EQ(run_cli({"build-graph", "--items", "/nonexistent/items.tsv", "--out", "/tmp/g.txt"},
                      nullptr, &err),
              1);
    EXPECT_NE(err.find("error:"), std::string::npos);
    EXPECT_NE(err.find("/nonexistent/items.tsv"), std::string::npos);
}

TEST_F(CliPipeline, MalformedItemLineNamesLineAndLeavesNoOutput) {
    const auto items = path("bad.tsv");
    write_atomic(items,
                 "a0\tp0\t0\t10\t20\t0.1\t0.05\t1,2\n"
                 "a1\tp0\t0\t10\t20\t1.5\t0.05\t1,2\n");
    const auto out = path("canon.tsv");
    std::string err;
    EXPECT_EQ(run_cli({"ingest", "--items", items, "--out", out}, nullptr, &err), 1);
    EXPECT_NE(err.find(":2"), std::string::npos) << err;
    EXPECT_NE(err.find("uvctr"), std::string::npos) << err;
    EXPECT_FALSE(fs::exists(out)) << "failed run must not leave a partial output file";
}

TEST_F(CliPipeline, IngestCanonicalizesAndIsIdempotent) {
    const auto raw = path("items.tsv");
    write_atomic(raw, kItemsFixture);
    const auto once = path("once.tsv");
    const auto twice = path("twice.tsv");
    ASSERT_EQ(run_cli({"ingest", "--items", raw, "--out", once}), 0);
    ASSERT_EQ(run_cli({"ingest", "--items", once, "--out", twice}), 0);
    const auto once_bytes = read_file(once);
    EXPECT_EQ(read_file(twice), once_bytes);
    EXPECT_EQ(once_bytes.find('#'), std::string::npos);  // comments are not records
    EXPECT_NE(once_bytes.find("a0\tp0\t0\t10\t20\t0.125\t0.0625\t0.875,0.125\n"), std::string::npos);

    // A pinned width that disagrees with the file is a data error.
    std::string err;
    EXPECT_EQ(run_cli({"ingest", "--items", raw, "--out", path("x.tsv"), "--dim", "3"}, nullptr, &err), 1);
}

TEST_F(CliPipeline, BuildGraphRewriteIsByteStable) {
    const auto items = path("items.tsv");
    write_atomic(items, kItemsFixture);
    const auto g1 = path("g1.txt");
    const auto g2 = path("g2.txt");
    ASSERT_EQ(run_cli({"build-graph", "--items", items, "--out", g1, "--top-k", "3"}), 0);
    ASSERT_EQ(run_cli({"build-graph", "--items", items, "--out", g2, "--top-k", "3"}), 0);
    EXPECT_EQ(read_file(g1), read_file(g2));
    const auto header = read_file(g1).substr(0, read_file(g1).find('\n'));
    EXPECT_EQ(header.substr(0, 2), "6 ");
}

TEST_F(CliPipeline, TrainEmbedBaselineEvalProduceDeterministicArtifacts) {
    // Small synthetic corpus end to end, then the stochastic stages a second
    // time: every artifact must come out byte-identical.
    const auto data = path("data");
    ASSERT_EQ(run_cli({"synth", "--out-dir", data, "--n-items", "40", "--n-users", "20",
                       "--n-pages", "8", "--n-clusters", "4", "--n-impressions", "2000",
                       "--sem-dim", "6", "--user-dim", "4", "--seed", "1"}),
              0);
    for (const char* name : {"items.tsv", "users.tsv", "impressions_train.txt",
                             "impressions_test.txt", "heldout.txt"})
        EXPECT_TRUE(fs::exists(fs::path(data) / name)) << name;

    const auto graph = path("graph.txt");
    ASSERT_EQ(run_cli({"build-graph", "--items", (fs::path(data) / "items.tsv").string(), "--out",
                       graph, "--top-k", "6"}),
              0);

    auto pretrain_embed = [&](const std::string& ckpt, const std::string& hist,
                              const std::string& emb) {
        ASSERT_EQ(run_cli({"pretrain", "--graph", graph, "--out", ckpt, "--history", hist,
                           "--epochs", "5", "--hidden-dim", "8", "--dim", "6", "--seed", "7"}),
                  0);
        ASSERT_EQ(run_cli({"embed", "--graph", graph, "--checkpoint", ckpt, "--out", emb}), 0);
    };
    pretrain_embed(path("ckpt1.txt"), path("hist1.csv"), path("emb1.txt"));
    pretrain_embed(path("ckpt2.txt"), path("hist2.csv"), path("emb2.txt"));
    EXPECT_EQ(read_file(path("ckpt1.txt")), read_file(path("ckpt2.txt")));
    EXPECT_EQ(read_file(path("hist1.csv")), read_file(path("hist2.csv")));
    EXPECT_EQ(read_file(path("emb1.txt")), read_file(path("emb2.txt")));
    EXPECT_EQ(read_file(path("hist1.csv")).substr(0, 23), "epoch,total,recon,prior");

    ASSERT_EQ(run_cli({"baseline", "--graph", graph, "--model", "rnd", "--out", path("rnd1.txt"),
                       "--dim", "6", "--seed", "3"}),
              0);
    ASSERT_EQ(run_cli({"baseline", "--graph", graph, "--model", "rnd", "--out", path("rnd2.txt"),
                       "--dim", "6", "--seed", "3"}),
              0);
    EXPECT_EQ(read_file(path("rnd1.txt")), read_file(path("rnd2.txt")));
    ASSERT_EQ(run_cli({"baseline", "--graph", graph, "--model", "ngb", "--out", path("ngb.txt"),
                       "--dim", "6"}),
              0);

    auto eval_to = [&](const std::string& table, const std::string& model, const std::string& out) {
        ASSERT_EQ(run_cli({"eval", "--data-dir", data, "--embeddings", table, "--model", model,
                           "--out", out, "--epochs", "60"}),
                  0);
    };
    eval_to(path("emb1.txt"), "gace", path("m1.csv"));
    eval_to(path("emb1.txt"), "gace", path("m2.csv"));
    EXPECT_EQ(read_file(path("m1.csv")), read_file(path("m2.csv")));
    const auto metrics = read_file(path("m1.csv"));
    EXPECT_EQ(metrics.substr(0, metrics.find('\n')), "embed_model,scope,auc,loss,seed");
    EXPECT_NE(metrics.find("gace,all,"), std::string::npos);
    EXPECT_NE(metrics.find("gace,cold_only,"), std::string::npos);
    EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 3);

    eval_to(path("ngb.txt"), "ngb", path("m_ngb.csv"));
    const auto ngb_metrics = read_file(path("m_ngb.csv"));
    EXPECT_NE(ngb_metrics.find("ngb,all,"), std::string::npos);
}

TEST_F(CliPipeline, EmbedSampleFlagDrawsSeededPosteriorSamples) {
    const auto items = path("items.tsv");
    write_atomic(items, kItemsFixture);
    const auto graph = path("graph.txt");
    ASSERT_EQ(run_cli({"build-graph", "--items", items, "--out", graph}), 0);
    const auto ckpt = path("ckpt.txt");
    ASSERT_EQ(run_cli({"pretrain", "--graph", graph, "--out", ckpt, "--epochs", "3",
                       "--hidden-dim", "4", "--dim", "3"}),
              0);
    ASSERT_EQ(run_cli({"embed", "--graph", graph, "--checkpoint", ckpt, "--out", path("mean.txt")}), 0);
    ASSERT_EQ(run_cli({"embed", "--graph", graph, "--checkpoint", ckpt, "--out", path("s1.txt"),
                       "--sample", "--seed", "5"}),
              0);
    ASSERT_EQ(run_cli({"embed", "--graph", graph, "--checkpoint", ckpt, "--out", path("s2.txt"),
                       "--sample", "--seed", "5"}),
              0);
    ASSERT_EQ(run_cli({"embed", "--graph", graph, "--checkpoint", ckpt, "--out", path("s3.txt"),
                       "--sample", "--seed", "6"}),
              0);
    EXPECT_EQ(read_file(path("s1.txt")), read_file(path("s2.txt")));
    EXPECT_NE(read_file(path("s1.txt")), read_file(path("s3.txt")));
    EXPECT_NE(read_file(path("s1.txt")), read_file(path("mean.txt")));

    // Same ids in the same order, whether sampled or not.
    const auto first_field = [](const std::string& text) {
        std::vector<std::string> ids;
        for (const auto& line : gace::split(text, '\n'))
            if (!line.empty()) ids.push_back(line.substr(0, line.find(' ')));
        return ids;
    };
    EXPECT_EQ(first_field(read_file(path("s1.txt"))), first_field(read_file(path("mean.txt"))));
}

TEST_F(CliPipeline, EvalRespectsSingleScopeSelection) {
    const auto data = path("data");
    ASSERT_EQ(run_cli({"synth", "--out-dir", data, "--n-items", "30", "--n-users", "10",
                       "--n-pages", "4", "--n-clusters", "2", "--n-impressions", "600",
                       "--sem-dim", "4", "--user-dim", "3", "--seed", "2"}),
              0);
    const auto items = (fs::path(data) / "items.tsv").string();
    const auto graph = path("graph.txt");
    ASSERT_EQ(run_cli({"build-graph", "--items", items, "--out", graph}), 0);
    ASSERT_EQ(run_cli({"baseline", "--graph", graph, "--model", "rnd", "--out", path("emb.txt"),
                       "--dim", "4"}),
              0);
    ASSERT_EQ(run_cli({"eval", "--data-dir", data, "--embeddings", path("emb.txt"), "--model",
                       "rnd", "--out", path("m.csv"), "--scope", "all", "--epochs", "20"}),
              0);
    const auto metrics = read_file(path("m.csv"));
    EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 2);
    EXPECT_NE(metrics.find("rnd,all,"), std::string::npos);
    EXPECT_EQ(metrics.find("cold_only"), std::string::npos);
}
