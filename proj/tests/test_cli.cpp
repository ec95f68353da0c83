#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "fixtures.hpp"
#include "oracle.hpp"
#include "stance/trainer.hpp"

using namespace stance;
namespace fs = std::filesystem;

namespace {

const std::string kCli = STANCE_CLI;
const std::string kData = STANCE_TEST_DATA;

struct CliResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

CliResult run_cli(const std::string& args) {
  const fs::path dir = fs::path(::testing::TempDir());
  // Unique per process and call so tests can run in parallel.
  static int calls = 0;
  const std::string tag = std::to_string(::getpid()) + "_" + std::to_string(calls++);
  const fs::path out = dir / ("cli_out_" + tag), err = dir / ("cli_err_" + tag);
  const std::string cmd = "'" + kCli + "' " + args + " >'" + out.string() +
                          "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

void write_pairs(const fs::path& path, const std::vector<LabeledPair>& pairs) {
  std::ofstream os(path);
  write_dataset(os, pairs);
}

const std::vector<std::string> kMarkers{"markagree", "markdisagree",
                                        "markdiscuss", "markunrelated"};

// BOW-only model whose logits are the claim counts of four marker words, so
// a claim holding one marker is classified as that marker's label.
StanceModel marker_model(LabelScheme scheme = LabelScheme::stance4) {
  ModelConfig c;
  c.use_cnn = false;
  c.label_hidden = 4;
  c.scheme = scheme;
  Featurizer f(Vocabulary::from_counts(kMarkers, {1, 1, 1, 1}, 4), EmbedVocab{});
  StanceModel m(c, f);
  const std::size_t k = c.num_labels();
  for (std::size_t i = 0; i < 4; ++i) {
    m.label_w1.value.at(i, i) = 1.0;
    if (i < k) m.label_w2.value.at(i, i) = 1.0;
  }
  return m;
}

std::vector<LabeledPair> marker_pairs(const std::vector<StanceLabel>& gold,
                                      const std::vector<StanceLabel>& said) {
  std::vector<LabeledPair> out;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    out.push_back({"m" + std::to_string(i),
                   kMarkers[static_cast<std::size_t>(said[i])],
                   "some body text", gold[i], DomainTag::target});
  }
  return out;
}

const char* kSmallConfig =
    "use_bow = true\nuse_cnn = true\nda_features = cnn\nembed_dim = 4\n"
    "filter_widths = 2,3\nmaps_per_width = 4\nclaim_max_len = 8\n"
    "doc_max_len = 16\nlabel_hidden = 8\ndomain_hidden = 8\n"
    "bow_max_terms = 50\nepochs = 3\nbatch_size = 16\nruns = 1\nseed = 5\n";

fs::path small_training_set(const fs::path& dir) {
  auto pairs = fixtures::four_label_target(100, 41);
  const auto src = fixtures::small_synth(41, 80, 0).source;
  pairs.insert(pairs.end(), src.begin(), src.end());
  write_pairs(dir / "data.jsonl", pairs);
  std::ofstream(dir / "run.cfg") << kSmallConfig;
  return dir;
}

}  // namespace

TEST(CliIngest, CountsAndDroppedNei) {
  const fs::path dir = scratch("ingest");
  const auto r = run_cli("ingest --fnc-stances " + kData +
                         "/fnc_stances.csv --fnc-bodies " + kData +
                         "/fnc_bodies.csv --fever " + kData +
                         "/fever.jsonl --out " + (dir / "all.jsonl").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("pairs 6"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("dropped_nei 1"), std::string::npos) << r.out;
  const auto back = read_dataset((dir / "all.jsonl").string());
  EXPECT_EQ(back.size(), 6u);
}

TEST(CliIngest, MissingFileNamesPath) {
  const fs::path dir = scratch("ingest_missing");
  const auto r = run_cli("ingest --fever " + kData + "/absent.jsonl --out " +
                         (dir / "x.jsonl").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("absent.jsonl"), std::string::npos) << r.err;
}

TEST(CliTrain, SingleRunWritesArtifacts) {
  const fs::path dir = small_training_set(scratch("train1"));
  const auto r = run_cli("train --config " + (dir / "run.cfg").string() +
                         " --data " + (dir / "data.jsonl").string() +
                         " --out-dir " + (dir / "out").string());
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"model.ckpt", "manifest.json", "history_run0.tsv",
                        "plot.gp"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  }
  const auto m = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(m["status"], "complete");
  EXPECT_EQ(m["best_run"]["histories"], 0);
  EXPECT_EQ(m["config"]["epochs"], "3");
  EXPECT_EQ(m["datasets"][0]["fnv1a64"].get<std::string>().size(), 16u);
  EXPECT_NO_THROW(load_checkpoint((dir / "out" / "model.ckpt").string()));
}

TEST(CliTrain, BestOfFiveRunsIsRecorded) {
  const fs::path dir = small_training_set(scratch("train3"));
  const auto r = run_cli("train --config " + (dir / "run.cfg").string() +
                         " --data " + (dir / "data.jsonl").string() +
                         " --runs 5 --out-dir " + (dir / "out").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  const auto mins = m["min_validation"]["histories"].get<std::vector<double>>();
  ASSERT_EQ(mins.size(), 5u);
  const std::size_t best = m["best_run"]["histories"];
  for (double v : mins) EXPECT_LE(mins[best], v);
  for (int i = 0; i < 5; ++i) {
    std::ifstream h(dir / "out" / ("history_run" + std::to_string(i) + ".tsv"));
    EXPECT_NEAR(read_history(h).min_validation(), mins[static_cast<std::size_t>(i)],
                1e-9);
  }
}

TEST(CliTrain, DeterministicOutputs) {
  const fs::path dir = small_training_set(scratch("train_det"));
  for (const char* out : {"a", "b"}) {
    const auto r = run_cli("train --config " + (dir / "run.cfg").string() +
                           " --data " + (dir / "data.jsonl").string() +
                           " --out-dir " + (dir / out).string());
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(dir / "a" / "history_run0.tsv"),
            slurp(dir / "b" / "history_run0.tsv"));
  EXPECT_EQ(slurp(dir / "a" / "model.ckpt"), slurp(dir / "b" / "model.ckpt"));
}

TEST(CliTrain, HierarchyWritesBothStages) {
  const fs::path dir = small_training_set(scratch("train_h"));
  const auto r = run_cli("train --hierarchy --config " +
                         (dir / "run.cfg").string() + " --data " +
                         (dir / "data.jsonl").string() + " --out-dir " +
                         (dir / "out").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s1 = load_checkpoint((dir / "out" / "stage1.ckpt").string());
  const auto s2 = load_checkpoint((dir / "out" / "stage2.ckpt").string());
  EXPECT_EQ(s1.config.scheme, LabelScheme::related2);
  EXPECT_FALSE(s1.config.use_cnn);
  EXPECT_EQ(s2.config.scheme, LabelScheme::stance3);
  const auto e = run_cli("evaluate --checkpoint " +
                         (dir / "out" / "stage1.ckpt").string() +
                         " --hierarchy " + (dir / "out" / "stage2.ckpt").string() +
                         " --data " + (dir / "data.jsonl").string());
  EXPECT_EQ(e.code, 0) << e.err;
}

TEST(CliTrain, UnknownConfigKeyIsNamed) {
  const fs::path dir = small_training_set(scratch("train_bad"));
  std::ofstream(dir / "bad.cfg") << "epochs = 2\nlearnin_rate = 0.1\n";
  const auto r = run_cli("train --config " + (dir / "bad.cfg").string() +
                         " --data " + (dir / "data.jsonl").string() +
                         " --out-dir " + (dir / "out").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("learnin_rate"), std::string::npos) << r.err;
}

TEST(CliEvaluate, PerfectPredictions) {
  const fs::path dir = scratch("eval_perfect");
  using L = StanceLabel;
  const std::vector<L> gold{L::agree, L::disagree, L::discuss, L::unrelated,
                            L::unrelated, L::agree};
  write_pairs(dir / "test.jsonl", marker_pairs(gold, gold));
  save_checkpoint(marker_model(), (dir / "m.ckpt").string());
  const auto r = run_cli("evaluate --checkpoint " + (dir / "m.ckpt").string() +
                         " --data " + (dir / "test.jsonl").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "1.000 1.000 1.000 1.000/1.000/1.000/1.000\n");
  const auto j = nlohmann::json::parse(slurp(dir / "m.ckpt.eval.json"));
  EXPECT_EQ(j["weighted_accuracy"], 1.0);
  EXPECT_EQ(j["examples"], 6);
}

TEST(CliEvaluate, AllUnrelatedMatchesOracle) {
  const fs::path dir = scratch("eval_unrelated");
  using L = StanceLabel;
  std::vector<L> gold(73, L::unrelated);
  for (int i = 0; i < 27; ++i) gold.push_back(i % 3 == 0 ? L::agree : L::discuss);
  write_pairs(dir / "test.jsonl",
              marker_pairs(gold, std::vector<L>(gold.size(), L::unrelated)));
  save_checkpoint(marker_model(), (dir / "m.ckpt").string());
  const auto r = run_cli("evaluate --checkpoint " + (dir / "m.ckpt").string() +
                         " --data " + (dir / "test.jsonl").string() +
                         " --json " + (dir / "side.json").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, 12), "0.403 0.730 ") << r.out;
  const auto j = nlohmann::json::parse(slurp(dir / "side.json"));
  EXPECT_DOUBLE_EQ(j["weighted_accuracy"].get<double>(), oracle::kAllUnrelated73);
  EXPECT_EQ(j["classes"], (std::vector<std::string>{"agree", "disagree",
                                                    "discuss", "unrelated"}));
}

TEST(CliEvaluate, UnlabeledDataRejected) {
  const fs::path dir = scratch("eval_unlabeled");
  save_checkpoint(marker_model(), (dir / "m.ckpt").string());
  const auto r = run_cli("evaluate --checkpoint " + (dir / "m.ckpt").string() +
                         " --data " + kData + "/unlabeled.jsonl");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("labels required"), std::string::npos) << r.err;
}

TEST(CliEvaluate, ClassOrderMismatchRejected) {
  const fs::path dir = scratch("eval_order");
  using L = StanceLabel;
  write_pairs(dir / "test.jsonl", marker_pairs({L::agree}, {L::agree}));
  save_checkpoint(marker_model(LabelScheme::stance3), (dir / "m.ckpt").string());
  const auto r = run_cli("evaluate --checkpoint " + (dir / "m.ckpt").string() +
                         " --data " + (dir / "test.jsonl").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("class order mismatch"), std::string::npos) << r.err;
}

TEST(CliGradcheck, PassesAndCatchesCorruption) {
  const auto ok = run_cli("gradcheck");
  EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
  const auto bad = run_cli("gradcheck --corrupt doc_conv");
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.err.find("doc_conv"), std::string::npos) << bad.err;
  EXPECT_NE(run_cli("gradcheck --corrupt nonsense").code, 0);
}

TEST(CliSynthbench, ZeroEpochsFlagged) {
  const fs::path dir = scratch("synth0");
  const auto r = run_cli("synthbench --seeds 1 --epochs 0 --out-dir " +
                         dir.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("insufficient training"), std::string::npos) << r.out;
  const auto j = nlohmann::json::parse(slurp(dir / "synthbench.json"));
  EXPECT_EQ(j["verdict"]["trained"], false);
}

TEST(CliSynthbench, RepeatRunsGiveIdenticalFiles) {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  for (const auto& d : {a, b}) {
    const auto r = run_cli("synthbench --seed 3 --seeds 1 --epochs 2 --out-dir " +
                           d.string());
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"synthbench.txt", "synthbench.json",
                        "history_da_seed3.tsv", "history_noda_seed3.tsv"}) {
    EXPECT_FALSE(slurp(a / f).empty()) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}
