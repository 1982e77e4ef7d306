// tests/cli_test.cpp

// Copyright 2026  xvec authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Drives the installed binary end to end: exit codes, validate-before-write,
// determinism of every artifact, and a fully hand-checked evaluation.

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "json.hpp"
#include "xvec/archive.hpp"

namespace {

std::string g_binary;

struct RunResult {
  int exit_code;
  std::string out;
  std::string err;
};

std::string slurp(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs "<binary> <args>" with stdout/stderr captured to files in dir.
RunResult run_cli(const std::string &dir, const std::string &args) {
  const std::string out_path = dir + "/stdout.txt";
  const std::string err_path = dir + "/stderr.txt";
  const std::string cmd =
      g_binary + " " + args + " > " + out_path + " 2> " + err_path;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

std::string fresh_dir(const std::string &name) {
  const std::string dir = testing::TempDir() + "xvec_cli_" + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  ASSERT_TRUE(out.good());
}

// Small enough to train in well under a second.
const char *kTinyFlags =
    "--n_speakers 12 --utts_per_speaker 6 --eval_speakers 8 "
    "--eval_utts_per_speaker 4 --frames_min 60 --frames_max 90 --dim 10 "
    "--frame_widths 16 16 16 16 32 --segment_width_a 16 --segment_width_b 16 "
    "--epochs 2 --lr_peak 0.02 --warmup_batches 5 --batch_size 8 "
    "--segment_frames_min 40 --segment_frames_max 60 --lda_dim 6 "
    "--plda_iters 5 --seed 5";

TEST(GenData, SameSeedIsByteIdentical) {
  const std::string dir = fresh_dir("gen_det");
  const std::string flags =
      " --n_speakers 6 --utts_per_speaker 3 --frames_min 40 --frames_max 60 "
      "--dim 8 --seed ";
  ASSERT_EQ(run_cli(dir, "gen-data --out " + dir + "/a.spkf" + flags + "11").exit_code, 0);
  ASSERT_EQ(run_cli(dir, "gen-data --out " + dir + "/b.spkf" + flags + "11").exit_code, 0);
  const std::string a = slurp(dir + "/a.spkf");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir + "/b.spkf"));
  const RunResult other =
      run_cli(dir, "gen-data --out " + dir + "/c.spkf" + flags + "12");
  ASSERT_EQ(other.exit_code, 0);
  EXPECT_NE(a, slurp(dir + "/c.spkf"));
}

TEST(GenData, ZeroDimFailsNamingTheField) {
  const std::string dir = fresh_dir("gen_dim0");
  const RunResult r = run_cli(dir, "gen-data --out " + dir + "/a.spkf --dim 0");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("dim"), std::string::npos) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dir + "/a.spkf"));
}

TEST(Config, UnknownKeyIsRejectedByName) {
  const std::string dir = fresh_dir("cfg_unknown");
  write_text(dir + "/cfg.json", "{\"n_speakers\": 6, \"bogus_key\": 3}\n");
  const RunResult r = run_cli(
      dir, "gen-data --out " + dir + "/a.spkf --config " + dir + "/cfg.json");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("bogus_key"), std::string::npos) << r.err;
}

TEST(Config, FlagsOverrideConfigFile) {
  const std::string dir = fresh_dir("cfg_override");
  write_text(dir + "/cfg.json",
             "{\"n_speakers\": 4, \"utts_per_speaker\": 2, \"dim\": 8,\n"
             " \"frames_min\": 40, \"frames_max\": 50, \"seed\": 11}\n");
  ASSERT_EQ(run_cli(dir, "gen-data --out " + dir + "/a.spkf --config " + dir +
                             "/cfg.json --n_speakers 5")
                .exit_code,
            0);
  const xvec::FeatureArchive a = xvec::read_archive(dir + "/a.spkf");
  EXPECT_EQ(a.num_speakers(), 5u);
  EXPECT_EQ(a.size(), 10u);
  EXPECT_EQ(a.dim(), 8u);
}

TEST(Train, NonIntegerASoftmaxMarginFailsBeforeWriting) {
  const std::string dir = fresh_dir("train_badm");
  ASSERT_EQ(run_cli(dir, "gen-data --out " + dir +
                             "/t.spkf --n_speakers 4 --utts_per_speaker 2 "
                             "--frames_min 40 --frames_max 60 --dim 8")
                .exit_code,
            0);
  const RunResult r =
      run_cli(dir, "train --data " + dir + "/t.spkf --out " + dir +
                       "/net.xvck --loss a_softmax --m 1.5");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_FALSE(std::filesystem::exists(dir + "/net.xvck"));
}

TEST(Train, MissingInputIsADataError) {
  const std::string dir = fresh_dir("train_noinput");
  const RunResult r = run_cli(
      dir, "train --data " + dir + "/absent.spkf --out " + dir + "/net.xvck");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_FALSE(std::filesystem::exists(dir + "/net.xvck"));
}

TEST(Extract, SkipsShortUtterancesWithSidecarReport) {
  const std::string dir = fresh_dir("extract_skip");
  xvec::SynthConfig sc;
  sc.n_speakers = 4;
  sc.utts_per_speaker = 3;
  sc.frames_min = 40;
  sc.frames_max = 60;
  sc.dim = 8;
  sc.seed = 3;
  xvec::FeatureArchive archive = xvec::generate_synthetic(sc);
  xvec::Utterance runt;
  runt.utt_id = "spk0000_runt";
  runt.speaker_id = "spk0000";
  runt.frames = xvec::Matrix(5, 8);  // below any receptive field
  archive.add(std::move(runt));
  xvec::write_archive(dir + "/data.spkf", archive);
  ASSERT_EQ(run_cli(dir, "train --data " + dir + "/data.spkf --out " + dir +
                             "/net.xvck --frame_widths 16 16 16 16 32 "
                             "--segment_width_a 16 --segment_width_b 16 "
                             "--epochs 1 --batch_size 8 --segment_frames_min "
                             "20 --segment_frames_max 40")
                .exit_code,
            0);
  const RunResult r = run_cli(dir, "extract --net " + dir + "/net.xvck "
                                       "--data " + dir + "/data.spkf --out " +
                                       dir + "/emb.spkf");
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_NE(r.err.find("spk0000_runt"), std::string::npos) << r.err;
  EXPECT_EQ(slurp(dir + "/emb.spkf.skipped"), "spk0000_runt 5\n");
  const xvec::FeatureArchive embs = xvec::read_archive(dir + "/emb.spkf");
  EXPECT_EQ(embs.size(), 12u);
  for (std::size_t i = 0; i < embs.size(); ++i) {
    EXPECT_EQ(embs[i].frames.rows(), 1u);
    EXPECT_NE(embs[i].utt_id, "spk0000_runt");
  }
}

TEST(Score, UnknownTrialIdsAreListed) {
  const std::string dir = fresh_dir("score_missing");
  ASSERT_EQ(run_cli(dir, std::string("run-experiment --out_dir ") + dir +
                             "/exp " + kTinyFlags)
                .exit_code,
            0);
  write_text(dir + "/bad.trials", "ghost_u000 evl0001_u000 target\n");
  const RunResult r = run_cli(
      dir, "score --backend " + dir + "/exp/backend.xbkd --embeddings " + dir +
               "/exp/eval_embeddings.spkf --trials " + dir +
               "/bad.trials --out " + dir + "/bad.scores");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("ghost_u000"), std::string::npos) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dir + "/bad.scores"));
}

// Four trials small enough to check against pencil and paper. With targets
// scoring {1, 3} and nontargets {0, 2}, sweeping the accept-if-greater-or-
// equal threshold over the distinct scores gives (p_fa, p_miss) pairs
// (1,0) (0.5,0) (0.5,0.5) (0,0.5) (0,1); the miss and false-alarm rates
// meet at exactly one half, at threshold 2. minDCF at p_target 0.01
// normalizes by 0.01 and is minimized at threshold 3: 0.5*0.01/0.01 = 0.5.
TEST(Evaluate, MatchesHandComputationOnFourTrials) {
  const std::string dir = fresh_dir("eval_hand");
  write_text(dir + "/t.trials",
             "e1 t1 target\ne2 t2 target\ne3 t3 nontarget\ne4 t4 nontarget\n");
  write_text(dir + "/t.scores", "e1 t1 1\ne2 t2 3\ne3 t3 0\ne4 t4 2\n");
  const RunResult r = run_cli(dir, "evaluate --scores " + dir +
                                       "/t.scores --trials " + dir +
                                       "/t.trials --out " + dir + "/r.json");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const nlohmann::json j = nlohmann::json::parse(slurp(dir + "/r.json"));
  EXPECT_DOUBLE_EQ(j.at("eer").get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j.at("eer_threshold").get<double>(), 2.0);
  EXPECT_DOUBLE_EQ(j.at("min_dcf_p01").get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j.at("min_dcf_p001").get<double>(), 0.5);
  EXPECT_EQ(j.at("n_target").get<int>(), 2);
  EXPECT_EQ(j.at("n_nontarget").get<int>(), 2);

  // Perfectly separated variant: every rate is exactly zero.
  write_text(dir + "/p.scores", "e1 t1 2\ne2 t2 3\ne3 t3 0\ne4 t4 1\n");
  const RunResult rp = run_cli(dir, "evaluate --scores " + dir +
                                        "/p.scores --trials " + dir +
                                        "/t.trials --out " + dir + "/rp.json");
  ASSERT_EQ(rp.exit_code, 0) << rp.err;
  const nlohmann::json jp = nlohmann::json::parse(slurp(dir + "/rp.json"));
  EXPECT_DOUBLE_EQ(jp.at("eer").get<double>(), 0.0);
  EXPECT_DOUBLE_EQ(jp.at("min_dcf_p01").get<double>(), 0.0);
  EXPECT_DOUBLE_EQ(jp.at("min_dcf_p001").get<double>(), 0.0);
}

TEST(Evaluate, ScoreFileLineOrderDoesNotMatter) {
  const std::string dir = fresh_dir("eval_order");
  write_text(dir + "/t.trials",
             "e1 t1 target\ne2 t2 target\ne3 t3 nontarget\ne4 t4 nontarget\n");
  write_text(dir + "/fwd.scores", "e1 t1 1\ne2 t2 3\ne3 t3 0\ne4 t4 2\n");
  write_text(dir + "/rev.scores", "e4 t4 2\ne3 t3 0\ne2 t2 3\ne1 t1 1\n");
  ASSERT_EQ(run_cli(dir, "evaluate --scores " + dir + "/fwd.scores --trials " +
                             dir + "/t.trials --out " + dir + "/fwd.json")
                .exit_code,
            0);
  ASSERT_EQ(run_cli(dir, "evaluate --scores " + dir + "/rev.scores --trials " +
                             dir + "/t.trials --out " + dir + "/rev.json")
                .exit_code,
            0);
  EXPECT_EQ(slurp(dir + "/fwd.json"), slurp(dir + "/rev.json"));
}

TEST(Evaluate, MissingAndDuplicateScoresAreDataErrors) {
  const std::string dir = fresh_dir("eval_bad");
  write_text(dir + "/t.trials", "e1 t1 target\ne2 t2 nontarget\n");
  write_text(dir + "/short.scores", "e1 t1 1\n");
  RunResult r = run_cli(dir, "evaluate --scores " + dir +
                                 "/short.scores --trials " + dir + "/t.trials");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("e2 t2"), std::string::npos) << r.err;
  write_text(dir + "/dup.scores", "e1 t1 1\ne2 t2 0\ne2 t2 0\n");
  r = run_cli(dir, "evaluate --scores " + dir + "/dup.scores --trials " + dir +
                       "/t.trials");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("duplicate"), std::string::npos) << r.err;
}

TEST(RunExperiment, RerunsAreByteIdenticalAcrossEveryArtifact) {
  const std::string dir = fresh_dir("exp_det");
  ASSERT_EQ(run_cli(dir, std::string("run-experiment --out_dir ") + dir +
                             "/one " + kTinyFlags)
                .exit_code,
            0);
  ASSERT_EQ(run_cli(dir, std::string("run-experiment --out_dir ") + dir +
                             "/two " + kTinyFlags)
                .exit_code,
            0);
  const char *artifacts[] = {
      "train.spkf",           "eval.spkf",   "model.xvck",
      "model.xvck.epoch1",    "model.xvck.epoch2",
      "train_log.jsonl",      "train_embeddings.spkf",
      "eval_embeddings.spkf", "backend.xbkd", "trials.txt",
      "scores.txt",           "report.json", "skipped.txt"};
  for (const char *name : artifacts) {
    const std::string a = dir + "/one/" + std::string(name);
    const std::string b = dir + "/two/" + std::string(name);
    ASSERT_TRUE(std::filesystem::exists(a)) << name;
    EXPECT_EQ(slurp(a), slurp(b)) << name;
  }
  const nlohmann::json j =
      nlohmann::json::parse(slurp(dir + "/one/report.json"));
  EXPECT_EQ(j.at("n_target").get<int>(), 48);
  EXPECT_EQ(j.at("n_nontarget").get<int>(), 448);
}

}  // namespace

int main(int argc, char **argv) {
  testing::InitGoogleTest(&argc, argv);
  if (argc < 2) {
    std::fprintf(stderr, "usage: cli_test <path to xvec binary>\n");
    return 1;
  }
  g_binary = argv[1];
  return RUN_ALL_TESTS();
}
