// tools/xvec_main.cpp

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

// Command line driver. Exit codes: 0 success, 2 configuration error,
// 3 data error, 4 numeric error, 1 anything else. Every command resolves
// its configuration the same way: built-in defaults, then the --config
// JSON file if given, then any flags present on the command line. All
// validation and input loading happen before any output file is opened.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xvec/experiment.hpp"

namespace {

// One slot per config key; a slot only overrides the config file when its
// flag was actually given, which CLI11 tracks via count().
struct FlagStore {
  std::string config_path;
  xvec::ExperimentConfig v;  // flag parse targets, defaults ignored
  std::string speaker_prefix = "spk";
};

void add_config_flags(CLI::App *sub, FlagStore &f) {
  sub->add_option("--config", f.config_path,
                  "JSON config file; explicit flags override its values");
  sub->add_option("--n_speakers", f.v.n_speakers, "training speakers");
  sub->add_option("--utts_per_speaker", f.v.utts_per_speaker,
                  "utterances per training speaker");
  sub->add_option("--eval_speakers", f.v.eval_speakers, "evaluation speakers");
  sub->add_option("--eval_utts_per_speaker", f.v.eval_utts_per_speaker,
                  "utterances per evaluation speaker");
  sub->add_option("--frames_min", f.v.frames_min, "minimum utterance frames");
  sub->add_option("--frames_max", f.v.frames_max, "maximum utterance frames");
  sub->add_option("--dim", f.v.dim, "feature dimension");
  sub->add_option("--between_speaker_scale", f.v.between_speaker_scale,
                  "speaker mean spread");
  sub->add_option("--within_speaker_scale", f.v.within_speaker_scale,
                  "frame noise spread");
  sub->add_option("--channel_scale", f.v.channel_scale,
                  "per-utterance offset spread");
  sub->add_option("--frame_widths", f.v.frame_widths,
                  "frame layer widths (five values)");
  sub->add_option("--segment_width_a", f.v.segment_width_a,
                  "embedding layer width");
  sub->add_option("--segment_width_b", f.v.segment_width_b,
                  "second segment layer width");
  sub->add_option("--loss", f.v.loss,
                  "softmax | a_softmax | am_softmax | aam_softmax");
  sub->add_option("--m", f.v.m, "margin; negative selects the kind default");
  sub->add_option("--s", f.v.s, "cosine scale for the margin losses");
  sub->add_option("--epochs", f.v.epochs, "training epochs");
  sub->add_option("--lr_peak", f.v.lr_peak, "peak learning rate");
  sub->add_option("--momentum", f.v.momentum, "SGD momentum");
  sub->add_option("--weight_decay", f.v.weight_decay, "L2 weight decay");
  sub->add_option("--max_grad_norm", f.v.max_grad_norm,
                  "global gradient clip threshold");
  sub->add_option("--warmup_batches", f.v.warmup_batches,
                  "linear warmup length in batches");
  sub->add_option("--batch_size", f.v.batch_size, "utterances per batch");
  sub->add_option("--segment_frames_min", f.v.segment_frames_min,
                  "shortest training segment");
  sub->add_option("--segment_frames_max", f.v.segment_frames_max,
                  "longest training segment");
  sub->add_option("--lda_dim", f.v.lda_dim, "LDA output dimension");
  sub->add_option("--plda_iters", f.v.plda_iters, "PLDA EM iterations");
  sub->add_option("--seed", f.v.seed, "master random seed");
  sub->add_option("--eval_seed", f.v.eval_seed,
                  "seed for the evaluation set, independent of --seed");
}

xvec::ExperimentConfig resolve_config(CLI::App *sub, const FlagStore &f) {
  xvec::ExperimentConfig cfg;
  if (sub->count("--config")) cfg = xvec::load_experiment_config(f.config_path);
  const auto o = [&](const char *flag) { return sub->count(flag) > 0; };
  if (o("--n_speakers")) cfg.n_speakers = f.v.n_speakers;
  if (o("--utts_per_speaker")) cfg.utts_per_speaker = f.v.utts_per_speaker;
  if (o("--eval_speakers")) cfg.eval_speakers = f.v.eval_speakers;
  if (o("--eval_utts_per_speaker"))
    cfg.eval_utts_per_speaker = f.v.eval_utts_per_speaker;
  if (o("--frames_min")) cfg.frames_min = f.v.frames_min;
  if (o("--frames_max")) cfg.frames_max = f.v.frames_max;
  if (o("--dim")) cfg.dim = f.v.dim;
  if (o("--between_speaker_scale"))
    cfg.between_speaker_scale = f.v.between_speaker_scale;
  if (o("--within_speaker_scale"))
    cfg.within_speaker_scale = f.v.within_speaker_scale;
  if (o("--channel_scale")) cfg.channel_scale = f.v.channel_scale;
  if (o("--frame_widths")) cfg.frame_widths = f.v.frame_widths;
  if (o("--segment_width_a")) cfg.segment_width_a = f.v.segment_width_a;
  if (o("--segment_width_b")) cfg.segment_width_b = f.v.segment_width_b;
  if (o("--loss")) cfg.loss = f.v.loss;
  if (o("--m")) cfg.m = f.v.m;
  if (o("--s")) cfg.s = f.v.s;
  if (o("--epochs")) cfg.epochs = f.v.epochs;
  if (o("--lr_peak")) cfg.lr_peak = f.v.lr_peak;
  if (o("--momentum")) cfg.momentum = f.v.momentum;
  if (o("--weight_decay")) cfg.weight_decay = f.v.weight_decay;
  if (o("--max_grad_norm")) cfg.max_grad_norm = f.v.max_grad_norm;
  if (o("--warmup_batches")) cfg.warmup_batches = f.v.warmup_batches;
  if (o("--batch_size")) cfg.batch_size = f.v.batch_size;
  if (o("--segment_frames_min"))
    cfg.segment_frames_min = f.v.segment_frames_min;
  if (o("--segment_frames_max"))
    cfg.segment_frames_max = f.v.segment_frames_max;
  if (o("--lda_dim")) cfg.lda_dim = f.v.lda_dim;
  if (o("--plda_iters")) cfg.plda_iters = f.v.plda_iters;
  if (o("--seed")) cfg.seed = f.v.seed;
  if (o("--eval_seed")) cfg.eval_seed = f.v.eval_seed;
  return cfg;
}

int cmd_gen_data(const xvec::ExperimentConfig &cfg, const std::string &prefix,
                 const std::string &out) {
  xvec::SynthConfig sc = cfg.train_synth();
  sc.speaker_prefix = prefix;
  const xvec::FeatureArchive archive = xvec::generate_synthetic(sc);
  xvec::write_archive(out, archive);
  std::printf("wrote %zu utterances, %zu speakers, dim %zu to %s\n",
              archive.size(), archive.num_speakers(), archive.dim(),
              out.c_str());
  return 0;
}

// The network's feature width follows the archive; the config contributes
// the layer widths, the loss, and the optimizer settings. Saves the final
// model to --out and a snapshot to <out>.epochN after every epoch.
int cmd_train(const xvec::ExperimentConfig &cfg, const std::string &data_path,
              const std::string &out, const std::string &log_path) {
  const xvec::FeatureArchive data = xvec::read_archive(data_path);
  xvec::XVectorNetConfig ncfg = cfg.net_config();
  ncfg.feature_dim = data.dim();
  ncfg.validate();
  const xvec::LossConfig loss_cfg = cfg.loss_config();
  xvec::Rng rng(cfg.seed);
  xvec::XVectorNet net = xvec::build_xvector(ncfg, rng);
  xvec::ProjectionLayer proj = xvec::ProjectionLayer::create(
      net.output_dim(), data.num_speakers(),
      loss_cfg.kind == xvec::LossKind::kSoftmax, rng);
  const xvec::TrainConfig tcfg = cfg.train_config();
  xvec::validate_training(data, net, proj, loss_cfg, tcfg);

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::binary);
    if (!log) throw xvec::DataError("cannot open " + log_path + " for writing");
  }
  const auto per_epoch = [&](std::size_t epoch) {
    xvec::save_net(out + ".epoch" + std::to_string(epoch + 1), net);
  };
  const xvec::TrainResult result =
      xvec::train(data, net, proj, loss_cfg, tcfg,
                  log_path.empty() ? nullptr : &log, per_epoch);
  xvec::save_net(out, net);
  for (std::size_t e = 0; e < result.epoch_mean_loss.size(); ++e)
    std::printf("epoch %zu mean loss %.6f\n", e + 1,
                result.epoch_mean_loss[e]);
  std::printf("saved %s\n", out.c_str());
  return 0;
}

int cmd_extract(const std::string &net_path, const std::string &data_path,
                const std::string &out) {
  const xvec::XVectorNet net = xvec::load_net(net_path);
  const xvec::FeatureArchive data = xvec::read_archive(data_path);
  const xvec::ExtractionResult ex = xvec::extract_embeddings(net, data);
  for (const auto &[id, frames] : ex.skipped)
    std::fprintf(stderr,
                 "warning: skipped %s: %zu frames, below receptive field %zu\n",
                 id.c_str(), frames, net.receptive_field());
  xvec::write_archive(out, xvec::embeddings_to_archive(ex.embeddings));
  xvec::write_skipped_report(out + ".skipped", ex.skipped);
  std::printf("extracted %zu embeddings (dim %zu) to %s, skipped %zu\n",
              ex.embeddings.size(), ex.embeddings.dim(), out.c_str(),
              ex.skipped.size());
  return 0;
}

int cmd_train_backend(const xvec::ExperimentConfig &cfg,
                      const std::string &emb_path, const std::string &out) {
  const xvec::EmbeddingSet embs =
      xvec::archive_to_embeddings(xvec::read_archive(emb_path));
  const xvec::BackendFit fit =
      xvec::fit_backend(embs, cfg.lda_dim, cfg.plda_iters);
  xvec::save_backend(out, fit.model);
  std::printf("backend %zu -> %zu, plda log-likelihood %.6f -> %.6f%s\n",
              fit.model.input_dim(), fit.model.output_dim(),
              fit.ll_history.front(), fit.ll_history.back(),
              fit.ridged ? " (within-class ridge applied)" : "");
  std::printf("saved %s\n", out.c_str());
  return 0;
}

int cmd_score(const std::string &backend_path, const std::string &emb_path,
              const std::string &trials_path, const std::string &out) {
  const xvec::BackendModel model = xvec::load_backend(backend_path);
  const xvec::EmbeddingSet embs =
      xvec::archive_to_embeddings(xvec::read_archive(emb_path));
  const xvec::TrialList trials = xvec::parse_trials(trials_path);
  const std::vector<xvec::ScoreLine> lines =
      xvec::score_trials(model, embs, trials);
  xvec::write_scores(out, lines);
  std::printf("scored %zu trials to %s\n", lines.size(), out.c_str());
  return 0;
}

int cmd_evaluate(const std::string &scores_path, const std::string &trials_path,
                 const std::string &out) {
  const xvec::TrialList trials = xvec::parse_trials(trials_path);
  const std::vector<xvec::ScoreLine> lines = xvec::read_scores(scores_path);
  const xvec::EvalReport report =
      xvec::evaluate_trials(xvec::join_scores(trials, lines));
  if (!out.empty()) xvec::write_report(out, report);
  std::cout << xvec::report_to_json(report).dump(2) << "\n";
  return 0;
}

int cmd_run_experiment(const xvec::ExperimentConfig &cfg,
                       const std::string &out_dir) {
  const xvec::ExperimentArtifacts art = xvec::run_experiment(cfg, out_dir);
  std::cout << xvec::report_to_json(art.report).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"speaker embedding toolkit"};
  app.require_subcommand(1);
  FlagStore f;

  CLI::App *gen = app.add_subcommand(
      "gen-data", "generate a synthetic feature archive");
  std::string gen_out;
  gen->add_option("--out", gen_out, "output archive path")->required();
  gen->add_option("--speaker_prefix", f.speaker_prefix,
                  "prefix for generated speaker ids");
  add_config_flags(gen, f);

  CLI::App *trn = app.add_subcommand("train", "train the embedding network");
  std::string trn_data, trn_out, trn_log;
  trn->add_option("--data", trn_data, "training archive")->required();
  trn->add_option("--out", trn_out, "checkpoint path")->required();
  trn->add_option("--log", trn_log, "JSONL batch log path");
  add_config_flags(trn, f);

  CLI::App *ext = app.add_subcommand(
      "extract", "extract embeddings from an archive");
  std::string ext_net, ext_data, ext_out;
  ext->add_option("--net", ext_net, "checkpoint path")->required();
  ext->add_option("--data", ext_data, "feature archive")->required();
  ext->add_option("--out", ext_out, "embedding archive path")->required();
  add_config_flags(ext, f);

  CLI::App *bke = app.add_subcommand(
      "train-backend", "fit LDA, length norm and PLDA on embeddings");
  std::string bke_emb, bke_out;
  bke->add_option("--embeddings", bke_emb, "embedding archive")->required();
  bke->add_option("--out", bke_out, "backend model path")->required();
  add_config_flags(bke, f);

  CLI::App *sco = app.add_subcommand("score", "score a trial list");
  std::string sco_backend, sco_emb, sco_trials, sco_out;
  sco->add_option("--backend", sco_backend, "backend model")->required();
  sco->add_option("--embeddings", sco_emb, "embedding archive")->required();
  sco->add_option("--trials", sco_trials, "trial list")->required();
  sco->add_option("--out", sco_out, "score file path")->required();
  add_config_flags(sco, f);

  CLI::App *eva = app.add_subcommand(
      "evaluate", "compute EER and minDCF from scores");
  std::string eva_scores, eva_trials, eva_out;
  eva->add_option("--scores", eva_scores, "score file")->required();
  eva->add_option("--trials", eva_trials, "trial list")->required();
  eva->add_option("--out", eva_out, "report JSON path");
  add_config_flags(eva, f);

  CLI::App *run = app.add_subcommand(
      "run-experiment", "full pipeline: data, train, extract, backend, score");
  std::string run_dir;
  run->add_option("--out_dir", run_dir, "artifact directory")->required();
  add_config_flags(run, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }

  try {
    if (app.got_subcommand(gen))
      return cmd_gen_data(resolve_config(gen, f), f.speaker_prefix, gen_out);
    if (app.got_subcommand(trn))
      return cmd_train(resolve_config(trn, f), trn_data, trn_out, trn_log);
    if (app.got_subcommand(ext)) return cmd_extract(ext_net, ext_data, ext_out);
    if (app.got_subcommand(bke))
      return cmd_train_backend(resolve_config(bke, f), bke_emb, bke_out);
    if (app.got_subcommand(sco))
      return cmd_score(sco_backend, sco_emb, sco_trials, sco_out);
    if (app.got_subcommand(eva))
      return cmd_evaluate(eva_scores, eva_trials, eva_out);
    if (app.got_subcommand(run))
      return cmd_run_experiment(resolve_config(run, f), run_dir);
  } catch (const xvec::ConfigError &e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const xvec::DataError &e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const xvec::NumericError &e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
