// xvec/experiment.hpp

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

#ifndef XVEC_EXPERIMENT_HPP_
#define XVEC_EXPERIMENT_HPP_

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xvec/archive.hpp"
#include "xvec/backend.hpp"
#include "xvec/error.hpp"
#include "xvec/losses.hpp"
#include "xvec/metrics.hpp"
#include "xvec/network.hpp"
#include "xvec/trainer.hpp"

namespace xvec {

// One flat bag of knobs for the whole pipeline. Defaults are the frozen
// desk-scale experiment; every field maps one-to-one to a JSON config key
// and a CLI flag of the same name.
//
// The defaults are deliberately data-starved (few, short, noisy utterances)
// so that embedding quality, not backend compensation, dominates the eval
// EER; this is the regime where the margin losses separate from plain
// softmax. The learning rate sits where the margin losses train stably:
// their gradients run several times hotter than softmax at the same loss
// value, and the clip threshold only trims their spikes.
struct ExperimentConfig {
  // Synthetic data.
  std::size_t n_speakers = 64;
  std::size_t utts_per_speaker = 10;
  std::size_t eval_speakers = 32;
  std::size_t eval_utts_per_speaker = 10;
  std::size_t frames_min = 100;
  std::size_t frames_max = 160;
  std::size_t dim = 30;
  double between_speaker_scale = 1.6;
  double within_speaker_scale = 1.2;
  double channel_scale = 1.0;

  // Network.
  std::vector<std::size_t> frame_widths = {64, 64, 64, 64, 128};
  std::size_t segment_width_a = 64;
  std::size_t segment_width_b = 64;

  // Loss. m < 0 selects the per-kind default margin.
  std::string loss = "softmax";
  double m = -1.0;
  double s = 32.0;

  // Trainer.
  std::size_t epochs = 3;
  double lr_peak = 0.01;
  double momentum = 0.7;
  double weight_decay = 1e-5;
  double max_grad_norm = 12.0;
  std::size_t warmup_batches = 20;
  std::size_t batch_size = 16;
  std::size_t segment_frames_min = 50;
  std::size_t segment_frames_max = 100;

  // Backend.
  std::size_t lda_dim = 16;
  std::size_t plda_iters = 10;

  // seed drives training (weights, batch order, crops, synthesis of the
  // training set); the evaluation set stays a fixed benchmark unless
  // eval_seed is changed explicitly.
  std::uint64_t seed = 1;
  std::uint64_t eval_seed = 4242;

  SynthConfig train_synth() const {
    SynthConfig c;
    c.n_speakers = n_speakers;
    c.utts_per_speaker = utts_per_speaker;
    c.frames_min = frames_min;
    c.frames_max = frames_max;
    c.dim = dim;
    c.between_speaker_scale = between_speaker_scale;
    c.within_speaker_scale = within_speaker_scale;
    c.channel_scale = channel_scale;
    c.seed = seed;
    c.speaker_prefix = "trn";
    return c;
  }

  // Disjoint speakers by construction: distinct prefix and an independent
  // seed stream.
  SynthConfig eval_synth() const {
    SynthConfig c = train_synth();
    c.n_speakers = eval_speakers;
    c.utts_per_speaker = eval_utts_per_speaker;
    c.seed = eval_seed;
    c.speaker_prefix = "evl";
    return c;
  }

  XVectorNetConfig net_config() const {
    XVectorNetConfig c;
    c.feature_dim = dim;
    c.frame_widths = frame_widths;
    c.segment_width_a = segment_width_a;
    c.segment_width_b = segment_width_b;
    return c;
  }

  LossConfig loss_config() const {
    const LossKind kind = loss_kind_from_string(loss);
    LossConfig c = LossConfig::make(kind);
    if (m >= 0.0) c.m = m;
    c.s = s;
    return c;
  }

  TrainConfig train_config() const {
    TrainConfig c;
    c.epochs = epochs;
    c.lr_peak = lr_peak;
    c.momentum = momentum;
    c.weight_decay = weight_decay;
    c.max_grad_norm = max_grad_norm;
    c.warmup_batches = warmup_batches;
    c.batch_size = batch_size;
    c.segment_frames_min = segment_frames_min;
    c.segment_frames_max = segment_frames_max;
    c.seed = seed;
    return c;
  }

  void validate() const {
    train_synth().validate();
    eval_synth().validate();
    net_config().validate();
    loss_config().validate();
    train_config().validate();
    if (lda_dim == 0) throw ConfigError("config: lda_dim must be >= 1");
  }
};

namespace detail {

inline std::size_t json_size(const nlohmann::json &v, const std::string &key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw ConfigError("config key '" + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

inline double json_real(const nlohmann::json &v, const std::string &key) {
  if (!v.is_number())
    throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

inline std::string json_string(const nlohmann::json &v,
                               const std::string &key) {
  if (!v.is_string())
    throw ConfigError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

// Flat schema; unknown keys are rejected by name so typos never silently
// fall back to defaults.
inline void apply_config_json(ExperimentConfig &cfg, const nlohmann::json &j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto &item : j.items()) {
    const std::string &key = item.key();
    const nlohmann::json &v = item.value();
    if (key == "n_speakers") cfg.n_speakers = detail::json_size(v, key);
    else if (key == "utts_per_speaker") cfg.utts_per_speaker = detail::json_size(v, key);
    else if (key == "eval_speakers") cfg.eval_speakers = detail::json_size(v, key);
    else if (key == "eval_utts_per_speaker") cfg.eval_utts_per_speaker = detail::json_size(v, key);
    else if (key == "frames_min") cfg.frames_min = detail::json_size(v, key);
    else if (key == "frames_max") cfg.frames_max = detail::json_size(v, key);
    else if (key == "dim") cfg.dim = detail::json_size(v, key);
    else if (key == "between_speaker_scale") cfg.between_speaker_scale = detail::json_real(v, key);
    else if (key == "within_speaker_scale") cfg.within_speaker_scale = detail::json_real(v, key);
    else if (key == "channel_scale") cfg.channel_scale = detail::json_real(v, key);
    else if (key == "frame_widths") {
      if (!v.is_array() || v.empty())
        throw ConfigError("config key 'frame_widths' must be a nonempty array");
      cfg.frame_widths.clear();
      for (const auto &e : v) cfg.frame_widths.push_back(detail::json_size(e, key));
    } else if (key == "segment_width_a") cfg.segment_width_a = detail::json_size(v, key);
    else if (key == "segment_width_b") cfg.segment_width_b = detail::json_size(v, key);
    else if (key == "loss") cfg.loss = detail::json_string(v, key);
    else if (key == "m") cfg.m = detail::json_real(v, key);
    else if (key == "s") cfg.s = detail::json_real(v, key);
    else if (key == "epochs") cfg.epochs = detail::json_size(v, key);
    else if (key == "lr_peak") cfg.lr_peak = detail::json_real(v, key);
    else if (key == "momentum") cfg.momentum = detail::json_real(v, key);
    else if (key == "weight_decay") cfg.weight_decay = detail::json_real(v, key);
    else if (key == "max_grad_norm") cfg.max_grad_norm = detail::json_real(v, key);
    else if (key == "warmup_batches") cfg.warmup_batches = detail::json_size(v, key);
    else if (key == "batch_size") cfg.batch_size = detail::json_size(v, key);
    else if (key == "segment_frames_min") cfg.segment_frames_min = detail::json_size(v, key);
    else if (key == "segment_frames_max") cfg.segment_frames_max = detail::json_size(v, key);
    else if (key == "lda_dim") cfg.lda_dim = detail::json_size(v, key);
    else if (key == "plda_iters") cfg.plda_iters = detail::json_size(v, key);
    else if (key == "seed") cfg.seed = detail::json_size(v, key);
    else if (key == "eval_seed") cfg.eval_seed = detail::json_size(v, key);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
}

inline ExperimentConfig load_experiment_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error &e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  ExperimentConfig cfg;
  apply_config_json(cfg, j);
  return cfg;
}

// ----- Pipeline operations shared by the CLI and the acceptance suite -----

struct ExtractionResult {
  EmbeddingSet embeddings;
  // Utterances below the receptive field, as (utt_id, frame count).
  std::vector<std::pair<std::string, std::size_t>> skipped;
};

inline ExtractionResult extract_embeddings(const XVectorNet &net,
                                           const FeatureArchive &archive) {
  if (archive.dim() != net.feature_dim)
    throw DimensionError("extract: archive dim " +
                         std::to_string(archive.dim()) +
                         " does not match net feature dim " +
                         std::to_string(net.feature_dim));
  ExtractionResult out;
  const std::size_t rf = net.receptive_field();
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < archive.size(); ++i) {
    if (archive[i].frames.rows() < rf)
      out.skipped.emplace_back(archive[i].utt_id, archive[i].frames.rows());
    else
      kept.push_back(i);
  }
  if (kept.empty()) throw DataError("extract: no utterance reaches the receptive field");
  out.embeddings.vectors = Matrix(kept.size(), net.embedding_dim());
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const Utterance &u = archive[kept[r]];
    const std::vector<double> e = net.extract_embedding(u.frames);
    out.embeddings.ids.push_back(u.utt_id);
    out.embeddings.labels.push_back(u.speaker_id);
    for (std::size_t j = 0; j < e.size(); ++j) out.embeddings.vectors(r, j) = e[j];
  }
  return out;
}

// Every unordered pair of utterances, labeled by speaker identity.
inline TrialList all_pairs_trials(const EmbeddingSet &embs) {
  embs.validate();
  if (!embs.has_labels())
    throw ConfigError("all_pairs_trials: labels required");
  TrialList trials;
  for (std::size_t i = 0; i < embs.size(); ++i)
    for (std::size_t j = i + 1; j < embs.size(); ++j)
      trials.trials.push_back({embs.ids[i], embs.ids[j],
                               embs.labels[i] == embs.labels[j]
                                   ? TrialLabel::kTarget
                                   : TrialLabel::kNontarget});
  return trials;
}

struct ScoreLine {
  std::string enroll_id;
  std::string test_id;
  double score;
};

// Scores raw embeddings against a backend: apply the pipeline once, then
// evaluate each trial through the diagonalized scorer.
inline std::vector<ScoreLine> score_trials(const BackendModel &model,
                                           const EmbeddingSet &raw,
                                           const TrialList &trials) {
  const EmbeddingSet processed = apply_backend(model, raw);
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < processed.size(); ++i)
    row_of.emplace(processed.ids[i], i);
  std::vector<std::string> missing;
  for (const Trial &t : trials.trials) {
    if (!row_of.count(t.enroll_id)) missing.push_back(t.enroll_id);
    if (!row_of.count(t.test_id)) missing.push_back(t.test_id);
    if (missing.size() >= 10) break;
  }
  if (!missing.empty()) {
    std::string msg = "score: ids missing from the embedding archive:";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i)
      msg += " " + missing[i];
    throw DataError(msg);
  }
  const PldaScorer scorer(model.plda);
  const std::size_t p = processed.dim();
  std::vector<ScoreLine> out;
  out.reserve(trials.trials.size());
  std::vector<double> e(p), t(p);
  for (const Trial &trial : trials.trials) {
    const double *er = processed.vectors.row(row_of.at(trial.enroll_id));
    const double *tr = processed.vectors.row(row_of.at(trial.test_id));
    e.assign(er, er + p);
    t.assign(tr, tr + p);
    out.push_back({trial.enroll_id, trial.test_id, scorer.score(e, t)});
  }
  return out;
}

inline void write_scores(const std::string &path,
                         const std::vector<ScoreLine> &lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  char buf[64];
  for (const ScoreLine &l : lines) {
    std::snprintf(buf, sizeof(buf), "%.17g", l.score);
    out << l.enroll_id << " " << l.test_id << " " << buf << "\n";
  }
  if (!out) throw DataError("failed writing " + path);
}

inline std::vector<ScoreLine> read_scores(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file " + path);
  std::vector<ScoreLine> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ScoreLine l;
    if (!(ss >> l.enroll_id >> l.test_id >> l.score))
      throw DataError(path + ": malformed score line " +
                      std::to_string(line_no));
    std::string extra;
    if (ss >> extra)
      throw DataError(path + ": trailing tokens on line " +
                      std::to_string(line_no));
    out.push_back(l);
  }
  return out;
}

// Join a score file against a trial list by (enroll, test) id pair. Line
// order in the score file does not matter; every trial must be scored
// exactly once and no score may dangle.
inline ScoredTrials join_scores(const TrialList &trials,
                                const std::vector<ScoreLine> &lines) {
  std::unordered_map<std::string, double> by_pair;
  for (const ScoreLine &l : lines) {
    const std::string key = l.enroll_id + "\t" + l.test_id;
    if (!by_pair.emplace(key, l.score).second)
      throw DataError("evaluate: duplicate score for pair " + l.enroll_id +
                      " " + l.test_id);
  }
  ScoredTrials st;
  std::vector<std::string> missing;
  for (const Trial &t : trials.trials) {
    auto it = by_pair.find(t.enroll_id + "\t" + t.test_id);
    if (it == by_pair.end()) {
      missing.push_back(t.enroll_id + " " + t.test_id);
      if (missing.size() >= 10) break;
      continue;
    }
    st.scores.push_back(it->second);
    st.labels.push_back(t.label);
  }
  if (!missing.empty()) {
    std::string msg = "evaluate: trials without scores:";
    for (const std::string &m : missing) msg += " [" + m + "]";
    throw DataError(msg);
  }
  if (lines.size() != trials.trials.size())
    throw DataError("evaluate: " + std::to_string(lines.size()) +
                    " scores for " + std::to_string(trials.trials.size()) +
                    " trials");
  return st;
}

struct EvalReport {
  double eer = 0.0;
  double eer_threshold = 0.0;
  double min_dcf_p01 = 0.0;
  double min_dcf_p001 = 0.0;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
};

inline EvalReport evaluate_trials(const ScoredTrials &trials) {
  trials.validate();
  EvalReport r;
  const EerResult e = eer(trials);
  r.eer = e.eer;
  r.eer_threshold = e.threshold;
  DcfParams p;
  p.p_target = 0.01;
  r.min_dcf_p01 = min_dcf(trials, p).dcf;
  p.p_target = 0.001;
  r.min_dcf_p001 = min_dcf(trials, p).dcf;
  for (TrialLabel l : trials.labels)
    (l == TrialLabel::kTarget ? r.n_target : r.n_nontarget)++;
  return r;
}

inline nlohmann::ordered_json report_to_json(const EvalReport &r) {
  nlohmann::ordered_json j;
  j["eer"] = r.eer;
  j["eer_threshold"] = r.eer_threshold;
  j["min_dcf_p01"] = r.min_dcf_p01;
  j["min_dcf_p001"] = r.min_dcf_p001;
  j["n_target"] = r.n_target;
  j["n_nontarget"] = r.n_nontarget;
  return j;
}

inline void write_report(const std::string &path, const EvalReport &r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << report_to_json(r).dump(2) << "\n";
  if (!out) throw DataError("failed writing " + path);
}

inline EvalReport read_report(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error &e) {
    throw DataError("report " + path + ": " + e.what());
  }
  EvalReport r;
  r.eer = j.at("eer").get<double>();
  r.eer_threshold = j.at("eer_threshold").get<double>();
  r.min_dcf_p01 = j.at("min_dcf_p01").get<double>();
  r.min_dcf_p001 = j.at("min_dcf_p001").get<double>();
  r.n_target = j.at("n_target").get<std::size_t>();
  r.n_nontarget = j.at("n_nontarget").get<std::size_t>();
  return r;
}

inline void write_skipped_report(
    const std::string &path,
    const std::vector<std::pair<std::string, std::size_t>> &skipped) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  for (const auto &[id, frames] : skipped) out << id << " " << frames << "\n";
  if (!out) throw DataError("failed writing " + path);
}

struct ExperimentArtifacts {
  std::string train_archive;
  std::string eval_archive;
  std::string checkpoint;
  std::string train_log;
  std::string train_embeddings;
  std::string eval_embeddings;
  std::string backend_model;
  std::string trials_file;
  std::string scores_file;
  std::string report_file;
  std::string skipped_file;
  EvalReport report;
  std::vector<double> epoch_mean_loss;
};

// The whole pipeline against synthetic data: generate disjoint train/eval
// speaker sets, train the network, extract embeddings for both sides, fit
// the backend on the training embeddings, score all eval pairs, and report
// metrics. Every artifact lands under out_dir with a fixed name; reruns
// with the same config are byte-identical.
inline ExperimentArtifacts run_experiment(const ExperimentConfig &cfg,
                                          const std::string &out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  ExperimentArtifacts art;
  const auto path = [&](const char *name) { return out_dir + "/" + name; };
  art.train_archive = path("train.spkf");
  art.eval_archive = path("eval.spkf");
  art.checkpoint = path("model.xvck");
  art.train_log = path("train_log.jsonl");
  art.train_embeddings = path("train_embeddings.spkf");
  art.eval_embeddings = path("eval_embeddings.spkf");
  art.backend_model = path("backend.xbkd");
  art.trials_file = path("trials.txt");
  art.scores_file = path("scores.txt");
  art.report_file = path("report.json");
  art.skipped_file = path("skipped.txt");

  const FeatureArchive train_arch = generate_synthetic(cfg.train_synth());
  const FeatureArchive eval_arch = generate_synthetic(cfg.eval_synth());
  write_archive(art.train_archive, train_arch);
  write_archive(art.eval_archive, eval_arch);

  Rng net_rng(cfg.seed);
  XVectorNet net = build_xvector(cfg.net_config(), net_rng);
  const LossConfig loss_cfg = cfg.loss_config();
  ProjectionLayer proj = ProjectionLayer::create(
      net.output_dim(), train_arch.num_speakers(),
      loss_cfg.kind == LossKind::kSoftmax, net_rng);
  {
    std::ofstream log(art.train_log, std::ios::binary);
    if (!log) throw DataError("cannot open " + art.train_log + " for writing");
    const auto per_epoch = [&](std::size_t epoch) {
      save_net(art.checkpoint + ".epoch" + std::to_string(epoch + 1), net);
    };
    const TrainResult tr = train(train_arch, net, proj, loss_cfg,
                                 cfg.train_config(), &log, per_epoch);
    art.epoch_mean_loss = tr.epoch_mean_loss;
  }
  save_net(art.checkpoint, net);

  const ExtractionResult train_ext = extract_embeddings(net, train_arch);
  const ExtractionResult eval_ext = extract_embeddings(net, eval_arch);
  write_archive(art.train_embeddings,
                embeddings_to_archive(train_ext.embeddings));
  write_archive(art.eval_embeddings,
                embeddings_to_archive(eval_ext.embeddings));
  std::vector<std::pair<std::string, std::size_t>> skipped = train_ext.skipped;
  skipped.insert(skipped.end(), eval_ext.skipped.begin(),
                 eval_ext.skipped.end());
  write_skipped_report(art.skipped_file, skipped);

  const BackendFit backend =
      fit_backend(train_ext.embeddings, cfg.lda_dim, cfg.plda_iters);
  save_backend(art.backend_model, backend.model);

  const TrialList trials = all_pairs_trials(eval_ext.embeddings);
  write_trials(art.trials_file, trials);
  const std::vector<ScoreLine> scores =
      score_trials(backend.model, eval_ext.embeddings, trials);
  write_scores(art.scores_file, scores);

  art.report = evaluate_trials(join_scores(trials, scores));
  write_report(art.report_file, art.report);
  return art;
}

}  // namespace xvec

#endif  // XVEC_EXPERIMENT_HPP_
