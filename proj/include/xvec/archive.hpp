// xvec/archive.hpp

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

// Feature-archive container (SPKF), trial-list parsing and the synthetic
// speaker generator.
//
// SPKF layout, all integers little-endian:
//   magic "SPKF", format version u32 = 1, dim u32, utterance count u64;
//   per utterance: u16 id length + UTF-8 id, u16 speaker-id length + UTF-8
//   speaker id, u32 frame count T, then T*dim float32 values row-major.

#ifndef XVEC_ARCHIVE_HPP_
#define XVEC_ARCHIVE_HPP_

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "xvec/error.hpp"
#include "xvec/matrix.hpp"
#include "xvec/serial.hpp"

namespace xvec {

struct Utterance {
  std::string utt_id;
  std::string speaker_id;
  Matrix frames;  // T x dim
};

// Ordered utterance collection with a dense speaker index (0..c-1 in order
// of first appearance).
class FeatureArchive {
 public:
  FeatureArchive() = default;
  explicit FeatureArchive(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return utterances_.size(); }
  std::size_t num_speakers() const { return speaker_index_.size(); }
  const std::vector<Utterance> &utterances() const { return utterances_; }
  const Utterance &operator[](std::size_t i) const { return utterances_[i]; }

  const std::map<std::string, int> &speaker_index() const { return speaker_index_; }

  int label_of(std::size_t i) const { return labels_[i]; }

  void add(Utterance utt) {
    if (utt.frames.rows() < 1)
      throw DataError("archive: utterance '" + utt.utt_id + "' has no frames");
    if (utt.frames.cols() != dim_)
      throw DimensionError("archive: utterance '" + utt.utt_id + "' has dim " +
                           std::to_string(utt.frames.cols()) + ", archive dim is " +
                           std::to_string(dim_));
    if (!id_set_.insert(utt.utt_id).second)
      throw DataError("archive: duplicate utterance id '" + utt.utt_id + "'");
    auto [it, inserted] = speaker_index_.try_emplace(
        utt.speaker_id, static_cast<int>(speaker_index_.size()));
    labels_.push_back(it->second);
    utterances_.push_back(std::move(utt));
  }

  bool operator==(const FeatureArchive &o) const {
    if (dim_ != o.dim_ || utterances_.size() != o.utterances_.size()) return false;
    for (std::size_t i = 0; i < utterances_.size(); ++i) {
      if (utterances_[i].utt_id != o.utterances_[i].utt_id ||
          utterances_[i].speaker_id != o.utterances_[i].speaker_id ||
          !(utterances_[i].frames == o.utterances_[i].frames))
        return false;
    }
    return true;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<Utterance> utterances_;
  std::vector<int> labels_;
  std::map<std::string, int> speaker_index_;
  std::set<std::string> id_set_;
};

inline void write_archive(const std::string &path, const FeatureArchive &archive) {
  BinaryWriter w(path);
  w.str("SPKF");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(archive.dim()));
  w.u64(archive.size());
  for (const Utterance &utt : archive.utterances()) {
    if (utt.utt_id.size() > 0xffff || utt.speaker_id.size() > 0xffff)
      throw DataError("archive: id longer than 65535 bytes: " + utt.utt_id);
    w.u16(static_cast<std::uint16_t>(utt.utt_id.size()));
    w.str(utt.utt_id);
    w.u16(static_cast<std::uint16_t>(utt.speaker_id.size()));
    w.str(utt.speaker_id);
    w.u32(static_cast<std::uint32_t>(utt.frames.rows()));
    for (double v : utt.frames.storage()) w.f32(static_cast<float>(v));
  }
  w.close();
}

inline FeatureArchive read_archive(const std::string &path) {
  BinaryReader r(path);
  if (r.str(4) != "SPKF") r.fail("bad magic (expected \"SPKF\")");
  const std::uint32_t version = r.u32();
  if (version != 1) r.fail("unsupported format version " + std::to_string(version));
  const std::uint32_t dim = r.u32();
  const std::uint64_t count = r.u64();
  FeatureArchive archive(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    Utterance utt;
    utt.utt_id = r.str(r.u16());
    utt.speaker_id = r.str(r.u16());
    const std::uint32_t frames = r.u32();
    if (frames == 0) r.fail("utterance '" + utt.utt_id + "' has zero frames");
    utt.frames = Matrix(frames, dim);
    for (double &v : utt.frames.storage()) v = static_cast<double>(r.f32());
    archive.add(std::move(utt));
  }
  if (!r.at_eof()) r.fail("trailing bytes after last utterance");
  return archive;
}

enum class TrialLabel { kTarget, kNontarget };

struct Trial {
  std::string enroll_id;
  std::string test_id;
  TrialLabel label;
};

struct TrialList {
  std::vector<Trial> trials;

  std::size_t count(TrialLabel want) const {
    std::size_t n = 0;
    for (const Trial &t : trials) n += t.label == want;
    return n;
  }
};

// Each line: "enroll_id test_id target|nontarget", whitespace-separated.
// Blank lines are skipped; anything else malformed names its line number.
inline TrialList parse_trials(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open trial list: " + path);
  TrialList list;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string enroll, test, label, extra;
    if (!(ls >> enroll)) continue;  // blank line
    if (!(ls >> test >> label) || (ls >> extra))
      throw DataError(path + ": malformed trial on line " + std::to_string(line_no));
    Trial t;
    t.enroll_id = enroll;
    t.test_id = test;
    if (label == "target") {
      t.label = TrialLabel::kTarget;
    } else if (label == "nontarget") {
      t.label = TrialLabel::kNontarget;
    } else {
      throw DataError(path + ": unknown label '" + label + "' on line " +
                      std::to_string(line_no));
    }
    list.trials.push_back(std::move(t));
  }
  return list;
}

inline void write_trials(const std::string &path, const TrialList &list) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  for (const Trial &t : list.trials)
    os << t.enroll_id << ' ' << t.test_id << ' '
       << (t.label == TrialLabel::kTarget ? "target" : "nontarget") << '\n';
  if (!os.flush()) throw DataError("write failed: " + path);
}

struct SynthConfig {
  std::size_t n_speakers = 64;
  std::size_t utts_per_speaker = 20;
  std::size_t frames_min = 200;
  std::size_t frames_max = 300;
  std::size_t dim = 30;
  double between_speaker_scale = 3.0;
  double within_speaker_scale = 1.0;
  double channel_scale = 0.5;
  std::uint64_t seed = 1;
  std::string speaker_prefix = "spk";

  void validate() const {
    if (n_speakers == 0) throw ConfigError("synth: n_speakers must be >= 1");
    if (utts_per_speaker == 0) throw ConfigError("synth: utts_per_speaker must be >= 1");
    if (dim < 2) throw ConfigError("synth: dim must be >= 2");
    if (frames_min == 0 || frames_min > frames_max)
      throw ConfigError("synth: frames range invalid");
    if (between_speaker_scale <= 0 || within_speaker_scale <= 0 || channel_scale <= 0)
      throw ConfigError("synth: scales must be > 0");
  }
};

// Gaussian hierarchy: speaker mean, plus a per-utterance channel offset,
// plus per-frame noise. The channel term gives within-speaker variation the
// structure the PLDA back-end models. Frames are snapped to float32 at
// generation so the in-memory archive equals its on-disk round trip
// bit-exactly.
inline FeatureArchive generate_synthetic(const SynthConfig &cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  FeatureArchive archive(cfg.dim);
  std::vector<double> mean(cfg.dim), offset(cfg.dim);
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
    char spk[64];
    std::snprintf(spk, sizeof(spk), "%s%04zu", cfg.speaker_prefix.c_str(), s);
    for (std::size_t j = 0; j < cfg.dim; ++j)
      mean[j] = cfg.between_speaker_scale * rng.gaussian();
    for (std::size_t u = 0; u < cfg.utts_per_speaker; ++u) {
      char utt[96];
      std::snprintf(utt, sizeof(utt), "%s_u%03zu", spk, u);
      for (std::size_t j = 0; j < cfg.dim; ++j)
        offset[j] = cfg.channel_scale * rng.gaussian();
      const std::size_t frames =
          cfg.frames_min +
          static_cast<std::size_t>(rng.uniform_int(cfg.frames_max - cfg.frames_min + 1));
      Utterance out;
      out.utt_id = utt;
      out.speaker_id = spk;
      out.frames = Matrix(frames, cfg.dim);
      for (std::size_t t = 0; t < frames; ++t) {
        double *row = out.frames.row(t);
        for (std::size_t j = 0; j < cfg.dim; ++j) {
          const double v = mean[j] + offset[j] + cfg.within_speaker_scale * rng.gaussian();
          row[j] = static_cast<double>(static_cast<float>(v));
        }
      }
      archive.add(std::move(out));
    }
  }
  return archive;
}

}  // namespace xvec

#endif  // XVEC_ARCHIVE_HPP_
