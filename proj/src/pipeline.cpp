/*
 * Copyright 2026 The LSTR Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "lstr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "lstr/error.hpp"
#include "lstr/linking.hpp"

namespace lstr {
namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

const VideoClips& find_video(const Dataset& data, const std::string& id) {
  for (const VideoClips& v : data.videos) {
    if (v.id == id) return v;
  }
  throw std::invalid_argument("video '" + id + "' not in dataset");
}

std::size_t clip_position(const VideoClips& video, int clip) {
  for (std::size_t m = 0; m < video.clips.size(); ++m) {
    if (video.clips[m].clip_index == clip) return m;
  }
  throw std::out_of_range("clip " + std::to_string(clip) + " not in video " + video.id);
}

}  // namespace

std::vector<EpochLog> pretrain_tpn(LstrModel& model, const Dataset& data, const EpochCallback& on_epoch) {
  const RunConfig& cfg = model.config();
  const int epochs = cfg.train.tpn_pretrain_epochs;
  const LrSchedule schedule = cfg.schedule(epochs);
  const ParameterList params = model.tpn_parameters();
  const std::size_t steps = data.videos.size();
  std::vector<EpochLog> log;
  for (int e = 0; e < epochs; ++e) {
    EpochLog entry{"tpn", e, 0.0, 0.0, 0.0};
    std::size_t clips = 0;
    const auto order = epoch_order(steps, cfg.train.seed, e);
    for (std::size_t s = 0; s < steps; ++s) {
      const VideoClips& video = data.videos[order[s]];
      zero_grads(params);
      for (std::size_t m = 0; m < video.clips.size(); ++m) {
        const std::uint64_t seed = cfg.train.seed ^ (static_cast<std::uint64_t>(e) << 40) ^ (order[s] << 8) ^ m;
        entry.tpn_loss += model.tpn_step(video.clips[m], seed);
        ++clips;
      }
      const double progress = e + static_cast<double>(s + 1) / static_cast<double>(steps);
      entry.lr = sgd_step(params, schedule, std::min(progress, static_cast<double>(epochs)) - 1e-12, cfg.sgd());
    }
    if (clips) entry.tpn_loss /= static_cast<double>(clips);
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

std::vector<EpochLog> train_relations(LstrModel& model, const Dataset& data, const EpochCallback& on_epoch) {
  const RunConfig& cfg = model.config();
  const int epochs = cfg.train.epochs;
  const LrSchedule schedule = cfg.schedule(epochs);
  const bool joint = cfg.train.mode == TrainingMode::kJoint;
  const ParameterList params = joint ? model.parameters() : model.relation_parameters();
  const std::size_t steps = data.videos.size();
  std::vector<EpochLog> log;
  for (int e = 0; e < epochs; ++e) {
    EpochLog entry{"relation", e, 0.0, 0.0, 0.0};
    std::size_t clips = 0, centers = 0;
    const auto order = epoch_order(steps, cfg.train.seed + 17, e);
    for (std::size_t s = 0; s < steps; ++s) {
      const VideoClips& video = data.videos[order[s]];
      zero_grads(params);
      const std::uint64_t seed = cfg.train.seed ^ (static_cast<std::uint64_t>(e + 1) << 40) ^ (order[s] << 8);
      const VideoLoss loss = model.video_step(video, seed, joint);
      entry.tpn_loss += loss.tpn;
      entry.classification += loss.classification;
      clips += video.clips.size();
      centers += video.clips.size();
      const double progress = e + static_cast<double>(s + 1) / static_cast<double>(steps);
      entry.lr = sgd_step(params, schedule, std::min(progress, static_cast<double>(epochs)) - 1e-12, cfg.sgd());
    }
    if (clips) entry.tpn_loss /= static_cast<double>(clips);
    if (centers) entry.classification /= static_cast<double>(centers);
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::string text = "stage,epoch,tpn_loss,classification_loss,lr\n";
  char line[256];
  for (const EpochLog& e : log) {
    std::snprintf(line, sizeof(line), "%s,%d,%.17g,%.17g,%.17g\n", e.stage.c_str(), e.epoch, e.tpn_loss,
                  e.classification, e.lr);
    text += line;
  }
  write_file_atomic(path, text);
}

std::vector<VideoTrack> detect_tracks(const LstrModel& model, const VideoAnalysis& analysis) {
  std::vector<std::vector<Tubelet>> per_clip;
  for (const ClipAnalysis& ca : analysis.clips) per_clip.push_back(ca.tubelets);
  if (per_clip.empty()) return {};
  return link_tubelets(per_clip, model.config().eval.link_iou_weight);
}

std::vector<DetectionRecord> detect(const LstrModel& model, const Dataset& data) {
  std::vector<DetectionRecord> out;
  for (const VideoClips& video : data.videos) {
    const VideoAnalysis analysis = model.analyze(video, model.config().tpn.proposal_cap);
    const auto tracks = detect_tracks(model, analysis);
    int track_id = 0;
    for (const VideoTrack& track : tracks) {
      for (const TrackMember& mem : track.members) {
        const Clip& clip = video.clips[static_cast<std::size_t>(mem.clip)];
        const Tubelet& tube = analysis.clips[static_cast<std::size_t>(mem.clip)].tubelets[mem.tubelet];
        for (std::size_t t = 0; t < tube.boxes.size(); ++t) {
          DetectionRecord r;
          r.video_id = video.id;
          r.clip_index = clip.clip_index;
          r.frame_index = clip.first_frame + static_cast<int>(t);
          r.label = track.label;
          r.score = track.score;
          r.box = tube.boxes[t];
          r.track_id = track_id;
          out.push_back(r);
        }
      }
      ++track_id;
    }
  }
  return out;
}

ApResult evaluate_records(const std::vector<DetectionRecord>& detections,
                          const std::vector<DetectionRecord>& ground_truth, std::size_t num_classes,
                          const EvalConfig& cfg) {
  if (cfg.mode == EvalMode::kVideo) {
    return video_map(tubes_from_records(detections), tubes_from_records(ground_truth), num_classes, cfg);
  }
  return frame_map(frames_from_records(detections), frames_from_records(ground_truth), num_classes, cfg);
}

ApResult evaluate_model(const LstrModel& model, const Dataset& data) {
  const RunConfig& cfg = model.config();
  return evaluate_records(detect(model, data), data.ground_truth,
                          static_cast<std::size_t>(cfg.data.synth.num_classes), cfg.evaluation());
}

std::vector<std::filesystem::path> dump_attention(const LstrModel& model, const Dataset& data,
                                                  const std::string& video_id, int clip, int tubelet,
                                                  const std::filesystem::path& out_dir) {
  const VideoClips& video = find_video(data, video_id);
  const std::size_t m = clip_position(video, clip);
  const VideoAnalysis analysis = model.analyze(video, model.config().tpn.proposal_cap);
  const ClipAnalysis& ca = analysis.clips[m];
  if (tubelet < 0 || static_cast<std::size_t>(tubelet) >= ca.tubelets.size()) {
    throw std::out_of_range("tubelet " + std::to_string(tubelet) + " out of range: clip has " +
                            std::to_string(ca.tubelets.size()) + " proposals");
  }
  const Tensor& attn = ca.short_term.attention[static_cast<std::size_t>(tubelet)];
  const std::size_t frames = attn.dim(0), h = attn.dim(1), w = attn.dim(2);
  const std::string stem = "attn_" + video_id + "_" + std::to_string(clip) + "_" + std::to_string(tubelet);
  std::vector<std::filesystem::path> written;
  std::ostringstream csv;
  csv << "frame,row,col,value\n";
  csv.precision(17);
  for (std::size_t t = 0; t < frames; ++t) {
    std::string pgm = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const double v = attn(t, i, j);
        pgm.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
        csv << t << ',' << i << ',' << j << ',' << v << '\n';
      }
    }
    const auto path = out_dir / (stem + "_" + std::to_string(t) + ".pgm");
    write_file_atomic(path, pgm);
    written.push_back(path);
  }
  const auto csv_path = out_dir / (stem + ".csv");
  write_file_atomic(csv_path, csv.str());
  written.push_back(csv_path);
  return written;
}

std::vector<Neighbor> relation_neighbors(const LstrModel& model, const Dataset& data,
                                         const std::string& video_id, int clip, int tubelet, int k) {
  if (model.relation() != RelationMode::kFull) {
    throw ConfigError("neighbors: requires model.relation = full");
  }
  if (k <= 0) throw std::invalid_argument("neighbors: k must be positive");
  const VideoClips& video = find_video(data, video_id);
  const std::size_t m = clip_position(video, clip);
  const VideoAnalysis analysis = model.analyze(video, model.config().tpn.proposal_cap);
  const TemporalWindow& window = analysis.windows[m];
  const Tensor& graph = analysis.graphs[m];
  if (tubelet < 0 || static_cast<std::size_t>(tubelet) >= window.center_count) {
    throw std::out_of_range("tubelet " + std::to_string(tubelet) + " out of range: clip has " +
                            std::to_string(window.center_count) + " proposals");
  }
  std::vector<Neighbor> all;
  for (std::size_t j = 0; j < window.size(); ++j) {
    const WindowMember& mem = window.members[j];
    if (mem.padding) continue;
    all.push_back({video.clips[static_cast<std::size_t>(mem.clip_index)].clip_index, mem.tubelet_index,
                   graph(static_cast<std::size_t>(tubelet), j)});
  }
  std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) { return a.weight > b.weight; });
  if (all.size() > static_cast<std::size_t>(k)) all.resize(static_cast<std::size_t>(k));
  return all;
}

void write_neighbors_csv(const std::filesystem::path& path, const std::vector<Neighbor>& neighbors) {
  std::ostringstream csv;
  csv.precision(17);
  csv << "clip,tubelet,weight\n";
  for (const Neighbor& n : neighbors) csv << n.clip << ',' << n.tubelet << ',' << n.weight << '\n';
  write_file_atomic(path, csv.str());
}

}  // namespace lstr
