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

#pragma once

// End-to-end orchestration: training stages, detection (propose, relate,
// classify, link), evaluation, and diagnostic exports.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lstr/clip_io.hpp"
#include "lstr/config.hpp"
#include "lstr/evaluation.hpp"
#include "lstr/linking.hpp"
#include "lstr/model.hpp"
#include "lstr/records.hpp"

namespace lstr {

struct EpochLog {
  std::string stage;  // "tpn" or "relation"
  int epoch = 0;
  double tpn_loss = 0.0;       // mean per clip
  double classification = 0.0; // mean per labeled center clip
  double lr = 0.0;             // at the end of the epoch
};

// Proposal-network pretraining for train.tpn_pretrain_epochs epochs, one SGD
// step per video.
using EpochCallback = std::function<void(const EpochLog&)>;

std::vector<EpochLog> pretrain_tpn(LstrModel& model, const Dataset& data, const EpochCallback& on_epoch = {});

// Relation training for train.epochs epochs. Joint mode updates every
// parameter with the summed proposal and classification losses; staged mode
// freezes the backbone and proposal heads.
std::vector<EpochLog> train_relations(LstrModel& model, const Dataset& data,
                                      const EpochCallback& on_epoch = {});

void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

// Tracks of one video, linked from classified proposals.
std::vector<VideoTrack> detect_tracks(const LstrModel& model, const VideoAnalysis& analysis);

// Records for every track: one line per member frame, track ids unique per
// video.
std::vector<DetectionRecord> detect(const LstrModel& model, const Dataset& data);

ApResult evaluate_records(const std::vector<DetectionRecord>& detections,
                          const std::vector<DetectionRecord>& ground_truth, std::size_t num_classes,
                          const EvalConfig& cfg);

// detect + evaluate_records against the dataset's ground truth.
ApResult evaluate_model(const LstrModel& model, const Dataset& data);

// Writes attn_<video>_<clip>_<tubelet>_<frame>.pgm per frame plus
// attn_<video>_<clip>_<tubelet>.csv (frame,row,col,value). Returns the files
// written.
std::vector<std::filesystem::path> dump_attention(const LstrModel& model, const Dataset& data,
                                                  const std::string& video_id, int clip, int tubelet,
                                                  const std::filesystem::path& out_dir);

struct Neighbor {
  int clip = 0;
  int tubelet = 0;
  double weight = 0.0;
};

// The k heaviest relation-graph edges from one center-clip tubelet to real
// (non-padding) window members, heaviest first. Requires the full relation
// mode.
std::vector<Neighbor> relation_neighbors(const LstrModel& model, const Dataset& data,
                                         const std::string& video_id, int clip, int tubelet, int k);
void write_neighbors_csv(const std::filesystem::path& path, const std::vector<Neighbor>& neighbors);

}  // namespace lstr
