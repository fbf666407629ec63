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

// The single configuration surface. A run configuration is one JSON document
// with sections data / model / tpn / train / eval / paths. Values are
// resolved as defaults <- file <- flags, and every leaf carries a provenance
// tag: "published" (a stated setting of the original method), "desk-scale"
// (chosen for small synthetic runs), "file" or "flag".

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lstr/evaluation.hpp"
#include "lstr/geometry.hpp"
#include "lstr/long_term.hpp"
#include "lstr/numerics.hpp"
#include "lstr/short_term.hpp"
#include "lstr/synth.hpp"
#include "lstr/tpn.hpp"

namespace lstr {

enum class RelationMode { kTpnOnly, kShortTerm, kFull };
enum class TrainingMode { kJoint, kStaged };

struct DataConfig {
  int clip_length = 8;
  int clip_stride = 8;
  SynthConfig synth;
};

struct ModelConfig {
  std::vector<int> channels{8, 16, 32};
  int spatial_kernel = 3;
  int temporal_kernel = 3;
  std::vector<double> anchor_scales{8, 16, 32};
  std::vector<double> anchor_ratios{0.5, 1, 2};
  int human_width = 32;
  // Pooled context divided by T * H' * W'; pooled human block divided by
  // sqrt(T * 49).
  bool feature_normalize = true;
  int window_radius = 4;
  double gamma = 1.0;
  double dropout = 0.5;
  LabelMode label_mode = LabelMode::kSingleLabel;
  RelationMode relation = RelationMode::kFull;
};

struct TpnConfig {
  double nms_iou = 0.7;
  int proposal_cap = 300;
  double lambda = 1.0;
  int minibatch = 32;
  double positive_fraction = 0.5;
};

struct TrainConfig {
  int epochs = 10;
  double base_lr = 0.001;
  double warmup_start_lr = 0.0001;
  double warmup_epochs = 0.3;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  int tpn_pretrain_epochs = 10;
  TrainingMode mode = TrainingMode::kJoint;
  std::uint64_t seed = 1;
  int relation_proposals = 8;   // proposals per clip fed to the relation stages
  double foreground_iou = 0.5;  // proposal-to-ground-truth overlap for a class label
};

struct EvalSettings {
  double iou_threshold = 0.5;
  EvalMode mode = EvalMode::kVideo;
  double link_iou_weight = 1.0;
  int neighbors_k = 10;
};

struct PathConfig {
  std::string dataset;
  std::string checkpoint;
  std::string output;
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TpnConfig tpn;
  TrainConfig train;
  EvalSettings eval;
  PathConfig paths;

  BackboneConfig backbone() const;
  AnchorGrid anchor_grid() const;
  ShortTermConfig short_term() const;
  LrSchedule schedule(int epochs) const;
  SgdOptions sgd() const;
  ProposalOptions proposals(int cap) const;
  EvalConfig evaluation() const;
  // Throws ConfigError naming the offending key.
  void validate() const;
};

nlohmann::json config_to_json(const RunConfig& cfg);
// Throws ConfigError on unknown keys or mistyped values.
RunConfig config_from_json(const nlohmann::json& doc);

class ConfigResolver {
 public:
  ConfigResolver();

  // Merges a JSON document; its leaves are tagged "file".
  void merge_file(const std::string& path);
  void merge_json(const nlohmann::json& doc, const std::string& tag);
  // `key` is a dotted path such as "train.seed"; `value` is parsed as JSON,
  // falling back to a plain string.
  void set(const std::string& key, const std::string& value, const std::string& tag = "flag");

  RunConfig resolve() const;
  // {"config": ..., "provenance": {dotted key: tag}}.
  nlohmann::json echo() const;
  const std::map<std::string, std::string>& provenance() const { return provenance_; }

 private:
  nlohmann::json doc_;
  std::map<std::string, std::string> provenance_;
};

// Provenance tags of the built-in defaults.
std::map<std::string, std::string> default_provenance();

}  // namespace lstr
