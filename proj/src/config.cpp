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

#include "lstr/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "lstr/error.hpp"

namespace lstr {
namespace {

using nlohmann::json;

const char* relation_name(RelationMode m) {
  switch (m) {
    case RelationMode::kTpnOnly: return "tpn-only";
    case RelationMode::kShortTerm: return "short-term";
    default: return "full";
  }
}

RelationMode parse_relation(const std::string& s) {
  if (s == "tpn-only") return RelationMode::kTpnOnly;
  if (s == "short-term") return RelationMode::kShortTerm;
  if (s == "full") return RelationMode::kFull;
  throw ConfigError("model.relation: expected tpn-only, short-term or full, got '" + s + "'");
}

// Collects dotted leaf paths; arrays are leaves.
void leaves(const json& doc, const std::string& prefix, std::vector<std::string>& out) {
  if (doc.is_object()) {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      leaves(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
  } else {
    out.push_back(prefix);
  }
}

template <typename T>
void read(const json& section, const std::string& sname, const char* key, T& out) {
  try {
    out = section.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(sname + "." + key + ": " + e.what());
  }
}

json::json_pointer pointer(const std::string& dotted) {
  std::string p;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) p += "/" + part;
  return json::json_pointer(p);
}

}  // namespace

BackboneConfig RunConfig::backbone() const {
  BackboneConfig b;
  b.frames = data.clip_length;
  b.spatial_kernel = model.spatial_kernel;
  b.temporal_kernel = model.temporal_kernel;
  b.in_channels = 3;
  b.channels = model.channels;
  return b;
}

AnchorGrid RunConfig::anchor_grid() const {
  AnchorGrid g;
  const int stride = backbone().total_stride();
  g.stride = stride;
  g.feature_height = data.synth.image_size / stride;
  g.feature_width = data.synth.image_size / stride;
  g.scales = model.anchor_scales;
  g.aspect_ratios = model.anchor_ratios;
  g.frames = data.clip_length;
  return g;
}

ShortTermConfig RunConfig::short_term() const {
  ShortTermConfig s{data.clip_length, model.channels.back(), model.human_width, 1.0, 1.0};
  if (model.feature_normalize) {
    const int cells = data.synth.image_size / backbone().total_stride();
    s.context_scale = 1.0 / (static_cast<double>(data.clip_length) * cells * cells);
    s.human_scale = 1.0 / std::sqrt(static_cast<double>(data.clip_length) * kRoiBins * kRoiBins);
  }
  return s;
}

LrSchedule RunConfig::schedule(int epochs) const {
  return LrSchedule{train.base_lr, train.warmup_start_lr, train.warmup_epochs, epochs};
}

SgdOptions RunConfig::sgd() const { return SgdOptions{train.momentum, train.weight_decay}; }

ProposalOptions RunConfig::proposals(int cap) const {
  return ProposalOptions{tpn.nms_iou, static_cast<std::size_t>(cap)};
}

EvalConfig RunConfig::evaluation() const { return EvalConfig{eval.iou_threshold, eval.mode}; }

void RunConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  data.synth.validate(data.clip_length);
  need(data.clip_stride >= 1 && data.clip_stride <= data.clip_length,
       "data.clip_stride must lie in [1, clip_length]");
  need(!model.channels.empty(), "model.channels must be non-empty");
  for (int c : model.channels) need(c > 0, "model.channels entries must be positive");
  need(model.spatial_kernel % 2 == 1 && model.spatial_kernel > 0, "model.spatial_kernel must be odd");
  need(model.temporal_kernel % 2 == 1 && model.temporal_kernel > 0, "model.temporal_kernel must be odd");
  need(data.synth.image_size % backbone().total_stride() == 0,
       "data.image_size must be divisible by the backbone stride");
  need(!model.anchor_scales.empty() && !model.anchor_ratios.empty(), "model anchors must be non-empty");
  for (double s : model.anchor_scales) need(s > 0, "model.anchor_scales must be positive");
  for (double r : model.anchor_ratios) need(r > 0, "model.anchor_ratios must be positive");
  need(model.human_width > 0, "model.human_width must be positive");
  need(model.window_radius >= 0, "model.window_radius must be >= 0");
  need(model.dropout >= 0.0 && model.dropout < 1.0, "model.dropout must lie in [0, 1)");
  need(tpn.nms_iou > 0.0 && tpn.nms_iou <= 1.0, "tpn.nms_iou must lie in (0, 1]");
  need(tpn.proposal_cap > 0, "tpn.proposal_cap must be positive");
  need(tpn.lambda >= 0.0, "tpn.lambda must be >= 0");
  need(tpn.minibatch > 0, "tpn.minibatch must be positive");
  need(tpn.positive_fraction >= 0.0 && tpn.positive_fraction <= 1.0, "tpn.positive_fraction must lie in [0, 1]");
  need(train.epochs >= 0 && train.tpn_pretrain_epochs >= 0, "train epochs must be >= 0");
  need(train.base_lr > 0 && train.warmup_start_lr >= 0 && train.warmup_epochs >= 0, "train lr settings invalid");
  need(train.momentum >= 0 && train.momentum < 1, "train.momentum must lie in [0, 1)");
  need(train.weight_decay >= 0, "train.weight_decay must be >= 0");
  need(train.relation_proposals > 0, "train.relation_proposals must be positive");
  need(train.foreground_iou > 0 && train.foreground_iou <= 1, "train.foreground_iou must lie in (0, 1]");
  need(eval.iou_threshold > 0 && eval.iou_threshold < 1, "eval.iou_threshold must lie in (0, 1)");
  need(eval.link_iou_weight >= 0, "eval.link_iou_weight must be >= 0");
  need(eval.neighbors_k > 0, "eval.neighbors_k must be positive");
}

json config_to_json(const RunConfig& c) {
  const SynthConfig& s = c.data.synth;
  json doc;
  doc["data"] = {{"clip_length", c.data.clip_length},
                 {"clip_stride", c.data.clip_stride},
                 {"num_videos", s.num_videos},
                 {"frames_per_video", s.frames_per_video},
                 {"image_size", s.image_size},
                 {"num_classes", s.num_classes},
                 {"actors_min", s.actors_min},
                 {"actors_max", s.actors_max},
                 {"seed", s.seed},
                 {"velocity_max", s.velocity_max},
                 {"size_min", s.size_min},
                 {"size_max", s.size_max},
                 {"noise", s.noise},
                 {"context_size", s.context_size},
                 {"context_visibility", s.context_visibility},
                 {"visibility_block", s.visibility_block},
                 {"actor_cue", s.actor_cue},
                 {"partial_presence", s.partial_presence},
                 {"balanced_labels", s.balanced_labels}};
  doc["model"] = {{"channels", c.model.channels},
                  {"spatial_kernel", c.model.spatial_kernel},
                  {"temporal_kernel", c.model.temporal_kernel},
                  {"anchor_scales", c.model.anchor_scales},
                  {"anchor_ratios", c.model.anchor_ratios},
                  {"human_width", c.model.human_width},
                  {"feature_normalize", c.model.feature_normalize},
                  {"window_radius", c.model.window_radius},
                  {"gamma", c.model.gamma},
                  {"dropout", c.model.dropout},
                  {"label_mode", c.model.label_mode == LabelMode::kSingleLabel ? "single" : "multi"},
                  {"relation", relation_name(c.model.relation)}};
  doc["tpn"] = {{"nms_iou", c.tpn.nms_iou},
                {"proposal_cap", c.tpn.proposal_cap},
                {"lambda", c.tpn.lambda},
                {"minibatch", c.tpn.minibatch},
                {"positive_fraction", c.tpn.positive_fraction}};
  doc["train"] = {{"epochs", c.train.epochs},
                  {"base_lr", c.train.base_lr},
                  {"warmup_start_lr", c.train.warmup_start_lr},
                  {"warmup_epochs", c.train.warmup_epochs},
                  {"momentum", c.train.momentum},
                  {"weight_decay", c.train.weight_decay},
                  {"tpn_pretrain_epochs", c.train.tpn_pretrain_epochs},
                  {"mode", c.train.mode == TrainingMode::kJoint ? "joint" : "staged"},
                  {"seed", c.train.seed},
                  {"relation_proposals", c.train.relation_proposals},
                  {"foreground_iou", c.train.foreground_iou}};
  doc["eval"] = {{"iou_threshold", c.eval.iou_threshold},
                 {"mode", c.eval.mode == EvalMode::kVideo ? "video" : "frame"},
                 {"link_iou_weight", c.eval.link_iou_weight},
                 {"neighbors_k", c.eval.neighbors_k}};
  doc["paths"] = {{"dataset", c.paths.dataset}, {"checkpoint", c.paths.checkpoint}, {"output", c.paths.output}};
  return doc;
}

RunConfig config_from_json(const json& doc) {
  const json reference = config_to_json(RunConfig{});
  std::vector<std::string> known, given;
  leaves(reference, "", known);
  leaves(doc, "", given);
  const std::set<std::string> known_set(known.begin(), known.end());
  for (const auto& key : given) {
    if (!known_set.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  json full = reference;
  full.merge_patch(doc);

  RunConfig c;
  SynthConfig& s = c.data.synth;
  const json& d = full["data"];
  read(d, "data", "clip_length", c.data.clip_length);
  read(d, "data", "clip_stride", c.data.clip_stride);
  read(d, "data", "num_videos", s.num_videos);
  read(d, "data", "frames_per_video", s.frames_per_video);
  read(d, "data", "image_size", s.image_size);
  read(d, "data", "num_classes", s.num_classes);
  read(d, "data", "actors_min", s.actors_min);
  read(d, "data", "actors_max", s.actors_max);
  read(d, "data", "seed", s.seed);
  read(d, "data", "velocity_max", s.velocity_max);
  read(d, "data", "size_min", s.size_min);
  read(d, "data", "size_max", s.size_max);
  read(d, "data", "noise", s.noise);
  read(d, "data", "context_size", s.context_size);
  read(d, "data", "context_visibility", s.context_visibility);
  read(d, "data", "visibility_block", s.visibility_block);
  read(d, "data", "actor_cue", s.actor_cue);
  read(d, "data", "partial_presence", s.partial_presence);
  read(d, "data", "balanced_labels", s.balanced_labels);

  const json& m = full["model"];
  read(m, "model", "channels", c.model.channels);
  read(m, "model", "spatial_kernel", c.model.spatial_kernel);
  read(m, "model", "temporal_kernel", c.model.temporal_kernel);
  read(m, "model", "anchor_scales", c.model.anchor_scales);
  read(m, "model", "anchor_ratios", c.model.anchor_ratios);
  read(m, "model", "human_width", c.model.human_width);
  read(m, "model", "feature_normalize", c.model.feature_normalize);
  read(m, "model", "window_radius", c.model.window_radius);
  read(m, "model", "gamma", c.model.gamma);
  read(m, "model", "dropout", c.model.dropout);
  std::string label_mode, relation;
  read(m, "model", "label_mode", label_mode);
  if (label_mode != "single" && label_mode != "multi") {
    throw ConfigError("model.label_mode: expected single or multi, got '" + label_mode + "'");
  }
  c.model.label_mode = label_mode == "single" ? LabelMode::kSingleLabel : LabelMode::kMultiLabel;
  read(m, "model", "relation", relation);
  c.model.relation = parse_relation(relation);

  const json& t = full["tpn"];
  read(t, "tpn", "nms_iou", c.tpn.nms_iou);
  read(t, "tpn", "proposal_cap", c.tpn.proposal_cap);
  read(t, "tpn", "lambda", c.tpn.lambda);
  read(t, "tpn", "minibatch", c.tpn.minibatch);
  read(t, "tpn", "positive_fraction", c.tpn.positive_fraction);

  const json& tr = full["train"];
  read(tr, "train", "epochs", c.train.epochs);
  read(tr, "train", "base_lr", c.train.base_lr);
  read(tr, "train", "warmup_start_lr", c.train.warmup_start_lr);
  read(tr, "train", "warmup_epochs", c.train.warmup_epochs);
  read(tr, "train", "momentum", c.train.momentum);
  read(tr, "train", "weight_decay", c.train.weight_decay);
  read(tr, "train", "tpn_pretrain_epochs", c.train.tpn_pretrain_epochs);
  std::string mode;
  read(tr, "train", "mode", mode);
  if (mode != "joint" && mode != "staged") throw ConfigError("train.mode: expected joint or staged, got '" + mode + "'");
  c.train.mode = mode == "joint" ? TrainingMode::kJoint : TrainingMode::kStaged;
  read(tr, "train", "seed", c.train.seed);
  read(tr, "train", "relation_proposals", c.train.relation_proposals);
  read(tr, "train", "foreground_iou", c.train.foreground_iou);

  const json& e = full["eval"];
  read(e, "eval", "iou_threshold", c.eval.iou_threshold);
  std::string emode;
  read(e, "eval", "mode", emode);
  if (emode != "video" && emode != "frame") throw ConfigError("eval.mode: expected video or frame, got '" + emode + "'");
  c.eval.mode = emode == "video" ? EvalMode::kVideo : EvalMode::kFrame;
  read(e, "eval", "link_iou_weight", c.eval.link_iou_weight);
  read(e, "eval", "neighbors_k", c.eval.neighbors_k);

  const json& p = full["paths"];
  read(p, "paths", "dataset", c.paths.dataset);
  read(p, "paths", "checkpoint", c.paths.checkpoint);
  read(p, "paths", "output", c.paths.output);

  c.validate();
  return c;
}

std::map<std::string, std::string> default_provenance() {
  static const std::set<std::string> published{
      "model.window_radius", "model.gamma",         "model.dropout",     "model.label_mode",
      "tpn.nms_iou",         "tpn.proposal_cap",    "tpn.lambda",        "train.epochs",
      "train.base_lr",       "train.warmup_start_lr", "train.warmup_epochs", "train.momentum",
      "train.weight_decay",  "eval.iou_threshold",  "model.temporal_kernel"};
  std::vector<std::string> keys;
  leaves(config_to_json(RunConfig{}), "", keys);
  std::map<std::string, std::string> out;
  for (const auto& k : keys) out[k] = published.count(k) ? "published" : "desk-scale";
  return out;
}

ConfigResolver::ConfigResolver() : doc_(config_to_json(RunConfig{})), provenance_(default_provenance()) {}

void ConfigResolver::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config " + path + " must be a JSON object");
  merge_json(doc, "file");
}

void ConfigResolver::merge_json(const json& doc, const std::string& tag) {
  std::vector<std::string> keys;
  leaves(doc, "", keys);
  for (const auto& k : keys) {
    if (!provenance_.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  doc_.merge_patch(doc);
  for (const auto& k : keys) provenance_[k] = tag;
}

void ConfigResolver::set(const std::string& key, const std::string& value, const std::string& tag) {
  if (!provenance_.count(key)) throw ConfigError("unknown config key '" + key + "'");
  json v;
  try {
    v = json::parse(value);
  } catch (const json::exception&) {
    v = value;
  }
  json patch = json::object();
  patch[pointer(key)] = v;
  merge_json(patch, tag);
}

RunConfig ConfigResolver::resolve() const { return config_from_json(doc_); }

json ConfigResolver::echo() const {
  json prov = json::object();
  for (const auto& [k, v] : provenance_) prov[k] = v;
  return json{{"config", config_to_json(resolve())}, {"provenance", prov}};
}

}  // namespace lstr
