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


#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "lstr/checkpoint.hpp"
#include "lstr/clip_io.hpp"
#include "lstr/config.hpp"
#include "lstr/error.hpp"
#include "lstr/model.hpp"
#include "lstr/pipeline.hpp"
#include "lstr/synth.hpp"

namespace lstr {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lstr_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SynthConfig small_synth() {
  SynthConfig s;
  s.num_videos = 3;
  s.image_size = 32;
  s.size_min = 8;
  s.size_max = 12;
  s.context_size = 8;
  return s;
}

TEST(Synth, DeterministicPerSeed) {
  const SynthConfig s = small_synth();
  const auto a = generate(s), b = generate(s);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].frames.values(), b[i].frames.values());
    EXPECT_EQ(a[i].actors[0].label, b[i].actors[0].label);
  }
  SynthConfig other = s;
  other.seed = 2;
  EXPECT_NE(generate(other)[0].frames.values(), a[0].frames.values());
}

TEST(Synth, BoundsHoldAcrossSeeds) {
  SynthConfig s = small_synth();
  s.num_videos = 1;
  s.actors_max = 2;
  s.partial_presence = 0.3;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    s.seed = seed;
    const SyntheticVideo v = generate_video(s, static_cast<int>(seed % 7));
    ASSERT_EQ(v.frames.shape(), (Shape{16, 32, 32, 3}));
    for (const double x : v.frames.values()) ASSERT_TRUE(x >= 0.0 && x <= 1.0);
    ASSERT_GE(v.actors.size(), 1u);
    ASSERT_LE(v.actors.size(), 2u);
    for (const ActorTrack& a : v.actors) {
      ASSERT_TRUE(a.label >= 0 && a.label < 3);
      ASSERT_EQ(a.boxes.size(), 16u);
      for (const auto& b : a.boxes) {
        if (!b) continue;
        ASSERT_TRUE(b->x1 >= 0 && b->y1 >= 0 && b->x2 <= 32 && b->y2 <= 32) << "seed " << seed;
        ASSERT_GT(b->area(), 0.0);
      }
    }
  }
}

TEST(Synth, SingleClassAndBalancedLabels) {
  SynthConfig s = small_synth();
  s.num_classes = 1;
  for (const auto& v : generate(s)) EXPECT_EQ(v.actors[0].label, 0);
  s.num_classes = 3;
  s.num_videos = 9;
  std::vector<int> counts(3, 0);
  for (const auto& v : generate(s)) ++counts[static_cast<std::size_t>(v.actors[0].label)];
  EXPECT_EQ(counts, (std::vector<int>{3, 3, 3}));
}

TEST(Synth, ValidationRejectsBadSettings) {
  SynthConfig s = small_synth();
  EXPECT_NO_THROW(s.validate(8));
  EXPECT_THROW(s.validate(5), ConfigError);
  s.actor_cue = 1.5;
  EXPECT_THROW(s.validate(8), ConfigError);
  s = small_synth();
  s.actors_min = 2;
  s.actors_max = 1;
  EXPECT_THROW(s.validate(8), ConfigError);
}

TEST(SplitClips, TwoClipsWithFullTubelets) {
  const SyntheticVideo v = generate_video(small_synth(), 0);
  const auto clips = split_clips(v, 8, 8);
  ASSERT_EQ(clips.size(), 2u);
  EXPECT_EQ(clips[1].first_frame, 8);
  ASSERT_EQ(clips[1].gt.size(), 1u);
  EXPECT_EQ(clips[1].gt[0].boxes[0], *v.actors[0].boxes[8]);
  EXPECT_EQ(clips[1].gt_labels[0], v.actors[0].label);
  // Frame 3 of clip 1 is video frame 11.
  const std::size_t frame = 32 * 32 * 3;
  for (std::size_t i = 0; i < frame; ++i) ASSERT_EQ(clips[1].frames[3 * frame + i], v.frames[11 * frame + i]);
  EXPECT_THROW(split_clips(v, 0, 8), std::invalid_argument);
}

TEST(SplitClips, PartiallyPresentActorIsOmitted) {
  SyntheticVideo v = generate_video(small_synth(), 0);
  v.actors[0].boxes[12].reset();
  const auto clips = split_clips(v, 8, 8);
  EXPECT_EQ(clips[0].gt.size(), 1u);
  EXPECT_TRUE(clips[1].gt.empty());
}

TEST(ClipIo, RoundTripAtFloatPrecision) {
  const fs::path dir = scratch("clip");
  Tensor t({2, 3, 4, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.01 * static_cast<double>(i);
  save_clip(dir / "a.clipbin", t);
  const Tensor back = load_clip(dir / "a.clipbin");
  ASSERT_EQ(back.shape(), t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(back[i], static_cast<double>(static_cast<float>(t[i])));
  EXPECT_EQ(fs::file_size(dir / "a.clipbin"), 24u + 4u * t.size());
}

TEST(ClipIo, CorruptFilesAreRejected) {
  const fs::path dir = scratch("clip_bad");
  save_clip(dir / "a.clipbin", Tensor({1, 2, 2, 3}));
  std::string bytes;
  {
    std::ifstream in(dir / "a.clipbin", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream(dir / "b.clipbin", std::ios::binary) << b;
    return dir / "b.clipbin";
  };
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(load_clip(write(magic)), FormatError);
  EXPECT_THROW(load_clip(write(bytes.substr(0, bytes.size() - 1))), FormatError);
  EXPECT_THROW(load_clip(write(bytes.substr(0, 10))), FormatError);
  EXPECT_THROW(load_clip(write(bytes + "xxxx")), FormatError);
  EXPECT_THROW(load_clip(dir / "missing.clipbin"), FormatError);
}

TEST(ClipIo, AnnotationRoundTrip) {
  const fs::path dir = scratch("ann");
  const auto clips = split_clips(generate_video(small_synth(), 1), 8, 8);
  save_annotation(dir / "c.json", clips[1]);
  const Clip back = load_annotation(dir / "c.json", 8);
  EXPECT_EQ(back.video_id, clips[1].video_id);
  EXPECT_EQ(back.clip_index, 1);
  EXPECT_EQ(back.first_frame, 8);
  ASSERT_EQ(back.gt.size(), clips[1].gt.size());
  EXPECT_EQ(back.gt_labels, clips[1].gt_labels);
  for (std::size_t t = 0; t < 8; ++t) EXPECT_EQ(back.gt[0].boxes[t], clips[1].gt[0].boxes[t]);
  EXPECT_THROW(load_annotation(dir / "c.json", 4), FormatError);
}

TEST(Dataset, DiskAndMemoryAgree) {
  const fs::path dir = scratch("dataset");
  const auto videos = generate(small_synth());
  write_dataset(dir, videos, 8, 8, "{}\n");
  const Dataset disk = load_dataset(dir, 8);
  const Dataset mem = make_dataset(videos, 8, 8);
  ASSERT_EQ(disk.videos.size(), mem.videos.size());
  for (std::size_t v = 0; v < mem.videos.size(); ++v) {
    ASSERT_EQ(disk.videos[v].clips.size(), 2u);
    for (std::size_t c = 0; c < 2; ++c) {
      const Clip &a = disk.videos[v].clips[c], &b = mem.videos[v].clips[c];
      EXPECT_EQ(a.gt_labels, b.gt_labels);
      for (std::size_t i = 0; i < a.frames.size(); ++i) ASSERT_NEAR(a.frames[i], b.frames[i], 1e-7);
    }
  }
  ASSERT_EQ(disk.ground_truth.size(), mem.ground_truth.size());
  EXPECT_EQ(disk.ground_truth.size(), 3u * 16u);
  EXPECT_EQ(read_manifest(dir / "manifest.txt").size(), 6u);
}

TEST(Config, DefaultsMatchPublishedSettings) {
  const RunConfig c = ConfigResolver().resolve();
  EXPECT_EQ(c.tpn.nms_iou, 0.7);
  EXPECT_EQ(c.tpn.proposal_cap, 300);
  EXPECT_EQ(c.model.window_radius, 4);
  EXPECT_EQ(c.model.gamma, 1.0);
  EXPECT_EQ(c.tpn.lambda, 1.0);
  EXPECT_EQ(c.model.dropout, 0.5);
  EXPECT_EQ(c.train.warmup_start_lr, 0.0001);
  EXPECT_EQ(c.train.base_lr, 0.001);
  EXPECT_EQ(c.train.warmup_epochs, 0.3);
  EXPECT_EQ(c.train.momentum, 0.9);
  EXPECT_EQ(c.train.weight_decay, 0.0001);
  EXPECT_EQ(c.train.epochs, 10);
  const LrSchedule s = c.schedule(c.train.epochs);
  EXPECT_DOUBLE_EQ(s.lr(0.0), 0.0001);
  EXPECT_DOUBLE_EQ(s.lr(0.3), 0.001);
  EXPECT_NEAR(s.lr(0.3 + 9.7 / 2), 0.0005, 1e-15);
  const auto prov = default_provenance();
  for (const char* k : {"tpn.nms_iou", "tpn.proposal_cap", "model.window_radius", "model.gamma", "tpn.lambda",
                        "model.dropout", "train.base_lr", "train.epochs"}) {
    EXPECT_EQ(prov.at(k), "published") << k;
  }
  EXPECT_EQ(prov.at("data.num_videos"), "desk-scale");
}

TEST(Config, LayersAndProvenance) {
  const fs::path dir = scratch("cfg");
  std::ofstream(dir / "c.json") << R"({"train": {"epochs": 3, "seed": 9}, "model": {"relation": "short-term"}})";
  ConfigResolver r;
  r.merge_file((dir / "c.json").string());
  r.set("train.seed", "11");
  const RunConfig c = r.resolve();
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_EQ(c.train.seed, 11u);
  EXPECT_EQ(c.model.relation, RelationMode::kShortTerm);
  EXPECT_EQ(r.provenance().at("train.epochs"), "file");
  EXPECT_EQ(r.provenance().at("train.seed"), "flag");
  EXPECT_EQ(r.provenance().at("tpn.nms_iou"), "published");
  // The echo reproduces the same configuration.
  ConfigResolver again;
  again.merge_json(r.echo()["config"], "file");
  EXPECT_EQ(config_to_json(again.resolve()), config_to_json(c));
}

TEST(Config, ErrorsNameTheKey) {
  ConfigResolver r;
  EXPECT_THROW(r.set("train.epoch", "3"), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"tpn": {"bogus": 1}})")), ConfigError);
  try {
    config_from_json(nlohmann::json::parse(R"({"train": {"epochs": "ten"}})"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("epochs"), std::string::npos);
  }
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"eval": {"iou_threshold": 1.0}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"model": {"relation": "both"}})")), ConfigError);
  EXPECT_THROW(r.merge_file("/nonexistent/config.json"), ConfigError);
}

RunConfig tiny_config() {
  RunConfig c;
  c.data.synth = small_synth();
  c.data.synth.num_videos = 2;
  c.model.channels = {4, 8};
  c.model.human_width = 8;
  c.model.anchor_scales = {8, 12};
  c.model.anchor_ratios = {1};
  c.train.epochs = 1;
  c.train.tpn_pretrain_epochs = 1;
  c.tpn.proposal_cap = 4;
  return c;
}

TEST(Checkpoint, RoundTripAndMismatch) {
  const fs::path dir = scratch("ckpt");
  LstrModel a(tiny_config(), 1), b(tiny_config(), 2);
  save_checkpoint(dir / "m.ckpt", a.parameters(), "meta");
  EXPECT_EQ(load_checkpoint(dir / "m.ckpt", b.parameters()), "meta");
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value.values(), pb[i]->value.values());

  RunConfig wide = tiny_config();
  wide.model.human_width = 6;
  LstrModel c(wide, 1);
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", c.parameters()), FormatError);

  Parameter extra("not.in.file", Tensor({1}));
  ParameterList with_extra = b.parameters();
  with_extra.push_back(&extra);
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", with_extra), FormatError);
  EXPECT_NO_THROW(load_checkpoint(dir / "m.ckpt", with_extra, true));

  std::ofstream(dir / "bad.ckpt") << "LSTRCKP0";
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt", a.parameters()), FormatError);
  const auto size = fs::file_size(dir / "m.ckpt");
  fs::copy_file(dir / "m.ckpt", dir / "short.ckpt");
  fs::resize_file(dir / "short.ckpt", size - 3);
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt", a.parameters()), FormatError);
}

TEST(Model, ParameterNamesAreUnique) {
  LstrModel m(tiny_config(), 1);
  std::set<std::string> names;
  for (const Parameter* p : m.parameters()) EXPECT_TRUE(names.insert(p->name).second) << p->name;
  EXPECT_EQ(m.tpn_parameters().size() + m.relation_parameters().size(), m.parameters().size());
}

TEST(Model, TrainingIsDeterministic) {
  const RunConfig c = tiny_config();
  const Dataset data = make_dataset(generate(c.data.synth), c.data.clip_length, c.data.clip_stride);
  auto run = [&] {
    LstrModel m(c, c.train.seed);
    auto log = pretrain_tpn(m, data);
    const auto rel = train_relations(m, data);
    log.insert(log.end(), rel.begin(), rel.end());
    return std::make_pair(log, detect(m, data));
  };
  const auto [log_a, det_a] = run();
  const auto [log_b, det_b] = run();
  ASSERT_EQ(log_a.size(), 2u);
  for (std::size_t i = 0; i < log_a.size(); ++i) {
    EXPECT_EQ(log_a[i].tpn_loss, log_b[i].tpn_loss);
    EXPECT_EQ(log_a[i].classification, log_b[i].classification);
    EXPECT_TRUE(std::isfinite(log_a[i].tpn_loss));
  }
  ASSERT_EQ(det_a.size(), det_b.size());
  for (std::size_t i = 0; i < det_a.size(); ++i) {
    EXPECT_EQ(det_a[i].score, det_b[i].score);
    EXPECT_EQ(det_a[i].box, det_b[i].box);
  }
}

TEST(Model, EveryRelationModeRuns) {
  for (const RelationMode mode : {RelationMode::kTpnOnly, RelationMode::kShortTerm, RelationMode::kFull}) {
    RunConfig c = tiny_config();
    c.model.relation = mode;
    const Dataset data = make_dataset(generate(c.data.synth), c.data.clip_length, c.data.clip_stride);
    LstrModel m(c, 1);
    const VideoAnalysis a = m.analyze(data.videos[0], 3);
    ASSERT_EQ(a.clips.size(), 2u);
    ASSERT_EQ(a.windows.size(), 2u);
    EXPECT_EQ(a.windows[0].size() == 0, mode != RelationMode::kFull);
    for (const ClipAnalysis& clip : a.clips) {
      EXPECT_LE(clip.tubelets.size(), 3u);
      for (const Tubelet& t : clip.tubelets) {
        ASSERT_EQ(t.class_scores.size(), 3u);
        double sum = 0;
        for (const double s : t.class_scores) sum += s;
        // Scores are actionness times a class distribution.
        EXPECT_NEAR(sum, t.actionness, 1e-12);
      }
    }
  }
}

}  // namespace
}  // namespace lstr
