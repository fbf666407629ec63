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

// Command-line entry point: gen, train, detect, eval, dump-attn, neighbors.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lstr/checkpoint.hpp"
#include "lstr/clip_io.hpp"
#include "lstr/config.hpp"
#include "lstr/error.hpp"
#include "lstr/model.hpp"
#include "lstr/pipeline.hpp"
#include "lstr/records.hpp"
#include "lstr/synth.hpp"

namespace fs = std::filesystem;
using namespace lstr;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dataset;
  std::string checkpoint;
  std::vector<std::string> sets;
  bool print_config = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "Seed (data.seed for gen, train.seed otherwise)");
  cmd->add_option("--out", o.out, "Output path");
  cmd->add_option("--set", o.sets, "Override a config value: key=value (dotted key)");
  cmd->add_flag("--print-config", o.print_config, "Print the resolved configuration and exit");
}

// Accepts a plain configuration or a resolved-config echo.
nlohmann::json config_section(const nlohmann::json& doc) {
  if (doc.is_object() && doc.contains("config") && doc.contains("provenance")) return doc["config"];
  return doc;
}

ConfigResolver resolve(const CommonOptions& o, bool seed_is_data, const std::string& checkpoint_meta = {}) {
  ConfigResolver r;
  if (!checkpoint_meta.empty()) {
    try {
      r.merge_json(config_section(nlohmann::json::parse(checkpoint_meta)), "file");
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint metadata is not a configuration: ") + e.what());
    }
  }
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot open config file " + o.config);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed config " + o.config + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config " + o.config + " must be a JSON object");
    r.merge_json(config_section(doc), "file");
  }
  for (const std::string& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    r.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed) r.set(seed_is_data ? "data.seed" : "train.seed", std::to_string(*o.seed));
  if (!o.dataset.empty()) r.set("paths.dataset", nlohmann::json(o.dataset).dump());
  if (!o.checkpoint.empty()) r.set("paths.checkpoint", nlohmann::json(o.checkpoint).dump());
  if (!o.out.empty()) r.set("paths.output", nlohmann::json(o.out).dump());
  return r;
}

// Echoes the resolved configuration before any work. Returns false when the
// command should stop after printing.
bool announce(const ConfigResolver& r, const CommonOptions& o) {
  const std::string echo = r.echo().dump(2);
  if (o.print_config) {
    std::cout << echo << "\n";
    return false;
  }
  std::cerr << "resolved config:\n" << echo << "\n";
  return true;
}

std::string require_path(const std::string& value, const char* what) {
  if (value.empty()) throw ConfigError(std::string("missing ") + what);
  return value;
}

std::string checkpoint_metadata(const std::string& path) {
  if (path.empty()) return {};
  // Metadata is read without binding parameters.
  return load_checkpoint(path, {}, true);
}

Dataset open_dataset(const RunConfig& cfg) {
  const std::string dir = require_path(cfg.paths.dataset, "dataset (--dataset or paths.dataset)");
  if (!fs::exists(fs::path(dir) / "manifest.txt")) throw FormatError("no manifest.txt in " + dir);
  return load_dataset(dir, cfg.data.clip_length);
}

LstrModel open_model(const RunConfig& cfg) {
  LstrModel model(cfg, cfg.train.seed);
  load_checkpoint(require_path(cfg.paths.checkpoint, "checkpoint (--checkpoint)"), model.parameters());
  return model;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long short-term relation action detector"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, det_o, eval_o, attn_o, nb_o;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_common(gen, gen_o);

  auto* train = app.add_subcommand("train", "Train the detector");
  add_common(train, train_o);
  train->add_option("--dataset", train_o.dataset, "Dataset directory");
  std::string init;
  train->add_option("--init", init, "Checkpoint to start from (parameters matched by name)");

  auto* det = app.add_subcommand("detect", "Run detection and write records");
  add_common(det, det_o);
  det->add_option("--dataset", det_o.dataset, "Dataset directory");
  det->add_option("--checkpoint", det_o.checkpoint, "Model checkpoint");

  auto* ev = app.add_subcommand("eval", "Score detection records against ground truth");
  add_common(ev, eval_o);
  std::string detections, gt;
  ev->add_option("--detections", detections, "Detection records")->required();
  ev->add_option("--gt", gt, "Ground-truth records (default <dataset>/gt.txt)");
  ev->add_option("--dataset", eval_o.dataset, "Dataset directory");

  int video_clip = 0, tubelet = 0, k = 0;
  std::string video;
  auto* attn = app.add_subcommand("dump-attn", "Export one tubelet's attention maps");
  add_common(attn, attn_o);
  attn->add_option("--dataset", attn_o.dataset, "Dataset directory");
  attn->add_option("--checkpoint", attn_o.checkpoint, "Model checkpoint");
  attn->add_option("--video", video, "Video id")->required();
  attn->add_option("--clip", video_clip, "Clip index")->required();
  attn->add_option("--tubelet", tubelet, "Proposal index within the clip")->required();

  auto* nb = app.add_subcommand("neighbors", "Export top-k relation-graph neighbors");
  add_common(nb, nb_o);
  nb->add_option("--dataset", nb_o.dataset, "Dataset directory");
  nb->add_option("--checkpoint", nb_o.checkpoint, "Model checkpoint");
  nb->add_option("--video", video, "Video id")->required();
  nb->add_option("--clip", video_clip, "Clip index")->required();
  nb->add_option("--tubelet", tubelet, "Proposal index within the clip")->required();
  nb->add_option("--k", k, "Neighbor count (default eval.neighbors_k)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const ConfigResolver r = resolve(gen_o, true);
      if (!announce(r, gen_o)) return 0;
      const RunConfig cfg = r.resolve();
      const std::string out = require_path(cfg.paths.output, "output directory (--out)");
      const auto videos = generate(cfg.data.synth);
      write_dataset(out, videos, cfg.data.clip_length, cfg.data.clip_stride, r.echo().dump(2) + "\n");
      std::cout << "wrote " << videos.size() << " videos to " << out << "\n";
    } else if (*train) {
      const ConfigResolver r = resolve(train_o, false);
      if (!announce(r, train_o)) return 0;
      const RunConfig cfg = r.resolve();
      const fs::path out = require_path(cfg.paths.output, "output directory (--out)");
      const Dataset data = open_dataset(cfg);
      LstrModel model(cfg, cfg.train.seed);
      if (!init.empty()) load_checkpoint(init, model.parameters(), true);
      const auto start = std::chrono::steady_clock::now();
      const auto progress = [&](const EpochLog& e) {
        std::fprintf(stderr, "[%7.1fs] %-8s epoch %3d  tpn %.5f  cls %.5f  lr %.6f\n", seconds_since(start),
                     e.stage.c_str(), e.epoch, e.tpn_loss, e.classification, e.lr);
      };
      std::vector<EpochLog> log = pretrain_tpn(model, data, progress);
      const auto rel = train_relations(model, data, progress);
      log.insert(log.end(), rel.begin(), rel.end());
      const std::string echo = r.echo().dump(2) + "\n";
      write_loss_csv(out / "loss.csv", log);
      save_checkpoint(out / "model.ckpt", model.parameters(), echo);
      write_file_atomic(out / "config.json", echo);
      std::cout << "trained in " << seconds_since(start) << " s; checkpoint " << (out / "model.ckpt").string()
                << "\n";
    } else if (*det) {
      const ConfigResolver r = resolve(det_o, false, checkpoint_metadata(det_o.checkpoint));
      if (!announce(r, det_o)) return 0;
      const RunConfig cfg = r.resolve();
      const LstrModel model = open_model(cfg);
      const Dataset data = open_dataset(cfg);
      const auto records = detect(model, data);
      std::ostringstream ss;
      write_records(ss, records);
      const std::string out = require_path(cfg.paths.output, "output file (--out)");
      write_file_atomic(out, ss.str());
      std::cout << "wrote " << records.size() << " records to " << out << "\n";
    } else if (*ev) {
      const ConfigResolver r = resolve(eval_o, false);
      if (!announce(r, eval_o)) return 0;
      const RunConfig cfg = r.resolve();
      std::string gt_path = gt;
      if (gt_path.empty()) gt_path = (fs::path(require_path(cfg.paths.dataset, "--gt or --dataset")) / "gt.txt").string();
      const auto dets = read_records(fs::path(detections));
      const auto gts = read_records(fs::path(gt_path));
      const ApResult result = evaluate_records(dets, gts, static_cast<std::size_t>(cfg.data.synth.num_classes),
                                               cfg.evaluation());
      std::ostringstream csv;
      write_ap_csv(csv, result);
      if (!cfg.paths.output.empty()) write_file_atomic(cfg.paths.output, csv.str());
      std::cout << csv.str();
      std::printf("%s-mAP@%.2f %.6f\n", cfg.eval.mode == EvalMode::kVideo ? "video" : "frame",
                  cfg.eval.iou_threshold, result.mean);
    } else if (*attn) {
      const ConfigResolver r = resolve(attn_o, false, checkpoint_metadata(attn_o.checkpoint));
      if (!announce(r, attn_o)) return 0;
      const RunConfig cfg = r.resolve();
      const LstrModel model = open_model(cfg);
      const Dataset data = open_dataset(cfg);
      const auto files = dump_attention(model, data, video, video_clip, tubelet,
                                        require_path(cfg.paths.output, "output directory (--out)"));
      std::cout << "wrote " << files.size() << " files\n";
    } else if (*nb) {
      const ConfigResolver r = resolve(nb_o, false, checkpoint_metadata(nb_o.checkpoint));
      if (!announce(r, nb_o)) return 0;
      const RunConfig cfg = r.resolve();
      const LstrModel model = open_model(cfg);
      const Dataset data = open_dataset(cfg);
      const auto neighbors =
          relation_neighbors(model, data, video, video_clip, tubelet, k > 0 ? k : cfg.eval.neighbors_k);
      write_neighbors_csv(require_path(cfg.paths.output, "output file (--out)"), neighbors);
      std::cout << "wrote " << neighbors.size() << " neighbors\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
