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

#include "lstr/clip_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "lstr/error.hpp"

namespace lstr {
namespace {

constexpr std::array<char, 8> kMagic{'L', 'S', 'T', 'R', 'C', 'L', 'P', '1'};
constexpr std::size_t kHeaderBytes = 8 + 4 * 4;
// Upper bound on stored elements (16 GiB of float32).
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json box_json(const Box& b) { return nlohmann::json::array({b.x1, b.y1, b.x2, b.y2}); }

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_clip(const std::filesystem::path& path, const Tensor& frames) {
  if (frames.rank() != 4) throw DimensionError("save_clip: expected T x H x W x C, got " + shape_string(frames.shape()));
  std::string out(kMagic.begin(), kMagic.end());
  for (std::size_t d : frames.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw FormatError("save_clip: dim overflow");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + 4 * frames.size());
  for (double v : frames.values()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    put_u32(out, bits);
  }
  write_file_atomic(path, out);
}

Tensor load_clip(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kHeaderBytes) throw FormatError(path.string() + ": truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError(path.string() + ": bad magic");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  Shape shape;
  std::uint64_t count = 1;
  for (int i = 0; i < 4; ++i) {
    const std::uint32_t d = get_u32(p + 8 + 4 * i);
    if (d == 0) throw FormatError(path.string() + ": zero dimension");
    count *= d;
    if (count > kMaxElements) throw FormatError(path.string() + ": dim overflow");
    shape.push_back(d);
  }
  const std::uint64_t payload = bytes.size() - kHeaderBytes;
  if (payload != 4 * count) {
    throw FormatError(path.string() + ": truncated payload (declared " + std::to_string(4 * count) +
                      " bytes, found " + std::to_string(payload) + ")");
  }
  std::vector<double> values(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<double>(std::bit_cast<float>(get_u32(p + kHeaderBytes + 4 * i)));
  }
  return Tensor(std::move(shape), std::move(values));
}

void save_annotation(const std::filesystem::path& path, const Clip& clip) {
  nlohmann::json doc;
  doc["video_id"] = clip.video_id;
  doc["clip_index"] = clip.clip_index;
  doc["first_frame"] = clip.first_frame;
  doc["tubelets"] = nlohmann::json::array();
  for (std::size_t i = 0; i < clip.gt.size(); ++i) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const Box& b : clip.gt[i].boxes) boxes.push_back(box_json(b));
    doc["tubelets"].push_back({{"class", clip.gt_labels.at(i)}, {"boxes", boxes}});
  }
  write_file_atomic(path, doc.dump(1) + "\n");
}

Clip load_annotation(const std::filesystem::path& path, int clip_length) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
    Clip clip;
    clip.video_id = doc.at("video_id").get<std::string>();
    clip.clip_index = doc.at("clip_index").get<int>();
    clip.first_frame = doc.contains("first_frame") ? doc["first_frame"].get<int>() : clip.clip_index * clip_length;
    for (const auto& t : doc.at("tubelets")) {
      Tubelet tube;
      tube.clip_index = clip.clip_index;
      tube.actionness = 1.0;
      for (const auto& b : t.at("boxes")) {
        if (b.size() != 4) throw FormatError(path.string() + ": box needs 4 coordinates");
        tube.boxes.push_back(Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
      }
      if (static_cast<int>(tube.boxes.size()) != clip_length) {
        throw FormatError(path.string() + ": tubelet length " + std::to_string(tube.boxes.size()) +
                          " != clip length " + std::to_string(clip_length));
      }
      clip.gt.push_back(std::move(tube));
      clip.gt_labels.push_back(t.at("class").get<int>());
    }
    return clip;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const std::vector<std::string>& entries) {
  std::string text;
  for (const auto& e : entries) text += e + "\n";
  write_file_atomic(path, text);
}

std::vector<std::string> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) entries.push_back(line);
  }
  return entries;
}

std::vector<DetectionRecord> ground_truth_records(const SyntheticVideo& video, int clip_length) {
  std::vector<DetectionRecord> out;
  for (std::size_t a = 0; a < video.actors.size(); ++a) {
    const ActorTrack& actor = video.actors[a];
    for (std::size_t f = 0; f < actor.boxes.size(); ++f) {
      if (!actor.boxes[f]) continue;
      DetectionRecord r;
      r.video_id = video.id;
      r.clip_index = static_cast<int>(f) / clip_length;
      r.frame_index = static_cast<int>(f);
      r.label = actor.label;
      r.score = 1.0;
      r.box = *actor.boxes[f];
      r.track_id = static_cast<int>(a);
      out.push_back(r);
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticVideo>& videos,
                   int clip_length, int stride, const std::string& settings_json) {
  std::filesystem::create_directories(dir / "clips");
  std::vector<std::string> manifest;
  std::vector<DetectionRecord> gt;
  for (const SyntheticVideo& video : videos) {
    for (const Clip& clip : split_clips(video, clip_length, stride)) {
      const std::string stem = "clips/" + video.id + "_c" + std::to_string(clip.clip_index);
      save_clip(dir / (stem + ".clipbin"), clip.frames);
      save_annotation(dir / (stem + ".json"), clip);
      manifest.push_back(stem + ".clipbin");
    }
    const auto records = ground_truth_records(video, clip_length);
    gt.insert(gt.end(), records.begin(), records.end());
  }
  write_manifest(dir / "manifest.txt", manifest);
  std::ostringstream ss;
  write_records(ss, gt);
  write_file_atomic(dir / "gt.txt", ss.str());
  write_file_atomic(dir / "dataset.json", settings_json);
}

Dataset load_dataset(const std::filesystem::path& dir, int clip_length) {
  Dataset ds;
  std::map<std::string, std::size_t> index;
  for (const std::string& entry : read_manifest(dir / "manifest.txt")) {
    const std::filesystem::path clip_path = dir / entry;
    std::filesystem::path ann_path = clip_path;
    ann_path.replace_extension(".json");
    Clip clip = load_annotation(ann_path, clip_length);
    clip.frames = load_clip(clip_path);
    if (static_cast<int>(clip.frames.dim(0)) != clip_length) {
      throw FormatError(clip_path.string() + ": clip has " + std::to_string(clip.frames.dim(0)) +
                        " frames, configured clip length is " + std::to_string(clip_length));
    }
    auto [it, inserted] = index.try_emplace(clip.video_id, ds.videos.size());
    if (inserted) ds.videos.push_back(VideoClips{clip.video_id, {}});
    ds.videos[it->second].clips.push_back(std::move(clip));
  }
  for (VideoClips& v : ds.videos) {
    std::sort(v.clips.begin(), v.clips.end(),
              [](const Clip& a, const Clip& b) { return a.clip_index < b.clip_index; });
  }
  const auto gt_path = dir / "gt.txt";
  if (std::filesystem::exists(gt_path)) ds.ground_truth = read_records(gt_path);
  return ds;
}

Dataset make_dataset(const std::vector<SyntheticVideo>& videos, int clip_length, int stride) {
  Dataset ds;
  for (const SyntheticVideo& video : videos) {
    ds.videos.push_back(VideoClips{video.id, split_clips(video, clip_length, stride)});
    const auto records = ground_truth_records(video, clip_length);
    ds.ground_truth.insert(ds.ground_truth.end(), records.begin(), records.end());
  }
  return ds;
}

}  // namespace lstr
