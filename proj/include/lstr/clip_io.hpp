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

// On-disk dataset layout.
//
// A clip is stored as `<stem>.clipbin`:
//   bytes 0..7    magic "LSTRCLP1"
//   bytes 8..23   dims T, H, W, C as little-endian uint32
//   then          T*H*W*C little-endian float32 values, row-major
// with annotations in `<stem>.json`:
//   {"video_id": str, "clip_index": int, "first_frame": int,
//    "tubelets": [{"class": int, "boxes": [[x1, y1, x2, y2], ...]}]}
// "first_frame" is optional and defaults to clip_index * T.
//
// A dataset directory holds `manifest.txt` (clip paths relative to the
// directory, one per line), `gt.txt` (ground-truth records with track ids)
// and `dataset.json` (the generator settings).

#include <filesystem>
#include <string>
#include <vector>

#include "lstr/records.hpp"
#include "lstr/synth.hpp"
#include "lstr/tensor.hpp"

namespace lstr {

// Throws FormatError on bad magic, truncated or oversized payload, or dims
// whose product overflows.
void save_clip(const std::filesystem::path& path, const Tensor& frames);
Tensor load_clip(const std::filesystem::path& path);

void save_annotation(const std::filesystem::path& path, const Clip& clip);
// Fills every field except `frames`.
Clip load_annotation(const std::filesystem::path& path, int clip_length);

void write_manifest(const std::filesystem::path& path, const std::vector<std::string>& entries);
std::vector<std::string> read_manifest(const std::filesystem::path& path);

// Writes text atomically: the content goes to a sibling temp file that is
// then renamed over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct VideoClips {
  std::string id;
  std::vector<Clip> clips;  // ascending clip_index
};

struct Dataset {
  std::vector<VideoClips> videos;
  std::vector<DetectionRecord> ground_truth;
};

// One record per actor per frame; track_id is the actor index.
std::vector<DetectionRecord> ground_truth_records(const SyntheticVideo& video, int clip_length);

void write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticVideo>& videos,
                   int clip_length, int stride, const std::string& settings_json);
Dataset load_dataset(const std::filesystem::path& dir, int clip_length);

// In-memory equivalent of write_dataset followed by load_dataset, except
// frames keep double precision.
Dataset make_dataset(const std::vector<SyntheticVideo>& videos, int clip_length, int stride);

}  // namespace lstr
