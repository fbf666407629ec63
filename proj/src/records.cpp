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

#include "lstr/records.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "lstr/error.hpp"

namespace lstr {

std::vector<DetectionRecord> read_records(std::istream& in) {
  std::vector<DetectionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    DetectionRecord r;
    if (!(ss >> r.video_id >> r.clip_index >> r.frame_index >> r.label >> r.score >> r.box.x1 >> r.box.y1 >>
          r.box.x2 >> r.box.y2)) {
      throw FormatError("records: malformed line " + std::to_string(lineno) + ": '" + line + "'");
    }
    int track = -1;
    if (ss >> track) r.track_id = track;
    std::string rest;
    if (ss.clear(), ss >> rest) {
      throw FormatError("records: trailing fields on line " + std::to_string(lineno));
    }
    if (!std::isfinite(r.score) || r.label < 0) {
      throw FormatError("records: invalid score or class on line " + std::to_string(lineno));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DetectionRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("records: cannot open " + path.string());
  return read_records(in);
}

void write_records(std::ostream& out, const std::vector<DetectionRecord>& records) {
  char buf[512];
  for (const DetectionRecord& r : records) {
    std::snprintf(buf, sizeof(buf), "%s %d %d %d %.17g %.17g %.17g %.17g %.17g", r.video_id.c_str(),
                  r.clip_index, r.frame_index, r.label, r.score, r.box.x1, r.box.y1, r.box.x2, r.box.y2);
    out << buf;
    if (r.track_id >= 0) out << ' ' << r.track_id;
    out << '\n';
  }
}

std::vector<VideoTube> tubes_from_records(const std::vector<DetectionRecord>& records) {
  using Key = std::tuple<std::string, int, int, double>;
  std::map<Key, std::size_t> index;
  std::vector<VideoTube> tubes;
  for (const DetectionRecord& r : records) {
    const Key key = r.track_id >= 0 ? Key{r.video_id, r.label, r.track_id, 0.0}
                                    : Key{r.video_id, r.label, -1, r.score};
    auto [it, inserted] = index.emplace(key, tubes.size());
    if (inserted) tubes.push_back(VideoTube{r.video_id, r.label, r.score, {}});
    VideoTube& tube = tubes[it->second];
    tube.boxes[r.frame_index] = r.box;
  }
  return tubes;
}

std::vector<FrameDetection> frames_from_records(const std::vector<DetectionRecord>& records) {
  std::vector<FrameDetection> out;
  out.reserve(records.size());
  for (const DetectionRecord& r : records) out.push_back({r.video_id, r.frame_index, r.label, r.score, r.box});
  return out;
}

void write_ap_csv(std::ostream& out, const ApResult& result) {
  out << "class,ap,gt_count\n";
  char buf[64];
  for (std::size_t k = 0; k < result.ap.size(); ++k) {
    out << k << ',';
    if (std::isnan(result.ap[k])) {
      out << "nan";
    } else {
      std::snprintf(buf, sizeof(buf), "%.6f", result.ap[k]);
      out << buf;
    }
    out << ',' << result.gt_count[k] << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.6f", result.mean);
  out << "mean," << buf << ",\n";
}

}  // namespace lstr
