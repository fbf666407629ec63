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

#include "lstr/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <random>
#include <thread>

#include "lstr/error.hpp"

namespace lstr {
namespace {

using Rgb = std::array<double, 3>;

Rgb hue_color(double hue) {
  const double h = hue * 6.0;
  const int sector = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  switch (sector) {
    case 0: return {1.0, f, 0.0};
    case 1: return {1.0 - f, 1.0, 0.0};
    case 2: return {0.0, 1.0, f};
    case 3: return {0.0, 1.0 - f, 1.0};
    case 4: return {f, 0.0, 1.0};
    default: return {1.0, 0.0, 1.0 - f};
  }
}

Rgb context_color(int label, int classes) { return hue_color(static_cast<double>(label) / classes); }

Rgb actor_color(int label, int classes, double cue) {
  const int groups = (classes + 1) / 2;
  // Offset hue so the tint never equals a context color.
  const Rgb tint = hue_color((static_cast<double>(label / 2) + 0.5) / groups);
  Rgb c;
  for (int i = 0; i < 3; ++i) c[i] = (1.0 - cue) * 0.9 + cue * tint[i];
  return c;
}

void paint(Tensor& frames, int frame, const Box& box, const Rgb& color) {
  const auto h = static_cast<long>(frames.dim(1)), w = static_cast<long>(frames.dim(2));
  for (long y = 0; y < h; ++y) {
    const double cy = static_cast<double>(y) + 0.5;
    if (cy < box.y1 || cy >= box.y2) continue;
    for (long x = 0; x < w; ++x) {
      const double cx = static_cast<double>(x) + 0.5;
      if (cx < box.x1 || cx >= box.x2) continue;
      for (int c = 0; c < 3; ++c) frames(frame, y, x, c) = color[static_cast<std::size_t>(c)];
    }
  }
}

}  // namespace

void SynthConfig::validate(int clip_length) const {
  if (num_videos < 1 || frames_per_video < 1 || image_size < 8 || num_classes < 1) {
    throw ConfigError("synth: sizes must be positive");
  }
  if (clip_length < 1 || frames_per_video % clip_length != 0) {
    throw ConfigError("synth: frames_per_video must be divisible by the clip length");
  }
  if (actors_min < 1 || actors_max < actors_min) throw ConfigError("synth: bad actor count range");
  if (!(size_min >= 2.0) || size_max < size_min || size_max >= image_size) {
    throw ConfigError("synth: bad actor size range");
  }
  if (velocity_max < 0.0 || noise < 0.0) throw ConfigError("synth: negative motion or noise");
  if (context_visibility < 0.0 || context_visibility > 1.0 || visibility_block < 1) {
    throw ConfigError("synth: bad context visibility");
  }
  if (actor_cue < 0.0 || actor_cue > 1.0) throw ConfigError("synth: actor_cue must lie in [0, 1]");
  if (partial_presence < 0.0 || partial_presence > 1.0) throw ConfigError("synth: bad partial_presence");
}

SyntheticVideo generate_video(const SynthConfig& cfg, int index) {
  // Each video draws from its own stream so generation is order independent.
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedU};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const int frames = cfg.frames_per_video;
  const int size = cfg.image_size;
  const double extent = static_cast<double>(size);
  SyntheticVideo video;
  char id[32];
  std::snprintf(id, sizeof(id), "v%04d", index);
  video.id = id;
  video.frames = Tensor({static_cast<std::size_t>(frames), static_cast<std::size_t>(size),
                         static_cast<std::size_t>(size), 3});

  const double bg = uniform(0.15, 0.35);
  std::normal_distribution<double> noise(0.0, cfg.noise);

  const int actor_count = cfg.actors_min + static_cast<int>(rng() % static_cast<std::uint64_t>(
                                                                cfg.actors_max - cfg.actors_min + 1));
  for (int a = 0; a < actor_count; ++a) {
    ActorTrack track;
    track.label = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.num_classes));
    if (cfg.balanced_labels && a == 0) {
      track.label = static_cast<int>((static_cast<std::uint64_t>(index) + cfg.seed) %
                                     static_cast<std::uint64_t>(cfg.num_classes));
    }
    const double w = uniform(cfg.size_min, cfg.size_max);
    const double h = uniform(cfg.size_min, cfg.size_max);
    double x = uniform(0.0, extent - w), y = uniform(0.0, extent - h);
    double vx = uniform(-cfg.velocity_max, cfg.velocity_max);
    double vy = uniform(-cfg.velocity_max, cfg.velocity_max);
    int first = 0;
    if (unit(rng) < cfg.partial_presence && frames > 1) {
      first = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(frames - 1));
    }
    track.boxes.assign(static_cast<std::size_t>(frames), std::nullopt);
    for (int f = 0; f < frames; ++f) {
      if (f >= first) track.boxes[static_cast<std::size_t>(f)] = Box{x, y, x + w, y + h};
      x += vx;
      y += vy;
      if (x < 0.0) { x = -x; vx = -vx; }
      if (y < 0.0) { y = -y; vy = -vy; }
      if (x + w > extent) { x = 2.0 * (extent - w) - x; vx = -vx; }
      if (y + h > extent) { y = 2.0 * (extent - h) - y; vy = -vy; }
      x = std::clamp(x, 0.0, extent - w);
      y = std::clamp(y, 0.0, extent - h);
    }
    video.actors.push_back(std::move(track));
  }

  // Background.
  for (double& v : video.frames.values()) v = bg;

  // Context objects: placed clear of every actor box when possible.
  const double cs = static_cast<double>(cfg.context_size);
  for (const ActorTrack& track : video.actors) {
    Box ctx;
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double cx = uniform(0.0, extent - cs), cy = uniform(0.0, extent - cs);
      ctx = Box{std::floor(cx), std::floor(cy), std::floor(cx) + cs, std::floor(cy) + cs};
      bool clear = true;
      for (const ActorTrack& other : video.actors) {
        for (const auto& b : other.boxes) {
          if (b && box_iou(ctx, Box{b->x1 - 2, b->y1 - 2, b->x2 + 2, b->y2 + 2}) > 0.0) clear = false;
        }
      }
      if (clear) break;
    }
    const int blocks = (frames + cfg.visibility_block - 1) / cfg.visibility_block;
    std::vector<bool> visible(static_cast<std::size_t>(blocks));
    bool any = false;
    for (int b = 0; b < blocks; ++b) {
      visible[static_cast<std::size_t>(b)] = unit(rng) < cfg.context_visibility;
      any = any || visible[static_cast<std::size_t>(b)];
    }
    if (!any) visible[rng() % static_cast<std::uint64_t>(blocks)] = true;
    const Rgb color = context_color(track.label, cfg.num_classes);
    for (int f = 0; f < frames; ++f) {
      if (visible[static_cast<std::size_t>(f / cfg.visibility_block)]) paint(video.frames, f, ctx, color);
    }
  }

  for (const ActorTrack& track : video.actors) {
    const Rgb color = actor_color(track.label, cfg.num_classes, cfg.actor_cue);
    for (int f = 0; f < frames; ++f) {
      if (const auto& b = track.boxes[static_cast<std::size_t>(f)]) paint(video.frames, f, *b, color);
    }
  }

  for (double& v : video.frames.values()) v = std::clamp(v + noise(rng), 0.0, 1.0);
  return video;
}

std::vector<SyntheticVideo> generate(const SynthConfig& cfg) {
  std::vector<SyntheticVideo> out(static_cast<std::size_t>(std::max(cfg.num_videos, 0)));
  // Videos are independent, so workers take interleaved indices.
  const unsigned workers = std::max(1u, std::min(std::thread::hardware_concurrency(), static_cast<unsigned>(out.size())));
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < out.size(); i += workers) out[i] = generate_video(cfg, static_cast<int>(i));
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<Clip> split_clips(const SyntheticVideo& video, int clip_length, int stride) {
  if (clip_length < 1 || stride < 1) throw std::invalid_argument("split_clips: clip length and stride >= 1");
  const int frames = static_cast<int>(video.frame_count());
  const std::size_t h = video.frames.dim(1), w = video.frames.dim(2), c = video.frames.dim(3);
  const std::size_t frame_size = h * w * c;
  const int clips = frames <= clip_length ? 1 : (frames - clip_length + stride - 1) / stride + 1;
  std::vector<Clip> out;
  for (int k = 0; k < clips; ++k) {
    Clip clip;
    clip.video_id = video.id;
    clip.clip_index = k;
    clip.first_frame = k * stride;
    clip.frames = Tensor({static_cast<std::size_t>(clip_length), h, w, c});
    for (int t = 0; t < clip_length; ++t) {
      const int src = std::min(clip.first_frame + t, frames - 1);
      std::copy(video.frames.raw() + static_cast<std::size_t>(src) * frame_size,
                video.frames.raw() + static_cast<std::size_t>(src + 1) * frame_size,
                clip.frames.raw() + static_cast<std::size_t>(t) * frame_size);
    }
    for (const ActorTrack& actor : video.actors) {
      Tubelet tube;
      tube.clip_index = k;
      bool complete = true;
      for (int t = 0; t < clip_length && complete; ++t) {
        const int f = clip.first_frame + t;
        if (f >= frames || !actor.boxes[static_cast<std::size_t>(f)]) {
          complete = false;
        } else {
          tube.boxes.push_back(*actor.boxes[static_cast<std::size_t>(f)]);
        }
      }
      if (!complete) continue;
      tube.actionness = 1.0;
      clip.gt.push_back(std::move(tube));
      clip.gt_labels.push_back(actor.label);
    }
    out.push_back(std::move(clip));
  }
  return out;
}

}  // namespace lstr
