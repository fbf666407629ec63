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

#include "lstr/short_term.hpp"

#include <algorithm>
#include <cmath>

#include "lstr/error.hpp"
#include "lstr/simd.hpp"

namespace lstr {
namespace {

struct CellRange {
  std::size_t begin, end;
};

// Feature cells touched by [lo, hi] pixels; never empty.
CellRange project(double lo, double hi, int stride, std::size_t cells) {
  const double flo = lo / stride, fhi = hi / stride;
  const long last = static_cast<long>(cells) - 1;
  const long b = std::clamp(static_cast<long>(std::floor(flo)), 0L, last);
  long e = std::clamp(static_cast<long>(std::ceil(fhi)), 0L, static_cast<long>(cells));
  if (e <= b) e = b + 1;
  return {static_cast<std::size_t>(b), static_cast<std::size_t>(e)};
}

void check_feature_frames(const ClipFeature& feature, const Tubelet& tubelet, const char* who) {
  if (feature.frames() != tubelet.length()) {
    throw DimensionError(std::string(who) + ": tubelet has " + std::to_string(tubelet.length()) +
                         " boxes for a " + std::to_string(feature.frames()) + "-frame feature");
  }
}

}  // namespace

HumanRepresentation roi_pool_3d(const ClipFeature& feature, const Tubelet& tubelet,
                                std::vector<std::uint32_t>* argmax) {
  check_feature_frames(feature, tubelet, "roi_pool_3d");
  const std::size_t frames = feature.frames(), h = feature.height(), w = feature.width();
  const std::size_t c = feature.channels();
  HumanRepresentation out{Tensor({frames, kRoiBins, kRoiBins, c})};
  if (argmax) argmax->assign(out.values.size(), 0);
  const double* f = feature.values.raw();
  for (std::size_t t = 0; t < frames; ++t) {
    const Box& box = tubelet.boxes[t];
    const CellRange ys = project(box.y1, box.y2, feature.stride, h);
    const CellRange xs = project(box.x1, box.x2, feature.stride, w);
    const std::size_t ny = ys.end - ys.begin, nx = xs.end - xs.begin;
    for (std::size_t py = 0; py < kRoiBins; ++py) {
      const std::size_t y0 = ys.begin + py * ny / kRoiBins;
      const std::size_t y1 = ys.begin + ((py + 1) * ny + kRoiBins - 1) / kRoiBins;
      for (std::size_t px = 0; px < kRoiBins; ++px) {
        const std::size_t x0 = xs.begin + px * nx / kRoiBins;
        const std::size_t x1 = xs.begin + ((px + 1) * nx + kRoiBins - 1) / kRoiBins;
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = ((t * h + y0) * w + x0) * c + ch;
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t x = x0; x < x1; ++x) {
              const std::size_t idx = ((t * h + y) * w + x) * c + ch;
              if (f[idx] > f[best]) best = idx;
            }
          }
          const std::size_t o = ((t * kRoiBins + py) * kRoiBins + px) * c + ch;
          out.values[o] = f[best];
          if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return out;
}

void roi_pool_3d_backward(const std::vector<std::uint32_t>& argmax, const Tensor& dhuman,
                          Tensor& dfeature) {
  if (argmax.size() != dhuman.size()) throw DimensionError("roi_pool_3d_backward: size mismatch");
  for (std::size_t i = 0; i < argmax.size(); ++i) dfeature[argmax[i]] += dhuman[i];
}

Tensor erase_mask(const ClipFeature& feature, const Tubelet& tubelet) {
  check_feature_frames(feature, tubelet, "erase_tubelet");
  const std::size_t frames = feature.frames(), h = feature.height(), w = feature.width();
  Tensor mask({frames, h, w}, 1.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const Box& b = tubelet.boxes[t];
    for (std::size_t i = 0; i < h; ++i) {
      const double cy = (static_cast<double>(i) + 0.5) * feature.stride;
      if (cy < b.y1 || cy > b.y2) continue;
      for (std::size_t j = 0; j < w; ++j) {
        const double cx = (static_cast<double>(j) + 0.5) * feature.stride;
        if (cx >= b.x1 && cx <= b.x2) mask(t, i, j) = 0.0;
      }
    }
  }
  return mask;
}

namespace {

ClipFeature apply_mask(const ClipFeature& feature, const Tensor& mask) {
  ClipFeature out = feature;
  const std::size_t c = feature.channels();
  for (std::size_t loc = 0; loc < mask.size(); ++loc) {
    if (mask[loc] == 0.0) std::fill_n(out.values.raw() + loc * c, c, 0.0);
  }
  return out;
}

}  // namespace

ClipFeature erase_tubelet(const ClipFeature& feature, const Tubelet& tubelet) {
  return apply_mask(feature, erase_mask(feature, tubelet));
}

Tensor attention_pool_3d(const ClipFeature& feature, const AttentionMap& attn) {
  const Shape expect{feature.frames(), feature.height(), feature.width()};
  if (attn.values.shape() != expect) {
    throw DimensionError("attention_pool_3d: attention " + shape_string(attn.values.shape()) +
                         " vs feature " + shape_string(feature.values.shape()));
  }
  const std::size_t c = feature.channels();
  Tensor out({c});
  for (std::size_t loc = 0; loc < attn.values.size(); ++loc) {
    simd::axpy(attn.values[loc], std::span<const double>(feature.values.raw() + loc * c, c), out.data());
  }
  return out;
}

ShortTermRelation::ShortTermRelation(const ShortTermConfig& config, std::mt19937_64& rng)
    : config_(config) {
  if (config.frames <= 0 || config.channels <= 0 || config.human_width <= 0) {
    throw std::invalid_argument("short-term relation: invalid configuration");
  }
  const std::size_t in = human_size();
  const auto kout = static_cast<std::size_t>(config.frames) * 9;
  const auto c = static_cast<std::size_t>(config.channels);
  const auto dh = static_cast<std::size_t>(config.human_width);
  if (!(config.human_scale > 0.0)) throw std::invalid_argument("short-term relation: human_scale must be positive");
  // Unit-variance outputs for unit-variance pooled features.
  const double in_std = 1.0 / (std::sqrt(static_cast<double>(in)) * config.human_scale);
  theta_w_ = Parameter("str.kernel_w", random_normal({in, kout}, in_std, rng));
  theta_b_ = Parameter("str.kernel_b", Tensor({kout}));
  reduce_u_ = Parameter("str.reduce_u", random_normal({c}, 1.0 / std::sqrt(static_cast<double>(c)), rng));
  fuse_w_ = Parameter("str.fuse_w", random_normal({in, dh}, in_std, rng));
  fuse_b_ = Parameter("str.fuse_b", Tensor({dh}));
}

AdaptiveKernel ShortTermRelation::adaptive_kernel(const HumanRepresentation& human) const {
  if (human.values.size() != human_size()) throw DimensionError("adaptive_kernel: human block size");
  const auto frames = static_cast<std::size_t>(config_.frames);
  Tensor k({frames, 3, 3});
  std::copy(theta_b_.value.raw(), theta_b_.value.raw() + k.size(), k.raw());
  Tensor scaled = human.values;
  scaled.scale(config_.human_scale);
  simd::gemm_nn(1, k.size(), human_size(), scaled.raw(), theta_w_.value.raw(), k.raw());
  return AdaptiveKernel{std::move(k)};
}

Tensor ShortTermRelation::reduce_channels(const ClipFeature& erased) const {
  const std::size_t c = erased.channels();
  if (c != reduce_u_.value.size()) throw DimensionError("attention_map: channel count");
  Tensor r({erased.frames(), erased.height(), erased.width()});
  for (std::size_t loc = 0; loc < r.size(); ++loc) {
    r[loc] = simd::dot(std::span<const double>(erased.values.raw() + loc * c, c), reduce_u_.value.data());
  }
  return r;
}

AttentionMap ShortTermRelation::attention_map(const ClipFeature& erased,
                                              const AdaptiveKernel& kernel) const {
  if (kernel.values.rank() != 3 || kernel.values.dim(0) != erased.frames() ||
      kernel.values.dim(1) != 3 || kernel.values.dim(2) != 3) {
    throw DimensionError("attention_map: kernel " + shape_string(kernel.values.shape()) +
                         " does not match " + std::to_string(erased.frames()) + " frames");
  }
  const Tensor reduced = reduce_channels(erased);
  const std::size_t h = erased.height(), w = erased.width();
  Tensor logits(reduced.shape());
  for (std::size_t t = 0; t < erased.frames(); ++t) {
    Tensor frame({h, w});
    std::copy(reduced.raw() + t * h * w, reduced.raw() + (t + 1) * h * w, frame.raw());
    Tensor kt({3, 3});
    std::copy(kernel.values.raw() + t * 9, kernel.values.raw() + (t + 1) * 9, kt.raw());
    const Tensor conv = conv2d_same(frame, kt);
    std::copy(conv.raw(), conv.raw() + conv.size(), logits.raw() + t * h * w);
  }
  return AttentionMap{sigmoid(logits)};
}

FusedTubeletFeature ShortTermRelation::fuse_features(const HumanRepresentation& human,
                                                     const Tensor& context) const {
  if (human.values.size() != human_size()) throw DimensionError("fuse_features: human block size");
  const auto dh = static_cast<std::size_t>(config_.human_width);
  Tensor f({dh + context.size()});
  std::copy(fuse_b_.value.raw(), fuse_b_.value.raw() + dh, f.raw());
  Tensor scaled = human.values;
  scaled.scale(config_.human_scale);
  simd::gemm_nn(1, dh, human_size(), scaled.raw(), fuse_w_.value.raw(), f.raw());
  for (std::size_t i = 0; i < context.size(); ++i) f[dh + i] = config_.context_scale * context[i];
  return FusedTubeletFeature{std::move(f), dh};
}

FusedTubeletFeature ShortTermRelation::forward_one(const ClipFeature& feature,
                                                   const Tubelet& tubelet) const {
  const HumanRepresentation human = roi_pool_3d(feature, tubelet);
  const AdaptiveKernel kernel = adaptive_kernel(human);
  const ClipFeature erased = erase_tubelet(feature, tubelet);
  const AttentionMap attn = attention_map(erased, kernel);
  return fuse_features(human, attention_pool_3d(erased, attn));
}

Tensor ShortTermRelation::forward(const ClipFeature& feature, const std::vector<Tubelet>& tubelets,
                                  Cache* cache) const {
  const std::size_t n = tubelets.size();
  const std::size_t hs = human_size();
  const auto dh = static_cast<std::size_t>(config_.human_width);
  const std::size_t c = feature.channels();
  const auto frames = static_cast<std::size_t>(config_.frames);
  if (c != static_cast<std::size_t>(config_.channels) || feature.frames() != frames) {
    throw DimensionError("short-term relation: feature " + shape_string(feature.values.shape()) +
                         " does not match configuration");
  }
  if (n == 0) return Tensor();

  Cache local;
  Cache& cc = cache ? *cache : local;
  cc = Cache{};
  cc.count = n;
  cc.human = Tensor({n, hs});
  cc.argmax.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const HumanRepresentation h = roi_pool_3d(feature, tubelets[i], &cc.argmax[i]);
    for (std::size_t j = 0; j < hs; ++j) cc.human(i, j) = config_.human_scale * h.values[j];
  }
  const std::size_t kout = frames * 9;
  cc.kernels = Tensor({n, kout});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(theta_b_.value.raw(), theta_b_.value.raw() + kout, cc.kernels.raw() + i * kout);
  }
  simd::gemm_nn(n, kout, hs, cc.human.raw(), theta_w_.value.raw(), cc.kernels.raw());

  const std::size_t d = dh + c;
  Tensor out({n, d});
  Tensor fh({n, dh});
  for (std::size_t i = 0; i < n; ++i) std::copy(fuse_b_.value.raw(), fuse_b_.value.raw() + dh, fh.raw() + i * dh);
  simd::gemm_nn(n, dh, hs, cc.human.raw(), fuse_w_.value.raw(), fh.raw());

  for (std::size_t i = 0; i < n; ++i) {
    Tensor mask = erase_mask(feature, tubelets[i]);
    const ClipFeature erased = apply_mask(feature, mask);
    AdaptiveKernel kernel{Tensor({frames, 3, 3})};
    std::copy(cc.kernels.raw() + i * kout, cc.kernels.raw() + (i + 1) * kout, kernel.values.raw());
    AttentionMap attn = attention_map(erased, kernel);
    const Tensor ctx = attention_pool_3d(erased, attn);
    std::copy(fh.raw() + i * dh, fh.raw() + (i + 1) * dh, out.raw() + i * d);
    for (std::size_t j = 0; j < c; ++j) out(i, dh + j) = config_.context_scale * ctx[j];
    cc.reduced.push_back(reduce_channels(erased));
    cc.masks.push_back(std::move(mask));
    cc.attention.push_back(std::move(attn.values));
  }
  return out;
}

void ShortTermRelation::backward(const Cache& cache, const ClipFeature& feature, const Tensor& dfused,
                                 Tensor& dfeature) {
  const std::size_t n = cache.count;
  if (n == 0) return;
  const std::size_t hs = human_size();
  const auto dh = static_cast<std::size_t>(config_.human_width);
  const std::size_t c = feature.channels();
  const std::size_t d = dh + c;
  const auto frames = static_cast<std::size_t>(config_.frames);
  const std::size_t h = feature.height(), w = feature.width(), hw = h * w;
  const std::size_t kout = frames * 9;
  if (dfused.shape() != Shape{n, d}) throw DimensionError("short-term backward: upstream shape");
  require_same_shape(dfeature, feature.values, "short-term backward");

  Tensor dfh({n, dh});
  Tensor dkernels({n, kout});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(dfused.raw() + i * d, dfused.raw() + i * d + dh, dfh.raw() + i * dh);
    std::vector<double> dctx_scaled(dfused.raw() + i * d + dh, dfused.raw() + (i + 1) * d);
    for (double& v : dctx_scaled) v *= config_.context_scale;
    const double* dctx = dctx_scaled.data();
    const Tensor& mask = cache.masks[i];
    const Tensor& attn = cache.attention[i];

    // Erased feature is read on the fly: feature value where mask == 1.
    Tensor dlogit(attn.shape());
    Tensor dfe({frames * hw, c});
    for (std::size_t loc = 0; loc < attn.size(); ++loc) {
      if (mask[loc] == 0.0) {
        dlogit[loc] = 0.0;
        continue;
      }
      const double* fv = feature.values.raw() + loc * c;
      const double da = simd::dot(std::span<const double>(fv, c), std::span<const double>(dctx, c));
      dlogit[loc] = da * attn[loc] * (1.0 - attn[loc]);
      simd::axpy(attn[loc], std::span<const double>(dctx, c), std::span<double>(dfe.raw() + loc * c, c));
    }
    Tensor dreduced(attn.shape());
    for (std::size_t t = 0; t < frames; ++t) {
      Tensor frame({h, w}), kt({3, 3}), dout({h, w});
      std::copy(cache.reduced[i].raw() + t * hw, cache.reduced[i].raw() + (t + 1) * hw, frame.raw());
      std::copy(cache.kernels.raw() + i * kout + t * 9, cache.kernels.raw() + i * kout + (t + 1) * 9, kt.raw());
      std::copy(dlogit.raw() + t * hw, dlogit.raw() + (t + 1) * hw, dout.raw());
      const Conv2dGrads g = conv2d_same_backward(frame, kt, dout);
      std::copy(g.dframe.raw(), g.dframe.raw() + hw, dreduced.raw() + t * hw);
      std::copy(g.dkernel.raw(), g.dkernel.raw() + 9, dkernels.raw() + i * kout + t * 9);
    }
    for (std::size_t loc = 0; loc < dreduced.size(); ++loc) {
      if (mask[loc] == 0.0) continue;
      const double dr = dreduced[loc];
      const double* fv = feature.values.raw() + loc * c;
      simd::axpy(dr, std::span<const double>(fv, c), reduce_u_.grad.data());
      simd::axpy(dr, reduce_u_.value.data(), std::span<double>(dfe.raw() + loc * c, c));
    }
    for (std::size_t loc = 0; loc < mask.size(); ++loc) {
      if (mask[loc] == 0.0) continue;
      simd::axpy(1.0, std::span<const double>(dfe.raw() + loc * c, c),
                 std::span<double>(dfeature.raw() + loc * c, c));
    }
  }

  simd::gemm_tn(hs, dh, n, cache.human.raw(), dfh.raw(), fuse_w_.grad.raw());
  simd::gemm_tn(hs, kout, n, cache.human.raw(), dkernels.raw(), theta_w_.grad.raw());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dh; ++j) fuse_b_.grad[j] += dfh(i, j);
    for (std::size_t j = 0; j < kout; ++j) theta_b_.grad[j] += dkernels(i, j);
  }
  Tensor dhuman({n, hs});
  simd::gemm_nt(n, hs, dh, dfh.raw(), fuse_w_.value.raw(), dhuman.raw());
  simd::gemm_nt(n, hs, kout, dkernels.raw(), theta_w_.value.raw(), dhuman.raw());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& am = cache.argmax[i];
    for (std::size_t j = 0; j < hs; ++j) dfeature[am[j]] += config_.human_scale * dhuman(i, j);
  }
}

ParameterList ShortTermRelation::parameters() {
  return {&theta_w_, &theta_b_, &reduce_u_, &fuse_w_, &fuse_b_};
}

}  // namespace lstr
