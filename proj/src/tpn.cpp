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

#include "lstr/tpn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lstr/error.hpp"
#include "lstr/simd.hpp"

namespace lstr {
namespace {

// Patch matrix for one frame: (H*W) x (k*k*Cin), zero padded.
void im2col(const double* frame, std::size_t h, std::size_t w, std::size_t cin, int k,
            std::vector<double>& col) {
  const long pad = k / 2;
  const std::size_t patch = static_cast<std::size_t>(k * k) * cin;
  col.assign(h * w * patch, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double* row = col.data() + (y * w + x) * patch;
      for (int dy = 0; dy < k; ++dy) {
        const long yy = static_cast<long>(y) + dy - pad;
        if (yy < 0 || yy >= static_cast<long>(h)) continue;
        for (int dx = 0; dx < k; ++dx) {
          const long xx = static_cast<long>(x) + dx - pad;
          if (xx < 0 || xx >= static_cast<long>(w)) continue;
          const double* src = frame + (static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)) * cin;
          std::copy(src, src + cin, row + static_cast<std::size_t>(dy * k + dx) * cin);
        }
      }
    }
  }
}

void col2im_add(const std::vector<double>& col, std::size_t h, std::size_t w, std::size_t cin, int k,
                double* frame) {
  const long pad = k / 2;
  const std::size_t patch = static_cast<std::size_t>(k * k) * cin;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double* row = col.data() + (y * w + x) * patch;
      for (int dy = 0; dy < k; ++dy) {
        const long yy = static_cast<long>(y) + dy - pad;
        if (yy < 0 || yy >= static_cast<long>(h)) continue;
        for (int dx = 0; dx < k; ++dx) {
          const long xx = static_cast<long>(x) + dx - pad;
          if (xx < 0 || xx >= static_cast<long>(w)) continue;
          double* dst = frame + (static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)) * cin;
          const double* src = row + static_cast<std::size_t>(dy * k + dx) * cin;
          for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

void add_bias_relu(Tensor& t, const Tensor& bias) {
  const std::size_t c = bias.size();
  double* v = t.raw();
  for (std::size_t i = 0; i < t.size(); ++i) v[i] = std::max(0.0, v[i] + bias[i % c]);
}

// Gradient through ReLU given the post-activation output.
Tensor relu_backward(const Tensor& out, const Tensor& dout) {
  Tensor d = dout;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (out[i] <= 0.0) d[i] = 0.0;
  }
  return d;
}

void accumulate_bias_grad(const Tensor& dpre, Tensor& dbias) {
  const std::size_t c = dbias.size();
  for (std::size_t i = 0; i < dpre.size(); ++i) dbias[i % c] += dpre[i];
}

}  // namespace

Backbone::Backbone(const BackboneConfig& config, std::mt19937_64& rng) : config_(config) {
  if (config.frames <= 0 || config.spatial_kernel <= 0 || config.temporal_kernel <= 0 ||
      config.channels.empty()) {
    throw std::invalid_argument("backbone: invalid configuration");
  }
  std::size_t cin = static_cast<std::size_t>(config.in_channels);
  const auto k = static_cast<std::size_t>(config.spatial_kernel);
  const auto l = static_cast<std::size_t>(config.temporal_kernel);
  for (std::size_t s = 0; s < config.channels.size(); ++s) {
    const auto cout = static_cast<std::size_t>(config.channels[s]);
    const std::string prefix = "backbone.stage" + std::to_string(s);
    Stage st{
        Parameter(prefix + ".spatial_w",
                  random_normal({k, k, cin, cout}, std::sqrt(2.0 / static_cast<double>(k * k * cin)), rng)),
        Parameter(prefix + ".spatial_b", Tensor({cout})),
        Parameter(prefix + ".temporal_w",
                  random_normal({l, cout, cout}, std::sqrt(2.0 / static_cast<double>(l * cout)), rng)),
        Parameter(prefix + ".temporal_b", Tensor({cout})),
    };
    stages_.push_back(std::move(st));
    cin = cout;
  }
}

ClipFeature Backbone::forward(const Tensor& clip, Cache* cache) const {
  if (clip.rank() != 4 || clip.dim(3) != static_cast<std::size_t>(config_.in_channels)) {
    throw DimensionError("backbone: expected T x H x W x " + std::to_string(config_.in_channels) +
                         " clip, got " + shape_string(clip.shape()));
  }
  const std::size_t stride = static_cast<std::size_t>(config_.total_stride());
  if (clip.dim(1) % stride != 0 || clip.dim(2) % stride != 0) {
    throw DimensionError("backbone: spatial dims " + shape_string(clip.shape()) +
                         " not divisible by stride " + std::to_string(stride));
  }
  if (cache) cache->stages.clear();

  const std::size_t frames = clip.dim(0);
  const int k = config_.spatial_kernel;
  const long tpad = config_.temporal_kernel / 2;
  Tensor x = clip;
  std::vector<double> col;
  for (const Stage& st : stages_) {
    const std::size_t h = x.dim(1), w = x.dim(2), cin = x.dim(3);
    const std::size_t cout = st.spatial_b.value.size();
    const std::size_t hw = h * w;
    const std::size_t patch = static_cast<std::size_t>(k * k) * cin;

    Tensor spatial({frames, h, w, cout});
    for (std::size_t t = 0; t < frames; ++t) {
      im2col(x.raw() + t * hw * cin, h, w, cin, k, col);
      simd::gemm_nn(hw, cout, patch, col.data(), st.spatial_w.value.raw(), spatial.raw() + t * hw * cout);
    }
    add_bias_relu(spatial, st.spatial_b.value);

    Tensor temporal({frames, h, w, cout});
    for (std::size_t t = 0; t < frames; ++t) {
      for (long dt = 0; dt < config_.temporal_kernel; ++dt) {
        const long src = static_cast<long>(t) + dt - tpad;
        if (src < 0 || src >= static_cast<long>(frames)) continue;
        simd::gemm_nn(hw, cout, cout, spatial.raw() + static_cast<std::size_t>(src) * hw * cout,
                      st.temporal_w.value.raw() + static_cast<std::size_t>(dt) * cout * cout,
                      temporal.raw() + t * hw * cout);
      }
    }
    add_bias_relu(temporal, st.temporal_b.value);

    const std::size_t oh = h / 2, ow = w / 2;
    Tensor pooled({frames, oh, ow, cout});
    std::vector<std::uint32_t> argmax(pooled.size());
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          for (std::size_t c = 0; c < cout; ++c) {
            std::size_t best = ((t * h + 2 * y) * w + 2 * xx) * cout + c;
            for (std::size_t py = 0; py < 2; ++py) {
              for (std::size_t px = 0; px < 2; ++px) {
                const std::size_t idx = ((t * h + 2 * y + py) * w + 2 * xx + px) * cout + c;
                if (temporal[idx] > temporal[best]) best = idx;
              }
            }
            const std::size_t o = ((t * oh + y) * ow + xx) * cout + c;
            pooled[o] = temporal[best];
            argmax[o] = static_cast<std::uint32_t>(best);
          }
        }
      }
    }
    if (cache) {
      cache->stages.push_back({std::move(x), std::move(spatial), std::move(temporal), std::move(argmax)});
    }
    x = std::move(pooled);
  }
  return ClipFeature{std::move(x), static_cast<int>(stride)};
}

void Backbone::backward(const Cache& cache, const Tensor& dfeature) {
  if (cache.stages.size() != stages_.size()) throw std::logic_error("backbone: stale cache");
  const int k = config_.spatial_kernel;
  const long tpad = config_.temporal_kernel / 2;
  Tensor dout = dfeature;
  std::vector<double> col, dcol;
  for (std::size_t si = stages_.size(); si-- > 0;) {
    Stage& st = stages_[si];
    const StageCache& sc = cache.stages[si];
    const std::size_t frames = sc.input.dim(0), h = sc.input.dim(1), w = sc.input.dim(2);
    const std::size_t cin = sc.input.dim(3), cout = st.spatial_b.value.size();
    const std::size_t hw = h * w;
    const std::size_t patch = static_cast<std::size_t>(k * k) * cin;

    Tensor dtemporal = Tensor::zeros_like(sc.temporal);
    for (std::size_t i = 0; i < dout.size(); ++i) dtemporal[sc.pool_argmax[i]] += dout[i];
    const Tensor dtpre = relu_backward(sc.temporal, dtemporal);
    accumulate_bias_grad(dtpre, st.temporal_b.grad);

    Tensor dspatial = Tensor::zeros_like(sc.spatial);
    for (std::size_t t = 0; t < frames; ++t) {
      for (long dt = 0; dt < config_.temporal_kernel; ++dt) {
        const long src = static_cast<long>(t) + dt - tpad;
        if (src < 0 || src >= static_cast<long>(frames)) continue;
        const std::size_t s = static_cast<std::size_t>(src);
        double* wgrad = st.temporal_w.grad.raw() + static_cast<std::size_t>(dt) * cout * cout;
        const double* wval = st.temporal_w.value.raw() + static_cast<std::size_t>(dt) * cout * cout;
        simd::gemm_tn(cout, cout, hw, sc.spatial.raw() + s * hw * cout, dtpre.raw() + t * hw * cout, wgrad);
        simd::gemm_nt(hw, cout, cout, dtpre.raw() + t * hw * cout, wval, dspatial.raw() + s * hw * cout);
      }
    }
    const Tensor dspre = relu_backward(sc.spatial, dspatial);
    accumulate_bias_grad(dspre, st.spatial_b.grad);

    const bool need_input_grad = si > 0;
    Tensor dinput = need_input_grad ? Tensor::zeros_like(sc.input) : Tensor();
    for (std::size_t t = 0; t < frames; ++t) {
      im2col(sc.input.raw() + t * hw * cin, h, w, cin, k, col);
      simd::gemm_tn(patch, cout, hw, col.data(), dspre.raw() + t * hw * cout, st.spatial_w.grad.raw());
      if (need_input_grad) {
        dcol.assign(hw * patch, 0.0);
        simd::gemm_nt(hw, patch, cout, dspre.raw() + t * hw * cout, st.spatial_w.value.raw(), dcol.data());
        col2im_add(dcol, h, w, cin, k, dinput.raw() + t * hw * cin);
      }
    }
    dout = std::move(dinput);
  }
}

ParameterList Backbone::parameters() {
  ParameterList out;
  for (Stage& st : stages_) {
    out.push_back(&st.spatial_w);
    out.push_back(&st.spatial_b);
    out.push_back(&st.temporal_w);
    out.push_back(&st.temporal_b);
  }
  return out;
}

TpnHeads::TpnHeads(int frames, int channels, std::size_t anchors_per_cell, std::mt19937_64& rng)
    : frames_(frames), channels_(channels), anchors_per_cell_(anchors_per_cell) {
  const auto in = static_cast<std::size_t>(frames * channels);
  const std::size_t reg_out = anchors_per_cell * 4 * static_cast<std::size_t>(frames);
  const std::size_t cls_out = anchors_per_cell * 2;
  reg_w_ = Parameter("tpn.reg_w", random_normal({in, reg_out}, 0.001, rng));
  reg_b_ = Parameter("tpn.reg_b", Tensor({reg_out}));
  cls_w_ = Parameter("tpn.cls_w", random_normal({in, cls_out}, 0.01, rng));
  cls_b_ = Parameter("tpn.cls_b", Tensor({cls_out}));
}

TpnOutput TpnHeads::forward(const ClipFeature& feature, const AnchorGrid& grid, Cache* cache) const {
  const std::size_t frames = feature.frames(), h = feature.height(), w = feature.width();
  const std::size_t c = feature.channels();
  if (frames != static_cast<std::size_t>(frames_) || c != static_cast<std::size_t>(channels_) ||
      h != static_cast<std::size_t>(grid.feature_height) ||
      w != static_cast<std::size_t>(grid.feature_width) ||
      grid.anchors_per_cell() != anchors_per_cell_ || grid.frames != frames_) {
    throw DimensionError("tpn_heads: feature " + shape_string(feature.values.shape()) +
                         " does not match anchor grid / head configuration");
  }
  const std::size_t cells = h * w, in = frames * c;
  Tensor x({cells, in});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const double* src = feature.values.raw() + (t * cells + cell) * c;
      std::copy(src, src + c, x.raw() + cell * in + t * c);
    }
  }
  const std::size_t reg_out = reg_b_.value.size(), cls_out = cls_b_.value.size();
  Tensor reg({cells, reg_out});
  Tensor cls({cells, cls_out});
  simd::gemm_nn(cells, reg_out, in, x.raw(), reg_w_.value.raw(), reg.raw());
  simd::gemm_nn(cells, cls_out, in, x.raw(), cls_w_.value.raw(), cls.raw());
  for (std::size_t i = 0; i < reg.size(); ++i) reg[i] += reg_b_.value[i % reg_out];
  for (std::size_t i = 0; i < cls.size(); ++i) cls[i] += cls_b_.value[i % cls_out];
  if (cache) cache->cells = std::move(x);
  const std::size_t anchors = cells * anchors_per_cell_;
  return TpnOutput{reg.reshaped({anchors, 4 * frames}), cls.reshaped({anchors, 2})};
}

Tensor TpnHeads::backward(const Cache& cache, const ClipFeature& feature, const Tensor& dregression,
                          const Tensor& dlogits) {
  const std::size_t frames = feature.frames(), c = feature.channels();
  const std::size_t cells = feature.height() * feature.width(), in = frames * c;
  const std::size_t reg_out = reg_b_.value.size(), cls_out = cls_b_.value.size();
  if (dregression.size() != cells * reg_out || dlogits.size() != cells * cls_out) {
    throw DimensionError("tpn_heads backward: upstream shape");
  }
  simd::gemm_tn(in, reg_out, cells, cache.cells.raw(), dregression.raw(), reg_w_.grad.raw());
  simd::gemm_tn(in, cls_out, cells, cache.cells.raw(), dlogits.raw(), cls_w_.grad.raw());
  for (std::size_t i = 0; i < dregression.size(); ++i) reg_b_.grad[i % reg_out] += dregression[i];
  for (std::size_t i = 0; i < dlogits.size(); ++i) cls_b_.grad[i % cls_out] += dlogits[i];

  Tensor dx({cells, in});
  simd::gemm_nt(cells, in, reg_out, dregression.raw(), reg_w_.value.raw(), dx.raw());
  simd::gemm_nt(cells, in, cls_out, dlogits.raw(), cls_w_.value.raw(), dx.raw());
  Tensor dfeature = Tensor::zeros_like(feature.values);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const double* src = dx.raw() + cell * in + t * c;
      std::copy(src, src + c, dfeature.raw() + (t * cells + cell) * c);
    }
  }
  return dfeature;
}

ParameterList TpnHeads::parameters() { return {&reg_w_, &reg_b_, &cls_w_, &cls_b_}; }

TpnLoss tpn_loss(const TpnOutput& out, const AnchorAssignment& assignment,
                 const std::vector<std::size_t>& sampled, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("tpn_loss: lambda must be non-negative");
  const std::size_t anchors = out.actionness_logits.dim(0);
  if (assignment.labels.size() != anchors || out.regression.dim(0) != anchors) {
    throw DimensionError("tpn_loss: assignment size does not match head output");
  }
  TpnLoss loss;
  loss.dregression = Tensor::zeros_like(out.regression);
  loss.dlogits = Tensor::zeros_like(out.actionness_logits);
  if (sampled.empty()) return loss;

  const std::size_t width = out.regression.dim(1);
  Tensor logits({sampled.size(), 2});
  std::vector<int> labels(sampled.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    const std::size_t a = sampled[i];
    if (a >= anchors) throw std::out_of_range("tpn_loss: sampled anchor out of range");
    logits(i, 0) = out.actionness_logits(a, 0);
    logits(i, 1) = out.actionness_logits(a, 1);
    labels[i] = assignment.labels[a] == AnchorLabel::kPositive ? 1 : 0;
    positives += static_cast<std::size_t>(labels[i]);
  }
  const LossResult cls = classification_loss(logits, labels);
  loss.classification = cls.value;
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    loss.dlogits(sampled[i], 0) += cls.grad(i, 0);
    loss.dlogits(sampled[i], 1) += cls.grad(i, 1);
  }
  if (positives > 0 && lambda > 0.0) {
    const double scale = lambda / static_cast<double>(positives);
    for (std::size_t i = 0; i < sampled.size(); ++i) {
      if (labels[i] != 1) continue;
      const std::size_t a = sampled[i];
      Tensor pred({width});
      std::copy(out.regression.raw() + a * width, out.regression.raw() + (a + 1) * width, pred.raw());
      const LossResult reg = smooth_l1(pred, assignment.regression_targets[a]);
      loss.regression += scale * reg.value;
      for (std::size_t j = 0; j < width; ++j) loss.dregression(a, j) += scale * reg.grad[j];
    }
  }
  loss.value = loss.classification + loss.regression;
  return loss;
}

std::vector<std::size_t> sample_minibatch(const AnchorAssignment& assignment, std::size_t size,
                                          double pos_fraction, std::uint64_t seed) {
  if (size == 0) throw std::invalid_argument("sample_minibatch: size must be >= 1");
  std::vector<std::size_t> pos, neg;
  for (std::size_t a = 0; a < assignment.labels.size(); ++a) {
    if (assignment.labels[a] == AnchorLabel::kPositive) pos.push_back(a);
    else if (assignment.labels[a] == AnchorLabel::kNegative) neg.push_back(a);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  const auto pos_cap = static_cast<std::size_t>(std::floor(static_cast<double>(size) * pos_fraction));
  const std::size_t npos = std::min(pos.size(), pos_cap);
  const std::size_t nneg = std::min(neg.size(), size - npos);
  std::vector<std::size_t> out(pos.begin(), pos.begin() + static_cast<long>(npos));
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<long>(nneg));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Tubelet> propose(const TpnOutput& out, const AnchorGrid& grid,
                             const ProposalOptions& options) {
  const std::vector<Tubelet> anchors = generate_anchors(grid);
  if (anchors.size() != out.regression.dim(0)) {
    throw DimensionError("propose: head output does not match anchor grid");
  }
  const Tensor prob = softmax_rows(out.actionness_logits);
  const ImageBounds bounds{grid.image_width(), grid.image_height()};
  const std::size_t width = out.regression.dim(1);
  std::vector<Tubelet> decoded;
  decoded.reserve(anchors.size());
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    Tensor deltas({width});
    std::copy(out.regression.raw() + a * width, out.regression.raw() + (a + 1) * width, deltas.raw());
    Tubelet t = decode_boxes(anchors[a], deltas, bounds);
    t.actionness = prob(a, 1);
    decoded.push_back(std::move(t));
  }
  return nms_tubelets(decoded, options.nms_iou, options.keep_top);
}

}  // namespace lstr
