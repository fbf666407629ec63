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
#include <deque>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "lstr/error.hpp"
#include "lstr/tpn.hpp"
#include "toy.hpp"

namespace lstr {
namespace {

void zero_all(const ParameterList& params) {
  for (Parameter* p : params) p->value.fill(0.0);
}

AnchorAssignment labels_only(std::size_t positives, std::size_t negatives) {
  AnchorAssignment a;
  a.labels.assign(positives, AnchorLabel::kPositive);
  a.labels.resize(positives + negatives, AnchorLabel::kNegative);
  a.matched_gt.assign(a.labels.size(), std::nullopt);
  a.regression_targets.assign(a.labels.size(), Tensor());
  return a;
}

TEST(Backbone, DefaultShapeAndTemporalLength) {
  std::mt19937_64 rng(1);
  Backbone b(BackboneConfig{}, rng);
  const ClipFeature f = b.forward(toy::uniform_tensor({8, 64, 64, 3}, -0.5, 0.5, rng), nullptr);
  EXPECT_EQ(f.values.shape(), (Shape{8, 8, 8, 32}));
  EXPECT_EQ(f.stride, 8);
  for (int t = 1; t <= 16; ++t) {
    BackboneConfig cfg;
    cfg.frames = t;
    cfg.channels = {2, 2};
    Backbone small(cfg, rng);
    EXPECT_EQ(small.forward(Tensor({static_cast<std::size_t>(t), 8, 8, 3}, 0.3), nullptr).frames(),
              static_cast<std::size_t>(t));
  }
}

TEST(Backbone, ZeroParametersGiveZeroFeature) {
  std::mt19937_64 rng(2);
  Backbone b(BackboneConfig{}, rng);
  zero_all(b.parameters());
  const ClipFeature f = b.forward(toy::uniform_tensor({8, 64, 64, 3}, -1, 1, rng), nullptr);
  EXPECT_EQ(f.values.sum(), 0.0);
  EXPECT_THROW(b.forward(Tensor({8, 60, 64, 3}), nullptr), DimensionError);
}

TEST(TpnHeads, WidthsAndZeroLogits) {
  std::mt19937_64 rng(3);
  AnchorGrid grid;
  TpnHeads heads(8, 32, grid.anchors_per_cell(), rng);
  zero_all(heads.parameters());
  const ClipFeature f{toy::uniform_tensor({8, 8, 8, 32}, 0, 1, rng), 8};
  const TpnOutput out = heads.forward(f, grid, nullptr);
  EXPECT_EQ(out.regression.shape(), (Shape{grid.anchor_count(), 32}));
  EXPECT_EQ(out.actionness_logits.shape(), (Shape{grid.anchor_count(), 2}));
  EXPECT_EQ(out.actionness_logits.sum(), 0.0);
  const auto props = propose(out, grid, ProposalOptions{0.7, 1000});
  for (const Tubelet& t : props) EXPECT_DOUBLE_EQ(t.actionness, 0.5);
}

TEST(TpnLoss, ZeroLogitsNoPositivesIsLn2) {
  TpnOutput out{Tensor({6, 8}), Tensor({6, 2})};
  const AnchorAssignment a = labels_only(0, 6);
  std::vector<std::size_t> all(6);
  std::iota(all.begin(), all.end(), 0);
  const TpnLoss loss = tpn_loss(out, a, all, 1.0);
  EXPECT_NEAR(loss.value, std::log(2.0), 1e-15);
  EXPECT_EQ(loss.regression, 0.0);
}

TEST(TpnLoss, PerfectPredictionAndLambdaZero) {
  AnchorAssignment a = labels_only(2, 2);
  a.regression_targets[0] = Tensor({4}, std::vector<double>{0.1, -0.2, 0.3, 0.0});
  a.regression_targets[1] = Tensor({4}, std::vector<double>{0.0, 0.5, -0.1, 0.2});
  TpnOutput out{Tensor({4, 4}), Tensor({4, 2})};
  for (std::size_t i = 0; i < 2; ++i) {
    std::copy(a.regression_targets[i].raw(), a.regression_targets[i].raw() + 4, out.regression.raw() + 4 * i);
    out.actionness_logits(i, 1) = 60.0;
    out.actionness_logits(i + 2, 0) = 60.0;
  }
  const std::vector<std::size_t> all{0, 1, 2, 3};
  EXPECT_LT(tpn_loss(out, a, all, 1.0).value, 1e-20);

  out.regression.fill(1.0);
  const TpnLoss with = tpn_loss(out, a, all, 1.0), without = tpn_loss(out, a, all, 0.0);
  EXPECT_GT(with.regression, 0.0);
  EXPECT_EQ(without.value, without.classification);
  EXPECT_EQ(without.classification, with.classification);
  EXPECT_EQ(without.dregression.sum(), 0.0);
  EXPECT_THROW(tpn_loss(out, a, all, -1.0), std::invalid_argument);
}

TEST(TpnLoss, GradientCheckOnToyClip) {
  toy::TpnToy t(11);
  ASSERT_GT(std::count(t.assignment.labels.begin(), t.assignment.labels.end(), AnchorLabel::kPositive), 0);
  toy::Problem p = t.problem();
  EXPECT_LE(finite_diff_check(p.params, p.objective, 1e-5).max_rel_error, 1e-4);
}

TEST(SampleMinibatch, CompositionAndDeterminism) {
  const AnchorAssignment none = labels_only(0, 50);
  const auto s0 = sample_minibatch(none, 32, 0.5, 1);
  EXPECT_EQ(s0.size(), 32u);

  const AnchorAssignment many = labels_only(30, 70);
  const auto s1 = sample_minibatch(many, 32, 0.5, 9);
  EXPECT_EQ(std::count_if(s1.begin(), s1.end(), [](std::size_t i) { return i < 30; }), 16);
  EXPECT_EQ(s1.size(), 32u);
  EXPECT_TRUE(std::is_sorted(s1.begin(), s1.end()));
  EXPECT_EQ(s1, sample_minibatch(many, 32, 0.5, 9));
  EXPECT_NE(s1, sample_minibatch(many, 32, 0.5, 10));

  const AnchorAssignment few = labels_only(3, 70);
  const auto s2 = sample_minibatch(few, 32, 0.5, 4);
  EXPECT_EQ(std::count_if(s2.begin(), s2.end(), [](std::size_t i) { return i < 3; }), 3);
  EXPECT_EQ(s2.size(), 32u);
  EXPECT_THROW(sample_minibatch(few, 0, 0.5, 1), std::invalid_argument);
}

TEST(Propose, CapIdenticalAnchorsAndZeroDeltas) {
  AnchorGrid grid;
  grid.feature_height = grid.feature_width = 2;
  grid.scales = {8};
  grid.aspect_ratios = {1};
  grid.frames = 2;
  TpnOutput out{Tensor({4, 8}), Tensor({4, 2})};
  for (std::size_t a = 0; a < 4; ++a) out.actionness_logits(a, 1) = 0.1 * static_cast<double>(a);
  const auto anchors = generate_anchors(grid);
  const auto props = propose(out, grid, ProposalOptions{0.7, 300});
  ASSERT_EQ(props.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(props[i].boxes, anchors[3 - i].boxes);
  EXPECT_EQ(propose(out, grid, ProposalOptions{0.7, 2}).size(), 2u);

  AnchorGrid one = grid;
  one.feature_height = one.feature_width = 1;
  one.scales = {8, 8, 8};
  TpnOutput same{Tensor({3, 8}), Tensor({3, 2})};
  EXPECT_EQ(propose(same, one, ProposalOptions{0.7, 300}).size(), 1u);
}

TEST(TpnTraining, LossFallsOnOneClip) {
  toy::TpnToy t(5);
  toy::Problem p = t.problem();
  const LrSchedule constant{0.05, 0.05, 0.0, 1000000};
  std::deque<double> window;
  double initial = 0.0, first_avg = 0.0, last_avg = 0.0;
  for (int step = 0; step < 200; ++step) {
    zero_grads(p.params);
    const double v = p.objective(true);
    if (step == 0) initial = v;
    sgd_step(p.params, constant, 0.0, SgdOptions{0.9, 0.0});
    window.push_back(v);
    if (window.size() > 10) window.pop_front();
    const double avg = std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
    if (step == 9) first_avg = avg;
    last_avg = avg;
  }
  EXPECT_LT(last_avg, first_avg);
  EXPECT_LT(last_avg, 0.1 * initial);
}

}  // namespace
}  // namespace lstr
