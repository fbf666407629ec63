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
#include <random>

#include <gtest/gtest.h>

#include "lstr/error.hpp"
#include "lstr/long_term.hpp"
#include "toy.hpp"

namespace lstr {
namespace {

std::vector<ClipTubelets> random_clips(std::mt19937_64& rng, const std::vector<std::size_t>& counts, std::size_t d) {
  std::vector<ClipTubelets> clips(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i) clips[c].tubelets.push_back(toy::random_tubelet(rng, 2, 16, 4));
    if (counts[c] > 0) clips[c].features = toy::uniform_tensor({counts[c], d}, -1, 1, rng);
  }
  return clips;
}

std::size_t padding_slots(const TemporalWindow& w) {
  std::size_t n = 0;
  for (const WindowMember& m : w.members) n += m.padding;
  return n;
}

TEST(Window, RadiusZeroFullAndPadded) {
  std::mt19937_64 rng(1);
  const auto nine = random_clips(rng, std::vector<std::size_t>(9, 2), 3);
  const TemporalWindow w0 = build_window(nine, 4, 0, 3);
  EXPECT_EQ(w0.size(), 2u);
  EXPECT_EQ(w0.center_begin, 0u);
  EXPECT_EQ(w0.center_count, 2u);
  const TemporalWindow full = build_window(nine, 4, 4, 3);
  EXPECT_EQ(full.size(), 18u);
  EXPECT_EQ(padding_slots(full), 0u);
  EXPECT_EQ(full.center_begin, 8u);

  const auto three = random_clips(rng, {1, 2, 1}, 3);
  const TemporalWindow padded = build_window(three, 0, 4, 3);
  EXPECT_EQ(padding_slots(padded), 6u);
  EXPECT_EQ(padded.padding_count(), 6u);
  EXPECT_EQ(padded.size(), 6u + 4u);
  for (std::size_t i = 0; i < padded.size(); ++i) {
    if (!padded.members[i].padding) continue;
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(padded.features(i, j), 0.0);
    EXPECT_EQ(member_iou(padded, i, padded.center_begin), 0.0);
  }
  EXPECT_THROW(build_window(three, 0, -1, 3), std::invalid_argument);
  EXPECT_THROW(build_window(three, 0, 1, 4), DimensionError);
}

TEST(EdgeScores, SimilarityPlusOverlap) {
  std::mt19937_64 rng(2);
  LongTermRelation r(3, 1.0, rng);
  toy::randomize(r.parameters(), 0.5, rng);
  std::vector<ClipTubelets> clips(1);
  const Tubelet t = toy::random_tubelet(rng, 2, 16, 4);
  clips[0].tubelets = {t, t};
  clips[0].features = Tensor({2, 3}, std::vector<double>{0.3, -0.2, 0.9, 0.3, -0.2, 0.9});
  const TemporalWindow w = build_window(clips, 0, 0, 3);
  const Tensor e = r.edge_scores(w);
  // phi(f) = W f + b computed by hand.
  double norm2 = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double v = r.phi_bias().value[i];
    for (std::size_t j = 0; j < 3; ++j) v += r.phi_weight().value(i, j) * clips[0].features(0, j);
    norm2 += v * v;
  }
  EXPECT_NEAR(e(0, 1), norm2 + 1.0, 1e-12);

  LongTermRelation flat(3, 0.0, rng);
  for (Parameter* p : flat.parameters()) p->value.fill(0.0);
  clips[0].tubelets[1].boxes = {Box{40, 40, 50, 50}, Box{40, 40, 50, 50}};
  EXPECT_EQ(flat.edge_scores(build_window(clips, 0, 0, 3)).sum(), 0.0);
}

TEST(EdgeScores, GammaZeroIsPureSimilarity) {
  std::mt19937_64 rng(3);
  LongTermRelation a(4, 0.0, rng);
  LongTermRelation b = a;
  const auto clips = random_clips(rng, {2, 3}, 4);
  const TemporalWindow w = build_window(clips, 0, 1, 4);
  const Tensor e = a.edge_scores(w);
  const Tensor phi = [&] {
    Tensor p({w.size(), 4});
    for (std::size_t n = 0; n < w.size(); ++n) {
      for (std::size_t i = 0; i < 4; ++i) {
        double v = b.phi_bias().value[i];
        for (std::size_t j = 0; j < 4; ++j) v += b.phi_weight().value(i, j) * w.features(n, j);
        p(n, i) = v;
      }
    }
    return p;
  }();
  for (std::size_t i = 0; i < w.center_count; ++i) {
    for (std::size_t j = 0; j < w.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 4; ++k) dot += phi(w.center_begin + i, k) * phi(j, k);
      EXPECT_NEAR(e(i, j), dot, 1e-12);
    }
  }
}

TEST(Graph, RowsAreProbabilitiesAndShiftInvariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t nm = 1 + rng() % 4, n = 1 + rng() % 9;
    Tensor s({nm, n});
    for (double& v : s.values()) v = u(rng);
    const Tensor g = normalize_graph(s).weights;
    Tensor shifted = s;
    for (std::size_t i = 0; i < nm; ++i) {
      const double c = u(rng) * 10.0;
      for (std::size_t j = 0; j < n; ++j) shifted(i, j) += c;
    }
    const Tensor h = normalize_graph(shifted).weights;
    for (std::size_t i = 0; i < nm; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_GE(g(i, j), 0.0);
        EXPECT_NEAR(g(i, j), h(i, j), 1e-12);
        row += g(i, j);
        for (std::size_t k = 0; k < n; ++k) {
          if (s(i, j) > s(i, k)) {
            EXPECT_GE(g(i, j), g(i, k));
          }
        }
      }
      EXPECT_NEAR(row, 1.0, 1e-9);
    }
  }
  const Tensor uniform = normalize_graph(Tensor({1, 4}, 3.0)).weights;
  for (double v : uniform.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

// Z[i] = sum_j G[i, j] * (X[j] W), accumulated node by node.
Tensor gcn_oracle(const Tensor& g, const Tensor& x, const Tensor& w) {
  const std::size_t nm = g.dim(0), n = g.dim(1), d = x.dim(1);
  Tensor z({nm, d});
  for (std::size_t i = 0; i < nm; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t out = 0; out < d; ++out) {
        double xw = 0.0;
        for (std::size_t k = 0; k < d; ++k) xw += x(j, k) * w(k, out);
        z(i, out) += g(i, j) * xw;
      }
    }
  }
  return z;
}

TEST(Gcn, MatchesAggregationOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t d = 1 + rng() % 3;
    const std::size_t before = rng() % 3, center = 1 + rng() % 2;
    const auto clips = random_clips(rng, {before, center}, d);
    LongTermRelation r(d, 1.0, rng);
    toy::randomize(r.parameters(), 1.0, rng);
    const TemporalWindow w = build_window(clips, 1, 1, d);
    ASSERT_LE(w.size(), 5u);
    const RelationGraph g = normalize_graph(r.edge_scores(w));
    const Tensor z = r.gcn_forward(g, w);
    const Tensor want = gcn_oracle(g.weights, w.features, r.gcn_weight().value);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(z[i], want[i], 1e-12);
  }
}

TEST(Gcn, IdentityUniformAndZero) {
  std::mt19937_64 rng(6);
  LongTermRelation r(3, 1.0, rng);
  const auto clips = random_clips(rng, {3}, 3);
  TemporalWindow w = build_window(clips, 0, 0, 3);
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  r.gcn_weight().value = eye;
  EXPECT_EQ(r.gcn_forward(RelationGraph{eye}, w).values(), w.features.values());

  const Tensor z = r.gcn_forward(RelationGraph{Tensor({3, 3}, 1.0 / 3.0)}, w);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      const double mean = (w.features(0, k) + w.features(1, k) + w.features(2, k)) / 3.0;
      EXPECT_NEAR(z(i, k), mean, 1e-15);
    }
  }
  w.features.fill(0.0);
  EXPECT_EQ(r.gcn_forward(RelationGraph{eye}, w).sum(), 0.0);
  EXPECT_THROW(r.gcn_forward(RelationGraph{Tensor({2, 3})}, w), DimensionError);
}

TEST(LongTerm, SingleTubeletSelfLoop) {
  std::mt19937_64 rng(7);
  LongTermRelation r(4, 1.0, rng);
  toy::randomize(r.parameters(), 1.0, rng);
  const auto clips = random_clips(rng, {1}, 4);
  const TemporalWindow w = build_window(clips, 0, 0, 4);
  const Tensor z = r.forward(w, nullptr);
  const Tensor want = matmul(w.features, r.gcn_weight().value);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(z[i], want[i], 1e-12);
}

TEST(Classifier, ModesAndDropout) {
  std::mt19937_64 rng(8);
  ActionClassifier single(4, 3, LabelMode::kSingleLabel, 0.5, rng);
  const Tensor z = toy::uniform_tensor({5, 4}, -1, 1, rng);
  const Tensor p = single.classify(z, false, 1);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p(i, 0) + p(i, 1) + p(i, 2), 1.0, 1e-12);
  EXPECT_EQ(single.classify(z, false, 1).values(), single.classify(z, false, 2).values());
  EXPECT_EQ(single.classify(z, true, 3).values(), single.classify(z, true, 3).values());
  EXPECT_NE(single.classify(z, true, 3).values(), single.classify(z, true, 4).values());

  ActionClassifier::Cache cache;
  single.logits(z, true, 9, &cache);
  std::size_t kept = 0;
  for (double m : cache.mask.values()) {
    EXPECT_TRUE(m == 0.0 || m == 2.0);
    kept += m != 0.0;
  }
  EXPECT_GT(kept, 0u);
  EXPECT_LT(kept, z.size());

  ActionClassifier multi(4, 3, LabelMode::kMultiLabel, 0.5, rng);
  for (Parameter* q : multi.parameters()) q->value.fill(0.0);
  const Tensor half = multi.classify(z, false, 0);
  for (double v : half.values()) EXPECT_EQ(v, 0.5);
}

TEST(LongTerm, GradientCheckThroughClassifier) {
  for (LabelMode mode : {LabelMode::kSingleLabel, LabelMode::kMultiLabel}) {
    for (bool dropout : {false, true}) {
      toy::LongTermToy t(21, mode);
      t.dropout_active = dropout;
      toy::Problem p = t.problem();
      EXPECT_LE(finite_diff_check(p.params, p.objective, 1e-5).max_rel_error, 1e-4)
          << "multi " << (mode == LabelMode::kMultiLabel) << " dropout " << dropout;
    }
  }
}

}  // namespace
}  // namespace lstr
