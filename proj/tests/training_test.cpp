#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "hyperseg/training.hpp"
#include "gradient_check.hpp"
#include "support.hpp"

using namespace hyperseg;
using namespace hyperseg::testing;

namespace {

bool same_bytes(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Forward, AllIgnoredGivesZeroLossAndGradients) {
  Rng rng(41);
  const auto tree = hyperseg::testing::random_tree(rng, 3, 6);
  SegSample s = random_sample(rng, 3, 3, 4, tree.leaf_count(), 1.0);
  const ModelParams p = random_params(rng, 4, 3, tree, Curvature(1.0));
  EXPECT_EQ(forward(p, s, tree).loss, 0.0);
  const LossGradient g = gradients(p, s, tree);
  EXPECT_EQ(g.loss, 0.0);
  EXPECT_EQ(g.labelled, 0u);
  for (const auto* v : {&g.grads.w1, &g.grads.b1, &g.grads.w2, &g.grads.b2, &g.grads.offsets, &g.grads.orientations})
    for (double x : *v) EXPECT_EQ(x, 0.0);
}

TEST(Forward, NearUniformInitGivesLogC) {
  const auto tree = ClassHierarchy::flat(5);
  SegSample s{Field<double>(1, 1, 3, 0.5), LabelMap(1, 1, 2)};
  const ModelParams p = init_params(3, 2, tree, Curvature(1.0), 0);
  EXPECT_NEAR(forward(p, s, tree).loss, std::log(5.0), 0.05);
}

TEST(Forward, BitReproducible) {
  Rng rng(42);
  const auto tree = hyperseg::testing::random_tree(rng, 3, 8);
  const SegSample s = random_sample(rng, 5, 4, 3, tree.leaf_count(), 0.1);
  const ModelParams p = random_params(rng, 3, 4, tree, Curvature(1.0));
  const double a = forward(p, s, tree).loss;
  const double b = forward(p, s, tree).loss;
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}

TEST(Gradients, MatchFiniteDifferences) {
  Rng rng(43);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = hyperseg::testing::uniform_index(rng, 1, 8);
    const std::size_t f = hyperseg::testing::uniform_index(rng, 1, 4);
    const auto tree = hyperseg::testing::random_tree(rng, 3, 10);
    const Curvature c(std::vector<double>{0.0, 0.1, 1.0, 2.0}[t % 4]);
    const SegSample s = random_sample(rng, 2, 3, f, tree.leaf_count(), 0.2);
    const double err = gradient_error(random_params(rng, f, n, tree, c), s, tree);
    worst = std::max(worst, err);
    EXPECT_LE(err, 1e-4) << "config " << t << " c=" << c.value() << " n=" << n;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Gradients, EuclideanModeMatchesHandWrittenBackprop) {
  Rng rng(44);
  for (int t = 0; t < 20; ++t) {
    const auto tree = hyperseg::testing::random_tree(rng, 3, 8);
    const std::size_t f = 3, n = 4, hid = 2 * n, P = tree.plane_count();
    const ModelParams p = random_params(rng, f, n, tree, Curvature(0.0));
    const SegSample s = random_sample(rng, 3, 2, f, tree.leaf_count(), 0.2);
    const LossGradient got = gradients(p, s, tree);

    // Linear head zeta_y = 4 <u - p_y, w_y> on u = W2 relu(W1 x + b1) + b2.
    const Backbone& b = p.backbone;
    std::vector<double> dw1(b.w1.size()), db1(hid), dw2(b.w2.size()), db2(n), dp(P * n), dw(P * n);
    std::size_t labelled = 0;
    for (std::uint8_t l : s.labels.data()) labelled += l != kIgnoreLabel;
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      if (s.labels[i] == kIgnoreLabel) continue;
      const auto x = s.features.pixel(i);
      std::vector<double> a(hid), h(hid), u(n);
      for (std::size_t j = 0; j < hid; ++j) {
        a[j] = b.b1[j];
        for (std::size_t k = 0; k < f; ++k) a[j] += b.w1[j * f + k] * x[k];
        h[j] = a[j] > 0 ? a[j] : 0;
      }
      for (std::size_t o = 0; o < n; ++o) {
        u[o] = b.b2[o];
        for (std::size_t j = 0; j < hid; ++j) u[o] += b.w2[o * hid + j] * h[j];
      }
      std::vector<double> zeta(P);
      for (std::size_t y = 0; y < P; ++y)
        for (std::size_t o = 0; o < n; ++o)
          zeta[y] += 4 * (u[o] - p.bank.offset(y)[o]) * p.bank.orientation(y)[o];
      // dNLL/dzeta: for every sibling group on the path, softmax minus one-hot.
      std::vector<double> gz(P, 0.0);
      for (std::size_t node : tree.path(tree.leaf_node(s.labels[i]))) {
        const auto& group = tree.siblings(node);
        double mx = -INFINITY, z = 0;
        for (std::size_t g : group) mx = std::max(mx, zeta[g - 1]);
        for (std::size_t g : group) z += std::exp(zeta[g - 1] - mx);
        for (std::size_t g : group) gz[g - 1] += std::exp(zeta[g - 1] - mx) / z - (g == node ? 1 : 0);
      }
      for (double& v : gz) v /= static_cast<double>(labelled);
      std::vector<double> du(n, 0.0);
      for (std::size_t y = 0; y < P; ++y)
        for (std::size_t o = 0; o < n; ++o) {
          du[o] += 4 * gz[y] * p.bank.orientation(y)[o];
          dp[y * n + o] -= 4 * gz[y] * p.bank.orientation(y)[o];
          dw[y * n + o] += 4 * gz[y] * (u[o] - p.bank.offset(y)[o]);
        }
      std::vector<double> dh(hid, 0.0);
      for (std::size_t o = 0; o < n; ++o) {
        db2[o] += du[o];
        for (std::size_t j = 0; j < hid; ++j) {
          dw2[o * hid + j] += du[o] * h[j];
          dh[j] += du[o] * b.w2[o * hid + j];
        }
      }
      for (std::size_t j = 0; j < hid; ++j) {
        const double da = a[j] > 0 ? dh[j] : 0;
        db1[j] += da;
        for (std::size_t k = 0; k < f; ++k) dw1[j * f + k] += da * x[k];
      }
    }
    auto expect_close = [](const std::vector<double>& a, const std::vector<double>& b) {
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-8);
    };
    expect_close(got.grads.w1, dw1);
    expect_close(got.grads.b1, db1);
    expect_close(got.grads.w2, dw2);
    expect_close(got.grads.b2, db2);
    expect_close(got.grads.offsets, dp);
    expect_close(got.grads.orientations, dw);
  }
}

TEST(LrSchedule, Examples) {
  EXPECT_DOUBLE_EQ(lr_schedule(0, 100, 0.01), 0.01);
  EXPECT_DOUBLE_EQ(lr_schedule(100, 100, 0.01), 0.0);
  EXPECT_NEAR(lr_schedule(50, 100, 1.0), 0.53589, 1e-5);
  EXPECT_NEAR(lr_schedule(50, 100, 1.0), std::pow(0.5, 0.9), 1e-15);
  EXPECT_THROW(lr_schedule(0, 0, 0.01), std::invalid_argument);
  EXPECT_THROW(lr_schedule(101, 100, 0.01), std::out_of_range);
}

TEST(SgdStep, Examples) {
  std::vector<double> theta{1.0, -2.0}, m{0.0, 0.0};
  sgd_step(theta, std::vector<double>{0.0, 0.0}, m, 0.1);
  EXPECT_EQ(theta, (std::vector<double>{1.0, -2.0}));

  const std::vector<double> g{0.5, 1.0};
  sgd_step(theta, g, m, 0.1);
  EXPECT_DOUBLE_EQ(theta[0], 1.0 - 0.1 * 0.5);
  EXPECT_DOUBLE_EQ(theta[1], -2.0 - 0.1 * 1.0);
  sgd_step(theta, g, m, 0.1);
  EXPECT_DOUBLE_EQ(m[0], 1.9 * 0.5);
  EXPECT_DOUBLE_EQ(m[1], 1.9 * 1.0);
}

TEST(RsgdStep, Examples) {
  const Curvature c(1.0);
  const Vector p{0.3, -0.4};
  EXPECT_EQ(rsgd_step(p, Vector{0.0, 0.0}, 0.5, c), p);

  const Vector g{0.8, -1.2};
  const Vector from_origin = rsgd_step(Vector{0.0, 0.0}, g, 0.1, c);
  const Vector want = exp_map_origin(Vector{-0.1 * g[0] / 4, -0.1 * g[1] / 4}, c);
  EXPECT_NEAR(from_origin[0], want[0], 1e-15);
  EXPECT_NEAR(from_origin[1], want[1], 1e-15);
}

TEST(RsgdStep, StaysInsideBall) {
  Rng rng(45);
  for (double cv : {0.1, 1.0, 2.0}) {
    const Curvature c(cv);
    Vector p(3, 0.0);
    for (int i = 0; i < 10000; ++i) {
      Vector g = hyperseg::testing::gaussian_vector(rng, 3);
      const double scale = hyperseg::testing::uniform(rng, 0.0, 10.0) / norm(g);
      for (double& v : g) v *= scale;
      p = rsgd_step(p, g, hyperseg::testing::uniform(rng, 0.0, 1.0), c);
      ASSERT_LT(cv * squared_norm(p), 1.0);
    }
  }
}

TEST(Training, LossDecreasesMonotonicallyOnSeparablePixel) {
  const auto tree = ClassHierarchy::from_parents(
      {{"root", std::nullopt}, {"a", "root"}, {"x", "a"}, {"y", "a"}, {"b", "root"}, {"z", "b"}});
  SegSample s{Field<double>(1, 1, 2), LabelMap(1, 1, 1)};
  s.features(0, 0, 0) = 1.0;
  s.features(0, 0, 1) = -0.5;
  ModelParams p = init_params(2, 2, tree, Curvature(1.0), 3);
  OptimState state = OptimState::for_params(p, 50, 0.01);
  double prev = forward(p, s, tree).loss;
  for (int step = 0; step < 50; ++step) {
    apply_update(p, gradients(p, s, tree).grads, state);
    const double now = forward(p, s, tree).loss;
    EXPECT_LT(now, prev) << "step " << step;
    prev = now;
  }
}

TEST(Training, OneEpochOnTrivialSampleReducesLoss) {
  const auto tree = ClassHierarchy::flat(3);
  SegSample s{Field<double>(2, 2, 2, 1.0), LabelMap(2, 2, 0)};
  const Dataset data{s};
  const TrainConfig cfg{2, 1.0, 0.01, 1, 9};
  const double before = forward(init_params(2, 2, tree, Curvature(1.0), cfg.seed), s, tree).loss;
  const TrainResult r = train(cfg, data, tree);
  EXPECT_LT(forward(r.params, s, tree).loss, before);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.log[0].epoch, 1u);
}

TEST(Training, DeterministicGivenSeed) {
  Rng rng(46);
  const auto tree = hyperseg::testing::random_tree(rng, 2, 5);
  Dataset data;
  for (int i = 0; i < 3; ++i) data.push_back(random_sample(rng, 4, 4, 3, tree.leaf_count(), 0.1));
  const TrainConfig cfg{3, 1.0, 0.01, 4, 17};
  const TrainResult a = train(cfg, data, tree);
  const TrainResult b = train(cfg, data, tree);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    EXPECT_EQ(a.log[e].loss, b.log[e].loss);
    EXPECT_EQ(a.log[e].pixel_accuracy, b.log[e].pixel_accuracy);
  }
  EXPECT_TRUE(same_bytes(a.params.backbone.w1, b.params.backbone.w1));
  EXPECT_TRUE(same_bytes(a.params.backbone.w2, b.params.backbone.w2));
  EXPECT_TRUE(same_bytes(a.params.bank.offsets(), b.params.bank.offsets()));
  EXPECT_TRUE(same_bytes(a.params.bank.orientations(), b.params.bank.orientations()));

  const TrainResult other = train({3, 1.0, 0.01, 4, 18}, data, tree);
  EXPECT_FALSE(same_bytes(a.params.backbone.w1, other.params.backbone.w1));
}

TEST(Training, OffsetsStayInsideBall) {
  Rng rng(47);
  const auto tree = hyperseg::testing::random_tree(rng, 2, 6);
  Dataset data;
  for (int i = 0; i < 2; ++i) data.push_back(random_sample(rng, 6, 6, 3, tree.leaf_count(), 0.0));
  const TrainResult r = train({2, 2.0, 0.5, 10, 1}, data, tree);
  for (std::size_t y = 0; y < r.params.bank.size(); ++y) EXPECT_LT(2.0 * squared_norm(r.params.bank.offset(y)), 1.0);
}

TEST(Training, RejectsEmptyDataset) {
  EXPECT_THROW(train({}, Dataset{}, ClassHierarchy::flat(2)), std::invalid_argument);
}

TEST(Model, SaveLoadRoundTrip) {
  Rng rng(48);
  const auto tree = hyperseg::testing::random_tree(rng, 3, 7);
  const ModelParams p = random_params(rng, 3, 4, tree, Curvature(0.7));
  const auto path = std::filesystem::temp_directory_path() / "hyperseg_model_test.json";
  save_model(path, p, tree);
  const auto [q, t] = load_model(path);
  std::filesystem::remove(path);
  EXPECT_EQ(q.curvature().value(), 0.7);
  EXPECT_EQ(q.dims(), 4u);
  EXPECT_EQ(t.node_count(), tree.node_count());
  EXPECT_TRUE(same_bytes(q.backbone.w1, p.backbone.w1));
  EXPECT_TRUE(same_bytes(q.backbone.b2, p.backbone.b2));
  EXPECT_TRUE(same_bytes(q.bank.offsets(), p.bank.offsets()));
  EXPECT_TRUE(same_bytes(q.bank.orientations(), p.bank.orientations()));
}
