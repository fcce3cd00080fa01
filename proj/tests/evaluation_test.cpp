#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "hyperseg/distance_transform.hpp"
#include "hyperseg/evaluation.hpp"
#include "support.hpp"

using namespace hyperseg;
using hyperseg::testing::Rng;
using hyperseg::testing::uniform_index;

namespace {

ConfusionMatrix from_pairs(std::size_t classes, const std::vector<int>& gt, const std::vector<int>& pred) {
  ConfusionMatrix m(classes);
  for (std::size_t i = 0; i < gt.size(); ++i) m.add(gt[i], pred[i]);
  return m;
}

void expect_all(const MetricSet& m, double v) {
  EXPECT_DOUBLE_EQ(m.pixel_accuracy, v);
  EXPECT_DOUBLE_EQ(m.class_accuracy, v);
  EXPECT_DOUBLE_EQ(m.mean_iou, v);
}

LabelMap random_labels(Rng& rng, std::size_t h, std::size_t w, std::size_t classes, double ignore_rate) {
  LabelMap l(h, w);
  for (auto& v : l.data())
    v = hyperseg::testing::uniform(rng, 0.0, 1.0) < ignore_rate ? kIgnoreLabel
                                                                 : static_cast<std::uint8_t>(uniform_index(rng, 0, classes - 1));
  return l;
}

// A model whose embedding is the input feature itself (2-D, c = 1).
ModelParams identity_model(const ClassHierarchy& tree) {
  ModelParams p = init_params(2, 2, tree, Curvature(1.0), 0);
  Backbone& b = p.backbone;
  std::fill(b.w1.begin(), b.w1.end(), 0.0);
  std::fill(b.b1.begin(), b.b1.end(), 0.0);
  std::fill(b.w2.begin(), b.w2.end(), 0.0);
  std::fill(b.b2.begin(), b.b2.end(), 0.0);
  // hidden = (x0, -x0, x1, -x1) after relu; u = (h0 - h1, h2 - h3) = x.
  b.w1[0 * 2 + 0] = 1;
  b.w1[1 * 2 + 0] = -1;
  b.w1[2 * 2 + 1] = 1;
  b.w1[3 * 2 + 1] = -1;
  b.w2[0 * 4 + 0] = 1;
  b.w2[0 * 4 + 1] = -1;
  b.w2[1 * 4 + 2] = 1;
  b.w2[1 * 4 + 3] = -1;
  return p;
}

}  // namespace

TEST(Metrics, PerfectPrediction) {
  const auto tree = toy_hierarchy();
  ConfusionMatrix m(tree.leaf_count());
  for (std::size_t y = 0; y < tree.leaf_count(); ++y) m.add(y, y, y + 1);
  const MetricRecord r = compute_metrics(m, tree);
  for (auto v : {MetricVariant::kStandard, MetricVariant::kSibling, MetricVariant::kCousin}) expect_all(r[v], 1.0);
}

TEST(Metrics, HandWorkedExample) {
  const auto tree = ClassHierarchy::flat(2);
  const MetricRecord r = compute_metrics(from_pairs(2, {0, 0, 1, 1}, {0, 1, 1, 1}), tree);
  EXPECT_EQ(r[MetricVariant::kStandard].pixel_accuracy, 0.75);
  EXPECT_EQ(r[MetricVariant::kStandard].class_accuracy, 0.75);
  EXPECT_DOUBLE_EQ(r[MetricVariant::kStandard].mean_iou, 7.0 / 12.0);
}

TEST(Metrics, SharedParentMakesSiblingPerfect) {
  const auto tree = ClassHierarchy::from_parents(
      {{"root", std::nullopt}, {"p", "root"}, {"a", "p"}, {"b", "p"}, {"q", "root"}, {"c", "q"}});
  const MetricRecord r = compute_metrics(from_pairs(3, {0, 0, 1, 1}, {0, 1, 1, 1}), tree);
  EXPECT_EQ(r[MetricVariant::kStandard].pixel_accuracy, 0.75);
  expect_all(r[MetricVariant::kSibling], 1.0);
  expect_all(r[MetricVariant::kCousin], 1.0);
}

TEST(Metrics, CousinNeedsSharedGrandparent) {
  // a, b under p; c under q; p and q under g. d under r, directly below the root.
  const auto tree = ClassHierarchy::from_parents({{"root", std::nullopt}, {"g", "root"}, {"p", "g"}, {"a", "p"},
                                                  {"b", "p"}, {"q", "g"}, {"c", "q"}, {"r", "root"}, {"d", "r"}});
  EXPECT_TRUE(relaxed_match(tree, 0, 1, MetricVariant::kSibling));
  EXPECT_FALSE(relaxed_match(tree, 0, 2, MetricVariant::kSibling));
  EXPECT_TRUE(relaxed_match(tree, 0, 2, MetricVariant::kCousin));
  EXPECT_TRUE(relaxed_match(tree, 0, 1, MetricVariant::kCousin));
  EXPECT_FALSE(relaxed_match(tree, 0, 3, MetricVariant::kCousin));
  EXPECT_FALSE(relaxed_match(tree, 3, 0, MetricVariant::kCousin));
}

TEST(Metrics, DominanceAndRange) {
  Rng rng(51);
  for (int t = 0; t < 1000; ++t) {
    const auto tree = hyperseg::testing::random_tree(rng, 4, 12);
    const std::size_t C = tree.leaf_count();
    ConfusionMatrix m(C);
    for (std::size_t g = 0; g < C; ++g)
      for (std::size_t p = 0; p < C; ++p)
        if (hyperseg::testing::uniform(rng, 0.0, 1.0) < 0.4) m.add(g, p, uniform_index(rng, 0, 20));
    if (m.total() == 0) m.add(0, C - 1);
    const MetricRecord r = compute_metrics(m, tree);
    const MetricSet& s = r[MetricVariant::kStandard];
    const MetricSet& sib = r[MetricVariant::kSibling];
    const MetricSet& cou = r[MetricVariant::kCousin];
    EXPECT_GE(sib.pixel_accuracy, s.pixel_accuracy);
    EXPECT_GE(cou.pixel_accuracy, sib.pixel_accuracy);
    EXPECT_GE(sib.class_accuracy, s.class_accuracy);
    EXPECT_GE(cou.class_accuracy, sib.class_accuracy);
    EXPECT_GE(sib.mean_iou, s.mean_iou);
    EXPECT_GE(cou.mean_iou, sib.mean_iou);
    for (const MetricSet& x : r.variants)
      for (double v : {x.pixel_accuracy, x.class_accuracy, x.mean_iou}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
  }
}

TEST(Metrics, IgnoredPixelsDoNotChangeAnything) {
  Rng rng(52);
  const auto tree = toy_hierarchy();
  const LabelMap gt = random_labels(rng, 8, 8, 6, 0.0);
  const LabelMap pred = random_labels(rng, 8, 8, 6, 0.0);
  ConfusionMatrix a(6);
  a.accumulate(gt, pred);

  LabelMap gt2(8, 16, kIgnoreLabel), pred2(8, 16);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) {
      gt2(r, c) = gt(r, c);
      pred2(r, c) = pred(r, c);
      pred2(r, c + 8) = static_cast<std::uint8_t>(uniform_index(rng, 0, 5));
    }
  ConfusionMatrix b(6);
  b.accumulate(gt2, pred2);
  const MetricRecord ra = compute_metrics(a, tree), rb = compute_metrics(b, tree);
  for (std::size_t v = 0; v < 3; ++v) {
    EXPECT_EQ(ra.variants[v].pixel_accuracy, rb.variants[v].pixel_accuracy);
    EXPECT_EQ(ra.variants[v].class_accuracy, rb.variants[v].class_accuracy);
    EXPECT_EQ(ra.variants[v].mean_iou, rb.variants[v].mean_iou);
  }
}

TEST(Metrics, Errors) {
  const auto tree = ClassHierarchy::flat(2);
  EXPECT_THROW(compute_metrics(ConfusionMatrix(2), tree), std::invalid_argument);
  EXPECT_THROW(compute_metrics(from_pairs(3, {0}, {0}), tree), std::invalid_argument);
  ConfusionMatrix m(2);
  EXPECT_THROW(m.add(2, 0), std::out_of_range);
}

TEST(Metrics, TableHasAllVariants) {
  std::ostringstream out;
  write_metrics_table(out, compute_metrics(from_pairs(2, {0, 1}, {0, 1}), ClassHierarchy::flat(2)));
  const std::string s = out.str();
  for (const char* row : {"PA,standard", "CA,sibling", "mIOU,cousin"}) EXPECT_NE(s.find(row), std::string::npos);
}

TEST(DistanceTransform, MatchesBruteForce) {
  Rng rng(53);
  for (int t = 0; t < 30; ++t) {
    const std::size_t classes = uniform_index(rng, 2, 4);
    LabelMap labels(32, 32);
    // Blocky maps plus speckle so that both long and short distances occur.
    const std::size_t block = uniform_index(rng, 1, 12);
    for (std::size_t r = 0; r < 32; ++r)
      for (std::size_t c = 0; c < 32; ++c)
        labels(r, c) = static_cast<std::uint8_t>(((r / block) * 7 + (c / block) * 3) % classes);
    for (int k = 0; k < 20; ++k) {
      auto& v = labels(uniform_index(rng, 0, 31), uniform_index(rng, 0, 31));
      v = uniform_index(rng, 0, 5) == 0 ? kIgnoreLabel : static_cast<std::uint8_t>(uniform_index(rng, 0, classes - 1));
    }
    const Map2D<double> fast = boundary_distance(labels);
    const Map2D<double> serial = boundary_distance_serial(labels);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const std::size_t r = i / 32, c = i % 32;
      if (labels[i] == kIgnoreLabel) {
        EXPECT_TRUE(std::isnan(fast[i]));
        continue;
      }
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < labels.size(); ++j) {
        if (labels[j] == kIgnoreLabel || labels[j] == labels[i]) continue;
        const double dr = double(r) - double(j / 32), dc = double(c) - double(j % 32);
        best = std::min(best, std::sqrt(dr * dr + dc * dc));
      }
      EXPECT_NEAR(fast[i], best, 1e-12);
      EXPECT_EQ(fast[i], serial[i]);
    }
  }
}

TEST(DistanceTransform, SquaredEdtEdgeCases) {
  Map2D<std::uint8_t> none(4, 5, 0);
  const Map2D<double> empty = squared_edt(none);
  for (double v : empty.data()) EXPECT_TRUE(std::isinf(v));
  Map2D<std::uint8_t> one(4, 5, 0);
  one(1, 2) = 1;
  const Map2D<double> d = squared_edt(one);
  EXPECT_EQ(d(1, 2), 0.0);
  EXPECT_EQ(d(3, 4), 4.0 + 4.0);
  EXPECT_EQ(d, squared_edt_serial(one));
  const LabelMap single(3, 3, 2);
  const Map2D<double> flat = boundary_distance(single);
  for (double v : flat.data()) EXPECT_TRUE(std::isinf(v));
}

TEST(Pearson, ExamplesAndBounds) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  EXPECT_NEAR(pearson(x, x), 1.0, 1e-15);
  const std::vector<double> neg{5, 4, 3, 2, 1};
  EXPECT_NEAR(pearson(x, neg), -1.0, 1e-15);
  bool degenerate = false;
  EXPECT_EQ(pearson(x, std::vector<double>(5, 0.3), &degenerate), 0.0);
  EXPECT_TRUE(degenerate);

  Rng rng(54);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = uniform_index(rng, 2, 50);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = hyperseg::testing::uniform(rng, -1e3, 1e3);
      b[i] = 3.0 * a[i] + hyperseg::testing::uniform(rng, -1e-9, 1e-9);
    }
    const double r = pearson(a, b);
    EXPECT_GE(r, -1.0 - 1e-12);
    EXPECT_LE(r, 1.0 + 1e-12);
  }
}

TEST(BoundaryAnalysis, ConfidenceEqualToDistanceCorrelatesPerfectly) {
  LabelMap labels(20, 20, 0);
  for (std::size_t r = 5; r < 15; ++r)
    for (std::size_t c = 5; c < 15; ++c) labels(r, c) = 1;
  const Map2D<double> dist = boundary_distance(labels);
  SegResult res{labels, dist, Map2D<std::uint8_t>(20, 20, 0)};
  const BoundaryReport rep = boundary_analysis(labels, res, 0);
  ASSERT_TRUE(rep.correlation.has_value());
  EXPECT_NEAR(*rep.correlation, 1.0, 1e-12);
  EXPECT_FALSE(rep.degenerate_variance);

  res.confidence = Map2D<double>(20, 20, 0.5);
  const BoundaryReport flat = boundary_analysis(labels, res, 0);
  EXPECT_EQ(*flat.correlation, 0.0);
  EXPECT_TRUE(flat.degenerate_variance);
}

TEST(BoundaryAnalysis, CheckerboardIsAllBoundary) {
  LabelMap labels(16, 16);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 16; ++c) labels(r, c) = static_cast<std::uint8_t>((r + c) % 2);
  const SegResult res{labels, Map2D<double>(16, 16, 0.7), Map2D<std::uint8_t>(16, 16, 0)};
  const BoundaryReport rep = boundary_analysis(labels, res, 0);
  EXPECT_EQ(rep.tri.count[0], 256u);
  EXPECT_EQ(rep.tri.count[1], 0u);
  EXPECT_EQ(rep.tri.count[2], 0u);
  EXPECT_FALSE(rep.tri.mean(1).has_value());
}

TEST(BoundaryAnalysis, SingleClassImageHasNoCorrelation) {
  const LabelMap labels(8, 8, 3);
  const SegResult res{labels, Map2D<double>(8, 8, 0.1), Map2D<std::uint8_t>(8, 8, 0)};
  const BoundaryReport rep = boundary_analysis(labels, res, 3);
  EXPECT_FALSE(rep.correlation.has_value());
  EXPECT_EQ(rep.tri.count[1], 64u);
}

TEST(Histogram, BinsCoverMinusOneToOne) {
  const auto h = correlation_histogram(std::vector<double>{-1.0, -0.05, 0.0, 0.5, 1.0}, 4);
  ASSERT_EQ(h.size(), 4u);
  EXPECT_EQ(h[0].low, -1.0);
  EXPECT_EQ(h[3].high, 1.0);
  EXPECT_EQ(h[0].count, 1u);
  EXPECT_EQ(h[1].count, 1u);
  EXPECT_EQ(h[2].count, 1u);
  EXPECT_EQ(h[3].count, 2u);
  EXPECT_THROW(correlation_histogram({}, 0), std::invalid_argument);
}

TEST(Segment, AllowedSetAndZeroEmbedding) {
  const auto tree = toy_hierarchy();
  ModelParams p = identity_model(tree);
  Rng rng(55);
  for (double& v : p.bank.orientations()) v = hyperseg::testing::uniform(rng, -1.0, 1.0);
  Field<double> features(4, 4, 2);
  for (double& v : features.data()) v = hyperseg::testing::uniform(rng, -0.5, 0.5);
  features(0, 0, 0) = features(0, 0, 1) = 0.0;

  const SegResult all = segment(p, features, tree, tree.all_leaves());
  EXPECT_EQ(all.confidence(0, 0), 0.0);
  const std::vector<std::size_t> only{4};
  const SegResult one = segment(p, features, tree, only);
  for (std::uint8_t v : one.prediction.data()) EXPECT_EQ(v, 4);
  EXPECT_THROW(segment(p, features, tree, {}), std::invalid_argument);
}

TEST(ZeroLabel, ProtocolRewritesUnseenLabels) {
  const auto tree = toy_hierarchy();
  SegSample only_unseen{Field<double>(2, 2, 2, 0.1), LabelMap(2, 2, 1)};
  SegSample mixed{Field<double>(2, 2, 2, 0.2), LabelMap(2, 2, 0)};
  mixed.labels(1, 1) = 4;
  const std::vector<std::size_t> unseen{4, 1};
  const ZeroLabelSplit split = zero_label_protocol({only_unseen, mixed}, unseen, tree);
  EXPECT_EQ(split.unseen, (std::vector<std::size_t>{1, 4}));
  for (std::uint8_t v : split.train[0].labels.data()) EXPECT_EQ(v, kIgnoreLabel);
  EXPECT_EQ(split.train[1].labels(1, 1), kIgnoreLabel);
  EXPECT_EQ(split.train[1].labels(0, 0), 0);

  const ModelParams p = init_params(2, 2, tree, Curvature(1.0), 0);
  const LossGradient g = gradients(p, split.train[0], tree);
  for (double v : g.grads.w1) EXPECT_EQ(v, 0.0);

  EXPECT_THROW(zero_label_protocol({mixed}, {}, tree), std::invalid_argument);
  EXPECT_THROW(zero_label_protocol({mixed}, std::vector<std::size_t>{9}, tree), std::out_of_range);
  EXPECT_THROW(zero_label_protocol({mixed}, tree.all_leaves(), tree), std::invalid_argument);
}

TEST(ZeroLabel, RandomPredictorScoresOneOverUnseen) {
  const auto tree = toy_hierarchy();
  Rng rng(56);
  const std::vector<std::size_t> unseen{1, 4};
  ConfusionMatrix m(6);
  for (int i = 0; i < 20000; ++i) m.add(unseen[i % 2], unseen[uniform_index(rng, 0, 1)]);
  EXPECT_NEAR(compute_metrics(m, tree)[MetricVariant::kStandard].pixel_accuracy, 0.5, 0.02);
}

TEST(Evaluate, ScoredSubsetRestrictsRows) {
  const auto tree = toy_hierarchy();
  const ModelParams p = identity_model(tree);
  SegSample s{Field<double>(2, 2, 2, 0.1), LabelMap(2, 2, 0)};
  s.labels(0, 1) = 3;
  const std::vector<std::size_t> scored{3};
  const ConfusionMatrix m = evaluate(p, {s}, tree, tree.all_leaves(), scored);
  EXPECT_EQ(m.total(), 1u);
}
