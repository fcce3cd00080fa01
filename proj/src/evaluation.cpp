#include "hyperseg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "hyperseg/distance_transform.hpp"

namespace hyperseg {

namespace {

using Index = std::ptrdiff_t;

bool contains(std::span<const std::size_t> set, std::size_t v) {
  return std::find(set.begin(), set.end(), v) != set.end();
}

}  // namespace

SegResult segment(const ModelParams& params, const Field<double>& features, const ClassHierarchy& tree,
                  std::span<const std::size_t> allowed) {
  if (allowed.empty()) throw std::invalid_argument("segment: empty allowed set");
  const Field<double> z = embed(params, features);
  const LogitGrid logits = logits_tractable(z, params.bank);
  SegResult r{LabelMap(features.height(), features.width()), Map2D<double>(features.height(), features.width()),
              logits.flagged};
  const auto pixels = static_cast<Index>(features.pixels());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < pixels; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    r.prediction[idx] = static_cast<std::uint8_t>(predict_leaf(logits.values.pixel(idx), tree, allowed));
    r.confidence[idx] = origin_norm(z.pixel(idx));
  }
  return r;
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

void ConfusionMatrix::add(std::size_t gt, std::size_t pred, std::uint64_t count) {
  if (gt >= classes_ || pred >= classes_) throw std::out_of_range("ConfusionMatrix: class out of range");
  counts_[gt * classes_ + pred] += count;
}

void ConfusionMatrix::accumulate(const LabelMap& gt, const LabelMap& pred, std::span<const std::size_t> scored) {
  if (gt.height() != pred.height() || gt.width() != pred.width())
    throw std::invalid_argument("ConfusionMatrix: label map shapes differ");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kIgnoreLabel) continue;
    if (!scored.empty() && !contains(scored, gt[i])) continue;
    add(gt[i], pred[i]);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw std::invalid_argument("ConfusionMatrix: class count differs");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

const char* variant_name(MetricVariant v) {
  switch (v) {
    case MetricVariant::kStandard: return "standard";
    case MetricVariant::kSibling: return "sibling";
    case MetricVariant::kCousin: return "cousin";
  }
  return "?";
}

bool relaxed_match(const ClassHierarchy& tree, std::size_t gt, std::size_t pred, MetricVariant v) {
  if (gt == pred) return true;
  if (v == MetricVariant::kStandard) return false;
  if (tree.ancestor_at(gt, 1) == tree.ancestor_at(pred, 1)) return true;
  if (v == MetricVariant::kSibling) return false;
  const auto a = tree.ancestor_at(gt, 2);
  const auto b = tree.ancestor_at(pred, 2);
  return a && b && *a == *b;
}

MetricRecord compute_metrics(const ConfusionMatrix& conf, const ClassHierarchy& tree) {
  const std::size_t C = conf.classes();
  if (C != tree.leaf_count()) throw std::invalid_argument("compute_metrics: class count differs from the tree");
  const std::uint64_t total = conf.total();
  if (total == 0) throw std::invalid_argument("compute_metrics: empty confusion matrix");

  std::vector<std::uint64_t> rows(C, 0), cols(C, 0);
  for (std::size_t g = 0; g < C; ++g)
    for (std::size_t p = 0; p < C; ++p) {
      rows[g] += conf(g, p);
      cols[p] += conf(g, p);
    }

  MetricRecord record;
  for (MetricVariant v : {MetricVariant::kStandard, MetricVariant::kSibling, MetricVariant::kCousin}) {
    double correct = 0.0, recall_sum = 0.0, iou_sum = 0.0;
    std::size_t gt_classes = 0, present = 0;
    for (std::size_t y = 0; y < C; ++y) {
      std::uint64_t tp = 0, fp = 0;
      for (std::size_t p = 0; p < C; ++p)
        if (relaxed_match(tree, y, p, v)) tp += conf(y, p);
      for (std::size_t g = 0; g < C; ++g)
        if (!relaxed_match(tree, g, y, v)) fp += conf(g, y);
      correct += static_cast<double>(tp);
      if (rows[y] > 0) {
        recall_sum += static_cast<double>(tp) / static_cast<double>(rows[y]);
        ++gt_classes;
      }
      if (rows[y] > 0 || cols[y] > 0) {
        // tp + fn = rows[y]. A class predicted only where the relaxed rule
        // accepts it has nothing wrong to count: IoU 1.
        const std::uint64_t denom = rows[y] + fp;
        iou_sum += denom ? static_cast<double>(tp) / static_cast<double>(denom) : 1.0;
        ++present;
      }
    }
    MetricSet& m = record.variants[static_cast<std::size_t>(v)];
    m.pixel_accuracy = correct / static_cast<double>(total);
    m.class_accuracy = gt_classes ? recall_sum / static_cast<double>(gt_classes) : 0.0;
    m.mean_iou = present ? iou_sum / static_cast<double>(present) : 0.0;
  }
  return record;
}

void write_metrics_table(std::ostream& out, const MetricRecord& record) {
  out << "metric,variant,value\n";
  for (MetricVariant v : {MetricVariant::kStandard, MetricVariant::kSibling, MetricVariant::kCousin}) {
    const MetricSet& m = record[v];
    out << "PA," << variant_name(v) << ',' << m.pixel_accuracy << '\n';
    out << "CA," << variant_name(v) << ',' << m.class_accuracy << '\n';
    out << "mIOU," << variant_name(v) << ',' << m.mean_iou << '\n';
  }
}

void TriClassStats::merge(const TriClassStats& other) {
  for (std::size_t i = 0; i < 3; ++i) {
    sum[i] += other.sum[i];
    count[i] += other.count[i];
  }
}

std::optional<double> TriClassStats::mean(std::size_t group) const {
  if (count[group] == 0) return std::nullopt;
  return sum[group] / static_cast<double>(count[group]);
}

double pearson(std::span<const double> x, std::span<const double> y, bool* degenerate) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (degenerate) *degenerate = false;
  const auto n = static_cast<double>(x.size());
  if (x.empty()) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

BoundaryReport boundary_analysis(const LabelMap& labels, const SegResult& result,
                                 std::optional<std::size_t> background) {
  if (labels.height() != result.confidence.height() || labels.width() != result.confidence.width())
    throw std::invalid_argument("boundary_analysis: shape mismatch");
  const Map2D<double> dist = boundary_distance(labels);
  BoundaryReport report;
  std::vector<double> conf, d;
  bool multi_class = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kIgnoreLabel) continue;
    const double di = dist[i];
    if (std::isfinite(di)) multi_class = true;
    const std::size_t group = di <= kBoundaryBand ? 0 : (background && labels[i] == *background ? 1 : 2);
    report.tri.sum[group] += result.confidence[i];
    ++report.tri.count[group];
    conf.push_back(result.confidence[i]);
    d.push_back(di);
  }
  if (multi_class) report.correlation = pearson(conf, d, &report.degenerate_variance);
  return report;
}

std::vector<HistogramBin> correlation_histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("correlation_histogram: zero bins");
  std::vector<HistogramBin> out(bins);
  const double width = 2.0 / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b)
    out[b] = {-1.0 + width * static_cast<double>(b), -1.0 + width * static_cast<double>(b + 1), 0};
  for (double v : values) {
    auto b = static_cast<std::size_t>(std::floor((std::clamp(v, -1.0, 1.0) + 1.0) / width));
    ++out[std::min(b, bins - 1)].count;
  }
  return out;
}

ZeroLabelSplit zero_label_protocol(const Dataset& data, std::span<const std::size_t> unseen,
                                   const ClassHierarchy& tree) {
  if (unseen.empty()) throw std::invalid_argument("zero_label_protocol: no unseen classes");
  std::vector<std::size_t> sorted(unseen.begin(), unseen.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (std::size_t u : sorted)
    if (u >= tree.leaf_count()) throw std::out_of_range("zero_label_protocol: unknown leaf");
  if (sorted.size() >= tree.leaf_count())
    throw std::invalid_argument("zero_label_protocol: unseen set must be a proper subset of the leaves");

  ZeroLabelSplit split{data, sorted};
  for (SegSample& s : split.train)
    for (std::uint8_t& l : s.labels.data())
      if (l != kIgnoreLabel && contains(sorted, l)) l = kIgnoreLabel;
  return split;
}

ConfusionMatrix evaluate(const ModelParams& params, const Dataset& data, const ClassHierarchy& tree,
                         std::span<const std::size_t> allowed, std::span<const std::size_t> scored) {
  ConfusionMatrix conf(tree.leaf_count());
  for (const SegSample& s : data) {
    const SegResult r = segment(params, s.features, tree, allowed);
    conf.accumulate(s.labels, r.prediction, scored);
  }
  return conf;
}

}  // namespace hyperseg
