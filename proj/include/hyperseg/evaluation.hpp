#pragma once

// Inference, confusion-matrix metrics (standard, sibling and cousin variants),
// confidence/boundary analysis and the zero-label protocol.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hyperseg/hierarchy.hpp"
#include "hyperseg/synth.hpp"
#include "hyperseg/training.hpp"

namespace hyperseg {

struct SegResult {
  LabelMap prediction;       // leaf ids
  Map2D<double> confidence;  // Euclidean norm of each embedding
  Map2D<std::uint8_t> flagged;
};

/// Per-pixel hierarchical inference restricted to `allowed` leaves.
SegResult segment(const ModelParams& params, const Field<double>& features, const ClassHierarchy& tree,
                  std::span<const std::size_t> allowed);

/// Rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const { return classes_; }
  std::uint64_t operator()(std::size_t gt, std::size_t pred) const { return counts_[gt * classes_ + pred]; }
  std::uint64_t total() const;

  void add(std::size_t gt, std::size_t pred, std::uint64_t count = 1);
  /// Adds every pixel whose ground truth is not ignored (and, when `scored`
  /// is nonempty, whose ground truth is one of `scored`).
  void accumulate(const LabelMap& gt, const LabelMap& pred, std::span<const std::size_t> scored = {});
  void merge(const ConfusionMatrix& other);

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

enum class MetricVariant { kStandard = 0, kSibling = 1, kCousin = 2 };

const char* variant_name(MetricVariant v);

struct MetricSet {
  double pixel_accuracy = 0.0;
  double class_accuracy = 0.0;
  double mean_iou = 0.0;
};

struct MetricRecord {
  std::array<MetricSet, 3> variants;  // indexed by MetricVariant

  const MetricSet& operator[](MetricVariant v) const { return variants[static_cast<std::size_t>(v)]; }
};

/// True when a prediction counts as correct for a ground-truth class under
/// the variant: equal, sharing a parent (sibling), or sharing a grandparent (cousin).
bool relaxed_match(const ClassHierarchy& tree, std::size_t gt, std::size_t pred, MetricVariant v);

MetricRecord compute_metrics(const ConfusionMatrix& conf, const ClassHierarchy& tree);

/// "metric,variant,value" rows with a header.
void write_metrics_table(std::ostream& out, const MetricRecord& record);

struct TriClassStats {
  std::array<double, 3> sum{};            // boundary, background, foreground
  std::array<std::uint64_t, 3> count{};

  void merge(const TriClassStats& other);
  std::optional<double> mean(std::size_t group) const;
};

inline constexpr double kBoundaryBand = 10.0;

struct BoundaryReport {
  std::optional<double> correlation;  // empty when the image has a single class
  bool degenerate_variance = false;   // constant input; correlation reported as 0
  TriClassStats tri;
};

/// Pearson correlation of two equally long samples. Degenerate variance
/// returns 0 and sets `degenerate`.
double pearson(std::span<const double> x, std::span<const double> y, bool* degenerate = nullptr);

/// Correlates confidence with ground-truth boundary distance over labelled
/// pixels, and splits confidence into boundary (<= 10 px from another class),
/// background and foreground pixels.
BoundaryReport boundary_analysis(const LabelMap& labels, const SegResult& result,
                                 std::optional<std::size_t> background);

/// (bin_low, bin_high, count) rows over [-1, 1].
struct HistogramBin {
  double low;
  double high;
  std::size_t count;
};
std::vector<HistogramBin> correlation_histogram(std::span<const double> values, std::size_t bins);

struct ZeroLabelSplit {
  Dataset train;                        // unseen classes rewritten to the ignore label
  std::vector<std::size_t> unseen;      // inference candidates and scored classes
};

ZeroLabelSplit zero_label_protocol(const Dataset& data, std::span<const std::size_t> unseen,
                                   const ClassHierarchy& tree);

/// Confusion matrix of restricted inference over a dataset; only pixels whose
/// ground truth is in `scored` count when `scored` is nonempty.
ConfusionMatrix evaluate(const ModelParams& params, const Dataset& data, const ClassHierarchy& tree,
                         std::span<const std::size_t> allowed, std::span<const std::size_t> scored = {});

}  // namespace hyperseg
