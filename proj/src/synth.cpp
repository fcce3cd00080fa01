#include "hyperseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace hyperseg {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::size_t nearest_mean(std::span<const double> x, const std::vector<std::vector<double>>& means) {
  std::size_t best = 0;
  double best_d = squared_distance(x, means[0]);
  for (std::size_t k = 1; k < means.size(); ++k) {
    const double d = squared_distance(x, means[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

void paint_rect(LabelMap& labels, std::int64_t top, std::int64_t left, std::int64_t h, std::int64_t w,
                std::uint8_t cls) {
  const auto rows = static_cast<std::int64_t>(labels.height());
  const auto cols = static_cast<std::int64_t>(labels.width());
  for (std::int64_t r = std::max<std::int64_t>(top, 0); r < std::min(top + h, rows); ++r)
    for (std::int64_t c = std::max<std::int64_t>(left, 0); c < std::min(left + w, cols); ++c)
      labels(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = cls;
}

void paint_disc(LabelMap& labels, double cy, double cx, double radius, std::uint8_t cls) {
  for (std::size_t r = 0; r < labels.height(); ++r)
    for (std::size_t c = 0; c < labels.width(); ++c) {
      const double dy = static_cast<double>(r) - cy;
      const double dx = static_cast<double>(c) - cx;
      if (dy * dy + dx * dx <= radius * radius) labels(r, c) = cls;
    }
}

}  // namespace

std::optional<std::size_t> background_leaf(const ClassHierarchy& tree) { return tree.leaf_by_name("background"); }

ClassHierarchy toy_hierarchy() {
  return ClassHierarchy::from_parents({{"root", std::nullopt},
                                       {"scenery", "root"},
                                       {"background", "scenery"},
                                       {"grass", "scenery"},
                                       {"water", "scenery"},
                                       {"objects", "root"},
                                       {"cat", "objects"},
                                       {"dog", "objects"},
                                       {"car", "objects"}});
}

std::vector<std::vector<double>> class_means(const ClassHierarchy& tree, std::size_t feature_dim) {
  // Leaves are grouped by parent. Group g is centred at 5 e_g on its own axis;
  // leaf j of a group is offset by e_(G+j) / sqrt(2) on a separate set of axes.
  std::map<std::size_t, std::size_t> group_of_parent;
  std::vector<std::size_t> group(tree.leaf_count());
  std::vector<std::size_t> slot(tree.leaf_count());
  std::vector<std::size_t> group_size;
  for (std::size_t leaf = 0; leaf < tree.leaf_count(); ++leaf) {
    const std::size_t parent = *tree.node(tree.leaf_node(leaf)).parent;
    const auto [it, inserted] = group_of_parent.emplace(parent, group_of_parent.size());
    if (inserted) group_size.push_back(0);
    group[leaf] = it->second;
    slot[leaf] = group_size[it->second]++;
  }
  const std::size_t groups = group_size.size();
  const std::size_t widest = *std::max_element(group_size.begin(), group_size.end());
  const std::size_t center_axes = groups > 1 ? groups : 0;
  if (center_axes + widest > feature_dim)
    throw std::invalid_argument("class_means: feature dimension too small for this hierarchy");

  std::vector<std::vector<double>> means(tree.leaf_count(), std::vector<double>(feature_dim, 0.0));
  for (std::size_t leaf = 0; leaf < tree.leaf_count(); ++leaf) {
    if (center_axes > 0) means[leaf][group[leaf]] = 5.0;
    means[leaf][center_axes + slot[leaf]] = 1.0 / std::sqrt(2.0);
  }
  return means;
}

Dataset generate(const GeneratorConfig& cfg, const ClassHierarchy& tree, std::uint64_t seed) {
  const auto bg = background_leaf(tree);
  if (!bg) throw std::invalid_argument("generate: hierarchy has no \"background\" leaf");
  if (tree.leaf_count() >= kIgnoreLabel) throw std::invalid_argument("generate: too many classes");
  if (cfg.min_shapes > cfg.max_shapes || cfg.min_rect_side > cfg.max_rect_side ||
      cfg.min_disc_radius > cfg.max_disc_radius || cfg.height == 0 || cfg.width == 0)
    throw std::invalid_argument("generate: inconsistent generator config");

  const auto means = class_means(tree, cfg.feature_dim);
  std::vector<std::uint8_t> foreground;
  for (std::size_t leaf = 0; leaf < tree.leaf_count(); ++leaf)
    if (leaf != *bg) foreground.push_back(static_cast<std::uint8_t>(leaf));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t H = cfg.height, W = cfg.width, F = cfg.feature_dim;
  const auto radius = static_cast<std::int64_t>(cfg.edge_radius);

  Dataset out;
  out.reserve(cfg.samples);
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    SegSample sample{Field<double>(H, W, F), LabelMap(H, W, static_cast<std::uint8_t>(*bg))};
    const std::size_t shapes =
        std::uniform_int_distribution<std::size_t>(cfg.min_shapes, cfg.max_shapes)(rng);
    for (std::size_t k = 0; k < shapes && !foreground.empty(); ++k) {
      const std::uint8_t cls =
          foreground[std::uniform_int_distribution<std::size_t>(0, foreground.size() - 1)(rng)];
      const bool disc = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
      const double cy = std::uniform_real_distribution<double>(0.0, static_cast<double>(H))(rng);
      const double cx = std::uniform_real_distribution<double>(0.0, static_cast<double>(W))(rng);
      if (disc) {
        const auto r = std::uniform_int_distribution<std::size_t>(cfg.min_disc_radius, cfg.max_disc_radius)(rng);
        paint_disc(sample.labels, cy, cx, static_cast<double>(r), cls);
      } else {
        const auto h = std::uniform_int_distribution<std::int64_t>(
            static_cast<std::int64_t>(cfg.min_rect_side), static_cast<std::int64_t>(cfg.max_rect_side))(rng);
        const auto w = std::uniform_int_distribution<std::int64_t>(
            static_cast<std::int64_t>(cfg.min_rect_side), static_cast<std::int64_t>(cfg.max_rect_side))(rng);
        paint_rect(sample.labels, static_cast<std::int64_t>(cy) - h / 2, static_cast<std::int64_t>(cx) - w / 2, h,
                   w, cls);
      }
    }

    // Clean features: own class mean mixed with the local box average of
    // class means. A pixel whose mixed mean would be nearer another class is
    // mixed less, so the noiseless features always keep their own class nearest.
    std::vector<double> clean(F), blur(F);
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c) {
        std::fill(blur.begin(), blur.end(), 0.0);
        std::size_t count = 0;
        for (std::int64_t dr = -radius; dr <= radius; ++dr)
          for (std::int64_t dc = -radius; dc <= radius; ++dc) {
            const auto rr = static_cast<std::int64_t>(r) + dr;
            const auto cc = static_cast<std::int64_t>(c) + dc;
            if (rr < 0 || cc < 0 || rr >= static_cast<std::int64_t>(H) || cc >= static_cast<std::int64_t>(W)) continue;
            const auto& m = means[sample.labels(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc))];
            for (std::size_t f = 0; f < F; ++f) blur[f] += m[f];
            ++count;
          }
        const std::size_t label = sample.labels(r, c);
        const auto& own = means[label];
        double mix = cfg.edge_mix;
        for (int attempt = 0; attempt < 8; ++attempt, mix *= 0.5) {
          for (std::size_t f = 0; f < F; ++f)
            clean[f] = (1.0 - mix) * own[f] + mix * blur[f] / static_cast<double>(count);
          if (nearest_mean(clean, means) == label) break;
        }
        if (nearest_mean(clean, means) != label) clean = own;
        auto px = sample.features.pixel(r, c);
        for (std::size_t f = 0; f < F; ++f)
          px[f] = static_cast<double>(static_cast<float>(clean[f] + cfg.noise * noise(rng)));
      }
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace hyperseg
