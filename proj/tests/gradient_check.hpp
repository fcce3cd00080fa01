#pragma once

// Random models and samples plus a central-difference gradient check.

#include <algorithm>
#include <cmath>

#include "hyperseg/training.hpp"
#include "support.hpp"

namespace hyperseg::testing {

struct Slot {
  std::vector<double>* param;
  const std::vector<double>* grad;
};

inline std::vector<Slot> slots(ModelParams& p, const Gradients& g) {
  return {{&p.backbone.w1, &g.w1}, {&p.backbone.b1, &g.b1},          {&p.backbone.w2, &g.w2},
          {&p.backbone.b2, &g.b2}, {&p.bank.offsets(), &g.offsets}, {&p.bank.orientations(), &g.orientations}};
}

inline SegSample random_sample(Rng& rng, std::size_t h, std::size_t w, std::size_t f, std::size_t classes,
                               double ignore_rate) {
  SegSample s{Field<double>(h, w, f), LabelMap(h, w)};
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& v : s.features.data()) v = g(rng);
  for (auto& l : s.labels.data())
    l = hyperseg::testing::uniform(rng, 0.0, 1.0) < ignore_rate
            ? kIgnoreLabel
            : static_cast<std::uint8_t>(hyperseg::testing::uniform_index(rng, 0, classes - 1));
  return s;
}

inline ModelParams random_params(Rng& rng, std::size_t f, std::size_t n, const ClassHierarchy& tree, Curvature c) {
  ModelParams p = init_params(f, n, tree, c, rng());
  const double radius = c.euclidean() ? 1.0 : 0.6 / c.sqrt();
  for (std::size_t y = 0; y < p.bank.size(); ++y) {
    const Vector o = hyperseg::testing::ball_point(rng, n, radius);
    std::copy(o.begin(), o.end(), p.bank.offset(y).begin());
  }
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& v : p.bank.orientations()) v = g(rng);
  return p;
}

// Largest |analytic - numeric| over all parameters, relative to the largest
// numeric derivative.
inline double gradient_error(ModelParams params, const SegSample& sample, const ClassHierarchy& tree) {
  const LossGradient lg = gradients(params, sample, tree);
  double max_diff = 0.0, max_ref = 0.0;
  for (const Slot& s : slots(params, lg.grads)) {
    for (std::size_t k = 0; k < s.param->size(); ++k) {
      const double saved = (*s.param)[k];
      const double h = 1e-5;
      (*s.param)[k] = saved + h;
      const double up = forward(params, sample, tree).loss;
      (*s.param)[k] = saved - h;
      const double down = forward(params, sample, tree).loss;
      (*s.param)[k] = saved;
      const double numeric = (up - down) / (2 * h);
      max_diff = std::max(max_diff, std::abs((*s.grad)[k] - numeric));
      max_ref = std::max(max_ref, std::abs(numeric));
    }
  }
  return max_diff / std::max(max_ref, 1e-8);
}

}  // namespace hyperseg::testing
