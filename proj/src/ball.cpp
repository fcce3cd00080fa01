#include "hyperseg/ball.hpp"

#include <limits>

namespace hyperseg {

double Curvature::max_norm(double eps) const {
  if (euclidean()) return std::numeric_limits<double>::infinity();
  return (1.0 - eps) / sqrt();
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

double conformal_factor(std::span<const double> x, Curvature c) {
  const double denom = 1.0 - c.value() * squared_norm(x);
  if (denom <= 0.0) throw std::domain_error("conformal_factor: point outside the ball");
  return 2.0 / denom;
}

Vector mobius_add(std::span<const double> v, std::span<const double> w, Curvature c) {
  if (v.size() != w.size()) throw std::invalid_argument("mobius_add: dimension mismatch");
  const double k = c.value();
  const double vw = dot(v, w);
  const double vv = squared_norm(v);
  const double ww = squared_norm(w);
  const double denom = 1.0 + 2.0 * k * vw + k * k * vv * ww;
  if (denom < kMinDenominator) throw std::domain_error("mobius_add: degenerate denominator");
  const double a = (1.0 + 2.0 * k * vw + k * ww) / denom;
  const double b = (1.0 - k * vv) / denom;
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = a * v[i] + b * w[i];
  project_in_place(out, c);
  return out;
}

Vector exp_map_origin(std::span<const double> x, Curvature c) {
  Vector out(x.begin(), x.end());
  const double r = norm(x);
  if (c.euclidean() || r < kSmallNorm) return out;
  const double sc = c.sqrt();
  const double scale = std::tanh(sc * r) / (sc * r);
  for (double& v : out) v *= scale;
  project_in_place(out, c);
  return out;
}

Vector exp_map_at(std::span<const double> v, std::span<const double> x, Curvature c) {
  if (v.size() != x.size()) throw std::invalid_argument("exp_map_at: dimension mismatch");
  const double r = norm(x);
  if (r < kSmallNorm) return project_to_ball(v, c);
  if (c.euclidean()) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] + x[i];
    return out;
  }
  const double sc = c.sqrt();
  const double lambda = conformal_factor(v, c);
  const double scale = std::tanh(sc * lambda * r / 2.0) / (sc * r);
  Vector step(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) step[i] = scale * x[i];
  project_in_place(step, c);
  return mobius_add(v, step, c);
}

Vector project_to_ball(std::span<const double> x, Curvature c, double eps) {
  Vector out(x.begin(), x.end());
  project_in_place(out, c, eps);
  return out;
}

bool project_in_place(std::span<double> x, Curvature c, double eps) {
  if (c.euclidean()) return false;
  const double limit = c.max_norm(eps);
  const double r = norm(x);
  if (r <= limit) return false;
  const double s = limit / r;
  for (double& v : x) v *= s;
  return true;
}

}  // namespace hyperseg
