#include "hyperseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace hyperseg {

namespace {

using Index = std::ptrdiff_t;

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

// Maps gz (gradient w.r.t. the projected exp_0(u)) to the gradient w.r.t. u.
void exp_origin_backward(std::span<const double> u, Curvature c, std::span<const double> gz,
                         std::span<double> gu) {
  const double r = norm(u);
  if (c.euclidean() || r < kSmallNorm) {
    std::copy(gz.begin(), gz.end(), gu.begin());
    return;
  }
  const double sc = c.sqrt();
  const double t = sc * r;
  const double th = std::tanh(t);
  const double s = th / t;
  // ds/dr = sqrt(c) (t sech^2 t - tanh t) / t^2, series -2t/3 near zero.
  const double ds_dt = t < 1e-4 ? -2.0 * t / 3.0 : (t * (1.0 - th * th) - th) / (t * t);
  const double ds_dr = sc * ds_dt;

  Vector g0(gz.begin(), gz.end());
  const double rho = s * r;
  const double limit = c.max_norm();
  if (rho > limit) {
    double along = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) along += u[i] / r * gz[i];
    for (std::size_t i = 0; i < u.size(); ++i) g0[i] = limit / rho * (gz[i] - along * u[i] / r);
  }
  const double radial = ds_dr * dot(g0, u) / r;
  for (std::size_t i = 0; i < u.size(); ++i) gu[i] = s * g0[i] + radial * u[i];
}

nlohmann::json to_json(const Vector& v) { return nlohmann::json(v); }

Vector vector_from(const nlohmann::json& j, const char* key, std::size_t expected) {
  Vector v = j.at(key).get<Vector>();
  if (v.size() != expected) throw std::runtime_error(std::string("model file: wrong size for ") + key);
  return v;
}

}  // namespace

Backbone Backbone::init(std::size_t inputs, std::size_t outputs, std::mt19937_64& rng) {
  Backbone b;
  b.inputs = inputs;
  b.hidden = 2 * outputs;
  b.outputs = outputs;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(inputs));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(b.hidden));
  std::uniform_real_distribution<double> u1(-s1, s1), u2(-s2, s2);
  b.w1.resize(b.hidden * inputs);
  b.b1.resize(b.hidden);
  b.w2.resize(outputs * b.hidden);
  b.b2.resize(outputs);
  for (double& v : b.w1) v = u1(rng);
  for (double& v : b.b1) v = u1(rng);
  for (double& v : b.w2) v = u2(rng);
  for (double& v : b.b2) v = u2(rng);
  return b;
}

void Backbone::forward(std::span<const double> x, std::span<double> pre_hidden, std::span<double> out) const {
  for (std::size_t j = 0; j < hidden; ++j)
    pre_hidden[j] = b1[j] + dot({w1.data() + j * inputs, inputs}, x);
  for (std::size_t k = 0; k < outputs; ++k) {
    double v = b2[k];
    for (std::size_t j = 0; j < hidden; ++j) v += w2[k * hidden + j] * std::max(pre_hidden[j], 0.0);
    out[k] = v;
  }
}

ModelParams init_params(std::size_t feature_dim, std::size_t dims, const ClassHierarchy& tree, Curvature c,
                        std::uint64_t seed) {
  if (feature_dim == 0 || dims == 0) throw std::invalid_argument("init_params: dimensions must be positive");
  std::mt19937_64 rng(seed);
  ModelParams p{Backbone::init(feature_dim, dims, rng), GyroplaneBank(tree.plane_count(), dims, c)};
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : p.bank.orientations()) v = 0.01 * normal(rng);
  return p;
}

Gradients Gradients::zeros_like(const ModelParams& p) {
  const Backbone& b = p.backbone;
  return {Vector(b.w1.size(), 0.0),        Vector(b.b1.size(), 0.0),
          Vector(b.w2.size(), 0.0),        Vector(b.b2.size(), 0.0),
          Vector(p.bank.offsets().size(), 0.0), Vector(p.bank.orientations().size(), 0.0)};
}

void Gradients::add_scaled(const Gradients& o, double scale) {
  axpy(scale, o.w1, w1);
  axpy(scale, o.b1, b1);
  axpy(scale, o.w2, w2);
  axpy(scale, o.b2, b2);
  axpy(scale, o.offsets, offsets);
  axpy(scale, o.orientations, orientations);
}

Field<double> embed(const ModelParams& params, const Field<double>& features) {
  const Backbone& b = params.backbone;
  if (features.channels() != b.inputs) throw std::invalid_argument("embed: feature dimension mismatch");
  const Curvature c = params.curvature();
  Field<double> out(features.height(), features.width(), b.outputs);
  const auto pixels = static_cast<Index>(features.pixels());
#pragma omp parallel
  {
    Vector pre(b.hidden), u(b.outputs);
#pragma omp for schedule(static)
    for (Index i = 0; i < pixels; ++i) {
      b.forward(features.pixel(static_cast<std::size_t>(i)), pre, u);
      const Vector z = exp_map_origin(u, c);
      std::copy(z.begin(), z.end(), out.pixel(static_cast<std::size_t>(i)).begin());
    }
  }
  return out;
}

ForwardResult forward(const ModelParams& params, const SegSample& sample, const ClassHierarchy& tree) {
  if (sample.labels.height() != sample.features.height() || sample.labels.width() != sample.features.width())
    throw std::invalid_argument("forward: label and feature grids differ in shape");
  if (params.bank.size() != tree.plane_count())
    throw std::invalid_argument("forward: gyroplane bank does not match the hierarchy");
  ForwardResult r;
  r.embeddings = embed(params, sample.features);
  r.logits = logits_tractable(r.embeddings, params.bank);
  const auto leaves = tree.all_leaves();
  double total = 0.0;
  for (std::size_t i = 0; i < sample.labels.size(); ++i) {
    const std::uint8_t label = sample.labels[i];
    if (label == kIgnoreLabel) continue;
    if (label >= tree.leaf_count()) throw std::out_of_range("forward: label outside the leaf range");
    const auto row = r.logits.values.pixel(i);
    total += hierarchical_nll(row, tree, label);
    if (predict_leaf(row, tree, leaves) == label) ++r.correct;
    ++r.labelled;
  }
  r.loss = r.labelled ? total / static_cast<double>(r.labelled) : 0.0;
  return r;
}

double logit_backward(std::span<const double> z, std::span<const double> p, std::span<const double> w,
                      Curvature c, double g, std::span<double> grad_z, std::span<double> grad_p,
                      std::span<double> grad_w) {
  const std::size_t n = z.size();
  const double k = c.value();
  const double P = squared_norm(p);
  const double lambda = conformal_factor(p, c);

  if (c.euclidean()) {
    // zeta = 2 lambda <z - p, w> with lambda = 2.
    double inner = 0.0;
    for (std::size_t i = 0; i < n; ++i) inner += (z[i] - p[i]) * w[i];
    for (std::size_t i = 0; i < n; ++i) {
      grad_z[i] += g * 2.0 * lambda * w[i];
      grad_p[i] -= g * 2.0 * lambda * w[i];
      grad_w[i] += g * 2.0 * lambda * (z[i] - p[i]);
    }
    return 2.0 * lambda * inner;
  }

  Vector p_hat(n), m(n), gm(n);
  for (std::size_t i = 0; i < n; ++i) p_hat[i] = -p[i];
  const double Z = squared_norm(z);
  const double a = dot(p_hat, z);
  const double D = 1.0 + 2.0 * k * a + k * k * P * Z;
  if (!(std::abs(D) >= kMinDenominator)) throw std::domain_error("logit_backward: degenerate denominator");
  const double alpha = (1.0 + 2.0 * k * a + k * Z) / D;
  const double beta = (1.0 - k * P) / D;
  for (std::size_t i = 0; i < n; ++i) m[i] = alpha * p_hat[i] + beta * z[i];
  const double I = dot(m, w);
  const double S = squared_norm(m);
  const double wn = norm(w);
  const double den = 1.0 - k * S;
  if (!(den >= kMinDenominator)) throw std::domain_error("logit_backward: Mobius sum at the ball boundary");
  const double sc = c.sqrt();
  const double A = 2.0 * sc * I / (den * wn);
  const double asinh_a = std::asinh(A);
  const double zeta = lambda * wn / sc * asinh_a;
  if (g == 0.0) return zeta;

  const double gA = g * lambda * wn / (sc * std::sqrt(1.0 + A * A));
  // Through the conformal factor: d lambda / dp = lambda^2 c p.
  const double g_lambda = g * wn * asinh_a / sc;
  // Through |w| in the prefactor and inside A.
  const double g_wn = g * lambda * asinh_a / sc - gA * A / wn;
  const double gI = gA * 2.0 * sc / (den * wn);
  const double gS = gA * A * k / den;
  for (std::size_t i = 0; i < n; ++i) {
    grad_w[i] += g_wn * w[i] / wn + gI * m[i];
    gm[i] = gI * w[i] + 2.0 * gS * m[i];
  }
  const double g_alpha = dot(gm, p_hat);
  const double g_beta = dot(gm, z);
  const double ga = (g_alpha * (2.0 * k - alpha * 2.0 * k) + g_beta * (-beta * 2.0 * k)) / D;
  const double gP = (g_alpha * (-alpha * k * k * Z) + g_beta * (-k - beta * k * k * Z)) / D;
  const double gZ = (g_alpha * (k - alpha * k * k * P) + g_beta * (-beta * k * k * P)) / D;
  for (std::size_t i = 0; i < n; ++i) {
    const double g_phat = alpha * gm[i] + ga * z[i] + 2.0 * gP * p_hat[i];
    grad_z[i] += beta * gm[i] + ga * p_hat[i] + 2.0 * gZ * z[i];
    grad_p[i] += -g_phat + g_lambda * lambda * lambda * k * p[i];
  }
  return zeta;
}

LossGradient gradients(const ModelParams& params, const SegSample& sample, const ClassHierarchy& tree) {
  const ForwardResult fwd = forward(params, sample, tree);
  LossGradient out{fwd.loss, fwd.labelled, fwd.correct, Gradients::zeros_like(params)};
  if (fwd.labelled == 0) return out;

  const Backbone& b = params.backbone;
  const Curvature c = params.curvature();
  const std::size_t n = b.outputs;
  const std::size_t planes = params.bank.size();
  const double scale = 1.0 / static_cast<double>(fwd.labelled);
  Vector pre(b.hidden), u(n), g_logits(planes), gz(n), gu(n), gh(b.hidden);

  for (std::size_t i = 0; i < sample.labels.size(); ++i) {
    const std::uint8_t label = sample.labels[i];
    if (label == kIgnoreLabel || fwd.logits.flagged[i]) continue;
    const auto x = sample.features.pixel(i);
    const auto z = fwd.embeddings.pixel(i);

    std::fill(g_logits.begin(), g_logits.end(), 0.0);
    hierarchical_nll_backward(fwd.logits.values.pixel(i), tree, label, scale, g_logits);

    std::fill(gz.begin(), gz.end(), 0.0);
    for (std::size_t y = 0; y < planes; ++y) {
      if (g_logits[y] == 0.0) continue;
      logit_backward(z, params.bank.offset(y), params.bank.orientation(y), c, g_logits[y], gz,
                     std::span<double>(out.grads.offsets.data() + y * n, n),
                     std::span<double>(out.grads.orientations.data() + y * n, n));
    }

    b.forward(x, pre, u);
    exp_origin_backward(u, c, gz, gu);
    for (std::size_t k = 0; k < n; ++k) {
      out.grads.b2[k] += gu[k];
      for (std::size_t j = 0; j < b.hidden; ++j) out.grads.w2[k * b.hidden + j] += gu[k] * std::max(pre[j], 0.0);
    }
    for (std::size_t j = 0; j < b.hidden; ++j) {
      double v = 0.0;
      if (pre[j] > 0.0)
        for (std::size_t k = 0; k < n; ++k) v += b.w2[k * b.hidden + j] * gu[k];
      gh[j] = v;
    }
    for (std::size_t j = 0; j < b.hidden; ++j) {
      if (gh[j] == 0.0) continue;
      out.grads.b1[j] += gh[j];
      axpy(gh[j], x, std::span<double>(out.grads.w1.data() + j * b.inputs, b.inputs));
    }
  }
  return out;
}

double lr_schedule(std::size_t t, std::size_t total, double lr0) {
  if (total == 0) throw std::invalid_argument("lr_schedule: total steps must be positive");
  if (t > total) throw std::out_of_range("lr_schedule: step beyond the schedule");
  return lr0 * std::pow(1.0 - static_cast<double>(t) / static_cast<double>(total), 0.9);
}

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> momentum, double lr) {
  if (params.size() != grads.size() || params.size() != momentum.size())
    throw std::invalid_argument("sgd_step: shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    momentum[i] = kMomentum * momentum[i] + grads[i];
    params[i] -= lr * momentum[i];
  }
}

Vector rsgd_step(std::span<const double> p, std::span<const double> grad, double lr, Curvature c) {
  const double shrink = 1.0 - c.value() * squared_norm(p);
  const double scale = -lr * shrink * shrink / 4.0;
  Vector step(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) step[i] = scale * grad[i];
  return project_to_ball(exp_map_at(p, step, c), c);
}

OptimState OptimState::for_params(const ModelParams& p, std::size_t total_steps, double lr0) {
  OptimState s{Gradients::zeros_like(p), 0, total_steps, lr0};
  return s;
}

void apply_update(ModelParams& params, const Gradients& grads, OptimState& state) {
  const double lr = lr_schedule(std::min(state.step, state.total), state.total, state.lr0);
  Backbone& b = params.backbone;
  sgd_step(b.w1, grads.w1, state.momentum.w1, lr);
  sgd_step(b.b1, grads.b1, state.momentum.b1, lr);
  sgd_step(b.w2, grads.w2, state.momentum.w2, lr);
  sgd_step(b.b2, grads.b2, state.momentum.b2, lr);
  sgd_step(params.bank.orientations(), grads.orientations, state.momentum.orientations, lr);
  const std::size_t n = params.dims();
  for (std::size_t y = 0; y < params.bank.size(); ++y) {
    const Vector next =
        rsgd_step(params.bank.offset(y), std::span<const double>(grads.offsets.data() + y * n, n), lr,
                  params.curvature());
    std::copy(next.begin(), next.end(), params.bank.offset(y).begin());
  }
  ++state.step;
}

TrainResult train(const TrainConfig& cfg, const Dataset& data, const ClassHierarchy& tree) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  TrainResult result{init_params(data.front().features.channels(), cfg.dims, tree, Curvature(cfg.curvature), cfg.seed),
                     {}};
  OptimState state = OptimState::for_params(result.params, cfg.epochs * data.size(), cfg.lr0);
  std::mt19937_64 order_rng(cfg.seed ^ 0x5eedf00dULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    std::size_t labelled = 0, correct = 0;
    for (std::size_t idx : order) {
      const LossGradient lg = gradients(result.params, data[idx], tree);
      loss_sum += lg.loss * static_cast<double>(lg.labelled);
      labelled += lg.labelled;
      correct += lg.correct;
      apply_update(result.params, lg.grads, state);
    }
    result.log.push_back({epoch + 1, labelled ? loss_sum / static_cast<double>(labelled) : 0.0,
                          labelled ? static_cast<double>(correct) / static_cast<double>(labelled) : 0.0});
  }
  return result;
}

void save_model(const std::filesystem::path& path, const ModelParams& params, const ClassHierarchy& tree) {
  const Backbone& b = params.backbone;
  nlohmann::json j;
  j["curvature"] = params.curvature().value();
  j["dims"] = params.dims();
  j["inputs"] = b.inputs;
  j["hidden"] = b.hidden;
  j["w1"] = to_json(b.w1);
  j["b1"] = to_json(b.b1);
  j["w2"] = to_json(b.w2);
  j["b2"] = to_json(b.b2);
  j["offsets"] = to_json(params.bank.offsets());
  j["orientations"] = to_json(params.bank.orientations());
  j["hierarchy"] = nlohmann::json::parse(tree.to_json());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file " + path.string());
  out << j.dump() << '\n';
}

std::pair<ModelParams, ClassHierarchy> load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed model file: ") + e.what());
  }
  ClassHierarchy tree = ClassHierarchy::from_json(j.at("hierarchy").dump());
  const auto dims = j.at("dims").get<std::size_t>();
  const auto inputs = j.at("inputs").get<std::size_t>();
  const auto hidden = j.at("hidden").get<std::size_t>();
  ModelParams p;
  p.backbone.inputs = inputs;
  p.backbone.hidden = hidden;
  p.backbone.outputs = dims;
  p.backbone.w1 = vector_from(j, "w1", hidden * inputs);
  p.backbone.b1 = vector_from(j, "b1", hidden);
  p.backbone.w2 = vector_from(j, "w2", dims * hidden);
  p.backbone.b2 = vector_from(j, "b2", dims);
  p.bank = GyroplaneBank(tree.plane_count(), dims, Curvature(j.at("curvature").get<double>()));
  p.bank.offsets() = vector_from(j, "offsets", tree.plane_count() * dims);
  p.bank.orientations() = vector_from(j, "orientations", tree.plane_count() * dims);
  return {std::move(p), std::move(tree)};
}

}  // namespace hyperseg
