#pragma once

// Desk-scale trainer for a per-pixel backbone followed by the hyperbolic
// classifier and the hierarchical cross-entropy.
//
//   u = W2 relu(W1 x + b1) + b2,   z = project(exp_0(u)),   zeta_h = logit(z, plane_h)
//
// Backbone weights and gyroplane orientations are Euclidean parameters updated
// by momentum SGD; gyroplane offsets live on the ball and are updated by RSGD.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "hyperseg/gyroplane.hpp"
#include "hyperseg/hierarchy.hpp"
#include "hyperseg/synth.hpp"

namespace hyperseg {

struct Backbone {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::size_t outputs = 0;
  Vector w1;  // hidden x inputs
  Vector b1;
  Vector w2;  // outputs x hidden
  Vector b2;

  /// Weights uniform in +-1/sqrt(fan_in); hidden width is twice the output dim.
  static Backbone init(std::size_t inputs, std::size_t outputs, std::mt19937_64& rng);

  /// Pre-activations of the hidden layer and the tangent-space output.
  void forward(std::span<const double> x, std::span<double> pre_hidden, std::span<double> out) const;
};

struct ModelParams {
  Backbone backbone;
  GyroplaneBank bank;

  Curvature curvature() const { return bank.curvature(); }
  std::size_t dims() const { return bank.dim(); }
};

/// Offsets at the origin, orientations 0.01 * N(0, 1).
ModelParams init_params(std::size_t feature_dim, std::size_t dims, const ClassHierarchy& tree, Curvature c,
                        std::uint64_t seed);

/// Same layout as the parameters; `offsets` holds the Euclidean gradient.
struct Gradients {
  Vector w1, b1, w2, b2;
  Vector offsets;
  Vector orientations;

  static Gradients zeros_like(const ModelParams& p);
  void add_scaled(const Gradients& other, double scale);
};

/// Embeds every pixel: backbone, exponential map at the origin, ball projection.
Field<double> embed(const ModelParams& params, const Field<double>& features);

struct ForwardResult {
  double loss = 0.0;              // mean hierarchical NLL over labelled pixels
  std::size_t labelled = 0;       // pixels that contributed
  std::size_t correct = 0;        // labelled pixels whose prediction matches
  Field<double> embeddings;
  LogitGrid logits;               // one channel per non-root node
};

ForwardResult forward(const ModelParams& params, const SegSample& sample, const ClassHierarchy& tree);

struct LossGradient {
  double loss = 0.0;
  std::size_t labelled = 0;
  std::size_t correct = 0;
  Gradients grads;
};

/// Exact gradient of forward().loss. Pixels whose labels are all ignored
/// give loss 0 and zero gradients.
LossGradient gradients(const ModelParams& params, const SegSample& sample, const ClassHierarchy& tree);

/// Backward pass of one logit: adds g * d(zeta)/d(z, p, w) into the outputs and
/// returns zeta.
double logit_backward(std::span<const double> z, std::span<const double> p, std::span<const double> w,
                      Curvature c, double g, std::span<double> grad_z, std::span<double> grad_p,
                      std::span<double> grad_w);

/// lr0 * (1 - t/T)^0.9.
double lr_schedule(std::size_t t, std::size_t total, double lr0);

inline constexpr double kMomentum = 0.9;

/// m <- 0.9 m + g; theta <- theta - lr m.
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> momentum, double lr);

/// Riemannian step on the ball: rescale by (1 - c|p|^2)^2 / 4, then retract with
/// the exponential map at p.
Vector rsgd_step(std::span<const double> p, std::span<const double> grad, double lr, Curvature c);

struct OptimState {
  Gradients momentum;  // `offsets` is unused: offsets take plain RSGD steps
  std::size_t step = 0;
  std::size_t total = 1;
  double lr0 = 0.01;

  static OptimState for_params(const ModelParams& p, std::size_t total_steps, double lr0);
};

/// One update of every parameter from `grads`, at the scheduled rate.
void apply_update(ModelParams& params, const Gradients& grads, OptimState& state);

struct TrainConfig {
  std::size_t dims = 2;
  double curvature = 1.0;
  double lr0 = 0.01;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double pixel_accuracy = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
};

/// One step per image; image order is shuffled each epoch from the seed.
TrainResult train(const TrainConfig& cfg, const Dataset& data, const ClassHierarchy& tree);

void save_model(const std::filesystem::path& path, const ModelParams& params, const ClassHierarchy& tree);
std::pair<ModelParams, ClassHierarchy> load_model(const std::filesystem::path& path);

}  // namespace hyperseg
