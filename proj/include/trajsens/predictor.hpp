#pragma once

// Reference latent-variable trajectory predictor.
//
//   encoder : history MLP + patch-average image MLP (pixels squashed by tanh)
//             + weighted neighbour MLP -> context h -> latent Gaussian
//   decoder : [h, z] -> per mode and step a speed action a, a turn action b and
//             a position log-variance; per step a shared speed action s; K logits
//   dynamics: IntegrateActions  v_{t+1} = v_t * sech^2(s_t + a) * rot(atan(0.5 tanh(b))),
//                               p_{t+1} = p_t + dt v_{t+1}, seeded with the current state
//             RelativeOffsets   p_t = p_now + 10 * (a, b); s is unused
//
// Target positions never enter the encoder, so shifting the target's current
// position shifts every predicted position by the same amount.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trajsens/core.hpp"

namespace trajsens {

enum class DynamicsMode { IntegrateActions, RelativeOffsets };

std::string_view dynamics_name(DynamicsMode mode);
DynamicsMode parse_dynamics(std::string_view name);

struct PredictorDims {
  int hidden = 32;
  int latent = 8;
  int modes = 3;
  int horizon = 4;
  int history_steps = 4;
  int image_width = 16;
  int image_height = 16;
  int image_channels = 3;
  int patch = 4;

  int history_features() const { return 6 * (history_steps + 1); }
  int image_features() const;
  static constexpr int kGraphFeatures = 6;
  int head_outputs() const { return 3 * modes * horizon; }

  friend bool operator==(const PredictorDims&, const PredictorDims&) = default;
};

enum TensorId : int {
  kHistW, kHistB, kImageW, kImageB, kGraphW, kGraphB, kEncW, kEncB,
  kMeanW, kMeanB, kLogvarW, kLogvarB, kDecW, kDecB, kHeadW, kHeadB, kLogitW, kLogitB, kSpeedW, kSpeedB,
  kTensorCount
};

std::string_view tensor_name(int id);

/// Weights of every layer; biases are stored as single-column matrices.
struct PredictorParams {
  PredictorDims dims;
  DynamicsMode dynamics = DynamicsMode::IntegrateActions;
  std::array<Eigen::MatrixXd, kTensorCount> tensors;

  Eigen::Index parameter_count() const;
  friend bool operator==(const PredictorParams& a, const PredictorParams& b);
};

/// Allocates every tensor at its expected shape, filled with zeros.
PredictorParams zero_params(const PredictorDims& dims, DynamicsMode dynamics);
/// Gaussian weights scaled by 1/sqrt(fan_in), zero biases; deterministic in seed.
PredictorParams init_params(const PredictorDims& dims, DynamicsMode dynamics, std::uint64_t seed);
/// Shape, finiteness and K >= 1 checks.
void validate(const PredictorParams& params);
PredictorDims dims_for(const SceneInput& scene, int hidden = 32, int latent = 8, int modes = 3);

/// Throws ValidationError when the scene's shapes disagree with the params.
void check_compatible(const SceneInput& scene, const PredictorParams& params, bool need_truth);

struct LatentDistribution {
  Eigen::VectorXd mean;
  Eigen::VectorXd logvar;
  Eigen::VectorXd context;  // deterministic encoding fed to the decoder with z
};

LatentDistribution encode(const SceneInput& scene, const PredictorParams& params);

PredictionOutput decode_and_integrate(const AgentState& current, double dt,
                                      const Eigen::VectorXd& context, const Eigen::VectorXd& z,
                                      const PredictorParams& params);

struct ModeSelection {
  enum class Kind { MostLikely, Sample };
  Kind kind = Kind::MostLikely;
  std::uint64_t seed = 0;

  static ModeSelection most_likely() { return {}; }
  static ModeSelection sample(std::uint64_t seed) { return {Kind::Sample, seed}; }
};

/// MostLikely decodes the latent mean; Sample decodes a seeded latent draw.
/// selected_mode is the highest-weight component either way.
PredictionOutput predict(const SceneInput& scene, const PredictorParams& params,
                         ModeSelection selection = {});

struct LossBreakdown {
  double total = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  bool variance_floored = false;
};

inline constexpr double kKlWeight = 1.0;
inline constexpr double kVarianceFloor = 1e-6;

/// Negative ELBO with a reparameterized latent sample drawn from `seed`.
LossBreakdown elbo_loss(const SceneInput& scene, const PredictorParams& params, std::uint64_t seed);

struct InputGradient {
  double loss = 0.0;
  SceneTensors grad;  // d(total loss)/d(every scene scalar), scene layout
};

InputGradient input_gradient(const SceneInput& scene, const PredictorParams& params,
                             std::uint64_t seed);

/// Per-tensor gradient of the total loss with respect to the parameters.
struct ParamGradient {
  LossBreakdown loss;
  std::array<Eigen::MatrixXd, kTensorCount> grad;
};

ParamGradient param_gradient(const SceneInput& scene, const PredictorParams& params,
                             std::uint64_t seed);

// --- training ---------------------------------------------------------------

enum class Optimizer { Sgd, Adam };

std::string_view optimizer_name(Optimizer o);
Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
  Optimizer optimizer = Optimizer::Sgd;
  int epochs = 50;
  double learning_rate = 0.01;
  double momentum = 0.0;  // Sgd only
  double beta1 = 0.9;     // Adam only
  double beta2 = 0.999;
  int batch_size = 16;
  double clip_norm = 10.0;     // <= 0 disables clipping
  double weight_decay = 0.0;  // decoupled decay of weight matrices (biases exempt)
  int workers = 1;
};

struct TrainResult {
  PredictorParams params;
  /// loss_curve[e] is the mean total loss over the dataset before epoch e;
  /// the last entry is after the final epoch.
  std::vector<double> loss_curve;
};

/// Mini-batch SGD (or Adam) over a seeded shuffle. Throws OverflowError naming the
/// epoch if the loss stops being finite.
TrainResult train(std::span<const SceneInput> dataset, const PredictorParams& initial,
                  const TrainConfig& config, std::uint64_t seed);

/// Mean total loss with per-scene evaluation seeds derived from `seed`.
double mean_loss(std::span<const SceneInput> dataset, const PredictorParams& params,
                 std::uint64_t seed);

// --- checkpoint -------------------------------------------------------------

std::string serialize_params(const PredictorParams& params);
PredictorParams parse_params(const std::string& text);
void save_params(const PredictorParams& params, const std::filesystem::path& path);
PredictorParams load_params(const std::filesystem::path& path);

}  // namespace trajsens
