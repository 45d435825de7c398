#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "trajsens/parallel.hpp"
#include "trajsens/predictor.hpp"
#include "trajsens/seed.hpp"

namespace trajsens {

std::string_view optimizer_name(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::Sgd;
  if (name == "adam") return Optimizer::Adam;
  throw ParseError("optimizer: unknown optimizer '" + std::string(name) + "'");
}

double mean_loss(std::span<const SceneInput> dataset, const PredictorParams& params,
                 std::uint64_t seed) {
  if (dataset.empty()) throw ValidationError("mean_loss: empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    total += elbo_loss(dataset[i], params, derive_seed(seed, "eval", i)).total;
  }
  return total / static_cast<double>(dataset.size());
}

TrainResult train(std::span<const SceneInput> dataset, const PredictorParams& initial,
                  const TrainConfig& config, std::uint64_t seed) {
  if (dataset.empty()) throw ValidationError("train: empty dataset");
  if (config.epochs < 0 || config.batch_size < 1 || config.learning_rate < 0.0) {
    throw ValidationError("train: epochs >= 0, batch_size >= 1 and learning_rate >= 0 required");
  }
  validate(initial);
  for (const auto& scene : dataset) check_compatible(scene, initial, true);

  TrainResult result{initial, {}};
  PredictorParams& p = result.params;
  // First and second moment buffers (the first doubles as SGD momentum).
  std::array<Eigen::MatrixXd, kTensorCount> m1, m2;
  for (int i = 0; i < kTensorCount; ++i) {
    const auto& t = p.tensors[static_cast<std::size_t>(i)];
    m1[static_cast<std::size_t>(i)] = Eigen::MatrixXd::Zero(t.rows(), t.cols());
    m2[static_cast<std::size_t>(i)] = Eigen::MatrixXd::Zero(t.rows(), t.cols());
  }
  long step = 0;

  const std::uint64_t eval_seed = derive_seed(seed, "eval-loss");
  auto evaluate = [&](int epoch) {
    try {
      return mean_loss(dataset, p, eval_seed);
    } catch (const OverflowError&) {
      throw OverflowError("train: loss diverged at epoch " + std::to_string(epoch));
    }
  };

  std::vector<std::size_t> order(dataset.size());
  std::vector<ParamGradient> grads;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    result.loss_curve.push_back(evaluate(epoch));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      grads.assign(end - start, {});
      try {
        parallel_for(end - start, config.workers, [&](std::size_t j) {
          const std::size_t idx = order[start + j];
          const std::uint64_t s = derive_seed(
              seed, "sample", static_cast<std::uint64_t>(epoch) * dataset.size() + idx);
          grads[j] = param_gradient(dataset[idx], p, s);
        });
      } catch (const OverflowError&) {
        throw OverflowError("train: loss diverged at epoch " + std::to_string(epoch));
      }

      // Ordered reduction keeps the update independent of the worker count.
      std::array<Eigen::MatrixXd, kTensorCount> g = grads[0].grad;
      for (std::size_t j = 1; j < grads.size(); ++j) {
        for (int i = 0; i < kTensorCount; ++i) {
          g[static_cast<std::size_t>(i)] += grads[j].grad[static_cast<std::size_t>(i)];
        }
      }
      double norm2 = 0.0;
      const double inv = 1.0 / static_cast<double>(grads.size());
      for (auto& t : g) {
        t *= inv;
        norm2 += t.squaredNorm();
      }
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) {
        throw OverflowError("train: loss diverged at epoch " + std::to_string(epoch));
      }
      const double scale =
          (config.clip_norm > 0.0 && norm > config.clip_norm) ? config.clip_norm / norm : 1.0;
      ++step;
      for (std::size_t i = 0; i < kTensorCount; ++i) {
        g[i] *= scale;
        if (i % 2 == 0 && config.weight_decay > 0.0) {
          p.tensors[i] *= 1.0 - config.learning_rate * config.weight_decay;
        }
        if (config.optimizer == Optimizer::Sgd) {
          m1[i] = config.momentum * m1[i] - config.learning_rate * g[i];
          p.tensors[i] += m1[i];
          continue;
        }
        m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * g[i];
        m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * g[i].cwiseAbs2();
        const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
        p.tensors[i].array() -= config.learning_rate * (m1[i].array() / c1) /
                                ((m2[i].array() / c2).sqrt() + 1e-8);
      }
    }
  }
  result.loss_curve.push_back(evaluate(config.epochs));
  return result;
}

}  // namespace trajsens
