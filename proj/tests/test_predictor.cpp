#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "trajsens/attribution.hpp"
#include "trajsens/predictor.hpp"
#include "trajsens/scene.hpp"

using namespace trajsens;

namespace {

ScenarioConfig small_config() {
  ScenarioConfig c;
  c.dt = 1.0;
  c.lead_speed = 11.0;
  c.speed_jitter = 6.0;
  c.random_heading = true;
  c.max_turn_rate = 0.1;
  c.gap = 15.0;
  c.image_size = 8;
  return c;
}

PredictorParams random_params(const SceneInput& s, std::uint64_t seed, int modes = 3,
                              DynamicsMode mode = DynamicsMode::IntegrateActions) {
  PredictorParams p = init_params(dims_for(s, 8, 4, modes), mode, seed);
  // Larger head weights than the init so every output path carries signal.
  std::mt19937_64 rng(seed + 99);
  std::normal_distribution<double> n(0.0, 0.3);
  for (int id : {kHeadW, kHeadB, kSpeedW, kLogitW, kLogvarW}) {
    for (Eigen::Index i = 0; i < p.tensors[id].size(); ++i) p.tensors[id].data()[i] += n(rng);
  }
  return p;
}

struct Trained {
  std::vector<SceneInput> data;
  PredictorParams initial;
  TrainResult result;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained out;
    out.data = generate_dataset(21, 60, small_config());
    out.initial = init_params(dims_for(out.data[0], 16, 4, 3), DynamicsMode::IntegrateActions, 5);
    TrainConfig tc;
    tc.optimizer = Optimizer::Adam;
    tc.learning_rate = 0.003;
    tc.epochs = 25;
    out.result = train(out.data, out.initial, tc, 3);
    return out;
  }();
  return t;
}

}  // namespace

TEST(Encode, ZeroWeightsGiveStandardLatent) {
  const SceneInput s = generate_scene(0, small_config());
  const PredictorParams p = zero_params(dims_for(s, 8, 4, 3), DynamicsMode::IntegrateActions);
  const LatentDistribution l = encode(s, p);
  EXPECT_TRUE(l.mean.isZero(0.0));
  EXPECT_TRUE(l.logvar.isZero(0.0));
}

TEST(Encode, ImageChangesLatent) {
  const SceneInput s = generate_scene(0, small_config());
  const PredictorParams p = random_params(s, 1);
  SceneInput t = s;
  t.image.pixels.array() += 0.3;
  EXPECT_GT((encode(s, p).mean - encode(t, p).mean).norm(), 1e-6);
}

TEST(Encode, NanPixelIsAnError) {
  SceneInput s = generate_scene(0, small_config());
  const PredictorParams p = random_params(s, 1);
  s.image.pixels[3] = std::nan("");
  EXPECT_THROW(encode(s, p), ValidationError);
  EXPECT_THROW(predict(s, p), ValidationError);
}

TEST(Encode, DimensionMismatchIsAnError) {
  const SceneInput s = generate_scene(0, small_config());
  ScenarioConfig other = small_config();
  other.image_size = 12;
  const PredictorParams p = random_params(generate_scene(0, other), 1);
  EXPECT_THROW(encode(s, p), ValidationError);
}

TEST(Decode, ZeroWeightsIntegrateCurrentVelocity) {
  const SceneInput s = generate_scene(0, ScenarioConfig{});
  const PredictorParams p = zero_params(dims_for(s, 8, 4, 3), DynamicsMode::IntegrateActions);
  AgentState cur = AgentState::Zero();
  cur[kX] = 2.0;
  cur[kY] = -1.0;
  cur[kVx] = 10.0;
  const PredictionOutput out =
      decode_and_integrate(cur, 0.5, Eigen::VectorXd::Zero(8), Eigen::VectorXd::Zero(4), p);
  ASSERT_EQ(out.modes.size(), 3u);
  for (const Positions& m : out.modes) {
    ASSERT_EQ(m.rows(), 4);
    for (int t = 0; t < 4; ++t) {
      EXPECT_DOUBLE_EQ(m(t, 0), 2.0 + 5.0 * (t + 1));
      EXPECT_DOUBLE_EQ(m(t, 1), -1.0);
    }
  }
  EXPECT_NEAR(out.mode_weights.sum(), 1.0, 1e-12);
}

TEST(Decode, ZeroVelocityStaysPut) {
  const SceneInput s = generate_scene(0, ScenarioConfig{});
  for (DynamicsMode mode : {DynamicsMode::IntegrateActions, DynamicsMode::RelativeOffsets}) {
    const PredictorParams p = zero_params(dims_for(s, 8, 4, 2), mode);
    AgentState cur = AgentState::Zero();
    cur[kX] = 7.0;
    cur[kY] = 3.0;
    const PredictionOutput out =
        decode_and_integrate(cur, 0.5, Eigen::VectorXd::Zero(8), Eigen::VectorXd::Zero(4), p);
    for (const Positions& m : out.modes) {
      for (int t = 0; t < 4; ++t) {
        EXPECT_EQ(m(t, 0), 7.0);
        EXPECT_EQ(m(t, 1), 3.0);
      }
    }
  }
}

TEST(Decode, OccludedVelocityGivesZeroDisplacement) {
  // v_{t+1} = v_t * factor * rotation, so a zero current velocity stays zero
  // for any weights.
  const SceneInput base = generate_scene(2, small_config());
  const PredictorParams p = random_params(base, 4);
  SceneInput s = base;
  const int tgt = s.target_index();
  const int last = s.history_length() - 1;
  s.agents[tgt].history.states(last, kVx) = 0.0;
  s.agents[tgt].history.states(last, kVy) = 0.0;
  const AgentState cur = s.target_history().current();
  for (const Positions& m : predict(s, p).modes) {
    for (int t = 0; t < m.rows(); ++t) {
      EXPECT_EQ(m(t, 0), cur[kX]);
      EXPECT_EQ(m(t, 1), cur[kY]);
    }
  }
}

TEST(Predict, TranslationEquivarianceOverRandomShifts) {
  const auto scenes = generate_dataset(5, 10, small_config());
  for (DynamicsMode mode : {DynamicsMode::IntegrateActions, DynamicsMode::RelativeOffsets}) {
    const PredictorParams p = random_params(scenes[0], 8, 3, mode);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const SceneInput& s = scenes[static_cast<std::size_t>(i % 10)];
      const PredictionOutput base = predict(s, p);
      const double dx = u(rng), dy = u(rng);
      SceneInput shifted = s;
      const int tgt = s.target_index();
      const int last = s.history_length() - 1;
      shifted.agents[tgt].history.states(last, kX) += dx;
      shifted.agents[tgt].history.states(last, kY) += dy;
      const PredictionOutput moved = predict(shifted, p);
      ASSERT_EQ(moved.selected_mode, base.selected_mode);
      for (std::size_t k = 0; k < base.modes.size(); ++k) {
        for (int t = 0; t < base.modes[k].rows(); ++t) {
          worst = std::max(worst, std::abs(moved.modes[k](t, 0) - base.modes[k](t, 0) - dx));
          worst = std::max(worst, std::abs(moved.modes[k](t, 1) - base.modes[k](t, 1) - dy));
        }
      }
    }
    EXPECT_LT(worst, 1e-9);
  }
}

TEST(Predict, Deterministic) {
  const SceneInput s = generate_scene(1, small_config());
  const PredictorParams p = random_params(s, 2);
  const PredictionOutput a = predict(s, p);
  const PredictionOutput b = predict(s, p);
  EXPECT_EQ(a.modes, b.modes);
  EXPECT_EQ(a.mode_weights, b.mode_weights);
  const PredictionOutput c = predict(s, p, ModeSelection::sample(7));
  const PredictionOutput d = predict(s, p, ModeSelection::sample(7));
  EXPECT_EQ(c.modes, d.modes);
  const PredictionOutput e = predict(s, p, ModeSelection::sample(8));
  EXPECT_NE(c.modes, e.modes);
}

TEST(Predict, WeightsFormADistribution) {
  const SceneInput s = generate_scene(1, small_config());
  const PredictorParams p = random_params(s, 2);
  const PredictionOutput o = predict(s, p);
  EXPECT_NEAR(o.mode_weights.sum(), 1.0, 1e-9);
  EXPECT_GE(o.mode_weights.minCoeff(), 0.0);
  Eigen::Index arg;
  o.mode_weights.maxCoeff(&arg);
  EXPECT_EQ(o.selected_mode, arg);
}

TEST(Elbo, PriorPosteriorHasZeroKl) {
  const SceneInput s = generate_scene(0, small_config());
  const PredictorParams p = zero_params(dims_for(s, 8, 4, 3), DynamicsMode::IntegrateActions);
  const LossBreakdown l = elbo_loss(s, p, 1);
  EXPECT_EQ(l.kl, 0.0);
  EXPECT_NEAR(l.total, l.reconstruction + kKlWeight * l.kl, 1e-9);
}

TEST(Elbo, ExactPredictionWithUnitVarianceIsGaussianConstant) {
  SceneInput s = generate_scene(0, small_config());
  const PredictorParams p = zero_params(dims_for(s, 8, 4, 1), DynamicsMode::IntegrateActions);
  s.ground_truth = predict(s, p).selected();
  const LossBreakdown l = elbo_loss(s, p, 1);
  const double horizon = static_cast<double>(s.ground_truth.rows());
  EXPECT_NEAR(l.reconstruction, horizon * 2.0 * 0.5 * std::log(2.0 * std::numbers::pi), 1e-12);
  EXPECT_FALSE(l.variance_floored);
}

TEST(Elbo, KlOfShiftedMeanIsHalfSquare) {
  const SceneInput s = generate_scene(0, small_config());
  PredictorParams p = zero_params(dims_for(s, 8, 1, 1), DynamicsMode::IntegrateActions);
  const double m = 1.7;
  p.tensors[kMeanB](0, 0) = m;
  EXPECT_NEAR(elbo_loss(s, p, 3).kl, m * m / 2.0, 1e-12);
}

TEST(Elbo, ExtremeLogvarStaysFinite) {
  SceneInput s = generate_scene(0, small_config());
  PredictorParams p = zero_params(dims_for(s, 8, 4, 1), DynamicsMode::IntegrateActions);
  s.ground_truth = predict(s, p).selected();
  for (int t = 0; t < p.dims.horizon; ++t) p.tensors[kHeadB](3 * t + 2, 0) = -1e6;
  // The decoded log-variance is bounded to [-5, 5], above the 1e-6 floor.
  const LossBreakdown l = elbo_loss(s, p, 1);
  EXPECT_TRUE(std::isfinite(l.total));
  EXPECT_FALSE(l.variance_floored);
}

TEST(InputGradient, MatchesFiniteDifferencesOnSixtyScalars) {
  const auto scenes = generate_dataset(31, 3, small_config());
  for (const SceneInput& s : scenes) {
    const PredictorParams p = random_params(s, 12);
    const std::uint64_t seed = 5;
    const InputGradient g = input_gradient(s, p, seed);
    EXPECT_NEAR(g.loss, elbo_loss(s, p, seed).total, 1e-9);

    // Candidate scalars: every state cell of every agent, pixels, weights.
    std::vector<std::pair<FeatureId, Eigen::Index>> cells;
    for (int a = 0; a < static_cast<int>(s.agents.size()); ++a)
      for (int d = 0; d < kStateDim; ++d)
        for (int t = 0; t < s.history_length(); ++t) cells.push_back({FeatureId::state_cell(a, d, t), 0});
    for (Eigen::Index i = 0; i < s.image.pixels.size(); ++i) cells.push_back({FeatureId::image(), i});
    for (Eigen::Index i = 0; i < s.graph.weights.size(); ++i) cells.push_back({FeatureId::graph_weights(), i});
    std::mt19937_64 rng(s.graph.weights.size() + 41);
    std::shuffle(cells.begin(), cells.end(), rng);

    int checked = 0;
    for (const auto& [f, i] : cells) {
      if (checked == 60) break;
      const Eigen::VectorXd x = extract(s, f);
      const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
      Eigen::VectorXd e = Eigen::VectorXd::Zero(x.size());
      e[i] = h;
      const double fp = elbo_loss(apply(s, f, e), p, seed).total;
      const double fm = elbo_loss(apply(s, f, -e), p, seed).total;
      const double fd = (fp - fm) / (2 * h);
      const double an = extract(g.grad, s, f)[i];
      const double diff = std::abs(an - fd);
      EXPECT_TRUE(diff <= 1e-7 || diff <= 1e-3 * std::max(std::abs(an), std::abs(fd)))
          << feature_label(f, &s) << "[" << i << "]: " << an << " vs " << fd;
      ++checked;
    }
    EXPECT_EQ(checked, 60);
  }
}

TEST(InputGradient, NonTargetWithoutInteractionHasZeroGradient) {
  SceneInput s = generate_scene(3, small_config());
  const PredictorParams p = random_params(s, 6);
  s.graph.weights.setZero();
  const InputGradient g = input_gradient(s, p, 2);
  const int other = s.agent_index("follower");
  EXPECT_TRUE(g.grad.histories[other].isZero(0.0));
}

TEST(InputGradient, FgsmDirectionHasNonNegativeInnerProduct) {
  const SceneInput s = generate_scene(3, small_config());
  const PredictorParams p = random_params(s, 6);
  const InputGradient g = input_gradient(s, p, 2);
  const double eps = 0.025;
  double inner = 0.0;
  for (Eigen::Index i = 0; i < g.grad.image.size(); ++i) {
    const double gi = g.grad.image[i];
    const double step = eps * ((gi > 0) - (gi < 0));
    EXPECT_GE(gi * step, 0.0);
    inner += gi * step;
  }
  EXPECT_GE(inner, 0.0);
}

TEST(ParamGradient, MatchesFiniteDifferences) {
  const SceneInput s = generate_scene(4, small_config());
  const PredictorParams p = random_params(s, 3);
  const ParamGradient g = param_gradient(s, p, 9);
  std::mt19937_64 rng(1);
  for (int id = 0; id < kTensorCount; ++id) {
    for (int rep = 0; rep < 2; ++rep) {
      const Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p.tensors[id].size()));
      const double h = 1e-6;
      PredictorParams pp = p, pm = p;
      pp.tensors[id].data()[i] += h;
      pm.tensors[id].data()[i] -= h;
      const double fd = (elbo_loss(s, pp, 9).total - elbo_loss(s, pm, 9).total) / (2 * h);
      const double an = g.grad[id].data()[i];
      const double diff = std::abs(an - fd);
      EXPECT_TRUE(diff <= 1e-6 || diff <= 1e-3 * std::max(std::abs(an), std::abs(fd)))
          << tensor_name(id) << "[" << i << "]: " << an << " vs " << fd;
    }
  }
}

TEST(Train, LossDecreasesAndBeatsUntrained) {
  const Trained& t = trained();
  ASSERT_GE(t.result.loss_curve.size(), 2u);
  EXPECT_LT(t.result.loss_curve.back(), t.result.loss_curve.front());
  double ade_trained = 0.0, ade_init = 0.0;
  for (const auto& s : t.data) {
    ade_trained += ade(predict(s, t.result.params).selected(), s.ground_truth);
    ade_init += ade(predict(s, t.initial).selected(), s.ground_truth);
  }
  EXPECT_LT(ade_trained, ade_init);
}

TEST(Train, SameSeedSameParams) {
  const auto data = generate_dataset(2, 12, small_config());
  const PredictorParams p0 = init_params(dims_for(data[0], 8, 4, 2), DynamicsMode::IntegrateActions, 1);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  const TrainResult a = train(data, p0, tc, 11);
  tc.workers = 3;
  const TrainResult b = train(data, p0, tc, 11);
  EXPECT_TRUE(a.params == b.params);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
}

TEST(Train, ZeroLearningRateLeavesParamsUnchanged) {
  const auto data = generate_dataset(2, 8, small_config());
  const PredictorParams p0 = init_params(dims_for(data[0], 8, 4, 2), DynamicsMode::IntegrateActions, 1);
  TrainConfig tc;
  tc.epochs = 2;
  tc.learning_rate = 0.0;
  const TrainResult r = train(data, p0, tc, 1);
  EXPECT_TRUE(r.params == p0);
  for (double l : r.loss_curve) EXPECT_EQ(l, r.loss_curve.front());
}

TEST(Train, EmptyDatasetRejected) {
  const auto data = generate_dataset(2, 1, small_config());
  const PredictorParams p0 = init_params(dims_for(data[0], 8, 4, 2), DynamicsMode::IntegrateActions, 1);
  EXPECT_THROW(train(std::vector<SceneInput>{}, p0, TrainConfig{}, 1), ValidationError);
}

TEST(Checkpoint, RoundTripIsExact) {
  const SceneInput s = generate_scene(0, small_config());
  for (DynamicsMode mode : {DynamicsMode::IntegrateActions, DynamicsMode::RelativeOffsets}) {
    const PredictorParams p = random_params(s, 77, 3, mode);
    EXPECT_TRUE(parse_params(serialize_params(p)) == p);
  }
}

TEST(Checkpoint, MalformedFileIsParseError) {
  const SceneInput s = generate_scene(0, small_config());
  const std::string text = serialize_params(random_params(s, 1));
  EXPECT_THROW(parse_params("not a checkpoint"), ParseError);
  EXPECT_THROW(parse_params(text.substr(0, text.size() / 2)), ParseError);
  std::string bad = text;
  bad.replace(bad.find("trajsens-params v1"), 18, "trajsens-params v9");
  EXPECT_THROW(parse_params(bad), ParseError);
}

TEST(Params, ValidateRejectsNonFinite) {
  const SceneInput s = generate_scene(0, small_config());
  PredictorParams p = random_params(s, 1);
  p.tensors[kEncW](0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(validate(p), ValidationError);
}
