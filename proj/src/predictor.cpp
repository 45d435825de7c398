#include "trajsens/predictor.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "trajsens/autodiff.hpp"

namespace trajsens {

namespace {

using ad::Var;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using StatesT = Eigen::Matrix<S, Eigen::Dynamic, kStateDim, Eigen::RowMajor>;
template <typename S>
using Weights = std::array<Mat<S>, kTensorCount>;

// Input scaling for the encoder: v / 20, a / 5, heading / pi, omega.
constexpr double kVelocityScale = 1.0 / 20.0;
constexpr double kAccelScale = 1.0 / 5.0;
constexpr double kHeadingScale = 1.0 / std::numbers::pi;
constexpr double kTurnGain = 0.5;
constexpr double kOffsetScale = 10.0;
constexpr double kLogvarBound = 5.0;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

template <typename S>
S tanh_s(const S& x) {
  using std::tanh;
  using ad::tanh;
  return tanh(x);
}
template <typename S>
S exp_s(const S& x) {
  using std::exp;
  using ad::exp;
  return exp(x);
}
template <typename S>
S log_s(const S& x) {
  using std::log;
  using ad::log;
  return log(x);
}
template <typename S>
S sqrt_s(const S& x) {
  using std::sqrt;
  using ad::sqrt;
  return sqrt(x);
}

template <typename S>
Vec<S> dense(const Mat<S>& w, const Mat<S>& b, const Vec<S>& x) {
  return w.lazyProduct(x) + b.col(0);
}

template <typename S>
Vec<S> dense_tanh(const Mat<S>& w, const Mat<S>& b, const Vec<S>& x) {
  return dense(w, b, x).unaryExpr([](const S& v) { return tanh_s(v); });
}

/// Numerically stable log-sum-exp; the shift is a value-only constant.
template <typename S>
S log_sum_exp(const Vec<S>& x) {
  double m = ad::value_of(x[0]);
  for (Eigen::Index i = 1; i < x.size(); ++i) m = std::max(m, ad::value_of(x[i]));
  S acc = exp_s<S>(x[0] - S(m));
  for (Eigen::Index i = 1; i < x.size(); ++i) acc = acc + exp_s<S>(x[i] - S(m));
  return S(m) + log_s(acc);
}

// The six non-position features of one state row.
template <typename S, typename Row>
void state_features(const Row& row, S* out) {
  out[0] = row(kVx) * S(kVelocityScale);
  out[1] = row(kVy) * S(kVelocityScale);
  out[2] = row(kAx) * S(kAccelScale);
  out[3] = row(kAy) * S(kAccelScale);
  out[4] = row(kHeading) * S(kHeadingScale);
  out[5] = row(kAngularVelocity);
}

template <typename S>
struct Inputs {
  std::vector<StatesT<S>> histories;
  Vec<S> image;
  Vec<S> weights;
  Vec<S> presence;
};

template <typename S>
struct Encoded {
  Vec<S> mean;
  Vec<S> logvar;
  Vec<S> context;
};

template <typename S>
struct Decoded {
  std::vector<Eigen::Matrix<S, Eigen::Dynamic, 2, Eigen::RowMajor>> positions;
  Mat<S> logvar;  // modes x horizon
  Vec<S> logits;
};

Inputs<double> inputs_of(const SceneInput& scene) {
  Inputs<double> in;
  for (const auto& a : scene.agents) in.histories.push_back(a.history.states);
  in.image = scene.image.pixels;
  in.weights = scene.graph.weights;
  in.presence = scene.graph.node_presence;
  return in;
}

template <typename S>
Inputs<S> constant_inputs(const SceneInput& scene) {
  Inputs<S> in;
  for (const auto& a : scene.agents) in.histories.push_back(a.history.states.template cast<S>());
  in.image = scene.image.pixels.template cast<S>();
  in.weights = scene.graph.weights.template cast<S>();
  in.presence = scene.graph.node_presence.template cast<S>();
  return in;
}

template <typename S>
Encoded<S> encode_t(const SceneInput& scene, const Inputs<S>& in, const Weights<S>& w,
                    const PredictorDims& dims) {
  const int target = scene.target_index();
  const StatesT<S>& hist = in.histories[static_cast<std::size_t>(target)];

  Vec<S> xh(dims.history_features());
  for (Eigen::Index k = 0; k < hist.rows(); ++k) state_features<S>(hist.row(k), xh.data() + 6 * k);

  const int p = dims.patch;
  const int prow = (dims.image_height + p - 1) / p;
  const int pcol = (dims.image_width + p - 1) / p;
  Vec<S> xi(dims.image_features());
  Eigen::Index f = 0;
  for (int ch = 0; ch < dims.image_channels; ++ch) {
    for (int pr = 0; pr < prow; ++pr) {
      for (int pc = 0; pc < pcol; ++pc) {
        const int r1 = std::min(dims.image_height, (pr + 1) * p);
        const int c1 = std::min(dims.image_width, (pc + 1) * p);
        S acc(0.0);
        bool first = true;
        for (int r = pr * p; r < r1; ++r) {
          for (int c = pc * p; c < c1; ++c) {
            const S px = tanh_s(in.image[(static_cast<Eigen::Index>(r) * dims.image_width + c) *
                                             dims.image_channels +
                                         ch]);
            acc = first ? px : acc + px;
            first = false;
          }
        }
        xi[f++] = acc * S(1.0 / ((r1 - pr * p) * (c1 - pc * p)));
      }
    }
  }

  // Neighbours reach the target only through weighted incoming edges.
  Vec<S> xg = Vec<S>::Constant(PredictorDims::kGraphFeatures, S(0.0));
  const auto target_node = scene.graph.find(scene.target_agent);
  for (std::size_t e = 0; e < scene.graph.edges.size(); ++e) {
    const Edge& edge = scene.graph.edges[e];
    if (edge.target != *target_node || edge.source == *target_node) continue;
    const int src_agent = scene.agent_index(scene.graph.nodes[static_cast<std::size_t>(edge.source)]);
    const StatesT<S>& nh = in.histories[static_cast<std::size_t>(src_agent)];
    S feats[6];
    state_features<S>(nh.row(nh.rows() - 1), feats);
    const S scale = in.weights[static_cast<Eigen::Index>(e)] * in.presence[edge.source];
    for (int i = 0; i < 6; ++i) xg[i] = xg[i] + scale * feats[i];
  }

  Vec<S> joined(3 * dims.hidden);
  joined << dense_tanh<S>(w[kHistW], w[kHistB], xh), dense_tanh<S>(w[kImageW], w[kImageB], xi),
      dense_tanh<S>(w[kGraphW], w[kGraphB], xg);

  Encoded<S> out;
  out.context = dense_tanh<S>(w[kEncW], w[kEncB], joined);
  out.mean = dense<S>(w[kMeanW], w[kMeanB], out.context);
  out.logvar = dense<S>(w[kLogvarW], w[kLogvarB], out.context);
  return out;
}

template <typename S>
Decoded<S> decode_t(const S& px, const S& py, const S& vx, const S& vy, double dt,
                    const Vec<S>& context, const Vec<S>& z, const Weights<S>& w,
                    const PredictorDims& dims, DynamicsMode dynamics) {
  Vec<S> in(context.size() + z.size());
  in << context, z;
  const Vec<S> hidden = dense_tanh<S>(w[kDecW], w[kDecB], in);
  const Vec<S> head = dense<S>(w[kHeadW], w[kHeadB], hidden);

  Decoded<S> out;
  out.logits = dense<S>(w[kLogitW], w[kLogitB], hidden);
  const Vec<S> speed = dense<S>(w[kSpeedW], w[kSpeedB], hidden);
  out.logvar.resize(dims.modes, dims.horizon);
  out.positions.resize(static_cast<std::size_t>(dims.modes));
  for (int k = 0; k < dims.modes; ++k) {
    auto& pos = out.positions[static_cast<std::size_t>(k)];
    pos.resize(dims.horizon, 2);
    S x = px, y = py, ux = vx, uy = vy;
    for (int t = 0; t < dims.horizon; ++t) {
      const Eigen::Index base = (static_cast<Eigen::Index>(k) * dims.horizon + t) * 3;
      const S& a = head[base];
      const S& b = head[base + 1];
      if (dynamics == DynamicsMode::IntegrateActions) {
        const S ta = tanh_s(speed[t] + a);
        const S factor = S(1.0) - ad::square(ta);  // speed ratio sech^2 in (0, 1]
        const S turn = S(kTurnGain) * tanh_s(b);
        const S norm = factor / sqrt_s(S(1.0) + ad::square(turn));
        const S mr = norm;
        const S mi = norm * turn;
        const S nx = mr * ux - mi * uy;
        const S ny = mr * uy + mi * ux;
        ux = nx;
        uy = ny;
        x = x + S(dt) * ux;
        y = y + S(dt) * uy;
      } else {
        x = px + S(kOffsetScale) * a;
        y = py + S(kOffsetScale) * b;
      }
      pos(t, 0) = x;
      pos(t, 1) = y;
      out.logvar(k, t) = S(kLogvarBound) * tanh_s(head[base + 2] * S(1.0 / kLogvarBound));
    }
  }
  return out;
}

template <typename S>
struct LossT {
  S total;
  S reconstruction;
  S kl;
  bool floored = false;
};

template <typename S>
LossT<S> loss_t(const Decoded<S>& dec, const Encoded<S>& enc, const Positions& truth) {
  const int modes = static_cast<int>(dec.positions.size());
  const Vec<S> log_w = dec.logits.array() - log_sum_exp<S>(dec.logits);

  LossT<S> out{S(0.0), S(0.0), S(0.0)};
  for (Eigen::Index t = 0; t < truth.rows(); ++t) {
    Vec<S> terms(modes);
    for (int k = 0; k < modes; ++k) {
      S lv = dec.logvar(k, t);
      S var = exp_s(lv);
      if (ad::value_of(var) < kVarianceFloor) {
        out.floored = true;
        var = S(kVarianceFloor);
        lv = S(std::log(kVarianceFloor));
      }
      const auto& pos = dec.positions[static_cast<std::size_t>(k)];
      const S dx = pos(t, 0) - S(truth(t, 0));
      const S dy = pos(t, 1) - S(truth(t, 1));
      const S sq = ad::square(dx) + ad::square(dy);
      terms[k] = log_w[k] - S(kLog2Pi) - lv - sq / (S(2.0) * var);
    }
    out.reconstruction = out.reconstruction - log_sum_exp<S>(terms);
  }
  for (Eigen::Index i = 0; i < enc.mean.size(); ++i) {
    const S& lv = enc.logvar[i];
    out.kl = out.kl + S(0.5) * (exp_s(lv) + ad::square(enc.mean[i]) - S(1.0) - lv);
  }
  out.total = out.reconstruction + S(kKlWeight) * out.kl;
  return out;
}

Eigen::VectorXd standard_normal(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd xi(n);
  for (int i = 0; i < n; ++i) xi[i] = nd(rng);
  return xi;
}

template <typename S>
Vec<S> sample_latent(const Encoded<S>& enc, std::uint64_t seed) {
  const Eigen::VectorXd xi = standard_normal(seed, static_cast<int>(enc.mean.size()));
  Vec<S> z(enc.mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    z[i] = enc.mean[i] + exp_s<S>(S(0.5) * enc.logvar[i]) * S(xi[i]);
  }
  return z;
}

template <typename S>
LossT<S> forward_loss(const SceneInput& scene, const Inputs<S>& in, const Weights<S>& w,
                      const PredictorParams& params, std::uint64_t seed) {
  const Encoded<S> enc = encode_t<S>(scene, in, w, params.dims);
  const Vec<S> z = sample_latent(enc, seed);
  const auto& now = in.histories[static_cast<std::size_t>(scene.target_index())];
  const Eigen::Index last = now.rows() - 1;
  const Decoded<S> dec = decode_t<S>(now(last, kX), now(last, kY), now(last, kVx), now(last, kVy),
                                     scene.dt(), enc.context, z, w, params.dims, params.dynamics);
  return loss_t<S>(dec, enc, scene.ground_truth);
}

PredictionOutput to_output(const Decoded<double>& dec) {
  PredictionOutput out;
  for (const auto& p : dec.positions) out.modes.emplace_back(p);
  const double lse = log_sum_exp<double>(dec.logits);
  out.mode_weights = (dec.logits.array() - lse).exp();
  Eigen::Index best = 0;
  out.mode_weights.maxCoeff(&best);
  out.selected_mode = static_cast<int>(best);
  return out;
}

Eigen::Index expected_rows(const PredictorDims& d, int id) {
  switch (id) {
    case kHistW: case kHistB: case kImageW: case kImageB: case kGraphW: case kGraphB:
    case kEncW: case kEncB: case kDecW: case kDecB:
      return d.hidden;
    case kMeanW: case kMeanB: case kLogvarW: case kLogvarB: return d.latent;
    case kHeadW: case kHeadB: return d.head_outputs();
    case kLogitW: case kLogitB: return d.modes;
    case kSpeedW: case kSpeedB: return d.horizon;
  }
  return 0;
}

Eigen::Index expected_cols(const PredictorDims& d, int id) {
  switch (id) {
    case kHistW: return d.history_features();
    case kImageW: return d.image_features();
    case kGraphW: return PredictorDims::kGraphFeatures;
    case kEncW: return 3 * d.hidden;
    case kMeanW: case kLogvarW: case kHeadW: case kLogitW: case kSpeedW: return d.hidden;
    case kDecW: return d.hidden + d.latent;
    default: return 1;
  }
}

}  // namespace

int PredictorDims::image_features() const {
  return image_channels * ((image_height + patch - 1) / patch) * ((image_width + patch - 1) / patch);
}

std::string_view dynamics_name(DynamicsMode mode) {
  return mode == DynamicsMode::IntegrateActions ? "integrate_actions" : "relative_offsets";
}

DynamicsMode parse_dynamics(std::string_view name) {
  if (name == "integrate_actions") return DynamicsMode::IntegrateActions;
  if (name == "relative_offsets") return DynamicsMode::RelativeOffsets;
  throw ParseError("dynamics: unknown mode '" + std::string(name) + "'");
}

std::string_view tensor_name(int id) {
  static constexpr std::array<std::string_view, kTensorCount> names = {
      "hist_w",   "hist_b",   "image_w",   "image_b",   "graph_w", "graph_b",
      "enc_w",    "enc_b",    "mean_w",    "mean_b",    "logvar_w", "logvar_b",
      "dec_w",    "dec_b",    "head_w",    "head_b",    "logit_w", "logit_b",
      "speed_w", "speed_b"};
  return names[static_cast<std::size_t>(id)];
}

Eigen::Index PredictorParams::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

bool operator==(const PredictorParams& a, const PredictorParams& b) {
  if (!(a.dims == b.dims) || a.dynamics != b.dynamics) return false;
  for (int i = 0; i < kTensorCount; ++i) {
    const auto& x = a.tensors[static_cast<std::size_t>(i)];
    const auto& y = b.tensors[static_cast<std::size_t>(i)];
    if (x.rows() != y.rows() || x.cols() != y.cols() || x != y) return false;
  }
  return true;
}

PredictorParams zero_params(const PredictorDims& dims, DynamicsMode dynamics) {
  if (dims.modes < 1) throw ValidationError("predictor: modes (K) must be >= 1");
  if (dims.hidden < 1 || dims.latent < 1 || dims.horizon < 1 || dims.history_steps < 1 ||
      dims.patch < 1) {
    throw ValidationError("predictor: dimensions must be positive");
  }
  PredictorParams p;
  p.dims = dims;
  p.dynamics = dynamics;
  for (int i = 0; i < kTensorCount; ++i) {
    p.tensors[static_cast<std::size_t>(i)] =
        Eigen::MatrixXd::Zero(expected_rows(dims, i), expected_cols(dims, i));
  }
  return p;
}

PredictorParams init_params(const PredictorDims& dims, DynamicsMode dynamics, std::uint64_t seed) {
  PredictorParams p = zero_params(dims, dynamics);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < kTensorCount; i += 2) {  // weights sit at even ids
    auto& w = p.tensors[static_cast<std::size_t>(i)];
    double scale = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    if (i == kHeadW || i == kSpeedW || i == kLogvarW) scale *= 0.1;  // start near constant velocity
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = scale * nd(rng);
    }
  }
  return p;
}

void validate(const PredictorParams& params) {
  if (params.dims.modes < 1) throw ValidationError("predictor: modes (K) must be >= 1");
  for (int i = 0; i < kTensorCount; ++i) {
    const auto& t = params.tensors[static_cast<std::size_t>(i)];
    if (t.rows() != expected_rows(params.dims, i) || t.cols() != expected_cols(params.dims, i)) {
      throw ValidationError("predictor: tensor " + std::string(tensor_name(i)) + " has wrong shape");
    }
    if (!t.allFinite()) {
      throw ValidationError("predictor: tensor " + std::string(tensor_name(i)) + " is not finite");
    }
  }
}

PredictorDims dims_for(const SceneInput& scene, int hidden, int latent, int modes) {
  PredictorDims d;
  d.hidden = hidden;
  d.latent = latent;
  d.modes = modes;
  d.horizon = static_cast<int>(scene.ground_truth.rows());
  d.history_steps = scene.history_length() - 1;
  d.image_width = scene.image.width;
  d.image_height = scene.image.height;
  d.image_channels = scene.image.channels;
  return d;
}

void check_compatible(const SceneInput& scene, const PredictorParams& params, bool need_truth) {
  validate(scene);
  const PredictorDims& d = params.dims;
  std::ostringstream msg;
  if (scene.history_length() != d.history_steps + 1) {
    msg << "dimension mismatch: history length " << scene.history_length() << " != "
        << d.history_steps + 1;
  } else if (scene.image.width != d.image_width || scene.image.height != d.image_height ||
             scene.image.channels != d.image_channels) {
    msg << "dimension mismatch: image " << scene.image.width << "x" << scene.image.height << "x"
        << scene.image.channels << " != " << d.image_width << "x" << d.image_height << "x"
        << d.image_channels;
  } else if (need_truth && scene.ground_truth.rows() != d.horizon) {
    msg << "dimension mismatch: ground_truth length " << scene.ground_truth.rows()
        << " != horizon " << d.horizon;
  }
  if (!msg.str().empty()) throw ValidationError(msg.str());
}

LatentDistribution encode(const SceneInput& scene, const PredictorParams& params) {
  check_compatible(scene, params, false);
  const Encoded<double> enc = encode_t<double>(scene, inputs_of(scene), params.tensors, params.dims);
  if (!enc.mean.allFinite() || !enc.logvar.allFinite()) {
    throw OverflowError("encode: non-finite latent distribution");
  }
  return {enc.mean, enc.logvar, enc.context};
}

PredictionOutput decode_and_integrate(const AgentState& current, double dt,
                                      const Eigen::VectorXd& context, const Eigen::VectorXd& z,
                                      const PredictorParams& params) {
  if (z.size() != params.dims.latent || context.size() != params.dims.hidden) {
    throw ValidationError("decode: latent/context dimension mismatch");
  }
  const Decoded<double> dec =
      decode_t<double>(current[kX], current[kY], current[kVx], current[kVy], dt, context, z,
                       params.tensors, params.dims, params.dynamics);
  for (const auto& p : dec.positions) {
    if (!p.allFinite()) throw OverflowError("decode: non-finite decoder output");
  }
  if (!dec.logits.allFinite()) throw OverflowError("decode: non-finite mixture logits");
  return to_output(dec);
}

PredictionOutput predict(const SceneInput& scene, const PredictorParams& params,
                         ModeSelection selection) {
  const LatentDistribution latent = encode(scene, params);
  Eigen::VectorXd z = latent.mean;
  if (selection.kind == ModeSelection::Kind::Sample) {
    const Eigen::VectorXd xi = standard_normal(selection.seed, params.dims.latent);
    z = latent.mean.array() + (0.5 * latent.logvar.array()).exp() * xi.array();
  }
  return decode_and_integrate(scene.target_history().current(), scene.dt(), latent.context, z,
                              params);
}

LossBreakdown elbo_loss(const SceneInput& scene, const PredictorParams& params, std::uint64_t seed) {
  check_compatible(scene, params, true);
  const LossT<double> l = forward_loss<double>(scene, inputs_of(scene), params.tensors, params, seed);
  if (!std::isfinite(l.total)) throw OverflowError("elbo_loss: non-finite loss");
  return {l.total, l.reconstruction, l.kl, l.floored};
}

InputGradient input_gradient(const SceneInput& scene, const PredictorParams& params,
                             std::uint64_t seed) {
  check_compatible(scene, params, true);
  ad::Tape tape;
  tape.reserve(1 << 15);
  Inputs<Var> in;
  for (const auto& a : scene.agents) {
    StatesT<Var> h(a.history.states.rows(), kStateDim);
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
      for (int d = 0; d < kStateDim; ++d) h(r, d) = tape.variable(a.history.states(r, d));
    }
    in.histories.push_back(std::move(h));
  }
  auto lift_vec = [&](const Eigen::VectorXd& v) {
    Vec<Var> out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = tape.variable(v[i]);
    return out;
  };
  in.image = lift_vec(scene.image.pixels);
  in.weights = lift_vec(scene.graph.weights);
  in.presence = lift_vec(scene.graph.node_presence);

  Weights<Var> w;
  for (int i = 0; i < kTensorCount; ++i) {
    w[static_cast<std::size_t>(i)] = params.tensors[static_cast<std::size_t>(i)].cast<Var>();
  }
  const LossT<Var> l = forward_loss<Var>(scene, in, w, params, seed);
  const ad::Gradient g = ad::backward(l.total);

  InputGradient out;
  out.loss = l.total.value();
  for (const auto& h : in.histories) {
    StateMatrix gh(h.rows(), kStateDim);
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
      for (int d = 0; d < kStateDim; ++d) gh(r, d) = g[h(r, d)];
    }
    out.grad.histories.push_back(std::move(gh));
  }
  auto grad_vec = [&](const Vec<Var>& v) {
    Eigen::VectorXd out_v(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out_v[i] = g[v[i]];
    return out_v;
  };
  out.grad.image = grad_vec(in.image);
  out.grad.weights = grad_vec(in.weights);
  out.grad.presence = grad_vec(in.presence);
  return out;
}

ParamGradient param_gradient(const SceneInput& scene, const PredictorParams& params,
                             std::uint64_t seed) {
  ad::Tape tape;
  tape.reserve(1 << 16);
  Weights<Var> w;
  for (int i = 0; i < kTensorCount; ++i) {
    const auto& src = params.tensors[static_cast<std::size_t>(i)];
    Mat<Var> m(src.rows(), src.cols());
    for (Eigen::Index c = 0; c < src.cols(); ++c) {
      for (Eigen::Index r = 0; r < src.rows(); ++r) m(r, c) = tape.variable(src(r, c));
    }
    w[static_cast<std::size_t>(i)] = std::move(m);
  }
  const LossT<Var> l = forward_loss<Var>(scene, constant_inputs<Var>(scene), w, params, seed);
  const ad::Gradient g = ad::backward(l.total);

  ParamGradient out;
  out.loss = {l.total.value(), l.reconstruction.value(), l.kl.value(), l.floored};
  for (int i = 0; i < kTensorCount; ++i) {
    const auto& m = w[static_cast<std::size_t>(i)];
    Eigen::MatrixXd gm(m.rows(), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) gm(r, c) = g[m(r, c)];
    }
    out.grad[static_cast<std::size_t>(i)] = std::move(gm);
  }
  return out;
}

}  // namespace trajsens
