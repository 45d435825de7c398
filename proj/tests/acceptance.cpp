// End-to-end acceptance run. Trains the reference model through the CLI, then
// checks each criterion and prints one PASS/FAIL line per criterion. Exits
// nonzero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "random_expr.hpp"
#include "trajsens/attribution.hpp"
#include "trajsens/experiment.hpp"
#include "trajsens/planner.hpp"
#include "trajsens/seed.hpp"
#include "trajsens/stats.hpp"

namespace fs = std::filesystem;
using namespace trajsens;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + TRAJSENS_CLI + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Context {
  fs::path dir;
  ExperimentConfig config;
  PredictorParams params;
  std::vector<SceneInput> data;
  std::uint64_t analysis_seed = 0;
};

AttributionOptions analysis_options(const Context& c) {
  AttributionOptions o;
  o.ranges = fixed_ranges();
  o.seed = c.analysis_seed;
  return o;
}

// 1 --------------------------------------------------------------------------
Verdict gradients(const Context& c) {
  int expressions = 0, expression_bad = 0;
  for (std::uint64_t seed = 0; seed < 150 && expressions < 120; ++seed) {
    const auto prog = testing_util::random_program(seed, 4, 20);
    std::mt19937_64 rng(seed + 1000);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    std::vector<double> x0(4);
    for (auto& v : x0) v = u(rng);
    ad::Tape tape;
    std::vector<ad::Var> xs;
    for (double v : x0) xs.push_back(ad::lift(tape, v));
    const ad::Var out = testing_util::run(prog, xs);
    if (out.is_constant()) continue;
    const ad::Gradient g = ad::backward(out);
    bool ok = true;
    for (int i = 0; i < 4; ++i) {
      const double h = 1e-5;
      auto xp = x0, xm = x0;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (testing_util::run(prog, xp) - testing_util::run(prog, xm)) / (2 * h);
      ok = ok && testing_util::close(g[xs[i]], fd, 1e-3, 1e-7);
    }
    ++expressions;
    expression_bad += !ok;
  }

  int scalars = 0, scalar_bad = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k < 5; ++k) {
    const SceneInput& s = c.data[k * 37];
    const std::uint64_t seed = derive_seed(c.analysis_seed, "fd", k);
    const InputGradient g = input_gradient(s, c.params, seed);
    std::vector<std::pair<FeatureId, Eigen::Index>> cells;
    for (int a = 0; a < static_cast<int>(s.agents.size()); ++a)
      for (int d = 0; d < kStateDim; ++d)
        for (int t = 0; t < s.history_length(); ++t) cells.push_back({FeatureId::state_cell(a, d, t), 0});
    for (Eigen::Index i = 0; i < s.image.pixels.size(); ++i) cells.push_back({FeatureId::image(), i});
    for (Eigen::Index i = 0; i < s.graph.weights.size(); ++i) cells.push_back({FeatureId::graph_weights(), i});
    std::mt19937_64 rng(k);
    std::shuffle(cells.begin(), cells.end(), rng);
    cells.resize(60);
    for (const auto& [f, i] : cells) {
      const Eigen::VectorXd x = extract(s, f);
      const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
      Eigen::VectorXd e = Eigen::VectorXd::Zero(x.size());
      e[i] = h;
      const double fd =
          (elbo_loss(apply(s, f, e), c.params, seed).total - elbo_loss(apply(s, f, -e), c.params, seed).total) /
          (2 * h);
      const double an = extract(g.grad, s, f)[i];
      const bool ok = testing_util::close(an, fd, 1e-3, 1e-7);
      if (!ok) worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(an), std::abs(fd)));
      ++scalars;
      scalar_bad += !ok;
    }
  }
  return {expressions >= 100 && expression_bad == 0 && scalar_bad == 0,
          std::to_string(expressions - expression_bad) + "/" + std::to_string(expressions) + " expressions, " +
              std::to_string(scalars - scalar_bad) + "/" + std::to_string(scalars) +
              " predictor inputs (60 per scene, 5 scenes) within rel 1e-3 / abs 1e-7" +
              (scalar_bad ? ", worst rel " + fmt("%.3g", worst) : "")};
}

// 2 --------------------------------------------------------------------------
Verdict fgsm_ascent(const Context& c) {
  const double eps = 1e-3;
  int ok = 0;
  const int n = static_cast<int>(c.data.size());
  for (const SceneInput& s : c.data) {
    const std::uint64_t seed = derive_seed(c.analysis_seed, "gradient", scene_fingerprint(s));
    const InputGradient g = input_gradient(s, c.params, seed);
    const PerturbSpec spec{PerturbKind::Fgsm, FeatureId::image(), eps, true};
    const SceneInput p = apply(s, spec.target, build_perturbation(spec, s, fixed_ranges(), &g.grad));
    ok += elbo_loss(p, c.params, seed).total >= g.loss - 1e-6;
  }
  const double frac = static_cast<double>(ok) / n;
  return {n >= 100 && frac >= 0.9,
          std::to_string(ok) + "/" + std::to_string(n) + " scenes non-decreasing at eps 1e-3 (" +
              fmt("%.1f", 100 * frac) + "%, need 90%)"};
}

// 3 --------------------------------------------------------------------------
Verdict depth_dominance(const Context& c) {
  const std::vector<SceneInput> scenes(c.data.begin(), c.data.begin() + 200);
  const auto sets = depth_analysis(scenes, c.params, c.config.analysis.depth_kind,
                                   c.config.analysis.depth_magnitude, analysis_options(c));
  const int steps = scenes.front().history_length();
  const int cur = steps - 1;
  std::vector<QuartileSummary> q;
  for (const auto& s : sets) q.push_back(s.summary());
  const std::vector<int> current{kX * steps + cur, kY * steps + cur, kVx * steps + cur, kVy * steps + cur};
  auto is_current = [&](int i) { return std::find(current.begin(), current.end(), i) != current.end(); };
  int failures = 0;
  double best_other_q3 = 0.0, weakest_q1 = std::numeric_limits<double>::infinity();
  for (int g : current) {
    weakest_q1 = std::min(weakest_q1, q[g].q1);
    for (int o = 0; o < static_cast<int>(q.size()); ++o) {
      if (is_current(o)) continue;
      best_other_q3 = std::max(best_other_q3, q[o].q3);
      failures += !dominates(q[g], q[o]);
    }
  }
  return {failures == 0,
          "current x/y/vx/vy each dominate all " + std::to_string(q.size() - 4) +
              " other groups on 200 scenes (" + std::to_string(failures) + " failed comparisons); weakest current Q1 " +
              fmt("%.4g", weakest_q1) + ", largest other Q3 " + fmt("%.4g", best_other_q3)};
}

// 4 --------------------------------------------------------------------------
Verdict image_susceptibility(const Context& c) {
  const std::vector<SceneInput> scenes(c.data.begin(), c.data.begin() + 200);
  const std::vector<double> eps{0.01, 0.1};
  const auto sets = epsilon_sweep(scenes, c.params, eps, analysis_options(c));
  const double m1 = sets[0].summary().q2, m2 = sets[1].summary().q2;
  return {m2 > m1 && m1 > 0.0,
          "median percent increase " + fmt("%.4g", m1) + " at eps 0.01, " + fmt("%.4g", m2) + " at eps 0.1"};
}

// 5 --------------------------------------------------------------------------
Verdict equivariance(const Context& c) {
  std::mt19937_64 rng(derive_seed(c.analysis_seed, "shifts"));
  std::uniform_real_distribution<double> near(-10.0, 10.0), far(-1000.0, 1000.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const SceneInput& s = c.data[static_cast<std::size_t>(i) % c.data.size()];
    const double dx = i % 2 ? far(rng) : near(rng);
    const double dy = i % 2 ? far(rng) : near(rng);
    SceneInput t = s;
    const int tgt = s.target_index();
    t.agents[tgt].history.states(s.history_length() - 1, kX) += dx;
    t.agents[tgt].history.states(s.history_length() - 1, kY) += dy;
    const PredictionOutput a = predict(s, c.params), b = predict(t, c.params);
    for (std::size_t k = 0; k < a.modes.size(); ++k) {
      for (Eigen::Index r = 0; r < a.modes[k].rows(); ++r) {
        worst = std::max(worst, std::abs(b.modes[k](r, 0) - a.modes[k](r, 0) - dx));
        worst = std::max(worst, std::abs(b.modes[k](r, 1) - a.modes[k](r, 1) - dy));
      }
    }
  }
  return {worst < 1e-9, "1000 shifts up to 1000 m, worst position error " + fmt("%.3g", worst) + " m"};
}

// 6 --------------------------------------------------------------------------
PlanProblem random_problem(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PlanProblem p;
  const double half[] = {0.25, 2.0, 6.0, 12.0};
  const double h = half[rng() % 4];
  p.free_space.push_back({-40.0, -h, 160.0, h});
  if (rng() % 2) {
    const double x0 = 10.0 + 40.0 * u(rng);
    p.free_space.push_back({x0, h, x0 + 25.0, h + 10.0});  // pull-out bay
  }
  p.goal = {50.0 + 70.0 * u(rng), h * (2 * u(rng) - 1)};
  const int horizon = 2 + static_cast<int>(rng() % 3);
  Eigen::Vector2d o{5.0 + 35.0 * u(rng), 2.0 * h * (u(rng) - 0.5)};
  const Eigen::Vector2d v{-4.0 + 20.0 * u(rng), 0.5 * (2 * u(rng) - 1)};
  for (int t = 0; t < horizon; ++t) {
    o += v;
    p.predictions.push_back(o);
  }
  return p;
}

Verdict planner_oracle(const Context& c) {
  std::mt19937_64 rng(derive_seed(c.config.seed, "acceptance-planner"));
  int feasible = 0, bad = 0, checker = 0;
  double worst_gap = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 25; ++i) {
    const PlanProblem p = random_problem(rng);
    const PlanResult oracle = brute_force_plan(p, 1.0);
    PlannerOptions opt;
    opt.seed = static_cast<std::uint64_t>(i);
    const PlanResult r = plan(p, opt);
    if (r.feasible && !check_plan(p, r.states).ok) ++checker;
    if (oracle.feasible && !check_plan(p, oracle.states).ok) ++checker;
    if (!oracle.feasible) continue;
    ++feasible;
    const double tol = grid_tolerance(p, oracle, 1.0);
    if (!r.feasible || r.objective > oracle.objective + tol) {
      ++bad;
    } else {
      worst_gap = std::max(worst_gap, (r.objective - oracle.objective) / tol);
    }
  }
  return {bad == 0 && checker == 0 && feasible >= 20,
          std::to_string(feasible) + "/25 oracle-feasible problems, " + std::to_string(bad) +
              " above oracle + tolerance, " + std::to_string(checker) +
              " checker failures; worst (plan - oracle) / tolerance " + fmt("%.3g", worst_gap)};
}

// 7 --------------------------------------------------------------------------
Verdict stop_pattern(const Context& c) {
  const PlanDemoConfig& pd = c.config.analysis.plan_demo;
  const SceneInput scene = generate_scene(pd.scene_seed, pd.scenario);
  const std::uint64_t seed = derive_seed(c.config.seed, "demo");
  PlannerOptions options;
  options.seed = derive_seed(seed, "planner");
  const double kappa = pd.plan.kappa;
  bool pass = true;
  std::string detail;
  for (const char* name : {"image_fgsm", "velocity_occlusion"}) {
    const auto it = std::find_if(pd.attacks.begin(), pd.attacks.end(), [&](const auto& a) { return a.name == name; });
    if (it == pd.attacks.end()) return {false, std::string("attack ") + name + " missing from config"};
    std::vector<PerturbSpec> specs;
    for (const auto& s : it->specs) specs.push_back(resolve_spec(s, scene));
    const DemoResult r = demo_attack(scene, c.params, specs, pd.plan, fixed_ranges(), {},
                                     derive_seed(seed, "gradient"), options);
    auto steps = [](const PlanResult& p) {
      std::vector<double> d;
      for (std::size_t t = 1; t < p.states.size(); ++t) d.push_back((p.states[t] - p.states[t - 1]).norm());
      return d;
    };
    const auto base = steps(r.baseline), att = steps(r.attacked);
    bool ok = r.baseline.feasible && r.attacked.feasible && att.size() >= 3;
    for (double d : base) ok = ok && d >= 0.9 * kappa;
    for (std::size_t t = 0; t < 3 && t < att.size(); ++t) ok = ok && att[t] < 0.5;
    pass = pass && ok;
    std::string b, a;
    for (double d : base) b += (b.empty() ? "" : " ") + fmt("%.2f", d);
    for (double d : att) a += (a.empty() ? "" : " ") + fmt("%.2f", d);
    detail += std::string(detail.empty() ? "" : "; ") + name + ": baseline steps [" + b + "], attacked [" + a + "]";
  }
  return {pass, detail};
}

// 8 --------------------------------------------------------------------------
Verdict statistics(const Context&) {
  std::vector<std::string> failed;
  auto check = [&](bool ok, const char* what) {
    if (!ok) failed.push_back(what);
  };
  Positions zero = Positions::Zero(3, 2), off(3, 2), p2(2, 2);
  off.col(0).setConstant(3.0);
  off.col(1).setConstant(4.0);
  p2 << 0, 0, 1, 0;
  check(ade(zero, zero) == 0.0, "ade identity");
  check(ade(off, zero) == 5.0, "ade 3-4-5");
  check(ade(p2, Positions::Zero(2, 2)) == 0.5, "ade half");
  check(percent_increase(2, 3) == 0.5, "percent 0.5");
  check(percent_increase(2, 2) == 0.0, "percent 0");
  check(!percent_increase(0, 1).has_value(), "zero baseline excluded");
  const std::vector<double> five{1, 2, 3, 4, 5}, one{5}, two{0, 10};
  const auto q5 = quartiles(five), q1 = quartiles(one);
  check(q5.q1 == 2 && q5.q2 == 3 && q5.q3 == 4, "quartiles 1..5");
  check(q1.q1 == 5 && q1.q2 == 5 && q1.q3 == 5, "quartiles singleton");
  check(quartiles(two).q2 == 5, "quartiles midpoint");
  const QuartileSummary A{2, 3, 4}, B{1, 2, 3}, C{1, 3, 5};
  const std::vector<QuartileSummary> ab{A, B}, ac{A, C}, three{B, A, QuartileSummary{0, 0, 0}};
  check(dominant_feature(ab) == 0u, "dominance A over B");
  check(!dominant_feature(ac).has_value(), "dominance tie");
  check(dominant_feature(three) == 1u, "dominance of three");
  check(yeo_johnson(-3.7, 1.0) == -3.7 && yeo_johnson(12.5, 1.0) == 12.5, "yj identity");
  check(std::abs(yeo_johnson(std::numbers::e - 1, 0.0) - 1.0) < 1e-15, "yj log branch");
  check(yeo_johnson(0.0, -1.3) == 0.0 && yeo_johnson(0.0, 0.7) == 0.0, "yj fixed point");
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ul(-2.0, 2.0), ue(-6.0, 6.0), ux(-100.0, 100.0);
  bool round = true, mono = true;
  for (int i = 0; i < 20000; ++i) {
    const double l = ul(rng);
    const double x = (rng() % 2 ? 1.0 : -1.0) * std::pow(10.0, ue(rng));
    if (x > 0 && l < 0 && std::pow(x + 1.0, l) < 1e-4) continue;  // saturated branch
    round = round && std::abs(yeo_johnson_inverse(yeo_johnson(x, l), l) - x) <= 1e-9 * std::max(1.0, std::abs(x));
    double a = ux(rng), b = ux(rng);
    if (a > b) std::swap(a, b);
    if (a < b) mono = mono && yeo_johnson(a, l) < yeo_johnson(b, l);
  }
  check(round, "yj round trip");
  check(mono, "yj monotone");
  std::vector<double> hundred(100);
  std::iota(hundred.begin(), hundred.end(), 1.0);
  check(boxplot_summary(hundred).q2 == 50.5 && boxplot_summary(hundred).outliers.empty(), "boxplot 1..100");
  const std::vector<double> far{1, 2, 3, 4, 1000};
  check(boxplot_summary(far).outliers == std::vector<double>{1000}, "outlier retained");
  const auto single = boxplot_summary(one);
  check(single.q1 == 5 && single.q3 == 5 && single.lower_whisker == 5 && single.upper_whisker == 5,
        "boxplot singleton");
  std::string list;
  for (const auto& f : failed) list += " " + f;
  return {failed.empty(), failed.empty() ? "all exact-value checks hold" : "failed:" + list};
}

// 9 --------------------------------------------------------------------------
Verdict determinism(const Context& c) {
  std::vector<fs::path> dirs;
  for (int workers : {1, 3}) {
    const fs::path d = c.dir / ("analyze_w" + std::to_string(workers));
    fs::remove_all(d);
    fs::create_directories(d);
    fs::copy(c.dir / "scenes", d / "scenes");
    fs::copy_file(c.dir / "checkpoint.txt", d / "checkpoint.txt");
    if (cli("analyze --out \"" + d.string() + "\" --workers " + std::to_string(workers), c.dir / "cli.log") != 0) {
      return {false, "analyze run failed, see " + (c.dir / "cli.log").string()};
    }
    dirs.push_back(d);
  }
  bool same = true;
  for (const char* f : {"analyze_records.csv", "analyze_scores.json"}) {
    const std::string a = read_file(dirs[0] / f);
    same = same && !a.empty() && a == read_file(dirs[1] / f);
  }
  const auto ha = nlohmann::json::parse(read_file(dirs[0] / "manifest_analyze.json"))["config_hash"];
  const auto hb = nlohmann::json::parse(read_file(dirs[1] / "manifest_analyze.json"))["config_hash"];
  return {same && ha == hb, std::string(same ? "byte-identical" : "DIFFERENT") +
                                " records and scores at 1 and 3 workers, config hash " + ha.get<std::string>()};
}

}  // namespace

int main() {
  Context c;
  c.dir = fs::temp_directory_path() / "trajsens_acceptance";
  fs::remove_all(c.dir);
  fs::create_directories(c.dir);
  c.config = reference_config();
  c.analysis_seed = derive_seed(c.config.seed, "analysis");

  std::printf("training the reference model (reference config, output in %s)\n", c.dir.c_str());
  std::fflush(stdout);
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path log = c.dir / "cli.log";
  if (cli("gen-data --out \"" + c.dir.string() + "\"", log) != 0 || cli("train --out \"" + c.dir.string() + "\"", log) != 0) {
    std::printf("FAIL setup: reference training failed, see %s\n", log.c_str());
    return 1;
  }
  c.params = load_params(c.dir / "checkpoint.txt");
  c.data = load_scene_directory(c.dir / "scenes");
  std::printf("trained in %.1f s on %zu scenes\n",
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), c.data.size());

  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;  // 0: none stated
    std::function<Verdict(const Context&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 60, gradients},
      {2, "FGSM ascent property", 120, fgsm_ascent},
      {3, "current-state dominance", 300, depth_dominance},
      {4, "image susceptibility", 300, image_susceptibility},
      {5, "translation equivariance", 0, equivariance},
      {6, "planner vs oracle", 120, planner_oracle},
      {7, "stop-pattern reproduction", 60, stop_pattern},
      {8, "statistics suite", 10, statistics},
      {9, "determinism", 0, determinism},
  };
  int failures = 0;
  for (const auto& cr : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = cr.run(c);
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cr.budget_seconds > 0 && secs > cr.budget_seconds) {
      v.pass = false;
      v.detail += "; over the " + fmt("%.0f", cr.budget_seconds) + " s budget";
    }
    failures += !v.pass;
    std::printf("%s %d %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", cr.id, cr.name, v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
