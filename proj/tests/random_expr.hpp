#pragma once

// Random straight-line programs over the differentiable ops, interpretable
// on doubles (finite-difference oracle) and on taped Vars.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "trajsens/autodiff.hpp"

namespace testing_util {

enum class Instr { Add, Sub, Mul, Div, Neg, Exp, Log, Tanh, Square, Sqrt };

struct Step {
  Instr op;
  int a;
  int b;
};

struct Program {
  int inputs = 0;
  std::vector<Step> steps;
};

inline Program random_program(std::uint64_t seed, int inputs, int length) {
  std::mt19937_64 rng(seed);
  Program p;
  p.inputs = inputs;
  for (int i = 0; i < length; ++i) {
    const int avail = inputs + i;
    std::uniform_int_distribution<int> pick(0, avail - 1);
    // Bias towards recent nodes so most of the program feeds the output.
    const int a = std::max(0, avail - 1 - static_cast<int>(rng() % 3));
    p.steps.push_back({static_cast<Instr>(rng() % 10), a, pick(rng)});
  }
  return p;
}

// Domain-safe forms: log(1 + x^2), sqrt(1 + x^2), x / (1 + y^2), exp(tanh(x)).
template <class S>
S run(const Program& p, const std::vector<S>& x) {
  using std::exp;
  using std::log;
  using std::sqrt;
  using std::tanh;
  using trajsens::ad::exp;
  using trajsens::ad::log;
  using trajsens::ad::sqrt;
  using trajsens::ad::tanh;
  using trajsens::ad::square;
  std::vector<S> v(x.begin(), x.end());
  for (const Step& s : p.steps) {
    const S& a = v[s.a];
    const S& b = v[s.b];
    switch (s.op) {
      case Instr::Add: v.push_back(a + b); break;
      case Instr::Sub: v.push_back(a - b); break;
      case Instr::Mul: v.push_back(a * b); break;
      case Instr::Div: v.push_back(a / (S(1.0) + b * b)); break;
      case Instr::Neg: v.push_back(-a); break;
      case Instr::Exp: v.push_back(exp(tanh(a))); break;
      case Instr::Log: v.push_back(log(S(1.0) + a * a)); break;
      case Instr::Tanh: v.push_back(tanh(a)); break;
      case Instr::Square: v.push_back(square(tanh(a))); break;
      case Instr::Sqrt: v.push_back(sqrt(S(1.0) + a * a)); break;
    }
  }
  return v.back();
}

// The relative/absolute acceptance rule used for every gradient check.
inline bool close(double analytic, double numeric, double rel, double abs) {
  const double diff = std::abs(analytic - numeric);
  return diff <= abs || diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

}  // namespace testing_util
