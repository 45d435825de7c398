#pragma once

// Scalar reverse-mode differentiation.
//
// A Tape records every operation applied to taped Vars as a node holding the
// value, the operation tag, at most two parent indices and the local partials.
// Parents always precede their children, so one reverse sweep over the node
// array accumulates all adjoints. A Var without a tape is a constant; mixing
// constants and taped Vars records only the taped side.
//
// Var models an Eigen scalar (see the NumTraits specialization at the bottom),
// which lets the predictor be written once over Eigen::Matrix<Scalar, ...>.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trajsens/errors.hpp"

namespace trajsens::ad {

enum class Op : std::uint8_t { Leaf, Add, Sub, Mul, Div, Neg, Exp, Log, Tanh, Relu, Square, Sqrt };

std::string_view op_name(Op op);

struct Node {
  double value;
  std::int32_t parent[2];
  double partial[2];
  Op op;
};

class Var;
class Gradient;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers an independent variable (a leaf) holding `x`.
  Var variable(double x);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  void reserve(std::size_t n) { nodes_.reserve(n); }
  /// Drops every node. Vars recorded before the call become invalid.
  void clear() { nodes_.clear(); }

  std::int32_t push(double value, Op op, std::int32_t p0, double d0, std::int32_t p1 = -1,
                    double d1 = 0.0) {
    nodes_.push_back(Node{value, {p0, p1}, {d0, d1}, op});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

 private:
  std::vector<Node> nodes_;
};

class Var {
 public:
  Var() = default;
  // Implicit: Eigen and generic code build scalars from literals.
  Var(double value) : value_(value) {}  // NOLINT(google-explicit-constructor)
  Var(Tape* tape, std::int32_t index, double value) : tape_(tape), index_(index), value_(value) {}

  double value() const { return value_; }
  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  std::int32_t index() const { return index_; }

  Var& operator+=(const Var& rhs);
  Var& operator-=(const Var& rhs);
  Var& operator*=(const Var& rhs);
  Var& operator/=(const Var& rhs);

 private:
  Tape* tape_ = nullptr;
  std::int32_t index_ = -1;
  double value_ = 0.0;
};

inline Var Tape::variable(double x) { return Var(this, push(x, Op::Leaf, -1, 0.0), x); }

inline Var lift(Tape& tape, double x) { return tape.variable(x); }

namespace detail {

[[noreturn]] void throw_domain(Op op, double x, const char* rule);
[[noreturn]] void throw_tape_mismatch();
[[noreturn]] void throw_nonfinite(Op op, double x);

inline Tape* common_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr) return b.tape();
  if (b.tape() != nullptr && b.tape() != a.tape()) throw_tape_mismatch();
  return a.tape();
}

inline Var record_unary(const Var& a, Op op, double value, double partial) {
  if (!std::isfinite(value)) throw_nonfinite(op, a.value());
  if (a.is_constant()) return Var(value);
  return Var(a.tape(), a.tape()->push(value, op, a.index(), partial), value);
}

inline Var record_binary(const Var& a, const Var& b, Op op, double value, double da, double db) {
  Tape* tape = common_tape(a, b);
  if (tape == nullptr) return Var(value);
  std::int32_t p0 = a.index();
  std::int32_t p1 = b.index();
  if (a.is_constant()) {
    return Var(tape, tape->push(value, op, p1, db), value);
  }
  if (b.is_constant()) {
    return Var(tape, tape->push(value, op, p0, da), value);
  }
  return Var(tape, tape->push(value, op, p0, da, p1, db), value);
}

}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  return detail::record_binary(a, b, Op::Add, a.value() + b.value(), 1.0, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return detail::record_binary(a, b, Op::Sub, a.value() - b.value(), 1.0, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return detail::record_binary(a, b, Op::Mul, a.value() * b.value(), b.value(), a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  if (b.value() == 0.0) detail::throw_domain(Op::Div, b.value(), "denominator must be nonzero");
  const double inv = 1.0 / b.value();
  const double q = a.value() / b.value();
  return detail::record_binary(a, b, Op::Div, q, inv, -q * inv);
}
inline Var operator-(const Var& a) { return detail::record_unary(a, Op::Neg, -a.value(), -1.0); }
inline Var operator+(const Var& a) { return a; }

inline Var& Var::operator+=(const Var& rhs) { return *this = *this + rhs; }
inline Var& Var::operator-=(const Var& rhs) { return *this = *this - rhs; }
inline Var& Var::operator*=(const Var& rhs) { return *this = *this * rhs; }
inline Var& Var::operator/=(const Var& rhs) { return *this = *this / rhs; }

inline Var add(const Var& a, const Var& b) { return a + b; }
inline Var sub(const Var& a, const Var& b) { return a - b; }
inline Var mul(const Var& a, const Var& b) { return a * b; }
inline Var div(const Var& a, const Var& b) { return a / b; }
inline Var neg(const Var& a) { return -a; }

inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return detail::record_unary(a, Op::Exp, e, e);
}
inline Var log(const Var& a) {
  if (!(a.value() > 0.0)) detail::throw_domain(Op::Log, a.value(), "argument must be positive");
  return detail::record_unary(a, Op::Log, std::log(a.value()), 1.0 / a.value());
}
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.value());
  return detail::record_unary(a, Op::Tanh, t, 1.0 - t * t);
}
/// Subgradient at the kink is 0.
inline Var relu(const Var& a) {
  const bool on = a.value() > 0.0;
  return detail::record_unary(a, Op::Relu, on ? a.value() : 0.0, on ? 1.0 : 0.0);
}
inline Var square(const Var& a) {
  return detail::record_unary(a, Op::Square, a.value() * a.value(), 2.0 * a.value());
}
inline Var sqrt(const Var& a) {
  if (a.value() < 0.0 || (a.value() == 0.0 && !a.is_constant())) {
    detail::throw_domain(Op::Sqrt, a.value(), "argument must be positive");
  }
  const double r = std::sqrt(a.value());
  return detail::record_unary(a, Op::Sqrt, r, a.value() == 0.0 ? 0.0 : 0.5 / r);
}
inline Var sum(std::span<const Var> terms) {
  Var total(0.0);
  for (const Var& t : terms) total = total + t;
  return total;
}

// Comparisons act on values only; they never record.
inline bool operator<(const Var& a, const Var& b) { return a.value() < b.value(); }
inline bool operator>(const Var& a, const Var& b) { return a.value() > b.value(); }
inline bool operator<=(const Var& a, const Var& b) { return a.value() <= b.value(); }
inline bool operator>=(const Var& a, const Var& b) { return a.value() >= b.value(); }
inline bool operator==(const Var& a, const Var& b) { return a.value() == b.value(); }
inline bool operator!=(const Var& a, const Var& b) { return a.value() != b.value(); }

/// Adjoints of one reverse sweep, indexed by tape node.
class Gradient {
 public:
  Gradient(const Tape* tape, std::vector<double> adjoints)
      : tape_(tape), adjoints_(std::move(adjoints)) {}

  /// d(loss)/d(v); zero for constants and for nodes the loss does not depend on.
  double operator[](const Var& v) const {
    if (v.is_constant()) return 0.0;
    if (v.tape() != tape_) detail::throw_tape_mismatch();
    return adjoints_[static_cast<std::size_t>(v.index())];
  }
  const std::vector<double>& adjoints() const { return adjoints_; }

 private:
  const Tape* tape_;
  std::vector<double> adjoints_;
};

/// Reverse sweep from a scalar loss. Throws OverflowError naming the first
/// node whose adjoint is not finite.
Gradient backward(const Var& loss);

// Plain-double overloads so templated code can call the same names for both
// scalar types.
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double square(double x) { return x * x; }
inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

}  // namespace trajsens::ad

namespace Eigen {

template <>
struct NumTraits<trajsens::ad::Var> : NumTraits<double> {
  using Real = trajsens::ad::Var;
  using NonInteger = trajsens::ad::Var;
  using Nested = trajsens::ad::Var;
  using Literal = trajsens::ad::Var;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 3,
    MulCost = 3
  };
};

template <typename BinaryOp>
struct ScalarBinaryOpTraits<trajsens::ad::Var, double, BinaryOp> {
  using ReturnType = trajsens::ad::Var;
};
template <typename BinaryOp>
struct ScalarBinaryOpTraits<double, trajsens::ad::Var, BinaryOp> {
  using ReturnType = trajsens::ad::Var;
};

}  // namespace Eigen
