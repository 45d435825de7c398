#include "trajsens/autodiff.hpp"

#include <sstream>

namespace trajsens::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
  }
  return "unknown";
}

namespace detail {

void throw_domain(Op op, double x, const char* rule) {
  std::ostringstream msg;
  msg << op_name(op) << ": " << rule << " (got " << x << ")";
  throw NumericDomainError(msg.str());
}

void throw_tape_mismatch() { throw Error("autodiff: operands recorded on different tapes"); }

void throw_nonfinite(Op op, double x) {
  std::ostringstream msg;
  msg << op_name(op) << ": non-finite result for argument " << x;
  throw OverflowError(msg.str());
}

}  // namespace detail

Gradient backward(const Var& loss) {
  if (loss.is_constant()) throw Error("backward: loss is not recorded on a tape");
  const Tape& tape = *loss.tape();
  std::vector<double> adjoint(tape.size(), 0.0);
  adjoint[static_cast<std::size_t>(loss.index())] = 1.0;

  for (std::int32_t k = loss.index(); k >= 0; --k) {
    const double a = adjoint[static_cast<std::size_t>(k)];
    if (a == 0.0) continue;
    const Node& n = tape.node(static_cast<std::size_t>(k));
    for (int p = 0; p < 2; ++p) {
      if (n.parent[p] >= 0) adjoint[static_cast<std::size_t>(n.parent[p])] += a * n.partial[p];
    }
  }

  for (std::size_t k = 0; k < adjoint.size(); ++k) {
    if (!std::isfinite(adjoint[k])) {
      std::ostringstream msg;
      msg << "backward: non-finite adjoint at node " << k << " (" << op_name(tape.node(k).op)
          << ", value " << tape.node(k).value << ")";
      throw OverflowError(msg.str());
    }
  }
  return Gradient(&tape, std::move(adjoint));
}

}  // namespace trajsens::ad
