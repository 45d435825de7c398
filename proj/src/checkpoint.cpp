#include <cstdio>
#include <fstream>
#include <sstream>

#include "trajsens/predictor.hpp"

namespace trajsens {

// Text checkpoint:
//   trajsens-params v1
//   dims hidden latent modes horizon history_steps width height channels patch
//   dynamics integrate_actions|relative_offsets
//   tensor <name> <rows> <cols>
//   <rows*cols values, column-major, %.17g, one per line>
//   ...
//   end

namespace {

constexpr const char* kHeader = "trajsens-params v1";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string serialize_params(const PredictorParams& params) {
  validate(params);
  const PredictorDims& d = params.dims;
  std::ostringstream out;
  out << kHeader << "\n";
  out << "dims " << d.hidden << ' ' << d.latent << ' ' << d.modes << ' ' << d.horizon << ' '
      << d.history_steps << ' ' << d.image_width << ' ' << d.image_height << ' '
      << d.image_channels << ' ' << d.patch << "\n";
  out << "dynamics " << dynamics_name(params.dynamics) << "\n";
  for (int i = 0; i < kTensorCount; ++i) {
    const auto& t = params.tensors[static_cast<std::size_t>(i)];
    out << "tensor " << tensor_name(i) << ' ' << t.rows() << ' ' << t.cols() << "\n";
    for (Eigen::Index k = 0; k < t.size(); ++k) out << format_double(t.data()[k]) << "\n";
  }
  out << "end\n";
  return out.str();
}

PredictorParams parse_params(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) {
    throw ParseError("checkpoint: missing or unsupported header");
  }
  std::string word;
  PredictorDims d;
  if (!(in >> word) || word != "dims" ||
      !(in >> d.hidden >> d.latent >> d.modes >> d.horizon >> d.history_steps >> d.image_width >>
        d.image_height >> d.image_channels >> d.patch)) {
    throw ParseError("checkpoint: malformed dims line");
  }
  std::string dyn;
  if (!(in >> word >> dyn) || word != "dynamics") {
    throw ParseError("checkpoint: malformed dynamics line");
  }
  PredictorParams p = zero_params(d, parse_dynamics(dyn));
  for (int i = 0; i < kTensorCount; ++i) {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> word >> name >> rows >> cols) || word != "tensor") {
      throw ParseError("checkpoint: expected tensor header for " + std::string(tensor_name(i)));
    }
    if (name != tensor_name(i)) {
      throw ParseError("checkpoint: expected tensor " + std::string(tensor_name(i)) + ", found " +
                       name);
    }
    auto& t = p.tensors[static_cast<std::size_t>(i)];
    if (rows != t.rows() || cols != t.cols()) {
      throw ValidationError("checkpoint: tensor " + name + " has wrong shape");
    }
    for (Eigen::Index k = 0; k < t.size(); ++k) {
      std::string v;
      if (!(in >> v)) throw ParseError("checkpoint: truncated tensor " + name);
      try {
        std::size_t used = 0;
        t.data()[k] = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
      } catch (const std::exception&) {
        throw ParseError("checkpoint: bad value '" + v + "' in tensor " + name);
      }
    }
  }
  if (!(in >> word) || word != "end") throw ParseError("checkpoint: missing end marker");
  validate(p);
  return p;
}

void save_params(const PredictorParams& params, const std::filesystem::path& path) {
  const std::string body = serialize_params(params);
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << body;
  if (!out) throw Error("write failed for " + path.string());
}

PredictorParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_params(buf.str());
}

}  // namespace trajsens
