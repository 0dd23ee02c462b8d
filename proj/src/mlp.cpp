#include "x3d/mlp.hpp"

#include "x3d/binary.hpp"
#include "x3d/error.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace x3d::nn {

void LayerSpec::validate() const {
  if (layers.empty()) throw ShapeError("layer spec is empty");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].in < 1 || layers[l].out < 1) throw ShapeError("layer widths must be positive");
    if (l > 0 && layers[l].in != layers[l - 1].out) {
      throw ShapeError("layer " + std::to_string(l) + " input " + std::to_string(layers[l].in) +
                       " does not match previous output " + std::to_string(layers[l - 1].out));
    }
  }
}

LayerSpec LayerSpec::chain(std::vector<Index> widths, bool normalize_hidden) {
  if (widths.size() < 2) throw ShapeError("LayerSpec::chain needs at least in and out widths");
  LayerSpec spec;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool last = l + 2 == widths.size();
    spec.layers.push_back({widths[l], widths[l + 1], last ? Activation::None : Activation::Relu,
                           !last && normalize_hidden});
  }
  return spec;
}

Mlp::Mlp(std::string prefix, LayerSpec spec) : prefix_(std::move(prefix)), spec_(std::move(spec)) {
  spec_.validate();
}

std::string Mlp::weight_name(std::size_t layer) const {
  return prefix_ + "." + std::to_string(layer) + ".weight";
}

std::string Mlp::bias_name(std::size_t layer) const {
  return prefix_ + "." + std::to_string(layer) + ".bias";
}

void Mlp::register_params(ParamStore& store) const {
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    store.add(weight_name(l), spec_.layers[l].in, spec_.layers[l].out);
    store.add(bias_name(l), 1, spec_.layers[l].out);
  }
}

void Mlp::init_params(ParamStore& store, std::mt19937_64& rng) const {
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const DenseSpec& d = spec_.layers[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(d.in + d.out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = store.matrix(weight_name(l));
    for (Index c = 0; c < w.cols(); ++c)
      for (Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
    store.matrix(bias_name(l)).setZero();
  }
}

Var Mlp::forward(Tape& tape, Var x) const {
  if (tape.cols(x) != spec_.in_dim()) {
    throw ShapeError(prefix_ + ": input has " + std::to_string(tape.cols(x)) + " columns, expected " +
                     std::to_string(spec_.in_dim()));
  }
  Var h = x;
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    h = add_row(tape, matmul(tape, h, tape.param(weight_name(l))), tape.param(bias_name(l)));
    if (spec_.layers[l].normalize) h = standardize(tape, h);
    if (spec_.layers[l].activation == Activation::Relu) h = relu(tape, h);
  }
  return h;
}

Matrix mlp_forward(const Mlp& mlp, const ParamStore& params, const Matrix& x) {
  Tape tape(&params, false);
  return tape.value(mlp.forward(tape, tape.constant(x)));
}

void sgd_step(ParamStore& params, const Vector& grads, double lr, double momentum, SgdState& state) {
  if (grads.size() != params.size()) throw ShapeError("sgd_step: gradient size does not match parameters");
  for (Index i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      std::string where = "?";
      for (const ParamEntry& e : params.layout()) {
        if (i >= e.offset && i < e.offset + e.size()) {
          where = e.name + "[" + std::to_string(i - e.offset) + "]";
          break;
        }
      }
      throw NumericError("sgd_step: non-finite gradient at " + where);
    }
  }
  if (state.velocity.size() != params.size()) state.velocity = Vector::Zero(params.size());
  state.velocity = momentum * state.velocity + grads;
  params.values() -= lr * state.velocity;
}

void encode_checkpoint(std::ostream& out, const ParamStore& params) {
  using io::detail::put;
  out.write("X3CK", 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.layout().size()));
  for (const ParamEntry& e : params.layout()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.rows));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.cols));
  }
  put<std::uint64_t>(out, static_cast<std::uint64_t>(params.size()));
  for (Index i = 0; i < params.size(); ++i) put<double>(out, params.values()[i]);
}

ParamStore decode_checkpoint(std::istream& in) {
  using io::detail::get;
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "X3CK") throw FormatError("bad X3CK magic");
  ParamStore store;
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("truncated checkpoint entry name");
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    store.add(std::move(name), rows, cols);
  }
  const auto n = get<std::uint64_t>(in);
  if (static_cast<Index>(n) != store.size()) throw FormatError("checkpoint payload does not match layout");
  for (Index i = 0; i < store.size(); ++i) store.values()[i] = get<double>(in);
  store.validate();
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  encode_checkpoint(out, params);
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return decode_checkpoint(in);
}

}  // namespace x3d::nn
