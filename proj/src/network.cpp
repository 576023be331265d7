#include "msnode/network.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace msnode {

void NetworkSpec::validate() const {
  if (state_dim < 1) throw std::invalid_argument("NetworkSpec: state_dim must be at least 1");
  for (Index w : hidden) {
    if (w < 1) throw std::invalid_argument("NetworkSpec: hidden widths must be at least 1");
  }
}

ParamLayout ParamLayout::build(const NetworkSpec& spec) {
  spec.validate();
  ParamLayout layout;
  std::vector<Index> widths;
  widths.push_back(spec.input_width());
  widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
  widths.push_back(1);

  Index offset = 0;
  layout.layers.resize(spec.state_dim);
  for (Index net = 0; net < spec.state_dim; ++net) {
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      ad::AffineBlock b;
      b.cols = widths[l];
      b.rows = widths[l + 1];
      b.weight_offset = offset;
      b.bias_offset = offset + b.rows * b.cols;
      offset = b.bias_offset + b.rows;
      layout.layers[net].push_back(b);
    }
  }
  layout.size = offset;
  return layout;
}

NetworkParams unflatten(const FlatParams& p) {
  require_length(p.values.size(), p.layout.size, "unflatten");
  NetworkParams nets(p.layout.layers.size());
  for (std::size_t i = 0; i < nets.size(); ++i) {
    for (const auto& b : p.layout.layers[i]) {
      LayerParams layer;
      layer.weight = ad::kernels::weight(p.values.data(), b);
      layer.bias = p.values.segment(b.bias_offset, b.rows);
      nets[i].push_back(std::move(layer));
    }
  }
  return nets;
}

FlatParams flatten(const NetworkSpec& spec, const NetworkParams& nets) {
  FlatParams p;
  p.layout = ParamLayout::build(spec);
  p.values.resize(p.layout.size);
  if (nets.size() != p.layout.layers.size()) throw DimensionError("flatten: network count");
  for (std::size_t i = 0; i < nets.size(); ++i) {
    if (nets[i].size() != p.layout.layers[i].size()) throw DimensionError("flatten: layer count");
    for (std::size_t l = 0; l < nets[i].size(); ++l) {
      const auto& b = p.layout.layers[i][l];
      const auto& layer = nets[i][l];
      if (layer.weight.rows() != b.rows || layer.weight.cols() != b.cols ||
          layer.bias.size() != b.rows) {
        throw DimensionError("flatten: layer shape does not match spec");
      }
      Eigen::Map<RowMatrix>(p.values.data() + b.weight_offset, b.rows, b.cols) = layer.weight;
      p.values.segment(b.bias_offset, b.rows) = layer.bias;
    }
  }
  return p;
}

FlatParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
  FlatParams p;
  p.layout = ParamLayout::build(spec);
  p.values = Vec::Zero(p.layout.size);
  std::mt19937_64 rng(seed);
  for (const auto& net : p.layout.layers) {
    for (const auto& b : net) {
      const double bound = std::sqrt(6.0 / static_cast<double>(b.cols + b.rows));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Index k = 0; k < b.rows * b.cols; ++k) p.values[b.weight_offset + k] = dist(rng);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------

NeuralDynamics::NeuralDynamics(NetworkSpec spec)
    : spec_(std::move(spec)), layout_(ParamLayout::build(spec_)) {}

template <class Ctx>
typename Ctx::Value NeuralDynamics::forward(Ctx& ctx, const typename Ctx::Value& x,
                                            const typename Ctx::Value& p,
                                            const TimeRow& t) const {
  require_length(ctx.primal(x).rows(), spec_.state_dim, "NeuralDynamics state");
  require_length(ctx.primal(p).rows(), layout_.size, "NeuralDynamics params");
  typename Ctx::Value input = x;
  if (spec_.time_input) {
    require_length(t.size(), ctx.primal(x).cols(), "NeuralDynamics times");
    input = ctx.concat({ctx.constant(Matrix(t)), x});
  }

  std::vector<typename Ctx::Value> outputs;
  outputs.reserve(layout_.layers.size());
  for (const auto& net : layout_.layers) {
    typename Ctx::Value h = input;
    for (std::size_t l = 0; l < net.size(); ++l) {
      h = ctx.affine(p, net[l], h);
      if (l + 1 < net.size()) h = ctx.tanh(h);
    }
    outputs.push_back(std::move(h));
  }
  return ctx.concat(outputs);
}

Matrix NeuralDynamics::eval(ad::PrimalContext& ctx, const Matrix& x, const Matrix& p,
                            const TimeRow& t) const {
  return forward(ctx, x, p, t);
}

ad::DualVector NeuralDynamics::eval(ad::DualContext& ctx, const ad::DualVector& x,
                                    const ad::DualVector& p, const TimeRow& t) const {
  return forward(ctx, x, p, t);
}

ad::Var NeuralDynamics::eval(ad::Tape& ctx, ad::Var x, ad::Var p, const TimeRow& t) const {
  return forward(ctx, x, p, t);
}

// ---------------------------------------------------------------------------

nlohmann::json network_spec_to_json(const NetworkSpec& spec) {
  return {{"state_dim", spec.state_dim}, {"hidden", spec.hidden}, {"time_input", spec.time_input}};
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  NetworkSpec spec;
  spec.state_dim = j.at("state_dim").get<Index>();
  spec.hidden = j.at("hidden").get<std::vector<Index>>();
  spec.time_input = j.at("time_input").get<bool>();
  spec.validate();
  return spec;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const Vec& values) {
  nlohmann::json j;
  j["network"] = network_spec_to_json(spec);
  j["values"] = std::vector<double>(values.data(), values.data() + values.size());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump(1) << '\n';
}

std::pair<NetworkSpec, Vec> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  nlohmann::json j = nlohmann::json::parse(in);
  NetworkSpec spec = network_spec_from_json(j.at("network"));
  auto values = j.at("values").get<std::vector<double>>();
  Vec v = Eigen::Map<const Vec>(values.data(), static_cast<Index>(values.size()));
  require_length(v.size(), ParamLayout::build(spec).size, "checkpoint values");
  return {spec, v};
}

std::shared_ptr<const Dynamics> zero_dynamics(Index n, Index num_params) {
  return make_dynamics(n, num_params, [n](auto& ctx, const auto& x, const auto&, const TimeRow&) {
    return ctx.constant(Matrix::Zero(n, ctx.primal(x).cols()));
  });
}

}  // namespace msnode
