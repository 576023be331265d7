#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "msnode/dynamics.hpp"

namespace msnode {

// Architecture of the learned dynamics: one scalar-output MLP per state.
struct NetworkSpec {
  Index state_dim = 1;
  std::vector<Index> hidden;  // hidden layer widths, input to output
  bool time_input = false;    // prepend t to the network input

  Index input_width() const { return state_dim + (time_input ? 1 : 0); }
  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

// Where each network's layers live in the flat parameter vector.
struct ParamLayout {
  // layers[i][l] is layer l of the network producing state component i.
  std::vector<std::vector<ad::AffineBlock>> layers;
  Index size = 0;

  static ParamLayout build(const NetworkSpec& spec);
};

struct FlatParams {
  Vec values;
  ParamLayout layout;

  Index size() const { return values.size(); }
};

// Per-layer weight matrices and biases, mostly for inspection and tests.
struct LayerParams {
  RowMatrix weight;
  Vec bias;
};
using NetworkParams = std::vector<std::vector<LayerParams>>;

NetworkParams unflatten(const FlatParams& p);
FlatParams flatten(const NetworkSpec& spec, const NetworkParams& nets);

// Glorot-uniform weights, zero biases. Deterministic in `seed`.
FlatParams init_params(const NetworkSpec& spec, std::uint64_t seed);

class NeuralDynamics final : public Dynamics {
 public:
  explicit NeuralDynamics(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const ParamLayout& layout() const { return layout_; }

  Index state_dim() const override { return spec_.state_dim; }
  Index param_dim() const override { return layout_.size; }

  Matrix eval(ad::PrimalContext& ctx, const Matrix& x, const Matrix& p,
              const TimeRow& t) const override;
  ad::DualVector eval(ad::DualContext& ctx, const ad::DualVector& x, const ad::DualVector& p,
                      const TimeRow& t) const override;
  ad::Var eval(ad::Tape& ctx, ad::Var x, ad::Var p, const TimeRow& t) const override;

 private:
  template <class Ctx>
  typename Ctx::Value forward(Ctx& ctx, const typename Ctx::Value& x,
                              const typename Ctx::Value& p, const TimeRow& t) const;

  NetworkSpec spec_;
  ParamLayout layout_;
};

// Parameter checkpoint: {"network": {...}, "values": [...]}. Doubles are
// written in shortest round-trip form, so save/load is bit exact.
nlohmann::json network_spec_to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const Vec& values);
std::pair<NetworkSpec, Vec> load_checkpoint(const std::filesystem::path& path);

}  // namespace msnode
