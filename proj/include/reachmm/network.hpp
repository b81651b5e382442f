#pragma once

#include "reachmm/interval.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace reachmm {

enum class Activation { Relu, Tanh, Identity };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

struct DenseLayer {
  Mat weight;  // m_i x m_{i-1}
  Vec bias;    // m_i
  Activation activation = Activation::Identity;
};

/// Fully connected feed-forward network. The last layer is affine (identity
/// activation); every hidden layer applies its activation elementwise.
class MLPNetwork {
 public:
  explicit MLPNetwork(std::vector<DenseLayer> layers);

  /// Schema: {"input_dim": n, "layers": [{"weights": [[row]...], "bias": [...],
  /// "activation": "relu"|"tanh"|"identity"}, ...]}. Extra keys are ignored.
  static MLPNetwork from_json(const nlohmann::json& j);
  static MLPNetwork load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Vec operator()(const Vec& x) const;

  /// Constant network x -> value, realised as a single zero-weight affine layer.
  static MLPNetwork constant(std::size_t input_dim, const Vec& value);

 private:
  std::vector<DenseLayer> layers_;
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
};

double activate(Activation a, double z);

}  // namespace reachmm
