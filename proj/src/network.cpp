#include "reachmm/network.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace reachmm {

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity" || name == "linear") return Activation::Identity;
  throw std::invalid_argument(fmt::format("unknown activation '{}'", name));
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Identity: return z;
  }
  return z;
}

MLPNetwork::MLPNetwork(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("network needs at least one layer");
  input_dim_ = static_cast<std::size_t>(layers_.front().weight.cols());
  Eigen::Index prev = layers_.front().weight.cols();
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& layer = layers_[k];
    if (layer.weight.cols() != prev) {
      throw std::invalid_argument(fmt::format("layer {}: weight has {} columns, expected {}", k,
                                              layer.weight.cols(), prev));
    }
    if (layer.bias.size() != layer.weight.rows()) {
      throw std::invalid_argument(fmt::format("layer {}: bias has {} entries, weight has {} rows", k,
                                              layer.bias.size(), layer.weight.rows()));
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw std::invalid_argument(fmt::format("layer {}: non-finite parameter", k));
    }
    prev = layer.weight.rows();
  }
  if (layers_.back().activation != Activation::Identity) {
    throw std::invalid_argument("final layer must have identity activation");
  }
  output_dim_ = static_cast<std::size_t>(prev);
}

MLPNetwork MLPNetwork::from_json(const nlohmann::json& j) {
  if (!j.contains("layers") || !j["layers"].is_array()) {
    throw std::invalid_argument("network JSON: missing 'layers' array");
  }
  std::vector<DenseLayer> layers;
  std::size_t k = 0;
  for (const auto& lj : j["layers"]) {
    const auto& rows = lj.at("weights");
    if (!rows.is_array() || rows.empty()) {
      throw std::invalid_argument(fmt::format("layer {}: 'weights' must be a non-empty array of rows", k));
    }
    const auto m = static_cast<Eigen::Index>(rows.size());
    const auto cols = static_cast<Eigen::Index>(rows.front().size());
    DenseLayer layer;
    layer.weight.resize(m, cols);
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto& row = rows[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
        throw std::invalid_argument(fmt::format("layer {}: row {} has inconsistent length", k, r));
      }
      for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    const auto& bias = lj.at("bias");
    layer.bias.resize(static_cast<Eigen::Index>(bias.size()));
    for (std::size_t i = 0; i < bias.size(); ++i) layer.bias(static_cast<Eigen::Index>(i)) = bias[i].get<double>();
    layer.activation = parse_activation(lj.value("activation", std::string("identity")));
    layers.push_back(std::move(layer));
    ++k;
  }
  MLPNetwork net(std::move(layers));
  if (j.contains("input_dim") && j["input_dim"].get<std::size_t>() != net.input_dim()) {
    throw std::invalid_argument(fmt::format("network JSON: input_dim {} does not match first layer ({})",
                                            j["input_dim"].get<std::size_t>(), net.input_dim()));
  }
  return net;
}

MLPNetwork MLPNetwork::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open network file '{}'", path.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(fmt::format("network file '{}': {}", path.string(), e.what()));
  }
  try {
    return from_json(j);
  } catch (const std::exception& e) {
    throw std::invalid_argument(fmt::format("network file '{}': {}", path.string(), e.what()));
  }
}

nlohmann::json MLPNetwork::to_json() const {
  nlohmann::json j;
  j["input_dim"] = input_dim_;
  auto& arr = j["layers"] = nlohmann::json::array();
  for (const auto& layer : layers_) {
    nlohmann::json lj;
    auto& rows = lj["weights"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(layer.weight.cols()));
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) row[static_cast<std::size_t>(c)] = layer.weight(r, c);
      rows.push_back(row);
    }
    lj["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
    lj["activation"] = std::string(to_string(layer.activation));
    arr.push_back(std::move(lj));
  }
  return j;
}

Vec MLPNetwork::operator()(const Vec& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim_) {
    throw std::invalid_argument(fmt::format("network input has {} entries, expected {}", x.size(), input_dim_));
  }
  Vec a = x;
  for (const auto& layer : layers_) {
    Vec z = layer.weight * a + layer.bias;
    if (layer.activation != Activation::Identity) {
      z = z.unaryExpr([act = layer.activation](double v) { return activate(act, v); });
    }
    a = std::move(z);
  }
  return a;
}

MLPNetwork MLPNetwork::constant(std::size_t input_dim, const Vec& value) {
  DenseLayer layer;
  layer.weight = Mat::Zero(value.size(), static_cast<Eigen::Index>(input_dim));
  layer.bias = value;
  layer.activation = Activation::Identity;
  return MLPNetwork({std::move(layer)});
}

}  // namespace reachmm
