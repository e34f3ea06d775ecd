/*
 * Copyright 2026 The xmhash Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xmhash/error.hpp"
#include "xmhash/numerics.hpp"
#include "xmhash/rng.hpp"

namespace xmhash {

enum class Activation { kRelu, kTanh, kNone };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kNone: return "none";
  }
  return "none";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "none") return Activation::kNone;
  throw ParseError("unknown activation: " + s);
}

struct DenseLayer {
  Matrix weight;  // out × in
  std::vector<double> bias;
  Activation activation = Activation::kNone;

  std::size_t in() const { return weight.cols(); }
  std::size_t out() const { return weight.rows(); }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Fully connected network; also used to hold gradients of the same shape.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out(); }
  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct LayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::kNone;
};

/// Checks layer chaining and that the last layer is a tanh hashing layer of
/// width k.
inline void validate_hash_encoder(const MlpParams& p, std::size_t k) {
  detail::require(!p.layers.empty(), "encoder has no layers");
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const auto& l = p.layers[i];
    detail::require(l.bias.size() == l.out(), "encoder: bias length mismatch");
    if (i + 1 < p.layers.size())
      detail::require(l.out() == p.layers[i + 1].in(),
                      "encoder: layer dimensions do not chain");
  }
  detail::require(p.layers.back().activation == Activation::kTanh,
                  "encoder: final layer must be tanh");
  detail::require(p.output_dim() == k, "encoder: output width must equal k");
}

/// Per-layer inputs and pre-activations kept for backpropagation.
struct ForwardTrace {
  std::vector<Matrix> inputs;          // inputs[l] feeds layer l
  std::vector<Matrix> pre_activations;
  Matrix output;
};

namespace detail {

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kTanh: return std::tanh(z);
    case Activation::kNone: return z;
  }
  return z;
}

/// d(activation)/dz given pre-activation z and activation value y.
inline double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: return 1.0 - y * y;
    case Activation::kNone: return 1.0;
  }
  return 1.0;
}

}  // namespace detail

inline std::pair<Matrix, ForwardTrace> forward(const MlpParams& params,
                                               const Matrix& inputs) {
  detail::require(!params.layers.empty(), "forward: empty network");
  detail::require(inputs.cols() == params.input_dim(),
                  "forward: input width does not match first layer");
  ForwardTrace trace;
  Matrix x = inputs;
  for (const auto& layer : params.layers) {
    detail::require(x.cols() == layer.in(), "forward: layer chain mismatch");
    Matrix z = matmul_nt(x, layer.weight);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto zr = z.row(r);
      for (std::size_t j = 0; j < zr.size(); ++j) zr[j] += layer.bias[j];
    }
    Matrix y(z.rows(), z.cols());
    auto zd = z.data();
    auto yd = y.data();
    for (std::size_t i = 0; i < zd.size(); ++i)
      yd[i] = detail::activate(layer.activation, zd[i]);
    trace.inputs.push_back(std::move(x));
    trace.pre_activations.push_back(std::move(z));
    x = std::move(y);
  }
  trace.output = x;
  return {std::move(x), std::move(trace)};
}

/// Gradients of a loss summed over the batch, given dLoss/dOutput.
inline MlpParams backward(const MlpParams& params, const ForwardTrace& trace,
                          const Matrix& output_grad) {
  const std::size_t depth = params.layers.size();
  detail::require(trace.inputs.size() == depth &&
                      trace.pre_activations.size() == depth,
                  "backward: trace does not match network depth");
  detail::require(output_grad.rows() == trace.output.rows() &&
                      output_grad.cols() == trace.output.cols(),
                  "backward: output gradient shape mismatch");

  MlpParams grads;
  grads.layers.resize(depth);
  Matrix upstream = output_grad;
  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = params.layers[l];
    const Matrix& z = trace.pre_activations[l];
    const Matrix& y = (l + 1 < depth) ? trace.inputs[l + 1] : trace.output;
    detail::require(z.cols() == layer.out() && trace.inputs[l].cols() == layer.in(),
                    "backward: trace shape does not match layer");

    Matrix delta(z.rows(), z.cols());
    for (std::size_t i = 0; i < delta.size(); ++i)
      delta.data()[i] = upstream.data()[i] *
                        detail::activate_grad(layer.activation, z.data()[i],
                                              y.data()[i]);

    auto& g = grads.layers[l];
    g.activation = layer.activation;
    g.weight = matmul_tn(delta, trace.inputs[l]);
    g.bias.assign(layer.out(), 0.0);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      auto dr = delta.row(r);
      for (std::size_t j = 0; j < dr.size(); ++j) g.bias[j] += dr[j];
    }
    if (l > 0) upstream = matmul(delta, layer.weight);
  }
  return grads;
}

/// p ← p − lr·g for every weight and bias.
inline MlpParams sgd_step(MlpParams params, const MlpParams& grads, double lr) {
  detail::require(params.layers.size() == grads.layers.size(),
                  "sgd_step: gradient depth mismatch");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& p = params.layers[l];
    const auto& g = grads.layers[l];
    axpy(-lr, g.weight, p.weight);
    detail::require(p.bias.size() == g.bias.size(), "sgd_step: bias mismatch");
    for (std::size_t j = 0; j < p.bias.size(); ++j) p.bias[j] -= lr * g.bias[j];
  }
  return params;
}

/// Xavier-uniform weights in ±sqrt(6/(fan_in+fan_out)), zero biases.
inline MlpParams init_params(const std::vector<LayerSpec>& spec,
                             std::uint64_t seed) {
  detail::require(!spec.empty(), "init_params: no layers");
  for (std::size_t i = 0; i + 1 < spec.size(); ++i)
    detail::require(spec[i].out == spec[i + 1].in,
                    "init_params: layer sizes do not chain");
  Rng rng(seed);
  MlpParams p;
  for (const auto& s : spec) {
    DenseLayer layer;
    layer.weight = Matrix(s.out, s.in);
    const double bound = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
    layer.bias.assign(s.out, 0.0);
    layer.activation = s.activation;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

/// Input → hidden (relu) → k (tanh); the hashing-network shape used for both
/// modalities.
inline std::vector<LayerSpec> hash_encoder_spec(std::size_t input_dim,
                                                std::size_t hidden,
                                                std::size_t k) {
  return {{input_dim, hidden, Activation::kRelu}, {hidden, k, Activation::kTanh}};
}

// ---------------------------------------------------------------------------
// Checkpoint: one JSON header line listing layer shapes and activations,
// then for each layer the weight matrix and a 1×out bias matrix in the
// binary Matrix format.

inline void write_params(std::ostream& os, const MlpParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers)
    layers.push_back({{"in", l.in()}, {"out", l.out()},
                      {"activation", to_string(l.activation)}});
  os << nlohmann::json{{"layers", layers}}.dump() << '\n';
  for (const auto& l : p.layers) {
    write_matrix(os, l.weight);
    write_matrix(os, Matrix(1, l.bias.size(), l.bias));
  }
  if (!os) throw IoError("write_params: stream error");
}

inline MlpParams read_params(std::istream& is) {
  std::string header_line;
  if (!std::getline(is, header_line))
    throw ParseError("encoder checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("encoder checkpoint header: ") + e.what());
  }
  MlpParams p;
  for (const auto& spec : header.at("layers")) {
    DenseLayer l;
    l.activation = activation_from_string(spec.at("activation").get<std::string>());
    l.weight = read_matrix(is);
    const Matrix bias = read_matrix(is);
    if (l.weight.rows() != spec.at("out").get<std::size_t>() ||
        l.weight.cols() != spec.at("in").get<std::size_t>() ||
        bias.rows() != 1 || bias.cols() != l.weight.rows())
      throw ParseError("encoder checkpoint: layer shape disagrees with header");
    l.bias.assign(bias.data().begin(), bias.data().end());
    p.layers.push_back(std::move(l));
  }
  return p;
}

}  // namespace xmhash
