/*
 * Copyright 2026 The ultr-lab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Scoring functions f(d): a linear model and a small ELU MLP, sharing one
// score / gradient / update contract.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "ultr/common.hpp"
#include "ultr/data.hpp"

namespace ultr {

enum class RankerKind { kLinear, kMlp };

inline std::string_view to_string(RankerKind kind) { return kind == RankerKind::kLinear ? "linear" : "mlp"; }

// Dense layer; weight is (out x in).
struct Layer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;

  std::size_t in() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out() const { return static_cast<std::size_t>(weight.rows()); }
  bool operator==(const Layer& o) const { return weight == o.weight && bias == o.bias; }
};

inline constexpr double kLayerNormEps = 1e-5;

inline double elu(double x) { return x >= 0 ? x : std::expm1(x); }
inline double elu_derivative(double x) { return x >= 0 ? 1.0 : std::exp(x); }

// Shape shared by RankerParams and Gradient. Flat order: per layer, the
// weight matrix row-major followed by the bias.
struct LayerStack {
  std::vector<Layer> layers;

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  bool same_shape(const LayerStack& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].in() != o.layers[i].in() || layers[i].out() != o.layers[i].out()) return false;
    return true;
  }

  std::vector<double> flat() const {
    std::vector<double> v;
    v.reserve(num_parameters());
    for (const auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) v.push_back(l.weight(r, c));
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) v.push_back(l.bias(r));
    }
    return v;
  }

  void set_flat(std::span<const double> v) {
    detail::require<ValidationError>(v.size() == num_parameters(), "flat vector has ", v.size(),
                                     " entries, expected ", num_parameters());
    std::size_t k = 0;
    for (auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = v[k++];
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = v[k++];
    }
  }

  bool operator==(const LayerStack&) const = default;
};

struct Gradient : LayerStack {
  Gradient& operator+=(const Gradient& o) {
    detail::require<ValidationError>(same_shape(o), "gradient shape mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += o.layers[i].weight;
      layers[i].bias += o.layers[i].bias;
    }
    return *this;
  }
  Gradient& operator*=(double s) {
    for (auto& l : layers) {
      l.weight *= s;
      l.bias *= s;
    }
    return *this;
  }
  bool is_zero() const {
    for (const auto& l : layers)
      if (!l.weight.isZero(0.0) || !l.bias.isZero(0.0)) return false;
    return true;
  }
};

struct RankerParams : LayerStack {
  RankerKind kind = RankerKind::kLinear;
  bool layer_norm_enabled = false;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in(); }

  Gradient zero_gradient() const {
    Gradient g;
    g.layers.reserve(layers.size());
    for (const auto& l : layers)
      g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    return g;
  }

  // Linear ranker, zero-initialized.
  static RankerParams linear(std::size_t input_dim) {
    detail::require(input_dim >= 1, "input_dim must be >= 1");
    RankerParams p;
    p.kind = RankerKind::kLinear;
    p.layers.push_back({Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(input_dim)), Eigen::VectorXd::Zero(1)});
    return p;
  }

  // MLP with ELU hidden layers; weights uniform in +-1/sqrt(fan_in), biases zero.
  static RankerParams mlp(std::size_t input_dim, std::span<const std::size_t> hidden, bool layer_norm, Rng& rng) {
    detail::require(input_dim >= 1, "input_dim must be >= 1");
    RankerParams p;
    p.kind = RankerKind::kMlp;
    p.layer_norm_enabled = layer_norm;
    std::size_t fan_in = input_dim;
    auto add = [&](std::size_t out) {
      detail::require(out >= 1, "layer width must be >= 1");
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      Layer l{Eigen::MatrixXd(out, fan_in), Eigen::VectorXd::Zero(out)};
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = u(rng);
      p.layers.push_back(std::move(l));
      fan_in = out;
    };
    for (auto h : hidden) add(h);
    add(1);
    return p;
  }

  // Throws ValidationError if the layer stack does not form a valid scorer.
  void validate() const {
    detail::require<ValidationError>(!layers.empty(), "ranker has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      detail::require<ValidationError>(layers[i].bias.size() == layers[i].weight.rows(), "layer ", i,
                                       " bias size mismatch");
      if (i > 0)
        detail::require<ValidationError>(layers[i].in() == layers[i - 1].out(), "layer ", i,
                                         " input dim does not match previous output");
    }
    detail::require<ValidationError>(layers.back().out() == 1, "output layer must have one unit");
    if (kind == RankerKind::kLinear)
      detail::require<ValidationError>(layers.size() == 1, "linear ranker must have exactly one layer");
  }

  bool operator==(const RankerParams&) const = default;
};

namespace detail {

// Forward pass that keeps what backprop needs.
struct Trace {
  std::vector<Eigen::VectorXd> inputs;   // input to each layer
  std::vector<Eigen::VectorXd> pre;      // pre-activation (after layer norm, if any) of hidden layers
  std::vector<Eigen::VectorXd> normed;   // layer-norm output (zhat) per hidden layer
  std::vector<double> inv_std;           // per hidden layer
};

inline void check_input(const RankerParams& p, std::size_t n) {
  require<ValidationError>(n == p.input_dim(), "feature vector has ", n, " entries, ranker expects ", p.input_dim());
}

inline double forward(const RankerParams& p, std::span<const double> x, Trace* trace) {
  check_input(p, x.size());
  const Eigen::Map<const Eigen::VectorXd> xin(x.data(), static_cast<Eigen::Index>(x.size()));
  if (p.kind == RankerKind::kLinear && trace == nullptr)
    return p.layers[0].weight.row(0).dot(xin) + p.layers[0].bias(0);
  Eigen::VectorXd h = xin;
  const std::size_t n_hidden = p.layers.size() - 1;
  for (std::size_t l = 0; l < n_hidden; ++l) {
    if (trace) trace->inputs.push_back(h);
    Eigen::VectorXd z = p.layers[l].weight * h + p.layers[l].bias;
    if (p.layer_norm_enabled) {
      const double mean = z.mean();
      const double var = (z.array() - mean).square().mean();
      const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
      z = (z.array() - mean) * inv_std;
      if (trace) trace->inv_std.push_back(inv_std);
    }
    if (trace) trace->pre.push_back(z);
    h = z.unaryExpr([](double v) { return elu(v); });
  }
  if (trace) trace->inputs.push_back(h);
  return p.layers.back().weight.row(0).dot(h) + p.layers.back().bias(0);
}

}  // namespace detail

inline double score(const RankerParams& params, std::span<const double> features) {
  return detail::forward(params, features, nullptr);
}

// Adds upstream * d score / d theta into `grad`; returns the score.
inline double accumulate_gradient(const RankerParams& params, std::span<const double> features, double upstream,
                                  Gradient& grad) {
  if (params.kind == RankerKind::kLinear) {
    detail::check_input(params, features.size());
    const Eigen::Map<const Eigen::VectorXd> x(features.data(), static_cast<Eigen::Index>(features.size()));
    const double s = params.layers[0].weight.row(0).dot(x) + params.layers[0].bias(0);
    if (upstream != 0.0) {
      grad.layers[0].weight.row(0) += upstream * x.transpose();
      grad.layers[0].bias(0) += upstream;
    }
    return s;
  }
  detail::Trace trace;
  const double s = detail::forward(params, features, &trace);
  if (upstream == 0.0) return s;
  const std::size_t last = params.layers.size() - 1;
  grad.layers[last].weight.row(0) += upstream * trace.inputs[last].transpose();
  grad.layers[last].bias(0) += upstream;
  Eigen::VectorXd delta = upstream * params.layers[last].weight.row(0).transpose();  // d/d h_{last}
  for (std::size_t l = last; l-- > 0;) {
    // through ELU
    Eigen::VectorXd dz = delta.array() * trace.pre[l].unaryExpr([](double v) { return elu_derivative(v); }).array();
    if (params.layer_norm_enabled) {
      const auto& zhat = trace.pre[l];
      const double n = static_cast<double>(dz.size());
      const double mean_g = dz.sum() / n;
      const double mean_gz = dz.dot(zhat) / n;
      dz = trace.inv_std[l] * (dz.array() - mean_g - zhat.array() * mean_gz).matrix();
    }
    grad.layers[l].weight.noalias() += dz * trace.inputs[l].transpose();
    grad.layers[l].bias += dz;
    if (l > 0) delta = params.layers[l].weight.transpose() * dz;
  }
  return s;
}

// Score and its derivative with respect to every parameter.
inline std::pair<double, Gradient> score_with_gradient(const RankerParams& params, std::span<const double> features) {
  Gradient g = params.zero_gradient();
  const double s = accumulate_gradient(params, features, 1.0, g);
  return {s, std::move(g)};
}

inline std::vector<double> score_query(const RankerParams& params, const Query& query) {
  std::vector<double> s;
  s.reserve(query.size());
  for (const auto& d : query.candidates) s.push_back(score(params, d.features));
  return s;
}

// Candidate indices by descending score; ties keep candidate order.
inline std::vector<std::size_t> rank_by_scores(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

inline std::vector<std::size_t> rank(const RankerParams& params, const Query& query) {
  return rank_by_scores(score_query(params, query));
}

// theta <- theta - lr * g, in place.
inline void apply_sgd(RankerParams& params, const Gradient& grad, double learning_rate) {
  detail::require<ValidationError>(params.same_shape(grad), "gradient shape does not match parameters");
  detail::require(learning_rate > 0, "learning rate must be positive");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    params.layers[i].weight -= learning_rate * grad.layers[i].weight;
    params.layers[i].bias -= learning_rate * grad.layers[i].bias;
  }
}

inline RankerParams sgd_update(RankerParams params, const Gradient& grad, double learning_rate) {
  apply_sgd(params, grad, learning_rate);
  return params;
}

}  // namespace ultr
