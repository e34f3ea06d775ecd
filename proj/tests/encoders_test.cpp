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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "xmhash/encoders.hpp"
#include "xmhash/reference.hpp"
#include "xmhash/selfcheck.hpp"

namespace xmhash {
namespace {

MlpParams single_layer(Matrix weight, std::vector<double> bias, Activation act) {
  MlpParams p;
  p.layers.push_back({std::move(weight), std::move(bias), act});
  return p;
}

TEST(Encoders, ForwardAnalyticCases) {
  const auto relu = single_layer(Matrix{{1, -1}, {2, 0}}, {0.5, -3}, Activation::kRelu);
  EXPECT_EQ(forward(relu, Matrix{{1, 2}}).first, (Matrix{{0, 0}}));
  EXPECT_EQ(forward(relu, Matrix{{2, 1}}).first, (Matrix{{1.5, 1}}));

  const auto tanh_layer = single_layer(Matrix{{1, 0}}, {0.0}, Activation::kTanh);
  const Matrix out = forward(tanh_layer, Matrix{{0.5, 9}, {-2, 0}}).first;
  EXPECT_DOUBLE_EQ(out(0, 0), std::tanh(0.5));
  EXPECT_DOUBLE_EQ(out(1, 0), std::tanh(-2.0));
}

TEST(Encoders, TwoLayerComposition) {
  MlpParams p;
  p.layers.push_back({Matrix{{1, 1}}, {-1}, Activation::kRelu});
  p.layers.push_back({Matrix{{2}, {-1}}, {0, 0.5}, Activation::kTanh});
  const Matrix out = forward(p, Matrix{{2, 1}}).first;  // hidden = relu(2) = 2
  EXPECT_DOUBLE_EQ(out(0, 0), std::tanh(4.0));
  EXPECT_DOUBLE_EQ(out(0, 1), std::tanh(-1.5));
}

TEST(Encoders, BackwardOfLinearLayerIsOuterProduct) {
  const auto p = single_layer(Matrix{{1, 2, 3}}, {0}, Activation::kNone);
  const Matrix x{{1, 0, -1}, {2, 1, 0}};
  const auto trace = forward(p, x).second;
  const MlpParams g = backward(p, trace, Matrix{{1}, {2}});
  // Summed over the batch: Σ_b g_b x_b.
  EXPECT_EQ(g.layers[0].weight, (Matrix{{5, 2, -1}}));
  EXPECT_EQ(g.layers[0].bias, (std::vector<double>{3}));
}

TEST(Encoders, BackwardSumsOverBatch) {
  const MlpParams p = init_params(hash_encoder_spec(3, 4, 2), 5);
  const Matrix x{{0.1, 0.2, 0.3}, {-1, 0.5, 2}};
  const Matrix gout{{0.3, -0.7}, {1.1, 0.4}};
  const MlpParams both = backward(p, forward(p, x).second, gout);
  MlpParams sum = backward(p, forward(p, Matrix{{0.1, 0.2, 0.3}}).second, Matrix{{0.3, -0.7}});
  const MlpParams second = backward(p, forward(p, Matrix{{-1, 0.5, 2}}).second, Matrix{{1.1, 0.4}});
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (std::size_t e = 0; e < sum.layers[l].weight.size(); ++e)
      EXPECT_NEAR(both.layers[l].weight.data()[e],
                  sum.layers[l].weight.data()[e] + second.layers[l].weight.data()[e], 1e-14);
    for (std::size_t e = 0; e < sum.layers[l].bias.size(); ++e)
      EXPECT_NEAR(both.layers[l].bias[e], sum.layers[l].bias[e] + second.layers[l].bias[e], 1e-14);
  }
}

TEST(Encoders, BackwardMatchesFiniteDifferences) {
  const auto r = selfcheck::encoder_gradients({}, 20);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Encoders, XavierBoundsAndStatistics) {
  const std::size_t in = 200, out = 300;
  const MlpParams p = init_params({{in, out, Activation::kRelu}}, 17);
  const double bound = std::sqrt(6.0 / (in + out));
  double sum = 0, sum2 = 0;
  for (double w : p.layers[0].weight.data()) {
    EXPECT_LE(std::abs(w), bound);
    sum += w;
    sum2 += w * w;
  }
  const double n = static_cast<double>(in * out);
  // Uniform(-a, a): mean 0, variance a²/3 = 2/(in+out).
  EXPECT_NEAR(sum / n, 0.0, 3 * bound / std::sqrt(3 * n));
  EXPECT_NEAR(sum2 / n, 2.0 / (in + out), 0.02 * 2.0 / (in + out));
  for (double b : p.layers[0].bias) EXPECT_EQ(b, 0.0);
}

TEST(Encoders, InitIsDeterministicPerSeed) {
  const auto spec = hash_encoder_spec(5, 6, 4);
  EXPECT_EQ(init_params(spec, 1), init_params(spec, 1));
  EXPECT_NE(init_params(spec, 1), init_params(spec, 2));
}

TEST(Encoders, SgdOnQuadraticConverges) {
  // Minimize ½‖Wx − y‖² for a linear layer with fixed x, y.
  MlpParams p = single_layer(Matrix{{0.0, 0.0}}, {0.0}, Activation::kNone);
  const Matrix x{{1, 2}, {-1, 1}, {0.5, -0.5}};
  const Matrix y{{3}, {0}, {0}};  // w = (1, 1), b = 0
  for (int step = 0; step < 2000; ++step) {
    auto [out, trace] = forward(p, x);
    axpy(-1.0, y, out);
    p = sgd_step(std::move(p), backward(p, trace, out), 0.05);
  }
  EXPECT_NEAR(p.layers[0].weight(0, 0), 1.0, 1e-8);
  EXPECT_NEAR(p.layers[0].weight(0, 1), 1.0, 1e-8);
  EXPECT_NEAR(p.layers[0].bias[0], 0.0, 1e-8);
}

TEST(Encoders, SgdWithZeroRateIsIdentity) {
  const MlpParams p = init_params(hash_encoder_spec(3, 4, 2), 3);
  const auto trace = forward(p, Matrix{{1, 2, 3}}).second;
  EXPECT_EQ(sgd_step(p, backward(p, trace, Matrix{{1, 1}}), 0.0), p);
}

TEST(Encoders, ShapeContracts) {
  const MlpParams p = init_params(hash_encoder_spec(3, 4, 2), 3);
  EXPECT_THROW(forward(p, Matrix(1, 2)), ContractViolation);
  EXPECT_THROW(backward(p, forward(p, Matrix(1, 3)).second, Matrix(1, 3)), ContractViolation);
  EXPECT_THROW(init_params({{3, 4, Activation::kRelu}, {5, 2, Activation::kTanh}}, 1),
               ContractViolation);
  EXPECT_NO_THROW(validate_hash_encoder(p, 2));
  EXPECT_THROW(validate_hash_encoder(p, 3), ContractViolation);
  EXPECT_THROW(validate_hash_encoder(init_params({{3, 2, Activation::kRelu}}, 1), 2),
               ContractViolation);
}

TEST(Encoders, CheckpointRoundTrip) {
  const MlpParams p = init_params(hash_encoder_spec(7, 5, 3), 21);
  std::stringstream ss;
  write_params(ss, p);
  EXPECT_EQ(read_params(ss), p);
}

TEST(Encoders, CorruptCheckpointThrows) {
  std::stringstream empty;
  EXPECT_THROW(read_params(empty), ParseError);
  const MlpParams p = init_params(hash_encoder_spec(2, 2, 2), 1);
  std::stringstream ss;
  write_params(ss, p);
  std::string s = ss.str();
  s.resize(s.size() - 8);
  std::stringstream cut(s);
  EXPECT_THROW(read_params(cut), ParseError);
}

TEST(Encoders, ActivationNames) {
  for (auto a : {Activation::kRelu, Activation::kTanh, Activation::kNone})
    EXPECT_EQ(activation_from_string(to_string(a)), a);
  EXPECT_THROW(activation_from_string("gelu"), ParseError);
}

}  // namespace
}  // namespace xmhash
