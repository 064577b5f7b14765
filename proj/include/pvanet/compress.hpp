/* Copyright 2026 The pvanet-lite Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef PVANET_COMPRESS_HPP_
#define PVANET_COMPRESS_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pvanet/network.hpp"
#include "pvanet/weights.hpp"

namespace pvanet {

// Dense row-major matrix of doubles.
struct Matrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c), 0.0) {}
  static Matrix identity(int64_t n);

  double& operator()(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols + j)]; }
  double operator()(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols + j)]; }

  Matrix transposed() const;
  double frobenius() const;
  bool operator==(const Matrix&) const = default;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);

// Thin decomposition W = U diag(sigma) V^T with r = min(M, N) columns in U and
// V, sigma non-negative and descending.
struct Svd {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;
};

// One-sided Jacobi. Throws std::invalid_argument on non-finite entries.
Svd svd(const Matrix& w);

struct LowRankFactorization {
  Matrix first;   // [k, D] = diag(sigma_1..k) V_k^T
  Matrix second;  // [outD, k] = U_k
  std::vector<double> bias;  // carried by the second layer
  int64_t rank = 0;
  double discarded_energy = 0;  // sum of sigma_i^2 for i > k
};

// Throws std::invalid_argument unless 1 <= k <= min(outD, D).
LowRankFactorization compress_fc(const Matrix& weights, const std::vector<double>& bias, int64_t k);
LowRankFactorization compress_fc(const Svd& decomposition, const std::vector<double>& bias, int64_t k);

// ||W - W_k||_F computed from the rank-k reconstruction.
double reconstruction_error(const Matrix& w, int64_t k);

// FC weight tensor (outD, D, 1, 1) <-> matrix.
Matrix fc_matrix(const Tensor& weights);
Tensor fc_tensor(const Matrix& m);

struct FcCompression {
  std::string layer;
  int64_t in_features = 0;
  int64_t out_features = 0;
  int64_t rank = 0;
  int64_t params_before = 0;
  int64_t params_after = 0;
  double frobenius_error = 0;  // ||W - W_k||_F
  double relative_error = 0;   // divided by ||W||_F
};

struct CompressedNetwork {
  NetworkSpec net;
  WeightStore weights;
  std::vector<FcCompression> layers;
};

// Graph rewrite only: each named FC layer L becomes "L_L" (rank k, no bias)
// followed by "L_U" (original bias), with consumers and outputs moved onto
// L_U. Throws SpecError when a layer is absent, not fully connected, or k is
// outside [1, min(in, out)].
NetworkSpec factorized_spec(const NetworkSpec& net, const std::map<std::string, int64_t>& ranks);

// factorized_spec plus weights from a truncated SVD of each layer. Also
// throws SpecError when a weight is missing or misshapen.
CompressedNetwork compress_fc_layers(const NetworkSpec& net, const WeightStore& weights,
                                     const std::map<std::string, int64_t>& ranks);

// fc6 and fc7 of the R-CNN head at ranks k1 and k2.
CompressedNetwork compress_rcnn_head(const NetworkSpec& net, const WeightStore& weights, int64_t k1 = 512,
                                     int64_t k2 = 512);

}  // namespace pvanet

#endif  // PVANET_COMPRESS_HPP_
