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

#include "pvanet/compress.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pvanet {

namespace {

using Column = std::vector<double>;

double dot(const Column& a, const Column& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void rotate(Column& a, Column& b, double c, double s) {
  for (size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    a[i] = c * x - s * y;
    b[i] = s * x + c * y;
  }
}

// Columns of `a` (m >= n) are orthogonalized in place; `v` accumulates the
// rotations.
void jacobi_sweeps(std::vector<Column>& a, std::vector<Column>& v) {
  const size_t n = a.size();
  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (size_t p = 0; p + 1 < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(a[p], a[p]);
        const double beta = dot(a[q], a[q]);
        const double gamma = dot(a[p], a[q]);
        if (gamma == 0.0 || std::fabs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(a[p], a[q], c, s);
        rotate(v[p], v[q], c, s);
      }
    }
    if (!rotated) return;
  }
}

// Unit vector orthogonal to every column in `basis`.
Column orthogonal_complement(const std::vector<Column>& basis, size_t dim) {
  for (size_t e = 0; e < dim; ++e) {
    Column x(dim, 0.0);
    x[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        const double d = dot(b, x);
        for (size_t i = 0; i < dim; ++i) x[i] -= d * b[i];
      }
    }
    const double norm = std::sqrt(dot(x, x));
    if (norm > 0.1) {
      for (double& xi : x) xi /= norm;
      return x;
    }
  }
  throw std::logic_error("svd: no orthogonal complement left");
}

Svd svd_tall(const Matrix& w) {
  const auto m = static_cast<size_t>(w.rows);
  const auto n = static_cast<size_t>(w.cols);
  std::vector<Column> a(n, Column(m));
  std::vector<Column> v(n, Column(n, 0.0));
  for (size_t j = 0; j < n; ++j) {
    for (size_t i = 0; i < m; ++i) a[j][i] = w(static_cast<int64_t>(i), static_cast<int64_t>(j));
    v[j][j] = 1.0;
  }
  jacobi_sweeps(a, v);

  std::vector<double> norms(n);
  for (size_t j = 0; j < n; ++j) norms[j] = std::sqrt(dot(a[j], a[j]));
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) { return norms[x] > norms[y]; });

  const double smax = n > 0 ? norms[order[0]] : 0.0;
  const double tiny = static_cast<double>(std::max(m, n)) * std::numeric_limits<double>::epsilon() * smax;
  Svd out;
  out.u = Matrix(w.rows, w.cols);
  out.v = Matrix(w.cols, w.cols);
  out.sigma.resize(n);
  std::vector<Column> ucols;
  for (size_t k = 0; k < n; ++k) {
    const size_t j = order[k];
    Column u(m);
    if (norms[j] > tiny && norms[j] > 0.0) {
      out.sigma[k] = norms[j];
      for (size_t i = 0; i < m; ++i) u[i] = a[j][i] / norms[j];
    } else {
      out.sigma[k] = 0.0;
      u = orthogonal_complement(ucols, m);
    }
    ucols.push_back(u);
    for (size_t i = 0; i < m; ++i) out.u(static_cast<int64_t>(i), static_cast<int64_t>(k)) = u[i];
    for (size_t i = 0; i < n; ++i) out.v(static_cast<int64_t>(i), static_cast<int64_t>(k)) = v[j][i];
  }
  return out;
}

void check_rank(const Matrix& w, int64_t k) {
  const int64_t r = std::min(w.rows, w.cols);
  if (k < 1 || k > r) {
    throw std::invalid_argument("rank " + std::to_string(k) + " is outside [1, " + std::to_string(r) +
                                "] for a " + std::to_string(w.rows) + "x" + std::to_string(w.cols) + " matrix");
  }
}

Matrix rank_k(const Svd& d, int64_t k) {
  Matrix out(d.u.rows, d.v.rows);
  for (int64_t i = 0; i < out.rows; ++i) {
    for (int64_t j = 0; j < out.cols; ++j) {
      double s = 0;
      for (int64_t t = 0; t < k; ++t) s += d.u(i, t) * d.sigma[static_cast<size_t>(t)] * d.v(j, t);
      out(i, j) = s;
    }
  }
  return out;
}

}  // namespace

Matrix Matrix::identity(int64_t n) {
  Matrix m(n, n);
  for (int64_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
  }
  return t;
}

double Matrix::frobenius() const {
  double s = 0;
  for (double x : data) s += x * x;
  return std::sqrt(s);
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matrix product: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (int64_t i = 0; i < a.rows; ++i) {
    for (int64_t k = 0; k < a.cols; ++k) {
      const double x = a(i, k);
      for (int64_t j = 0; j < b.cols; ++j) c(i, j) += x * b(k, j);
    }
  }
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw std::invalid_argument("matrix difference: shapes differ");
  Matrix c(a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) c.data[i] = a.data[i] - b.data[i];
  return c;
}

Svd svd(const Matrix& w) {
  for (double x : w.data) {
    if (!std::isfinite(x)) throw std::invalid_argument("svd: matrix has non-finite entries");
  }
  if (w.rows >= w.cols) return svd_tall(w);
  Svd t = svd_tall(w.transposed());
  std::swap(t.u, t.v);
  return t;
}

LowRankFactorization compress_fc(const Svd& d, const std::vector<double>& bias, int64_t k) {
  const int64_t out_d = d.u.rows;
  const int64_t in_d = d.v.rows;
  const int64_t r = static_cast<int64_t>(d.sigma.size());
  if (k < 1 || k > r) {
    throw std::invalid_argument("rank " + std::to_string(k) + " is outside [1, " + std::to_string(r) + "]");
  }
  if (!bias.empty() && static_cast<int64_t>(bias.size()) != out_d) {
    throw std::invalid_argument("bias has " + std::to_string(bias.size()) + " entries, expected " +
                                std::to_string(out_d));
  }
  LowRankFactorization f;
  f.rank = k;
  f.bias = bias;
  f.first = Matrix(k, in_d);
  f.second = Matrix(out_d, k);
  for (int64_t t = 0; t < k; ++t) {
    const double s = d.sigma[static_cast<size_t>(t)];
    for (int64_t j = 0; j < in_d; ++j) f.first(t, j) = s * d.v(j, t);
    for (int64_t i = 0; i < out_d; ++i) f.second(i, t) = d.u(i, t);
  }
  for (int64_t t = k; t < r; ++t) f.discarded_energy += d.sigma[static_cast<size_t>(t)] * d.sigma[static_cast<size_t>(t)];
  return f;
}

LowRankFactorization compress_fc(const Matrix& weights, const std::vector<double>& bias, int64_t k) {
  check_rank(weights, k);
  return compress_fc(svd(weights), bias, k);
}

double reconstruction_error(const Matrix& w, int64_t k) {
  check_rank(w, k);
  return (w - rank_k(svd(w), k)).frobenius();
}

Matrix fc_matrix(const Tensor& weights) {
  const Shape s = weights.shape();
  Matrix m(s.n, s.c * s.h * s.w);
  const auto src = weights.data();
  for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = src[i];
  return m;
}

Tensor fc_tensor(const Matrix& m) {
  Tensor t(Shape{m.rows, m.cols, 1, 1});
  auto dst = t.data();
  for (size_t i = 0; i < m.data.size(); ++i) dst[i] = static_cast<float>(m.data[i]);
  return t;
}

NetworkSpec factorized_spec(const NetworkSpec& net, const std::map<std::string, int64_t>& ranks) {
  NetworkSpec out = net;
  for (const auto& [name, k] : ranks) {
    const LayerSpec* l = out.find(name);
    if (!l) throw SpecError("network \"" + net.name + "\" has no layer \"" + name + "\" to compress");
    if (l->kind != LayerKind::kFullyConnected) {
      throw SpecError("layer \"" + name + "\" is " + std::string(to_string(l->kind)) + ", not fully_connected");
    }
    const FcSpec spec = l->get<FcSpec>();
    if (k < 1 || k > std::min(spec.in_features, spec.out_features)) {
      throw SpecError("rank " + std::to_string(k) + " for \"" + name + "\" must lie in [1, " +
                      std::to_string(std::min(spec.in_features, spec.out_features)) + "]");
    }
    const std::string lo = name + "_L";
    const std::string up = name + "_U";
    LayerSpec first{lo, LayerKind::kFullyConnected, l->inputs, l->group, FcSpec{spec.in_features, k, false}};
    LayerSpec second{up, LayerKind::kFullyConnected, {lo}, l->group, FcSpec{k, spec.out_features, spec.has_bias}};
    auto& layers = out.layers;
    auto pos = std::find_if(layers.begin(), layers.end(), [&](const LayerSpec& x) { return x.name == name; });
    pos = layers.erase(pos);
    layers.insert(pos, {first, second});
    for (auto& x : layers) {
      for (auto& in : x.inputs) {
        if (in == name) in = up;
      }
    }
    for (auto& o : out.outputs) {
      if (o == name) o = up;
    }
  }
  return out;
}

CompressedNetwork compress_fc_layers(const NetworkSpec& net, const WeightStore& weights,
                                     const std::map<std::string, int64_t>& ranks) {
  CompressedNetwork out;
  out.net = factorized_spec(net, ranks);
  out.weights = weights;
  for (const auto& [name, k] : ranks) {
    const FcSpec spec = net.find(name)->get<FcSpec>();
    const std::string wname = param_name(name, ParamRole::kWeight);
    if (!weights.contains(wname)) throw SpecError("missing weight \"" + wname + "\"");
    const Matrix w = fc_matrix(weights.at(wname));
    if (w.rows != spec.out_features || w.cols != spec.in_features) {
      throw SpecError("weight \"" + wname + "\" does not match " + std::to_string(spec.out_features) + "x" +
                      std::to_string(spec.in_features));
    }
    std::vector<double> bias;
    if (spec.has_bias) {
      for (float b : weights.at(param_name(name, ParamRole::kBias)).data()) bias.push_back(b);
    }
    const LowRankFactorization f = compress_fc(svd(w), bias, k);

    out.weights.erase(wname);
    out.weights.erase(param_name(name, ParamRole::kBias));
    out.weights.set(param_name(name + "_L", ParamRole::kWeight), fc_tensor(f.first));
    out.weights.set(param_name(name + "_U", ParamRole::kWeight), fc_tensor(f.second));
    if (spec.has_bias) {
      Tensor b(Shape{spec.out_features, 1, 1, 1});
      for (size_t i = 0; i < bias.size(); ++i) b.data()[i] = static_cast<float>(bias[i]);
      out.weights.set(param_name(name + "_U", ParamRole::kBias), std::move(b));
    }

    FcCompression rep;
    rep.layer = name;
    rep.in_features = spec.in_features;
    rep.out_features = spec.out_features;
    rep.rank = k;
    rep.params_before = spec.in_features * spec.out_features;
    rep.params_after = k * (spec.in_features + spec.out_features);
    rep.frobenius_error = std::sqrt(f.discarded_energy);
    const double norm = w.frobenius();
    rep.relative_error = norm > 0 ? rep.frobenius_error / norm : 0.0;
    out.layers.push_back(rep);
  }
  return out;
}

CompressedNetwork compress_rcnn_head(const NetworkSpec& net, const WeightStore& weights, int64_t k1, int64_t k2) {
  for (const char* name : {"fc6", "fc7"}) {
    if (!net.find(name)) throw SpecError("network \"" + net.name + "\" has no R-CNN head layer \"" + name + "\"");
  }
  return compress_fc_layers(net, weights, {{"fc6", k1}, {"fc7", k2}});
}

}  // namespace pvanet
