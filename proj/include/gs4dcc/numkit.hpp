#pragma once

// Small dense numeric kernel: row-major matrices, MLPs, single-head
// cross-attention and the hand-derived backward passes the trainer needs.
// All loops use a fixed accumulation order so results are bit-reproducible.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gs4dcc/error.hpp"

namespace gs4dcc {

class Rng;

class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(size_t rows, size_t cols, std::vector<double> data);

  static Matrix identity(size_t n);

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
  double operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Matrix transposed() const;
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool all_finite() const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

// A · B
Matrix matmul(const Matrix& a, const Matrix& b);
// A · Bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// Aᵀ · B
Matrix matmul_tn(const Matrix& a, const Matrix& b);

enum class Activation : uint8_t { kIdentity = 0, kRelu = 1, kSoftplus = 2, kExp = 3 };

const char* activation_name(Activation a);
double activate(Activation a, double z);
// Derivative expressed through the pre-activation z and the output y.
double activate_grad(Activation a, double z, double y);

struct MlpSpec {
  std::vector<size_t> widths;            // widths[0] = input, widths.back() = output
  std::vector<Activation> activations;   // one per layer, size = widths.size() - 1

  size_t layers() const { return activations.size(); }
  size_t in_width() const { return widths.front(); }
  size_t out_width() const { return widths.back(); }
  void validate() const;
  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct MlpWeights {
  std::vector<Matrix> w;               // layer l: widths[l+1] × widths[l]
  std::vector<std::vector<double>> b;  // layer l: widths[l+1]
  friend bool operator==(const MlpWeights&, const MlpWeights&) = default;
};

struct Mlp {
  MlpSpec spec;
  MlpWeights weights;

  // Zero-initialised weights matching spec.
  static Mlp zeros(MlpSpec spec);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static Mlp random(MlpSpec spec, Rng& rng, double gain = 1.0);

  size_t parameter_count() const;
  void validate() const;
  friend bool operator==(const Mlp&, const Mlp&) = default;
};

// Inputs and pre-activations recorded by the forward pass.
struct MlpTape {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  std::vector<Matrix> post;    // output of each layer
};

struct MlpGrads {
  std::vector<Matrix> dw;
  std::vector<std::vector<double>> db;
  Matrix dx;

  static MlpGrads zeros_like(const Mlp& mlp);
  void accumulate(const MlpGrads& other);
};

// x: n × in. Returns n × out.
Matrix mlp_forward(const MlpSpec& spec, const MlpWeights& weights, const Matrix& x,
                   MlpTape* tape = nullptr);
inline Matrix mlp_forward(const Mlp& mlp, const Matrix& x, MlpTape* tape = nullptr) {
  return mlp_forward(mlp.spec, mlp.weights, x, tape);
}
MlpGrads mlp_backward(const MlpSpec& spec, const MlpWeights& weights, const MlpTape& tape,
                      const Matrix& upstream);
inline MlpGrads mlp_backward(const Mlp& mlp, const MlpTape& tape, const Matrix& upstream) {
  return mlp_backward(mlp.spec, mlp.weights, tape, upstream);
}

// Single-head cross-attention with residual, tokens as rows (L × d):
//   q = h_prev·Wqᵀ, k = f_prev·Wkᵀ, v = f_prev·Wvᵀ
//   h = softmax(q·kᵀ/√d)·v + f_prev
struct AttentionWeights {
  Matrix wq, wk, wv;  // d × d
  friend bool operator==(const AttentionWeights&, const AttentionWeights&) = default;
};

struct AttentionTape {
  Matrix h_prev, f_prev, q, k, v, attn;  // attn: L × L softmax weights
};

struct AttentionGrads {
  Matrix dwq, dwk, dwv, dh_prev, df_prev;
};

Matrix cross_attention_update(const Matrix& h_prev, const Matrix& f_prev, const AttentionWeights& w,
                              AttentionTape* tape = nullptr);
AttentionGrads cross_attention_backward(const AttentionWeights& w, const AttentionTape& tape,
                                        const Matrix& upstream);

// Row-wise softmax with max subtraction.
void softmax_rows(Matrix& m);

// Standard normal helpers.
double normal_pdf(double x);
double normal_cdf(double x);
// Φ(b) − Φ(a) for a ≤ b, evaluated on the side of the distribution with less cancellation.
double normal_interval(double a, double b);

// −log2 of the mass of the unit bin [x−½, x+½] under N(μ, σ²), with the
// likelihood floored at `floor`. Gradients are zero where the floor is active.
struct BinBits {
  double bits;
  double d_x, d_mu, d_sigma;
};
BinBits gaussian_bin_bits(double x, double mu, double sigma, double floor = 1e-9);

// Central differences (f(x+ε) − f(x−ε)) / 2ε per coordinate.
std::vector<double> finite_difference_grad(const std::function<double(std::span<const double>)>& f,
                                           std::span<const double> x, double eps);

double relative_error(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace gs4dcc
