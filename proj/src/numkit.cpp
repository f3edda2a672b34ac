#include "gs4dcc/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gs4dcc/rng.hpp"

namespace gs4dcc {

Matrix::Matrix(size_t rows, size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, ErrorKind::kShape,
          "matrix data length " + std::to_string(data_.size()) + " != " + std::to_string(rows) + "x" +
              std::to_string(cols));
}

Matrix Matrix::identity(size_t n) {
  Matrix m(n, n);
  for (size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (size_t r = 0; r < rows_; ++r)
    for (size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& o) {
  require(rows_ == o.rows_ && cols_ == o.cols_, ErrorKind::kShape, "matrix += shape mismatch");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorKind::kShape, "matmul inner dimension mismatch");
  Matrix out(a.rows(), b.cols());
  for (size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (size_t k = 0; k < a.cols(); ++k) {
      double aik = a(i, k);
      auto brow = b.row(k);
      for (size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), ErrorKind::kShape, "matmul_nt inner dimension mismatch");
  Matrix out(a.rows(), b.rows());
  for (size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double acc = 0.0;
      for (size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), ErrorKind::kShape, "matmul_tn inner dimension mismatch");
  Matrix out(a.cols(), b.cols());
  for (size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (size_t i = 0; i < a.cols(); ++i) {
      double aki = arow[i];
      auto orow = out.row(i);
      for (size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kSoftplus: return "softplus";
    case Activation::kExp: return "exp";
  }
  return "?";
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kIdentity: return z;
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kSoftplus: return z > 30.0 ? z : std::log1p(std::exp(z));
    case Activation::kExp: return std::exp(z);
  }
  return z;
}

double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::kIdentity: return 1.0;
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kSoftplus: return 1.0 / (1.0 + std::exp(-z));
    case Activation::kExp: return y;
  }
  return 1.0;
}

void MlpSpec::validate() const {
  require(!activations.empty(), ErrorKind::kShape, "MLP needs at least one layer");
  require(widths.size() == activations.size() + 1, ErrorKind::kShape,
          "MLP widths/activations count mismatch");
  for (size_t w : widths) require(w > 0, ErrorKind::kShape, "MLP layer width must be positive");
}

Mlp Mlp::zeros(MlpSpec spec) {
  spec.validate();
  Mlp m;
  m.spec = std::move(spec);
  for (size_t l = 0; l < m.spec.layers(); ++l) {
    m.weights.w.emplace_back(m.spec.widths[l + 1], m.spec.widths[l]);
    m.weights.b.emplace_back(m.spec.widths[l + 1], 0.0);
  }
  return m;
}

Mlp Mlp::random(MlpSpec spec, Rng& rng, double gain) {
  Mlp m = zeros(std::move(spec));
  for (size_t l = 0; l < m.spec.layers(); ++l) {
    double bound = gain / std::sqrt(static_cast<double>(m.spec.widths[l]));
    for (double& v : m.weights.w[l].data()) v = rng.uniform(-bound, bound);
  }
  return m;
}

size_t Mlp::parameter_count() const {
  size_t n = 0;
  for (size_t l = 0; l < spec.layers(); ++l) n += weights.w[l].size() + weights.b[l].size();
  return n;
}

void Mlp::validate() const {
  spec.validate();
  require(weights.w.size() == spec.layers() && weights.b.size() == spec.layers(), ErrorKind::kShape,
          "MLP weight count does not match spec");
  for (size_t l = 0; l < spec.layers(); ++l) {
    require(weights.w[l].rows() == spec.widths[l + 1] && weights.w[l].cols() == spec.widths[l],
            ErrorKind::kShape, "MLP layer " + std::to_string(l) + " weight shape mismatch");
    require(weights.b[l].size() == spec.widths[l + 1], ErrorKind::kShape,
            "MLP layer " + std::to_string(l) + " bias length mismatch");
  }
}

MlpGrads MlpGrads::zeros_like(const Mlp& mlp) {
  MlpGrads g;
  for (size_t l = 0; l < mlp.spec.layers(); ++l) {
    g.dw.emplace_back(mlp.weights.w[l].rows(), mlp.weights.w[l].cols());
    g.db.emplace_back(mlp.weights.b[l].size(), 0.0);
  }
  return g;
}

void MlpGrads::accumulate(const MlpGrads& other) {
  for (size_t l = 0; l < dw.size(); ++l) {
    dw[l] += other.dw[l];
    for (size_t i = 0; i < db[l].size(); ++i) db[l][i] += other.db[l][i];
  }
}

Matrix mlp_forward(const MlpSpec& spec, const MlpWeights& weights, const Matrix& x, MlpTape* tape) {
  require(x.cols() == spec.in_width(), ErrorKind::kShape,
          "MLP input width " + std::to_string(x.cols()) + " != " + std::to_string(spec.in_width()));
  if (tape) *tape = MlpTape{};
  Matrix cur = x;
  for (size_t l = 0; l < spec.layers(); ++l) {
    const Matrix& w = weights.w[l];
    const auto& b = weights.b[l];
    Matrix z = matmul_nt(cur, w);
    for (size_t i = 0; i < z.rows(); ++i) {
      auto zr = z.row(i);
      for (size_t j = 0; j < zr.size(); ++j) zr[j] += b[j];
    }
    Matrix y(z.rows(), z.cols());
    for (size_t i = 0; i < z.size(); ++i) y.data()[i] = activate(spec.activations[l], z.data()[i]);
    if (tape) {
      tape->inputs.push_back(std::move(cur));
      tape->pre.push_back(std::move(z));
      tape->post.push_back(y);
    }
    cur = std::move(y);
  }
  return cur;
}

MlpGrads mlp_backward(const MlpSpec& spec, const MlpWeights& weights, const MlpTape& tape,
                      const Matrix& upstream) {
  require(tape.pre.size() == spec.layers(), ErrorKind::kShape, "MLP tape does not match spec");
  MlpGrads g;
  g.dw.resize(spec.layers());
  g.db.resize(spec.layers());
  Matrix grad = upstream;
  for (size_t li = spec.layers(); li-- > 0;) {
    const Matrix& z = tape.pre[li];
    const Matrix& y = tape.post[li];
    require(grad.rows() == z.rows() && grad.cols() == z.cols(), ErrorKind::kShape,
            "MLP upstream gradient shape mismatch");
    for (size_t i = 0; i < grad.size(); ++i)
      grad.data()[i] *= activate_grad(spec.activations[li], z.data()[i], y.data()[i]);
    g.dw[li] = matmul_tn(grad, tape.inputs[li]);
    g.db[li].assign(grad.cols(), 0.0);
    for (size_t i = 0; i < grad.rows(); ++i) {
      auto gr = grad.row(i);
      for (size_t j = 0; j < gr.size(); ++j) g.db[li][j] += gr[j];
    }
    grad = matmul(grad, weights.w[li]);
  }
  g.dx = std::move(grad);
  return g;
}

void softmax_rows(Matrix& m) {
  for (size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    double mx = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : r) v /= sum;
  }
}

Matrix cross_attention_update(const Matrix& h_prev, const Matrix& f_prev, const AttentionWeights& w,
                              AttentionTape* tape) {
  const size_t d = f_prev.cols();
  require(d > 0, ErrorKind::kShape, "attention token width d must be positive");
  require(h_prev.rows() == f_prev.rows() && h_prev.cols() == d, ErrorKind::kShape,
          "attention h_prev/f_prev shape mismatch");
  for (const Matrix* m : {&w.wq, &w.wk, &w.wv})
    require(m->rows() == d && m->cols() == d, ErrorKind::kShape, "attention projection must be d x d");

  Matrix q = matmul_nt(h_prev, w.wq);
  Matrix k = matmul_nt(f_prev, w.wk);
  Matrix v = matmul_nt(f_prev, w.wv);
  Matrix scores = matmul_nt(q, k);
  scores *= 1.0 / std::sqrt(static_cast<double>(d));
  softmax_rows(scores);
  Matrix out = matmul(scores, v);
  out += f_prev;
  if (tape) *tape = AttentionTape{h_prev, f_prev, std::move(q), std::move(k), std::move(v), std::move(scores)};
  return out;
}

AttentionGrads cross_attention_backward(const AttentionWeights& w, const AttentionTape& t,
                                        const Matrix& upstream) {
  const size_t d = t.f_prev.cols();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  require(upstream.rows() == t.f_prev.rows() && upstream.cols() == d, ErrorKind::kShape,
          "attention upstream gradient shape mismatch");
  AttentionGrads g;
  // out = A·v + f_prev
  Matrix d_attn = matmul_nt(upstream, t.v);
  Matrix dv = matmul_tn(t.attn, upstream);
  // softmax backward per row: dS = A ⊙ (dA − Σ_j dA⊙A)
  Matrix ds(t.attn.rows(), t.attn.cols());
  for (size_t i = 0; i < ds.rows(); ++i) {
    auto a = t.attn.row(i);
    auto da = d_attn.row(i);
    double dot = 0.0;
    for (size_t j = 0; j < a.size(); ++j) dot += a[j] * da[j];
    auto out = ds.row(i);
    for (size_t j = 0; j < a.size(); ++j) out[j] = a[j] * (da[j] - dot) * inv_sqrt_d;
  }
  Matrix dq = matmul(ds, t.k);
  Matrix dk = matmul_tn(ds, t.q);

  g.dwq = matmul_tn(dq, t.h_prev);
  g.dwk = matmul_tn(dk, t.f_prev);
  g.dwv = matmul_tn(dv, t.f_prev);
  g.dh_prev = matmul(dq, w.wq);
  g.df_prev = upstream;
  g.df_prev += matmul(dk, w.wk);
  g.df_prev += matmul(dv, w.wv);
  return g;
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_interval(double a, double b) {
  if (a > 0.0) {
    // Both in the upper tail: use survival functions.
    return 0.5 * std::erfc(a / std::numbers::sqrt2) - 0.5 * std::erfc(b / std::numbers::sqrt2);
  }
  return normal_cdf(b) - normal_cdf(a);
}

BinBits gaussian_bin_bits(double x, double mu, double sigma, double floor) {
  const double upper = (x + 0.5 - mu) / sigma;
  const double lower = (x - 0.5 - mu) / sigma;
  const double lik = normal_interval(lower, upper);
  if (!(lik > floor)) return {-std::log2(floor), 0.0, 0.0, 0.0};
  const double pu = normal_pdf(upper);
  const double pl = normal_pdf(lower);
  const double scale = -1.0 / (lik * std::numbers::ln2);
  BinBits r;
  r.bits = -std::log2(lik);
  r.d_x = scale * (pu - pl) / sigma;
  r.d_mu = scale * (pl - pu) / sigma;
  r.d_sigma = scale * (lower * pl - upper * pu) / sigma;
  return r;
}

std::vector<double> finite_difference_grad(const std::function<double(std::span<const double>)>& f,
                                           std::span<const double> x, double eps) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = f(probe);
    probe[i] = orig - eps;
    const double fm = f(probe);
    probe[i] = orig;
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / denom;
}

}  // namespace gs4dcc
