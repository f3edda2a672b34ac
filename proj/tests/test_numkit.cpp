#include <cmath>

#include "doctest.h"
#include "gs4dcc/entropy.hpp"
#include "gs4dcc/numkit.hpp"
#include "helpers.hpp"

using namespace gs4dcc;
using namespace gs4dcc::testing;

namespace {

// Naive triple loop, written independently of the library kernels.
std::vector<double> mlp_oracle(const Mlp& m, std::vector<double> x) {
  for (size_t l = 0; l < m.spec.layers(); ++l) {
    const Matrix& w = m.weights.w[l];
    std::vector<double> y(w.rows());
    for (size_t o = 0; o < w.rows(); ++o) {
      double s = m.weights.b[l][o];
      for (size_t i = 0; i < w.cols(); ++i) s += w(o, i) * x[i];
      switch (m.spec.activations[l]) {
        case Activation::kIdentity: break;
        case Activation::kRelu: s = s > 0 ? s : 0; break;
        case Activation::kSoftplus: s = std::log1p(std::exp(s)); break;
        case Activation::kExp: s = std::exp(s); break;
      }
      y[o] = s;
    }
    x = y;
  }
  return x;
}

// softmax(q kᵀ/√d) v + f, element by element.
Matrix attention_oracle(const Matrix& h, const Matrix& f, const AttentionWeights& w) {
  const size_t L = f.rows(), d = f.cols();
  auto proj = [&](const Matrix& x, const Matrix& W, size_t t, size_t j) {
    double s = 0;
    for (size_t i = 0; i < d; ++i) s += x(t, i) * W(j, i);
    return s;
  };
  Matrix out(L, d);
  for (size_t a = 0; a < L; ++a) {
    std::vector<double> logits(L);
    double mx = -1e300;
    for (size_t b = 0; b < L; ++b) {
      double s = 0;
      for (size_t j = 0; j < d; ++j) s += proj(h, w.wq, a, j) * proj(f, w.wk, b, j);
      logits[b] = s / std::sqrt(double(d));
      mx = std::max(mx, logits[b]);
    }
    double z = 0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (size_t j = 0; j < d; ++j) {
      double s = 0;
      for (size_t b = 0; b < L; ++b) s += logits[b] / z * proj(f, w.wv, b, j);
      out(a, j) = s + f(a, j);
    }
  }
  return out;
}

bool near_kink(const Mlp& m, const Matrix& x) {
  MlpTape tape;
  mlp_forward(m, x, &tape);
  for (size_t l = 0; l < m.spec.layers(); ++l)
    if (m.spec.activations[l] == Activation::kRelu)
      for (double z : tape.pre[l].data())
        if (std::abs(z) < 1e-3) return true;
  return false;
}

}  // namespace

TEST_CASE("mlp: identity layer with W = I passes input through") {
  Mlp m = Mlp::zeros(MlpSpec{{3, 3}, {Activation::kIdentity}});
  m.weights.w[0] = Matrix::identity(3);
  Matrix x(1, 3, std::vector<double>{1.5, -2.0, 0.25});
  CHECK(mlp_forward(m, x) == x);
}

TEST_CASE("mlp: 1 -> 1 relu, W=2, b=1, x=3 gives 7") {
  Mlp m = Mlp::zeros(MlpSpec{{1, 1}, {Activation::kRelu}});
  m.weights.w[0](0, 0) = 2.0;
  m.weights.b[0][0] = 1.0;
  CHECK(mlp_forward(m, Matrix(1, 1, 3.0))(0, 0) == 7.0);
}

TEST_CASE("mlp: random 4-8-2 net agrees with scalar loops") {
  Rng rng(11);
  for (Activation a : {Activation::kRelu, Activation::kSoftplus, Activation::kExp}) {
    Mlp m = Mlp::random(MlpSpec{{4, 8, 2}, {a, Activation::kIdentity}}, rng);
    for (auto& b : m.weights.b)
      for (double& v : b) v = rng.normal() * 0.3;
    Matrix x = random_matrix(5, 4, rng);
    Matrix y = mlp_forward(m, x);
    for (size_t r = 0; r < 5; ++r) {
      auto ref = mlp_oracle(m, std::vector<double>(x.row(r).begin(), x.row(r).end()));
      for (size_t o = 0; o < 2; ++o) CHECK(y(r, o) == doctest::Approx(ref[o]).epsilon(1e-9));
    }
  }
}

TEST_CASE("mlp: backward matches central differences on 20 instances") {
  Rng rng(12);
  int checked = 0;
  while (checked < 20) {
    const Activation hidden = checked % 2 ? Activation::kRelu : Activation::kSoftplus;
    Mlp m = Mlp::random(MlpSpec{{3, 6, 5, 2}, {hidden, Activation::kSoftplus, Activation::kIdentity}}, rng);
    for (auto& b : m.weights.b)
      for (double& v : b) v = rng.normal() * 0.2;
    Matrix x = random_matrix(4, 3, rng);
    if (near_kink(m, x)) continue;
    Matrix up = random_matrix(4, 2, rng);
    MlpTape tape;
    mlp_forward(m, x, &tape);
    MlpGrads g = mlp_backward(m, tape, up);

    auto loss_w = [&](std::span<const double> flat) {
      return dot(mlp_forward(m.spec, unflatten(m.weights, flat), x), up);
    };
    auto num_w = finite_difference_grad(loss_w, flatten(m.weights), 1e-4);
    CHECK(relative_error(flatten(g), num_w) < 1e-4);

    auto loss_x = [&](std::span<const double> flat) {
      return dot(mlp_forward(m, Matrix(4, 3, std::vector<double>(flat.begin(), flat.end()))), up);
    };
    auto num_x = finite_difference_grad(loss_x, x.data(), 1e-4);
    CHECK(relative_error(g.dx.data(), num_x) < 1e-4);
    ++checked;
  }
}

TEST_CASE("mlp: zero upstream gives zero gradients") {
  Rng rng(13);
  Mlp m = Mlp::random(MlpSpec{{3, 4, 2}, {Activation::kSoftplus, Activation::kIdentity}}, rng);
  Matrix x = random_matrix(2, 3, rng);
  MlpTape tape;
  mlp_forward(m, x, &tape);
  MlpGrads g = mlp_backward(m, tape, Matrix(2, 2));
  for (double v : flatten(g)) CHECK(v == 0.0);
  for (double v : g.dx.data()) CHECK(v == 0.0);
}

TEST_CASE("mlp: linear 1x1 layer has dL/dW = x * upstream") {
  Mlp m = Mlp::zeros(MlpSpec{{1, 1}, {Activation::kIdentity}});
  m.weights.w[0](0, 0) = 0.7;
  MlpTape tape;
  mlp_forward(m, Matrix(1, 1, 3.0), &tape);
  MlpGrads g = mlp_backward(m, tape, Matrix(1, 1, 2.0));
  CHECK(g.dw[0](0, 0) == doctest::Approx(6.0));
  CHECK(g.db[0][0] == doctest::Approx(2.0));
  CHECK(g.dx(0, 0) == doctest::Approx(1.4));
}

TEST_CASE("attention: single token, unit weights, h=5, f=2 gives 4") {
  AttentionWeights w{Matrix(1, 1, 1.0), Matrix(1, 1, 1.0), Matrix(1, 1, 1.0)};
  AttentionTape tape;
  Matrix h = cross_attention_update(Matrix(1, 1, 5.0), Matrix(1, 1, 2.0), w, &tape);
  CHECK(tape.attn(0, 0) == 1.0);
  CHECK(h(0, 0) == 4.0);
}

TEST_CASE("attention: Wv = 0 leaves the residual only") {
  Rng rng(14);
  AttentionWeights w{random_matrix(3, 3, rng), random_matrix(3, 3, rng), Matrix(3, 3)};
  Matrix f = random_matrix(5, 3, rng);
  CHECK(cross_attention_update(random_matrix(5, 3, rng), f, w) == f);
}

TEST_CASE("attention: L=3, d=2 matches the element-wise oracle") {
  Rng rng(15);
  AttentionWeights w{random_matrix(2, 2, rng), random_matrix(2, 2, rng), random_matrix(2, 2, rng)};
  Matrix h = random_matrix(3, 2, rng), f = random_matrix(3, 2, rng);
  Matrix got = cross_attention_update(h, f, w);
  Matrix ref = attention_oracle(h, f, w);
  for (size_t i = 0; i < got.size(); ++i) CHECK(got.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-9));
}

TEST_CASE("attention: backward matches central differences on 20 instances") {
  Rng rng(16);
  for (int inst = 0; inst < 20; ++inst) {
    const size_t L = 2 + inst % 5, d = 1 + inst % 4;
    AttentionWeights w{random_matrix(d, d, rng, 0.7), random_matrix(d, d, rng, 0.7), random_matrix(d, d, rng, 0.7)};
    Matrix h = random_matrix(L, d, rng), f = random_matrix(L, d, rng), up = random_matrix(L, d, rng);
    AttentionTape tape;
    cross_attention_update(h, f, w, &tape);
    AttentionGrads g = cross_attention_backward(w, tape, up);

    std::vector<double> flat;
    for (const Matrix* m : {&w.wq, &w.wk, &w.wv, &h, &f}) flat.insert(flat.end(), m->data().begin(), m->data().end());
    std::vector<double> analytic;
    for (const Matrix* m : {&g.dwq, &g.dwk, &g.dwv, &g.dh_prev, &g.df_prev})
      analytic.insert(analytic.end(), m->data().begin(), m->data().end());
    auto loss = [&](std::span<const double> p) {
      size_t k = 0;
      auto take = [&](size_t r, size_t c) {
        Matrix m(r, c);
        for (double& v : m.data()) v = p[k++];
        return m;
      };
      AttentionWeights ww;
      ww.wq = take(d, d);
      ww.wk = take(d, d);
      ww.wv = take(d, d);
      Matrix hh = take(L, d), ff = take(L, d);
      return dot(cross_attention_update(hh, ff, ww), up);
    };
    CHECK(relative_error(analytic, finite_difference_grad(loss, flat, 1e-4)) < 1e-4);
  }
}

TEST_CASE("finite differences: x^2 at 3, constants, softplus at 0") {
  auto sq = [](std::span<const double> x) { return x[0] * x[0]; };
  CHECK(finite_difference_grad(sq, std::vector<double>{3.0}, 1e-4)[0] == doctest::Approx(6.0).epsilon(1e-7));
  auto c = [](std::span<const double>) { return 4.2; };
  CHECK(finite_difference_grad(c, std::vector<double>{1.0, 2.0}, 1e-4) == std::vector<double>{0.0, 0.0});
  auto sp = [](std::span<const double> x) { return activate(Activation::kSoftplus, x[0]); };
  CHECK(std::abs(finite_difference_grad(sp, std::vector<double>{0.0}, 1e-4)[0] - 0.5) < 1e-6);
  CHECK(activate_grad(Activation::kSoftplus, 0.0, activate(Activation::kSoftplus, 0.0)) == doctest::Approx(0.5));
}

TEST_CASE("noisy rate: gradients match central differences on 20 instances") {
  Rng rng(17);
  for (int inst = 0; inst < 20; ++inst) {
    const size_t n = 3 + inst % 4;
    std::vector<double> x(n), mu(n), sigma(n);
    for (size_t i = 0; i < n; ++i) {
      mu[i] = rng.normal() * 3;
      x[i] = mu[i] + rng.normal() * 2;
      sigma[i] = 0.3 + 3 * rng.uniform();
    }
    NoisyRate r = noisy_rate_bits(x, mu, sigma, true);
    std::vector<double> flat = x;
    flat.insert(flat.end(), mu.begin(), mu.end());
    flat.insert(flat.end(), sigma.begin(), sigma.end());
    std::vector<double> analytic = r.d_x;
    analytic.insert(analytic.end(), r.d_mu.begin(), r.d_mu.end());
    analytic.insert(analytic.end(), r.d_sigma.begin(), r.d_sigma.end());
    auto f = [&](std::span<const double> p) {
      return noisy_rate_bits(p.subspan(0, n), p.subspan(n, n), p.subspan(2 * n, n)).bits;
    };
    CHECK(relative_error(analytic, finite_difference_grad(f, flat, 1e-5)) < 1e-4);
  }
}

TEST_CASE("normal helpers") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_interval(-0.5, 0.5) == doctest::Approx(std::erf(0.5 / std::sqrt(2.0))).epsilon(1e-14));
  // far tail keeps relative precision
  const double tail = normal_interval(10.0, 11.0);
  CHECK(tail > 0.0);
  CHECK(tail == doctest::Approx(0.5 * (std::erfc(10 / std::sqrt(2.0)) - std::erfc(11 / std::sqrt(2.0)))).epsilon(1e-10));
}
