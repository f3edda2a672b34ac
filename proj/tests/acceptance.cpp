// One PASS/FAIL line per acceptance criterion. Exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "gs4dcc/codec.hpp"
#include "gs4dcc/entropy.hpp"
#include "gs4dcc/interchange.hpp"
#include "gs4dcc/nvcc.hpp"
#include "gs4dcc/quant.hpp"
#include "gs4dcc/range_coder.hpp"
#include "gs4dcc/rng.hpp"
#include "gs4dcc/synth.hpp"
#include "gs4dcc/trainer.hpp"
#include "gs4dcc/vq.hpp"
#include "gs4dcc/vqcc.hpp"

using namespace gs4dcc;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix random_matrix(size_t r, size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

double dot(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1. lossless round trip ----

Outcome lossless_round_trip() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  size_t symbols = 0, bytes = 0;
  for (int i = 0; i < 50; ++i) {
    SynthSpec s;
    s.seed = 1000 + i;
    s.gaussians = 10 + rng.below(4991);
    s.levels = 1 + rng.below(3);
    s.channels = std::array<uint32_t, 3>{2, 4, 8}[rng.below(3)];
    s.frames = 2 + rng.below(31);
    const uint32_t b = 2 + rng.below(5);
    s.base_resolution = {b, 2 + static_cast<uint32_t>(rng.below(5)), b};
    s.rho = 0.9 * rng.uniform();
    s.sh_degree = static_cast<int>(rng.below(4));
    s.sh_clusters = 1 + rng.below(32);
    s.decoder_hidden = rng.below(2) ? 0 : 8;
    TrainConfig cfg;
    cfg.apply_preset(std::array<const char*, 3>{"low", "mid", "high"}[rng.below(3)]);
    cfg.codebook_size = 1 + rng.below(300);
    cfg.steps = 5;
    cfg.seed = s.seed;
    const Scene scene = synth_scene(s);
    const EncodeResult r = encode_scene(scene, cfg);
    const QuantizedScene back = decode_container(r.container);
    if (!(back == r.quantized)) return {false, fmt("scene %d: decoded fields differ", i)};
    // every coded symbol: re-coding the decoded content reproduces the file
    if (encode_quantized(back, r.training.nvcc, r.training.vqcc) != r.container)
      return {false, fmt("scene %d: re-encoded bytes differ", i)};
    symbols += back.voxels.element_count() + back.codebook.symbols.size() + back.indices.size();
    bytes += r.container.size();
  }
  const double secs = seconds_since(t0);
  return {secs < 300.0, fmt("50 scenes, %zu symbols, %zu bytes, %.1f s (limit 300 s)", symbols, bytes, secs)};
}

// ---- 2. coder optimality ----

Outcome coder_optimality() {
  Rng rng(77);
  const size_t n = 20000;
  std::string detail;
  bool ok = true;
  auto run = [&](const char* name, const std::vector<IntegerCdf>& cdfs, bool varying) {
    std::vector<uint32_t> sym(n);
    for (size_t i = 0; i < n; ++i) {
      const IntegerCdf& c = cdfs[varying ? i % cdfs.size() : 0];
      // draw from the frozen distribution itself
      const uint32_t u = static_cast<uint32_t>(rng.below(c.total()));
      size_t k = 0;
      while (c.cumulative[k + 1] <= u) ++k;
      sym[i] = static_cast<uint32_t>(k);
    }
    CdfProvider prov = [&](size_t i) -> const IntegerCdf& { return cdfs[varying ? i % cdfs.size() : 0]; };
    const Bytes b = encode_symbols(sym, prov);
    const double ideal = ideal_bits(sym, prov) / 8.0;
    const double gap = static_cast<double>(b.size()) - ideal;
    const bool good = std::abs(gap) <= 0.001 * ideal + 64 && decode_symbols(b, prov, n) == sym;
    ok = ok && good;
    detail += fmt("%s %zu B vs %.1f B ideal; ", name, b.size(), ideal);
  };
  run("uniform", {freeze_cdf(std::vector<double>(256, 1.0 / 256))}, false);
  std::vector<double> skew(64);
  for (size_t i = 0; i < skew.size(); ++i) skew[i] = std::pow(0.6, double(i));
  run("skewed", {freeze_cdf(skew)}, false);
  std::vector<IntegerCdf> varying;
  for (int k = 0; k < 97; ++k) {
    const double mu = 50 * rng.uniform() - 25, sigma = 0.05 + 20 * rng.uniform();
    varying.push_back(freeze_cdf(dg_pmf(mu, sigma, Support{-32, 32})));
  }
  run("per-step", varying, true);
  detail += fmt("n=%zu each", n);
  return {ok, detail};
}

// ---- 3. gradients ----

bool near_kink(const Mlp& m, const Matrix& x) {
  MlpTape tape;
  mlp_forward(m, x, &tape);
  for (size_t l = 0; l < m.spec.layers(); ++l)
    if (m.spec.activations[l] == Activation::kRelu)
      for (double z : tape.pre[l].data())
        if (std::abs(z) < 1e-3) return true;
  return false;
}

Outcome gradient_correctness() {
  const double eps = 1e-4, tol = 1e-4;
  Rng rng(31);
  double worst_mlp = 0, worst_att = 0, worst_rate = 0;
  for (int done = 0; done < 20;) {
    const Activation hidden = done % 2 ? Activation::kRelu : Activation::kSoftplus;
    Mlp m = Mlp::random(MlpSpec{{3, 6, 5, 4}, {hidden, Activation::kSoftplus, Activation::kIdentity}}, rng);
    for (auto& b : m.weights.b)
      for (double& v : b) v = 0.2 * rng.normal();
    Matrix x = random_matrix(4, 3, rng);
    if (near_kink(m, x)) continue;
    Matrix up = random_matrix(4, 4, rng);
    MlpTape tape;
    mlp_forward(m, x, &tape);
    MlpGrads g = mlp_backward(m, tape, up);
    std::vector<double> flat, analytic;
    for (size_t l = 0; l < m.spec.layers(); ++l) {
      flat.insert(flat.end(), m.weights.w[l].data().begin(), m.weights.w[l].data().end());
      flat.insert(flat.end(), m.weights.b[l].begin(), m.weights.b[l].end());
      analytic.insert(analytic.end(), g.dw[l].data().begin(), g.dw[l].data().end());
      analytic.insert(analytic.end(), g.db[l].begin(), g.db[l].end());
    }
    flat.insert(flat.end(), x.data().begin(), x.data().end());
    analytic.insert(analytic.end(), g.dx.data().begin(), g.dx.data().end());
    auto loss = [&](std::span<const double> p) {
      Mlp mm = m;
      size_t k = 0;
      for (size_t l = 0; l < mm.spec.layers(); ++l) {
        for (double& v : mm.weights.w[l].data()) v = p[k++];
        for (double& v : mm.weights.b[l]) v = p[k++];
      }
      Matrix xx(4, 3);
      for (double& v : xx.data()) v = p[k++];
      return dot(mlp_forward(mm, xx), up);
    };
    worst_mlp = std::max(worst_mlp, relative_error(analytic, finite_difference_grad(loss, flat, eps)));
    ++done;
  }
  for (int inst = 0; inst < 20; ++inst) {
    const size_t L = 2 + inst % 6, d = 1 + inst % 4;
    AttentionWeights w{random_matrix(d, d, rng, 0.7), random_matrix(d, d, rng, 0.7), random_matrix(d, d, rng, 0.7)};
    Matrix h = random_matrix(L, d, rng), f = random_matrix(L, d, rng), up = random_matrix(L, d, rng);
    AttentionTape tape;
    cross_attention_update(h, f, w, &tape);
    AttentionGrads g = cross_attention_backward(w, tape, up);
    std::vector<double> flat, analytic;
    for (const Matrix* m : {&w.wq, &w.wk, &w.wv, &h, &f}) flat.insert(flat.end(), m->data().begin(), m->data().end());
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
    worst_att = std::max(worst_att, relative_error(analytic, finite_difference_grad(loss, flat, eps)));
  }
  for (int inst = 0; inst < 20; ++inst) {
    const size_t n = 3 + inst % 5;
    std::vector<double> p(3 * n);
    for (size_t i = 0; i < n; ++i) {
      p[n + i] = 3 * rng.normal();
      p[i] = p[n + i] + 2 * rng.normal();
      p[2 * n + i] = 0.3 + 3 * rng.uniform();
    }
    std::span<const double> ps(p);
    NoisyRate r = noisy_rate_bits(ps.subspan(0, n), ps.subspan(n, n), ps.subspan(2 * n, n), true);
    std::vector<double> analytic = r.d_x;
    analytic.insert(analytic.end(), r.d_mu.begin(), r.d_mu.end());
    analytic.insert(analytic.end(), r.d_sigma.begin(), r.d_sigma.end());
    auto loss = [&](std::span<const double> q) {
      return noisy_rate_bits(q.subspan(0, n), q.subspan(n, n), q.subspan(2 * n, n)).bits;
    };
    worst_rate = std::max(worst_rate, relative_error(analytic, finite_difference_grad(loss, p, eps)));
  }
  const bool ok = worst_mlp < tol && worst_att < tol && worst_rate < tol;
  return {ok, fmt("worst relative error over 20 instances each: mlp %.2e, attention %.2e, noisy rate %.2e (limit 1e-4)",
                  worst_mlp, worst_att, worst_rate)};
}

// ---- 4. discretized Gaussian ----

Outcome dg_correctness() {
  Rng rng(5);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const int32_t lo = static_cast<int32_t>(rng.below(200)) - 100;
    const Support sup{lo, lo + static_cast<int32_t>(rng.below(300))};
    const double mu = lo - 50 + 400 * rng.uniform();
    const double sigma = std::exp(-6 + 15 * rng.uniform());
    double s = 0.0;
    for (double p : dg_pmf(mu, sigma, sup)) s += p;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  const double p0 = dg_pmf(0.0, 1.0, Support{-8, 8})[8];
  const double oracle = std::erf(0.5 / std::sqrt(2.0));
  const bool ok = worst <= 1e-9 && std::abs(p0 - 0.3829249) <= 1e-6 && std::abs(p0 - oracle) <= 1e-12;
  return {ok, fmt("max |sum - 1| = %.1e over 2000 pmfs; P(0;0,1) = %.9f, erf oracle %.9f", worst, p0, oracle)};
}

// ---- 5. NVCC context value ----

Outcome nvcc_context_value() {
  const auto t0 = Clock::now();
  const SynthSpec spec;  // standard fixture, rho = 0.95
  TrainConfig cfg;
  cfg.apply_preset("mid");
  cfg.steps = 500;
  const QuantizedPyramid q = quantize_voxels(synth_scene(spec).voxels, voxel_gain(cfg.lambda_e));
  double bits[3];
  const NvccMode modes[3] = {NvccMode::kFull, NvccMode::kSpatialOnly, NvccMode::kFactorized};
  for (int i = 0; i < 3; ++i) {
    cfg.mode = modes[i];
    bits[i] = train_nvcc(q, cfg).final_voxel_bits;
  }
  const double gap1 = 1.0 - bits[0] / bits[1], gap2 = 1.0 - bits[1] / bits[2];
  const double secs = seconds_since(t0);
  const bool ok = bits[0] < bits[1] && bits[1] < bits[2] && gap1 >= 0.05 && gap2 >= 0.05 && secs < 600.0;
  return {ok, fmt("%zu steps: full %.0f < spatial-only %.0f (%.1f%%) < factorized %.0f (%.1f%%) bits; %.1f s",
                  cfg.steps, bits[0], bits[1], 100 * gap1, bits[2], 100 * gap2, secs)};
}

// ---- 6. VQCC value ----

Outcome vqcc_value() {
  const size_t k = 4096, d = 12, n = 16384;
  Rng rng(4);
  const auto sh = clustered_sh(n, d, 32, 0.05, rng);
  Matrix pts(n, d);
  for (size_t i = 0; i < sh.size(); ++i) pts.data()[i] = sh[i];
  KMeansOptions opts;
  opts.max_iters = 10;
  const KMeansResult km = kmeans_fit(pts, k, 4, opts);
  const QuantizedTensor cb = quantize_minmax(km.centroids.data(), k, d, 8);
  TrainConfig cfg;
  cfg.steps = 300;
  const TrainResult r = train_vqcc(cb.symbols, k, d, cfg);
  const auto zbar = vqcc_latent_symbols(r.vqcc.z);
  const VqccStreams s = vqcc_encode(cb.symbols, zbar, k, r.vqcc.params);
  if (vqcc_decode(s.z, s.y, k, r.vqcc.params) != cb.symbols) return {false, "round trip failed"};
  ByteWriter w;
  write_vqcc_params(w, r.vqcc.params);
  const size_t streams = s.z.size() + s.y.size(), raw = k * d;
  const size_t with_params = streams + w.size();
  const double saving = 1.0 - double(with_params) / double(raw);
  return {saving >= 0.10, fmt("K=%zu D=%zu: z %zu + y %zu + params %zu = %zu B vs raw %zu B (%.1f%% smaller)", k, d,
                              s.z.size(), s.y.size(), w.size(), with_params, raw, 100 * saving)};
}

// ---- 7 and 8. presets on the standard fixture ----

struct PresetRun {
  double lambda_e;
  size_t bytes;
  Fidelity fidelity;
};

const std::map<std::string, PresetRun>& preset_runs() {
  static const std::map<std::string, PresetRun> runs = [] {
    std::map<std::string, PresetRun> out;
    const Scene scene = synth_scene(SynthSpec{});
    for (const char* tag : {"low", "mid", "high"}) {
      TrainConfig cfg;
      cfg.apply_preset(tag);
      const EncodeResult r = encode_scene(scene, cfg);
      const Scene dec = reconstruct(decode_container(r.container));
      out[tag] = {cfg.lambda_e, r.container.size(), parameter_psnr(scene, dec)};
    }
    return out;
  }();
  return runs;
}

Outcome multi_rate_ordering() {
  const auto& r = preset_runs();
  const PresetRun &lo = r.at("low"), &mid = r.at("mid"), &hi = r.at("high");
  const bool lam = lo.lambda_e > mid.lambda_e && mid.lambda_e > hi.lambda_e;
  const bool size = lo.bytes <= mid.bytes && mid.bytes <= hi.bytes;
  const bool psnr = lo.fidelity.overall <= mid.fidelity.overall && mid.fidelity.overall <= hi.fidelity.overall;
  std::string d;
  for (const char* tag : {"low", "mid", "high"})
    d += fmt("%s: lambda_e %.0e, %zu B, PSNR %.2f dB; ", tag, r.at(tag).lambda_e, r.at(tag).bytes,
             r.at(tag).fidelity.overall);
  return {lam && size && psnr, d + "parameter-space PSNR"};
}

Outcome end_to_end() {
  const Scene scene = synth_scene(SynthSpec{});
  const size_t raw = write_interchange(scene).size();
  const PresetRun& mid = preset_runs().at("mid");
  const double ratio = double(raw) / double(mid.bytes);
  return {ratio >= 5.0 && mid.fidelity.voxels >= 35.0,
          fmt("mid: %zu B raw interchange -> %zu B (%.2fx, need 5x); voxel PSNR %.1f dB (need 35)", raw, mid.bytes,
              ratio, mid.fidelity.voxels)};
}

// ---- 9. routing ----

Outcome edge_case_routing() {
  std::set<ContextCase> seen;
  int wrong = 0, total = 0;
  for (size_t s = 1; s <= 3; ++s)
    for (size_t t = 1; t <= 4; ++t)
      for (PlaneKind k : {PlaneKind::kSpatiotemporal, PlaneKind::kSpatial}) {
        ContextCase want;
        if (k == PlaneKind::kSpatial) want = s == 1 ? ContextCase::kFactorized : ContextCase::kSpatial;
        else if (s == 1) want = t == 1 ? ContextCase::kFactorized : ContextCase::kTemporal;
        else want = t == 1 ? ContextCase::kSpatial : ContextCase::kFull;
        const ContextCase got = route_context(s - 1, t - 1, k);
        wrong += got != want;
        ++total;
        seen.insert(got);
      }
  return {wrong == 0 && seen.size() == 4, fmt("%d/%d cases as expected, %zu distinct distributions", total - wrong,
                                              total, seen.size())};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"lossless round trip", lossless_round_trip},
      {"coder optimality", coder_optimality},
      {"gradient correctness", gradient_correctness},
      {"discretized Gaussian correctness", dg_correctness},
      {"NVCC context value", nvcc_context_value},
      {"VQCC value", vqcc_value},
      {"multi-rate ordering", multi_rate_ordering},
      {"end-to-end compression", end_to_end},
      {"edge-case routing", edge_case_routing},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(std::size(criteria)) - failed, std::size(criteria));
  return failed ? 1 : 0;
}
