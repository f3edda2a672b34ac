#include "gs4dcc/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "gs4dcc/rng.hpp"

namespace gs4dcc {

const RateProfile& default_rate_profile() {
  static const RateProfile p = {
      {"high", {1e-5, 8192}},
      {"mid", {1e-4, 6144}},
      {"low", {1e-3, 4096}},
  };
  return p;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Calls fn(key, value, line_no) for each "key = value" line.
template <class Fn>
void for_each_kv(const std::string& text, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::kInvalid, "line " + std::to_string(no) + ": expected key = value");
    fn(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), no);
  }
}

double parse_double(const std::string& v, const std::string& what) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (...) {
  }
  fail(ErrorKind::kInvalid, what + ": not a number: '" + v + "'");
}

uint64_t parse_uint(const std::string& v, const std::string& what) {
  try {
    size_t used = 0;
    const unsigned long long n = std::stoull(v, &used);
    if (used == v.size() && v[0] != '-') return n;
  } catch (...) {
  }
  fail(ErrorKind::kInvalid, what + ": not a non-negative integer: '" + v + "'");
}

std::string slurp(const std::string& path) {
  Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

}  // namespace

RateProfile parse_rate_profile(const std::string& text) {
  RateProfile p;
  for_each_kv(text, [&](const std::string& k, const std::string& v, size_t no) {
    const auto comma = v.find(',');
    require(comma != std::string::npos, ErrorKind::kInvalid,
            "line " + std::to_string(no) + ": expected '<lambda_e>, <codebook size>'");
    RatePreset r;
    r.lambda_e = parse_double(trim(v.substr(0, comma)), "lambda_e");
    r.codebook_size = parse_uint(trim(v.substr(comma + 1)), "codebook size");
    require(r.lambda_e > 0 && r.codebook_size >= 1, ErrorKind::kInvalid,
            "line " + std::to_string(no) + ": lambda_e must be > 0 and codebook size >= 1");
    p[k] = r;
  });
  return p;
}

RateProfile load_rate_profile(const std::string& path) { return parse_rate_profile(slurp(path)); }

RatePreset rate_preset(const std::string& tag, const RateProfile& profile) {
  auto it = profile.find(tag);
  if (it == profile.end()) {
    std::string known;
    for (auto& [k, _] : profile) known += (known.empty() ? "" : ", ") + k;
    fail(ErrorKind::kInvalid, "unknown rate preset '" + tag + "' (known: " + known + ")");
  }
  return it->second;
}

double voxel_gain(double lambda_e) {
  require(lambda_e > 0.0 && std::isfinite(lambda_e), ErrorKind::kInvalid, "lambda_e must be positive");
  return std::sqrt(std::log(2.0) / (6.0 * lambda_e));
}

void TrainConfig::apply_preset(const std::string& tag, const RateProfile& profile) {
  const RatePreset r = rate_preset(tag, profile);
  preset = tag;
  lambda_e = r.lambda_e;
  codebook_size = r.codebook_size;
}

void TrainConfig::validate() const {
  require(lambda_e > 0.0 && std::isfinite(lambda_e), ErrorKind::kInvalid, "lambda_e must be > 0");
  require(lambda_c >= 0.0 && std::isfinite(lambda_c), ErrorKind::kInvalid, "lambda_c must be >= 0");
  require(lr > 0.0 && std::isfinite(lr), ErrorKind::kInvalid, "lr must be > 0");
  require(codebook_size >= 1, ErrorKind::kInvalid, "codebook_size must be >= 1");
  require(hyper >= 1, ErrorKind::kInvalid, "hyper must be >= 1");
}

std::string TrainConfig::to_string() const {
  std::ostringstream os;
  os.precision(17);
  os << "preset = " << preset << "\n"
     << "lambda_e = " << lambda_e << "\n"
     << "lambda_c = " << lambda_c << "\n"
     << "codebook_size = " << codebook_size << "\n"
     << "lr = " << lr << "\n"
     << "steps = " << steps << "\n"
     << "seed = " << seed << "\n"
     << "hyper = " << hyper << "\n"
     << "mode = " << nvcc_mode_name(mode) << "\n";
  return os.str();
}

TrainConfig parse_train_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  for_each_kv(text, [&](const std::string& k, const std::string& v, size_t) { kv[k] = v; });
  TrainConfig cfg;
  if (auto it = kv.find("preset"); it != kv.end()) cfg.apply_preset(it->second);
  for (auto& [k, v] : kv) {
    if (k == "preset") continue;
    if (k == "lambda_e") cfg.lambda_e = parse_double(v, k);
    else if (k == "lambda_c") cfg.lambda_c = parse_double(v, k);
    else if (k == "codebook_size") cfg.codebook_size = parse_uint(v, k);
    else if (k == "lr") cfg.lr = parse_double(v, k);
    else if (k == "steps") cfg.steps = parse_uint(v, k);
    else if (k == "seed") cfg.seed = parse_uint(v, k);
    else if (k == "hyper") cfg.hyper = static_cast<uint32_t>(parse_uint(v, k));
    else if (k == "mode") {
      bool found = false;
      for (uint8_t m = 0; m <= static_cast<uint8_t>(NvccMode::kFactorized); ++m)
        if (v == nvcc_mode_name(static_cast<NvccMode>(m))) cfg.mode = static_cast<NvccMode>(m), found = true;
      require(found, ErrorKind::kInvalid, "unknown mode '" + v + "'");
    } else {
      fail(ErrorKind::kInvalid, "unknown config key '" + k + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) { return parse_train_config(slurp(path)); }

std::string RateTrace::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "step,voxel_bits,code_bits,loss\n";
  for (const TracePoint& p : points) os << p.step << "," << p.voxel_bits << "," << p.code_bits << "," << p.loss << "\n";
  return os.str();
}

namespace {

void step_mlp(Mlp& m, const MlpGrads& g, double rate) {
  for (size_t l = 0; l < m.spec.layers(); ++l) {
    auto& w = m.weights.w[l].data();
    const auto& dw = g.dw[l].data();
    for (size_t i = 0; i < w.size(); ++i) w[i] -= rate * dw[i];
    for (size_t i = 0; i < m.weights.b[l].size(); ++i) m.weights.b[l][i] -= rate * g.db[l][i];
  }
}

void step_matrix(Matrix& m, const Matrix& g, double rate) {
  for (size_t i = 0; i < m.size(); ++i) m.data()[i] -= rate * g.data()[i];
}

uint64_t step_seed(uint64_t seed, size_t step, uint64_t stream) {
  Rng r(seed ^ (0xA0761D6478BD642Full * (stream + 1)) ^ (0xE7037ED1A0B428DBull * (step + 1)));
  return r.next_u64();
}

// One descent step. Each head follows the bits per symbol of the rows it
// codes; the attention follows those of the rows that read the hidden state.
double nvcc_step(const QuantizedPyramid& q, NvccParams& p, const TrainConfig& cfg, double lr, size_t step) {
  NvccGrads g = nvcc_surrogate(q, p, step_seed(cfg.seed, step, 1));
  require(std::isfinite(g.bits), ErrorKind::kNumerical, "voxel rate became non-finite at step " + std::to_string(step));
  auto rate = [&](size_t n) { return n ? lr / static_cast<double>(n) : 0.0; };
  for (size_t s = 0; s < p.levels.size(); ++s) {
    NvccLevelParams& lp = p.levels[s];
    const NvccLevelGrads& lg = g.levels[s];
    if (p.mode != NvccMode::kNoHidden) {
      const double ra = rate(lg.n_fusion + lg.n_temporal);
      step_matrix(lp.attention.wq, lg.attention.dwq, ra);
      step_matrix(lp.attention.wk, lg.attention.dwk, ra);
      step_matrix(lp.attention.wv, lg.attention.dwv, ra);
    }
    step_mlp(lp.fusion, lg.fusion, rate(lg.n_fusion));
    step_mlp(lp.temporal, lg.temporal, rate(lg.n_temporal));
    step_mlp(lp.spatial, lg.spatial, rate(lg.n_spatial));
    step_mlp(lp.plane_spatial, lg.plane_spatial, rate(lg.n_plane_spatial));
  }
  return g.bits;
}

// One descent step on the codebook streams. Network and prior weights follow
// bits per symbol of their stream; each latent z_i follows bits per symbol
// of its own codeword (z_i + y_i), since nothing else depends on it.
double vqcc_step(VqccModel& m, std::span<const uint32_t> codebook, const TrainConfig& cfg, double lr, size_t step) {
  const size_t k = m.z.rows(), h = m.params.hyper, d = m.params.dim;
  if (k == 0) return 0.0;
  Rng rng(step_seed(cfg.seed, step, 2));
  std::vector<double> noise(k * h);
  for (double& u : noise) u = rng.centered();
  VqccGrads g = vqcc_surrogate(m, codebook, noise);
  const double bits = g.z_bits + g.y_bits;
  require(std::isfinite(bits), ErrorKind::kNumerical, "codebook rate became non-finite at step " + std::to_string(step));
  step_mlp(m.params.synthesis, g.synthesis, lr / static_cast<double>(k * d));
  const double prior_rate = lr / static_cast<double>(k * h);
  for (size_t c = 0; c < h; ++c) {
    m.params.z_prior.mu[c] = static_cast<float>(m.params.z_prior.mu[c] - prior_rate * g.d_prior_mu[c]);
    m.params.z_prior.sigma[c] =
        static_cast<float>(clamp_sigma(m.params.z_prior.sigma[c] - prior_rate * g.d_prior_sigma[c]));
  }
  step_matrix(m.z, g.dz, lr / static_cast<double>(h + d));
  return bits;
}

double measured_vqcc_bits(const VqccModel& m, std::span<const uint32_t> codebook) {
  const auto zbar = vqcc_latent_symbols(m.z);
  const VqccRate r = vqcc_rate(codebook, zbar, m.z.rows(), m.params);
  return r.z_bits + r.y_bits;
}

// Supports must cover the trained latents; keep whichever prior (trained or
// refit) codes them better.
void finalize_vqcc(VqccModel& m, std::span<const uint32_t> codebook) {
  VqccModel refit = m;
  vqcc_fit_statistics(refit, codebook);
  m.params.z_support = refit.params.z_support;
  m.params.y_support = refit.params.y_support;
  m.params.round_to_half();
  refit.params.synthesis = m.params.synthesis;
  if (measured_vqcc_bits(refit, codebook) < measured_vqcc_bits(m, codebook)) m = std::move(refit);
}

// Undoes a step whose successor evaluates more than 2% worse and halves the
// step size for that model.
template <class Params>
struct StepGuard {
  double lr;
  Params prev{};
  double last = 0.0;
  bool has_prev = false;
  size_t halvings = 0;

  template <class StepFn>
  double run(Params& p, StepFn&& fn) {
    Params before = p;
    const double bits = fn(lr);
    if (has_prev && bits > 1.02 * last) {
      p = prev;
      lr *= 0.5;
      ++halvings;
      return last;
    }
    prev = std::move(before);
    last = bits;
    has_prev = true;
    return bits;
  }
};

struct Session {
  const QuantizedPyramid* voxels = nullptr;
  std::span<const uint32_t> codebook;
  size_t k = 0;
  uint32_t dim = 0;
};

TrainResult run(const Session& s, const TrainConfig& cfg, RateTrace* extra_trace) {
  cfg.validate();
  TrainResult res;
  NvccParams nv;
  NvccParams nv0;
  if (s.voxels) {
    nv = NvccParams::initial(s.voxels->channels, s.voxels->levels(), cfg.mode, step_seed(cfg.seed, 0, 3));
    nv.fit_statistics(*s.voxels);
    nv0 = nv;
    nv0.round_to_half();
    res.initial_voxel_bits = nvcc_rate(*s.voxels, nv0).total_bits;
  }
  VqccModel vq, vq0;
  if (s.dim > 0) {
    vq = vqcc_init(s.codebook, s.k, s.dim, cfg.hyper, step_seed(cfg.seed, 0, 4));
    vq0 = vq;
    finalize_vqcc(vq0, s.codebook);
    res.initial_code_bits = measured_vqcc_bits(vq0, s.codebook);
  }

  StepGuard<NvccParams> nv_guard{cfg.lr};
  StepGuard<VqccModel> vq_guard{cfg.lr};
  for (size_t step = 0; step < cfg.steps; ++step) {
    TracePoint tp;
    tp.step = step;
    if (s.voxels)
      tp.voxel_bits = nv_guard.run(nv, [&](double lr) { return nvcc_step(*s.voxels, nv, cfg, lr, step); });
    if (s.dim > 0)
      tp.code_bits = vq_guard.run(vq, [&](double lr) { return vqcc_step(vq, s.codebook, cfg, lr, step); });
    tp.loss = cfg.lambda_e * tp.voxel_bits + cfg.lambda_c * tp.code_bits;
    res.trace.points.push_back(tp);
  }
  if (extra_trace) *extra_trace = res.trace;

  if (s.voxels) {
    nv.round_to_half();
    res.final_voxel_bits = cfg.steps ? nvcc_rate(*s.voxels, nv).total_bits : res.initial_voxel_bits;
    if (res.final_voxel_bits > res.initial_voxel_bits) {
      nv = nv0;
      res.nvcc_reverted = true;
      res.final_voxel_bits = res.initial_voxel_bits;
    }
    res.nvcc = std::move(nv);
  }
  if (s.dim > 0) {
    if (cfg.steps) {
      finalize_vqcc(vq, s.codebook);
      res.final_code_bits = measured_vqcc_bits(vq, s.codebook);
    } else {
      vq = vq0;
      res.final_code_bits = res.initial_code_bits;
    }
    if (res.final_code_bits > res.initial_code_bits) {
      vq = vq0;
      res.vqcc_reverted = true;
      res.final_code_bits = res.initial_code_bits;
    }
    res.vqcc = std::move(vq);
  }
  return res;
}

}  // namespace

TrainResult train_nvcc(const QuantizedPyramid& voxels, const TrainConfig& cfg, RateTrace* trace) {
  return run(Session{&voxels, {}, 0, 0}, cfg, trace);
}

TrainResult train_vqcc(std::span<const uint32_t> codebook, size_t k, uint32_t dim, const TrainConfig& cfg) {
  require(dim > 0, ErrorKind::kInvalid, "codebook dimension must be >= 1");
  return run(Session{nullptr, codebook, k, dim}, cfg, nullptr);
}

TrainResult train_entropy_models(const QuantizedPyramid& voxels, std::span<const uint32_t> codebook, size_t k,
                                 uint32_t dim, const TrainConfig& cfg) {
  return run(Session{&voxels, codebook, k, dim}, cfg, nullptr);
}

}  // namespace gs4dcc
