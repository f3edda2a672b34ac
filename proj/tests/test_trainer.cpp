#include <cstdio>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "gs4dcc/error.hpp"
#include "gs4dcc/synth.hpp"
#include "gs4dcc/trainer.hpp"
#include "helpers.hpp"

using namespace gs4dcc;
using namespace gs4dcc::testing;

namespace {

QuantizedPyramid ar1_pyramid(uint64_t seed) {
  SynthSpec s;
  s.gaussians = 4;
  s.channels = 4;
  s.frames = 16;
  s.base_resolution = {8, 8, 8};
  s.seed = seed;
  return quantize_voxels(synth_scene(s).voxels, voxel_gain(1e-4));
}

double mean_loss(const RateTrace& t, size_t from, size_t to) {
  double s = 0.0;
  for (size_t i = from; i < to; ++i) s += t.points[i].loss;
  return s / static_cast<double>(to - from);
}

}  // namespace

TEST_CASE("trainer: default presets") {
  CHECK(rate_preset("high").lambda_e == 1e-5);
  CHECK(rate_preset("high").codebook_size == 8192);
  CHECK(rate_preset("mid").lambda_e == 1e-4);
  CHECK(rate_preset("mid").codebook_size == 6144);
  CHECK(rate_preset("low").lambda_e == 1e-3);
  CHECK(rate_preset("low").codebook_size == 4096);
  CHECK_THROWS_AS(rate_preset("ultra"), Error);
  TrainConfig cfg;
  CHECK(cfg.lambda_e == 1e-4);
  CHECK(cfg.lambda_c == 0.01);
  CHECK(cfg.lr == 1e-2);
}

TEST_CASE("trainer: profiles from text and file") {
  RateProfile p = parse_rate_profile("# neu3d-like\nhigh = 1e-5, 140000\nlow=1e-3,4096\n\n");
  CHECK(p.size() == 2);
  CHECK(rate_preset("high", p).codebook_size == 140000);
  CHECK_THROWS_AS(rate_preset("mid", p), Error);
  CHECK_THROWS_AS(parse_rate_profile("high 1e-5 8192\n"), Error);
  const std::string path = "trainer_profile_test.txt";
  {
    std::ofstream f(path);
    f << "mid = 2e-4, 1024\n";
  }
  CHECK(rate_preset("mid", load_rate_profile(path)).lambda_e == 2e-4);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_rate_profile("no/such/profile.txt"), Error);
}

TEST_CASE("trainer: config parse") {
  TrainConfig c = parse_train_config("lambda_e = 3e-4\npreset = low\nsteps=12\n# comment\nseed = 9\n");
  CHECK(c.lambda_e == 3e-4);  // explicit value wins over the preset
  CHECK(c.codebook_size == 4096);
  CHECK(c.steps == 12);
  CHECK(c.seed == 9);
  CHECK(parse_train_config(c.to_string()).to_string() == c.to_string());
  CHECK_THROWS_AS(parse_train_config("learning_speed = 3\n"), Error);
  CHECK_THROWS_AS(parse_train_config("lambda_e = -1\n"), Error);
  CHECK_THROWS_AS(parse_train_config("steps = many\n"), Error);
}

TEST_CASE("trainer: voxel gain") {
  CHECK(voxel_gain(1e-4) == doctest::Approx(std::sqrt(std::log(2.0) / 6e-4)));
  CHECK(voxel_gain(1e-5) > voxel_gain(1e-4));
  CHECK_THROWS_AS(voxel_gain(0.0), Error);
}

TEST_CASE("trainer: zero steps leave parameters unchanged") {
  QuantizedPyramid q = ar1_pyramid(3);
  TrainConfig cfg;
  cfg.steps = 0;
  TrainResult r = train_nvcc(q, cfg);
  CHECK(r.trace.points.empty());
  CHECK(r.final_voxel_bits == r.initial_voxel_bits);
  CHECK(nvcc_rate(q, r.nvcc).total_bits == r.initial_voxel_bits);
  CHECK_FALSE(r.nvcc_reverted);
  cfg.steps = 1;
  TrainResult one = train_nvcc(q, cfg);
  CHECK(one.initial_voxel_bits == r.initial_voxel_bits);
  CHECK(one.nvcc != r.nvcc);
}

TEST_CASE("trainer: deterministic given the seed") {
  QuantizedPyramid q = ar1_pyramid(4);
  TrainConfig cfg;
  cfg.steps = 30;
  TrainResult a = train_nvcc(q, cfg), b = train_nvcc(q, cfg);
  CHECK(a.nvcc == b.nvcc);
  CHECK(a.trace.to_csv() == b.trace.to_csv());
}

TEST_CASE("trainer: 500 steps on an AR(1) pyramid cut voxel bits by 20%") {
  QuantizedPyramid q = ar1_pyramid(5);
  TrainConfig cfg;
  cfg.steps = 500;
  TrainResult r = train_nvcc(q, cfg);
  MESSAGE("voxel bits " << r.initial_voxel_bits << " -> " << r.final_voxel_bits);
  CHECK(r.final_voxel_bits <= 0.8 * r.initial_voxel_bits);
  CHECK_FALSE(r.nvcc_reverted);
  CHECK(r.trace.points.size() == 500);
  CHECK(mean_loss(r.trace, 400, 500) <= mean_loss(r.trace, 0, 100));
}

TEST_CASE("trainer: joint fit never ends worse than it started") {
  Scene sc = synth_scene(small_spec(6));
  QuantizedPyramid q = quantize_voxels(sc.voxels, voxel_gain(1e-4));
  Rng rng(91);
  std::vector<uint32_t> cb(16 * 12);
  for (auto& v : cb) v = static_cast<uint32_t>(rng.below(256));
  TrainConfig cfg;
  cfg.steps = 200;
  TrainResult r = train_entropy_models(q, cb, 16, 12, cfg);
  CHECK(r.final_voxel_bits <= r.initial_voxel_bits);
  CHECK(r.final_code_bits <= r.initial_code_bits);
  REQUIRE(r.trace.points.size() == 200);
  CHECK(mean_loss(r.trace, 100, 200) <= mean_loss(r.trace, 0, 100));
  for (const TracePoint& p : r.trace.points)
    CHECK(p.loss == doctest::Approx(cfg.lambda_e * p.voxel_bits + cfg.lambda_c * p.code_bits));
  const std::string csv = r.trace.to_csv();
  CHECK(csv.rfind("step,voxel_bits,code_bits,loss\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 201);
}
