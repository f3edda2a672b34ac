// gs4d: synthesize, encode, decode, inspect and rate–distortion reports.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "gs4dcc/codec.hpp"
#include "gs4dcc/error.hpp"
#include "gs4dcc/interchange.hpp"
#include "gs4dcc/synth.hpp"
#include "gs4dcc/trainer.hpp"

using namespace gs4dcc;

namespace {

enum Exit { kOk = 0, kIoFail = 1, kUsage = 2, kFormatFail = 3, kNumericFail = 4 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kIo: return kIoFail;
    case ErrorKind::kBadMagic:
    case ErrorKind::kVersion:
    case ErrorKind::kTruncated:
    case ErrorKind::kChecksum:
    case ErrorKind::kFormat: return kFormatFail;
    case ErrorKind::kNumerical: return kNumericFail;
    case ErrorKind::kShape:
    case ErrorKind::kInvalid: break;
  }
  return kUsage;
}

struct RateFlags {
  std::string preset, config, profile;
  std::optional<double> lambda_e, lambda_c;
  std::optional<size_t> codebook_size, steps;
  std::optional<uint64_t> seed;
  std::string mode;

  void add(CLI::App* app) {
    app->add_option("--preset", preset, "rate preset tag (high, mid, low)");
    app->add_option("--config", config, "key = value training config file");
    app->add_option("--profile", profile, "rate profile file: <tag> = <lambda_e>, <codebook size>");
    app->add_option("--lambda-e", lambda_e, "voxel rate weight");
    app->add_option("--lambda-c", lambda_c, "codebook rate weight");
    app->add_option("--codebook-size", codebook_size, "requested codebook size K");
    app->add_option("--steps", steps, "training steps");
    app->add_option("--seed", seed, "training seed");
    app->add_option("--mode", mode, "NVCC context mode")
        ->check(CLI::IsMember({"full", "spatial-only", "temporal-only", "no-hidden", "factorized"}));
  }

  // config file, then preset, then explicit flags
  TrainConfig resolve(const std::string& preset_override = "") const {
    TrainConfig cfg = config.empty() ? TrainConfig{} : load_train_config(config);
    const std::string tag = preset_override.empty() ? preset : preset_override;
    if (!tag.empty()) cfg.apply_preset(tag, profile.empty() ? default_rate_profile() : load_rate_profile(profile));
    if (lambda_e) cfg.lambda_e = *lambda_e;
    if (lambda_c) cfg.lambda_c = *lambda_c;
    if (codebook_size) cfg.codebook_size = *codebook_size;
    if (steps) cfg.steps = *steps;
    if (seed) cfg.seed = *seed;
    for (uint8_t m = 0; !mode.empty() && m <= uint8_t(NvccMode::kFactorized); ++m)
      if (mode == nvcc_mode_name(NvccMode(m))) cfg.mode = NvccMode(m);
    cfg.validate();
    return cfg;
  }
};

bool starts_with(const Bytes& b, const char* magic, size_t n) {
  return b.size() >= n && std::equal(magic, magic + n, b.begin());
}

void print_scene_summary(const Scene& s) {
  std::cout << "scene\t" << s.metadata.name << "\n"
            << "gaussians\t" << s.gaussians.count << "\n"
            << "sh_degree\t" << s.gaussians.sh_degree << "\n"
            << "levels\t" << s.voxels.levels.size() << "\n"
            << "channels\t" << s.voxels.channels << "\n"
            << "frames\t" << s.voxels.frames << "\n";
  for (size_t l = 0; l < s.voxels.levels.size(); ++l) {
    const auto& r = s.voxels.levels[l].resolution;
    std::cout << "level " << l << "\t" << r[0] << "x" << r[1] << "x" << r[2] << "\n";
  }
  std::cout << "decoder_params\t" << s.decoder.parameter_count() << "\n";
}

int cmd_synth(const SynthSpec& spec, const std::string& out) {
  const Scene s = synth_scene(spec);
  const Bytes b = write_interchange(s);
  write_file(out, b);
  std::cout << "wrote " << out << " (" << b.size() << " bytes)\n";
  std::cout << "temporal_correlation\t" << temporal_correlation(s.voxels) << "\n";
  return kOk;
}

int cmd_encode(const std::string& in, const std::string& out, const RateFlags& flags, const std::string& trace) {
  const TrainConfig cfg = flags.resolve();
  const Scene scene = read_interchange(read_file(in));
  const EncodeResult r = encode_scene(scene, cfg);
  write_file(out, r.container);
  if (!trace.empty()) {
    std::ofstream f(trace, std::ios::binary);
    f << r.training.trace.to_csv();
    if (!f) fail(ErrorKind::kIo, "cannot write " + trace);
  }
  std::cout << "preset\t" << cfg.preset << "\n"
            << "lambda_e\t" << cfg.lambda_e << "\n"
            << "codebook_size\t" << r.codebook_size << "\n"
            << "voxel_bits\t" << r.training.initial_voxel_bits << " -> " << r.training.final_voxel_bits << "\n"
            << "code_bits\t" << r.training.initial_code_bits << " -> " << r.training.final_code_bits << "\n"
            << r.sizes.to_string()
            << "ratio\t" << double(write_interchange(scene).size()) / double(r.container.size()) << "\n";
  return kOk;
}

int cmd_decode(const std::string& in, const std::string& out, const std::string& reference) {
  const QuantizedScene q = decode_container(read_file(in));
  const Scene dec = reconstruct(q);
  write_file(out, write_interchange(dec));
  std::cout << "wrote " << out << "\n";
  if (!reference.empty()) {
    const Scene ref = read_interchange(read_file(reference));
    std::cout << "# parameter-space PSNR, not an image metric\n" << parameter_psnr(ref, dec).to_string();
  }
  return kOk;
}

int cmd_inspect(const std::string& in) {
  const Bytes b = read_file(in);
  if (starts_with(b, kInterchangeMagic, 8)) {
    const Scene s = read_interchange(b);
    std::cout << "format\tGS4DXCHG\n";
    print_scene_summary(s);
    const ValidationReport v = validate_scene(s);
    std::cout << "valid\t" << (v.ok() ? "yes" : "no") << "\n" << v.to_string();
    return kOk;
  }
  if (starts_with(b, kContainerMagic, 4)) {
    const ReadResult rr = read_container(b);
    const QuantizedScene q = decode_container(b);
    std::cout << "format\t4DCC\n"
              << "gaussians\t" << q.count() << "\n"
              << "codebook\t" << q.codebook.rows << "x" << q.codebook.cols << "\n"
              << "levels\t" << q.voxels.levels() << "\n"
              << "channels\t" << q.voxels.channels << "\n"
              << "frames\t" << q.voxels.frames << "\n"
              << "voxel_gain\t" << q.voxel_gain << "\n";
    for (const SectionEntry& e : rr.skipped) std::cout << "skipped\tkind " << e.kind << ", " << e.length << " bytes\n";
    std::cout << size_report(b).to_string();
    return kOk;
  }
  fail(ErrorKind::kBadMagic, in + " is neither a GS4DXCHG scene nor a 4DCC container");
}

int cmd_rd_report(const std::string& in, const std::vector<std::string>& presets, const RateFlags& flags,
                  const std::string& out) {
  const Scene scene = read_interchange(read_file(in));
  const size_t raw = write_interchange(scene).size();
  std::ostringstream csv;
  csv << "preset,lambda_e,lambda_c,codebook_size,bytes,bits,ratio,psnr_overall_db,psnr_voxels_db\n";
  for (const std::string& tag : presets) {
    const TrainConfig cfg = flags.resolve(tag);
    const EncodeResult r = encode_scene(scene, cfg);
    const Fidelity f = parameter_psnr(scene, reconstruct(decode_container(r.container)));
    char line[256];
    std::snprintf(line, sizeof line, "%s,%g,%g,%zu,%zu,%zu,%.4f,%.4f,%.4f\n", tag.c_str(), cfg.lambda_e,
                  cfg.lambda_c, r.codebook_size, r.container.size(), 8 * r.container.size(),
                  double(raw) / double(r.container.size()), f.overall, f.voxels);
    csv << line;
  }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    const std::string s = csv.str();
    write_file(out, std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"4DGS scene codec"};
  app.require_subcommand(1);

  SynthSpec spec;
  std::string synth_out;
  std::vector<uint32_t> resolution;
  auto* synth = app.add_subcommand("synth", "write a synthetic scene");
  synth->add_option("-o,--output", synth_out, "interchange file")->required();
  synth->add_option("--gaussians", spec.gaussians, "N");
  synth->add_option("--levels", spec.levels, "pyramid levels S");
  synth->add_option("--channels", spec.channels, "feature channels C");
  synth->add_option("--frames", spec.frames, "time samples T");
  synth->add_option("--resolution", resolution, "coarsest spatial size, x y z")->expected(3);
  synth->add_option("--rho", spec.rho, "temporal correlation of the grids");
  synth->add_option("--sh-degree", spec.sh_degree, "SH degree 0..3");
  synth->add_option("--clusters", spec.sh_clusters, "SH clusters");
  synth->add_option("--decoder-hidden", spec.decoder_hidden, "decoder trunk width, 0 for none");
  synth->add_option("--seed", spec.seed, "seed");
  synth->add_option("--name", spec.name, "scene name");

  std::string in, out, trace, reference;
  RateFlags flags;
  auto* encode = app.add_subcommand("encode", "compress a scene");
  encode->add_option("input", in, "interchange file")->required();
  encode->add_option("-o,--output", out, "container file")->required();
  encode->add_option("--trace", trace, "write the rate trace as CSV");
  flags.add(encode);

  auto* decode = app.add_subcommand("decode", "decompress a container");
  decode->add_option("input", in, "container file")->required();
  decode->add_option("-o,--output", out, "interchange file")->required();
  decode->add_option("--reference", reference, "original scene, for the fidelity report");

  auto* inspect = app.add_subcommand("inspect", "describe a scene or container");
  inspect->add_option("input", in, "file")->required();

  std::vector<std::string> presets{"low", "mid", "high"};
  RateFlags rd_flags;
  auto* rd = app.add_subcommand("rd-report", "encode at several presets and emit CSV");
  rd->add_option("input", in, "interchange file")->required();
  rd->add_option("--presets", presets, "preset tags")->delimiter(',');
  rd->add_option("-o,--output", out, "CSV file (default: standard output)");
  rd_flags.add(rd);
  rd->remove_option(rd->get_option("--preset"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*synth) {
      if (!resolution.empty()) spec.base_resolution = {resolution[0], resolution[1], resolution[2]};
      return cmd_synth(spec, synth_out);
    }
    if (*encode) return cmd_encode(in, out, flags, trace);
    if (*decode) return cmd_decode(in, out, reference);
    if (*inspect) return cmd_inspect(in);
    if (*rd) return cmd_rd_report(in, presets, rd_flags, out);
  } catch (const Error& e) {
    std::cerr << "gs4d: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "gs4d: " << e.what() << "\n";
    return kNumericFail;
  }
  return kUsage;
}
