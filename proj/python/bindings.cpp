#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gs4dcc/codec.hpp"
#include "gs4dcc/error.hpp"
#include "gs4dcc/interchange.hpp"
#include "gs4dcc/range_coder.hpp"
#include "gs4dcc/synth.hpp"
#include "gs4dcc/trainer.hpp"

namespace py = pybind11;
using namespace gs4dcc;

namespace {

Bytes to_bytes(const py::bytes& b) {
  const std::string_view s = b;
  return Bytes(s.begin(), s.end());
}

py::bytes from_bytes(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

py::array_t<float> array2d(const std::vector<float>& v, size_t rows, size_t cols) {
  py::array_t<float> a({rows, cols});
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

py::dict scene_dict(const Scene& s) {
  const size_t n = s.gaussians.count;
  py::dict d;
  d["name"] = s.metadata.name;
  d["positions"] = array2d(s.gaussians.positions, n, 3);
  d["scales"] = array2d(s.gaussians.scales, n, 3);
  d["rotations"] = array2d(s.gaussians.rotations, n, 4);
  d["opacities"] = array2d(s.gaussians.opacities, n, 1);
  d["sh"] = array2d(s.gaussians.sh, n, s.gaussians.sh_dim());
  py::list levels;
  for (const Level& lv : s.voxels.levels) {
    py::list planes;
    for (const Plane& p : lv.planes) {
      py::array_t<float> a({size_t{s.voxels.channels}, size_t{p.rows}, size_t{p.cols}});
      std::copy(p.data.begin(), p.data.end(), a.mutable_data());
      planes.append(a);
    }
    levels.append(planes);
  }
  d["voxels"] = levels;
  d["frames"] = s.voxels.frames;
  return d;
}

py::dict fidelity_dict(const Fidelity& f) {
  py::dict d;
  d["positions"] = f.positions;
  d["scales"] = f.scales;
  d["rotations"] = f.rotations;
  d["opacities"] = f.opacities;
  d["sh"] = f.sh;
  d["voxels"] = f.voxels;
  d["overall"] = f.overall;
  return d;
}

py::dict sizes_dict(const SizeReport& r) {
  py::dict d;
  for (const auto& row : r.rows) d[py::str(row.label)] = row.bytes;
  d["overhead"] = r.overhead;
  d["total"] = r.total;
  return d;
}

std::vector<IntegerCdf> cdfs_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& pmfs) {
  require(pmfs.ndim() == 1 || pmfs.ndim() == 2, ErrorKind::kShape, "pmfs must be 1-D or 2-D");
  const size_t rows = pmfs.ndim() == 1 ? 1 : pmfs.shape(0);
  const size_t width = pmfs.shape(pmfs.ndim() - 1);
  std::vector<IntegerCdf> out;
  for (size_t r = 0; r < rows; ++r)
    out.push_back(freeze_cdf(std::span<const double>(pmfs.data() + r * width, width)));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "4DGS scene codec";
  py::register_exception<Error>(m, "Error");

  py::class_<SynthSpec>(m, "SynthSpec")
      .def(py::init<>())
      .def_readwrite("name", &SynthSpec::name)
      .def_readwrite("gaussians", &SynthSpec::gaussians)
      .def_readwrite("sh_degree", &SynthSpec::sh_degree)
      .def_readwrite("levels", &SynthSpec::levels)
      .def_readwrite("channels", &SynthSpec::channels)
      .def_readwrite("frames", &SynthSpec::frames)
      .def_readwrite("base_resolution", &SynthSpec::base_resolution)
      .def_readwrite("rho", &SynthSpec::rho)
      .def_readwrite("amplitude", &SynthSpec::amplitude)
      .def_readwrite("sh_clusters", &SynthSpec::sh_clusters)
      .def_readwrite("sh_noise", &SynthSpec::sh_noise)
      .def_readwrite("decoder_hidden", &SynthSpec::decoder_hidden)
      .def_readwrite("seed", &SynthSpec::seed);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def(py::init([](const std::string& text) { return parse_train_config(text); }), py::arg("text"))
      .def_readwrite("preset", &TrainConfig::preset)
      .def_readwrite("lambda_e", &TrainConfig::lambda_e)
      .def_readwrite("lambda_c", &TrainConfig::lambda_c)
      .def_readwrite("codebook_size", &TrainConfig::codebook_size)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("steps", &TrainConfig::steps)
      .def_readwrite("seed", &TrainConfig::seed)
      .def("apply_preset", [](TrainConfig& c, const std::string& tag) { c.apply_preset(tag); })
      .def("__str__", &TrainConfig::to_string);

  m.def("rate_preset", [](const std::string& tag) {
    const RatePreset p = rate_preset(tag);
    return py::make_tuple(p.lambda_e, p.codebook_size);
  });
  m.def("voxel_gain", &voxel_gain, py::arg("lambda_e"));

  m.def(
      "synth", [](const SynthSpec& spec) { return from_bytes(write_interchange(synth_scene(spec))); },
      py::arg("spec") = SynthSpec{}, "Synthetic scene as GS4DXCHG bytes.");
  m.def(
      "read_scene", [](const py::bytes& b) { return scene_dict(read_interchange(to_bytes(b))); },
      "GS4DXCHG bytes to a dict of numpy arrays.");

  m.def(
      "encode",
      [](const py::bytes& scene_bytes, const TrainConfig& cfg) {
        const Scene scene = read_interchange(to_bytes(scene_bytes));
        EncodeResult r;
        {
          py::gil_scoped_release release;
          r = encode_scene(scene, cfg);
        }
        py::dict d;
        d["container"] = from_bytes(r.container);
        d["sizes"] = sizes_dict(r.sizes);
        d["codebook_size"] = r.codebook_size;
        d["estimate_bits"] = r.estimate.total();
        d["initial_voxel_bits"] = r.training.initial_voxel_bits;
        d["final_voxel_bits"] = r.training.final_voxel_bits;
        d["initial_code_bits"] = r.training.initial_code_bits;
        d["final_code_bits"] = r.training.final_code_bits;
        const auto& pts = r.training.trace.points;
        py::array_t<double> trace({pts.size(), size_t{4}});
        auto t = trace.mutable_unchecked<2>();
        for (size_t i = 0; i < pts.size(); ++i) {
          t(i, 0) = double(pts[i].step);
          t(i, 1) = pts[i].voxel_bits;
          t(i, 2) = pts[i].code_bits;
          t(i, 3) = pts[i].loss;
        }
        d["trace"] = trace;
        return d;
      },
      py::arg("scene"), py::arg("config") = TrainConfig{}, "Compress GS4DXCHG bytes into a 4DCC container.");

  m.def(
      "decode",
      [](const py::bytes& container, std::optional<py::bytes> reference) {
        const Scene dec = reconstruct(decode_container(to_bytes(container)));
        py::object fid = py::none();
        if (reference) fid = fidelity_dict(parameter_psnr(read_interchange(to_bytes(*reference)), dec));
        return py::make_tuple(from_bytes(write_interchange(dec)), fid);
      },
      py::arg("container"), py::arg("reference") = py::none(),
      "Decompress; returns (GS4DXCHG bytes, parameter-space PSNR dict or None).");

  m.def(
      "inspect", [](const py::bytes& container) { return sizes_dict(size_report(to_bytes(container))); },
      "Per-section byte counts of a 4DCC container.");

  m.def(
      "dg_pmf", [](double mu, double sigma, int32_t lo, int32_t hi) {
        const auto p = dg_pmf(mu, sigma, Support{lo, hi});
        py::array_t<double> a(std::vector<py::ssize_t>{static_cast<py::ssize_t>(p.size())});
        std::copy(p.begin(), p.end(), a.mutable_data());
        return a;
      },
      py::arg("mu"), py::arg("sigma"), py::arg("lo"), py::arg("hi"));

  m.def(
      "range_encode",
      [](const std::vector<uint32_t>& symbols, const py::array_t<double, py::array::c_style | py::array::forcecast>& pmfs) {
        const auto cdfs = cdfs_from(pmfs);
        require(cdfs.size() == 1 || cdfs.size() == symbols.size(), ErrorKind::kShape, "one pmf, or one per symbol");
        CdfProvider prov = [&](size_t i) -> const IntegerCdf& { return cdfs[cdfs.size() == 1 ? 0 : i]; };
        return py::make_tuple(from_bytes(encode_symbols(symbols, prov)), ideal_bits(symbols, prov));
      },
      py::arg("symbols"), py::arg("pmfs"), "Returns (bytes, ideal bits under the frozen CDFs).");
  m.def(
      "range_decode",
      [](const py::bytes& data, const py::array_t<double, py::array::c_style | py::array::forcecast>& pmfs, size_t n) {
        const auto cdfs = cdfs_from(pmfs);
        require(cdfs.size() == 1 || cdfs.size() == n, ErrorKind::kShape, "one pmf, or one per symbol");
        CdfProvider prov = [&](size_t i) -> const IntegerCdf& { return cdfs[cdfs.size() == 1 ? 0 : i]; };
        return decode_symbols(to_bytes(data), prov, n);
      },
      py::arg("data"), py::arg("pmfs"), py::arg("n"));

  m.def(
      "route_context",
      [](size_t level, size_t t, bool spatial) {
        return std::string(
            context_case_name(route_context(level, t, spatial ? PlaneKind::kSpatial : PlaneKind::kSpatiotemporal)));
      },
      py::arg("level"), py::arg("t"), py::arg("spatial"), "0-based level and time index.");
}
