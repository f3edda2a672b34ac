import math

import numpy as np
import pytest

import gs4dcc


def small_spec(seed=1):
    s = gs4dcc.SynthSpec()
    s.gaussians = 30
    s.levels = 2
    s.channels = 2
    s.frames = 3
    s.base_resolution = [2, 2, 2]
    s.sh_clusters = 4
    s.decoder_hidden = 4
    s.seed = seed
    return s


def quick():
    c = gs4dcc.TrainConfig()
    c.steps = 5
    c.codebook_size = 8
    return c


def test_synth_is_deterministic_and_readable():
    a = gs4dcc.synth(small_spec())
    assert a == gs4dcc.synth(small_spec())
    assert a[:8] == b"GS4DXCHG"
    scene = gs4dcc.read_scene(a)
    assert scene["positions"].shape == (30, 3)
    assert scene["sh"].shape == (30, 12)
    assert len(scene["voxels"]) == 2
    assert scene["voxels"][1][0].shape == (2, 3, 4)


def test_encode_decode_round_trip():
    raw = gs4dcc.synth(small_spec(2))
    r = gs4dcc.encode(raw, quick())
    blob = r["container"]
    assert blob[:4] == b"4DCC"
    assert r["sizes"]["total"] == len(blob)
    assert gs4dcc.inspect(blob) == r["sizes"]
    assert r["trace"].shape == (5, 4)
    assert r["final_voxel_bits"] <= r["initial_voxel_bits"]
    assert abs(r["estimate_bits"] / 8 - len(blob)) <= 0.001 * len(blob) + 64
    dec, fid = gs4dcc.decode(blob, raw)
    assert fid["voxels"] > 20
    again, none = gs4dcc.decode(gs4dcc.encode(raw, quick())["container"])
    assert again == dec and none is None
    a, b = gs4dcc.read_scene(raw), gs4dcc.read_scene(dec)
    assert np.max(np.abs(a["positions"] - b["positions"])) < 1e-3


def test_corrupt_container_raises():
    blob = bytearray(gs4dcc.encode(gs4dcc.synth(small_spec(3)), quick())["container"])
    blob[-50] ^= 0x21
    with pytest.raises(gs4dcc.Error, match="checksum"):
        gs4dcc.decode(bytes(blob))


def test_presets_and_config():
    assert gs4dcc.rate_preset("high") == (1e-5, 8192)
    assert gs4dcc.rate_preset("mid") == (1e-4, 6144)
    assert gs4dcc.rate_preset("low") == (1e-3, 4096)
    with pytest.raises(gs4dcc.Error):
        gs4dcc.rate_preset("ultra")
    c = gs4dcc.TrainConfig("preset = low\nsteps = 7\n")
    assert c.lambda_e == 1e-3 and c.steps == 7
    assert math.isclose(gs4dcc.voxel_gain(1e-4), math.sqrt(math.log(2) / 6e-4))


def test_dg_pmf_and_range_coder():
    p = gs4dcc.dg_pmf(0.0, 1.0, -8, 8)
    assert abs(p.sum() - 1) < 1e-12
    assert abs(p[8] - math.erf(0.5 / math.sqrt(2))) < 1e-12
    rng = np.random.default_rng(0)
    sym = rng.integers(0, 17, size=5000).tolist()
    data, ideal = gs4dcc.range_encode(sym, np.full(17, 1 / 17))
    assert len(data) <= ideal / 8 * 1.001 + 64
    assert gs4dcc.range_decode(data, np.full(17, 1 / 17), len(sym)) == sym
    pmfs = np.stack([gs4dcc.dg_pmf(m, 2.0, -8, 8) for m in rng.normal(size=len(sym))])
    sym2 = [min(16, s) for s in sym]
    data2, _ = gs4dcc.range_encode(sym2, pmfs)
    assert gs4dcc.range_decode(data2, pmfs, len(sym2)) == sym2


def test_routing():
    assert gs4dcc.route_context(0, 0, False) == "factorized"
    assert gs4dcc.route_context(0, 2, False) == "temporal"
    assert gs4dcc.route_context(1, 0, True) == "spatial"
    assert gs4dcc.route_context(1, 1, False) == "full"
