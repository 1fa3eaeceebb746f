import numpy as np
import pytest

from chieq.config import (ConfigError, PRESETS, RunConfig, format_config,
                          parse_config, preset)
from chieq.runner import (SNAPSHOT_MAGIC, read_snapshot, run_simulation,
                          write_snapshot)
from chieq.schemes import SchemeId, SimState
from chieq.spectral import GridSpec

GOOD = """
# comment line
scheme = ls2-cn
dim = 2
n = 16
epsilon = 0.05
sigma = 0.005
theta = 2.5
bshift = 3.5
dt = 0.001
t_end = 0.01
init = random
mean = 0.3
amplitude = 0.001
seed = 11
snapshot_every = 5
outer_tol = 1e-9
inner_tol = 1e-11
dealias = false
"""


class TestParse:
    def test_round_trip(self):
        cfg = parse_config(GOOD)
        assert cfg.scheme is SchemeId.LS2_CN
        assert cfg.grid == GridSpec(2, 16)
        assert cfg.params.B == 3.5
        assert cfg.init.variant == "random"
        assert cfg.n_steps == 10
        again = parse_config(format_config(cfg))
        assert again == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(GOOD + "\ncolor = blue\n")

    def test_missing_key_rejected(self):
        broken = "\n".join(l for l in GOOD.splitlines() if not l.startswith("dt"))
        with pytest.raises(ConfigError, match="missing keys"):
            parse_config(broken)

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(GOOD + "\nseed = 4\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(GOOD.replace("n = 16", "n = banana"))
        with pytest.raises(ConfigError):
            parse_config(GOOD.replace("dealias = false", "dealias = maybe"))
        with pytest.raises(ConfigError):
            parse_config(GOOD.replace("scheme = ls2-cn", "scheme = euler"))

    def test_validation(self):
        with pytest.raises(ConfigError):
            parse_config(GOOD.replace("t_end = 0.01", "t_end = 0.0001"))
        with pytest.raises(ConfigError):
            parse_config(GOOD.replace("snapshot_every = 5", "snapshot_every = 0"))


class TestPresets:
    def test_all_presets_format_and_parse(self):
        for name in PRESETS:
            cfg = preset(name)
            assert parse_config(format_config(cfg)) == cfg

    def test_expected_names(self):
        for name in ("fig4_1", "table4_1", "spinodal2d_03", "spinodal2d_05",
                     "spinodal2d_07", "spinodal3d_03", "spinodal3d_05",
                     "spinodal3d_07"):
            assert name in PRESETS

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset("fig9_9")


class TestSnapshots:
    def test_round_trip(self, tmp_path):
        g = GridSpec(2, 16)
        rng = np.random.default_rng(0)
        state = SimState(phi=rng.standard_normal(g.shape),
                         u=rng.standard_normal(g.shape), step=12, time=0.012)
        path = tmp_path / "snap.chsnap"
        write_snapshot(path, state, SchemeId.LS2_BDF, g)
        g2, scheme, back = read_snapshot(path)
        assert g2 == g and scheme is SchemeId.LS2_BDF
        assert back.step == 12 and back.time == 0.012
        assert np.array_equal(back.phi, state.phi)
        assert np.array_equal(back.u, state.u)

    def test_layout_is_x_fastest(self, tmp_path):
        g = GridSpec(2, 16)
        phi = np.arange(g.npoints, dtype=float).reshape(g.shape)  # [ix, iy]
        state = SimState(phi=phi, u=np.zeros(g.shape))
        path = tmp_path / "s.chsnap"
        write_snapshot(path, state, SchemeId.LS1, g)
        raw = path.read_bytes()
        assert raw.startswith(SNAPSHOT_MAGIC)
        header_end = raw.index(b"\n", len(SNAPSHOT_MAGIC)) + 1
        flat = np.frombuffer(raw, dtype="<f8", count=g.npoints,
                             offset=header_end)
        # consecutive file entries step ix first
        assert flat[0] == phi[0, 0]
        assert flat[1] == phi[1, 0]
        assert flat[g.n] == phi[0, 1]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.chsnap"
        path.write_bytes(b"NOTASNAP" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            read_snapshot(path)


class TestRunOutputs:
    def test_csv_and_snapshots_written_and_deterministic(self, tmp_path):
        cfg = parse_config(GOOD)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run_simulation(cfg, out_dir=str(out1))
        run_simulation(cfg, out_dir=str(out2))
        csv1 = (out1 / "energy.csv").read_bytes()
        csv2 = (out2 / "energy.csv").read_bytes()
        assert csv1 == csv2
        lines = csv1.decode().splitlines()
        assert lines[0] == ("step,time,e_original,e_modified,mass,dissipation,"
                            "u_drift,outer_iters,inner_iters")
        assert len(lines) == cfg.n_steps + 2  # header + step 0 .. n
        snaps1 = sorted(f.name for f in out1.glob("*.chsnap"))
        assert snaps1 == ["snapshot_00000000.chsnap", "snapshot_00000005.chsnap",
                          "snapshot_00000010.chsnap"]
        assert ((out1 / "snapshot_00000010.chsnap").read_bytes()
                == (out2 / "snapshot_00000010.chsnap").read_bytes())

    def test_energy_decays_and_mass_constant_in_csv(self, tmp_path):
        cfg = parse_config(GOOD)
        _, records = run_simulation(cfg, out_dir=str(tmp_path / "r"))
        e = [r.e_modified for r in records]
        assert all(e[i + 1] <= e[i] + 1e-9 * abs(e[i]) for i in range(len(e) - 1))
        m = [r.mass for r in records]
        assert max(abs(mi - m[0]) for mi in m) <= 1e-10 * abs(m[0])
