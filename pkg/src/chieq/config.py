"""Run configuration: flat key=value text files and named presets.

A config file is UTF-8 text, one `key = value` per line, `#` comments and
blank lines allowed.  Exactly these keys are recognized (unknown keys are
errors), and all must be present:

    scheme dim n epsilon sigma theta bshift dt t_end init mean amplitude
    seed snapshot_every outer_tol inner_tol dealias

`init` is `sinusoidal` or `random`; `mean`, `amplitude` and `seed` matter
only for the random variant (they are parsed but ignored otherwise).
"""

from dataclasses import dataclass, field, replace

from .physics import PhysParams
from .schemes import SchemeId
from .solver import SolverCfg
from .spectral import GridSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitSpec:
    variant: str = "random"          # "sinusoidal" | "random"
    mean: float = 0.3
    amplitude: float = 0.001

    def __post_init__(self):
        if self.variant not in ("sinusoidal", "random"):
            raise ConfigError(f"unknown init variant {self.variant!r}")
        if self.amplitude < 0:
            raise ConfigError("amplitude must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    scheme: SchemeId = SchemeId.LS2_CN
    grid: GridSpec = GridSpec(2, 64)
    params: PhysParams = PhysParams()
    dt: float = 1e-3
    t_end: float = 1.0
    init: InitSpec = InitSpec()
    seed: int = 0
    snapshot_every: int = 1000
    solver: SolverCfg = SolverCfg()
    dealias: bool = False
    out_dir: str = "."

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.t_end < self.dt:
            raise ConfigError("t_end must be >= dt")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


_KEYS = ("scheme", "dim", "n", "epsilon", "sigma", "theta", "bshift", "dt",
         "t_end", "init", "mean", "amplitude", "seed", "snapshot_every",
         "outer_tol", "inner_tol", "dealias")


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "on", "yes", "1"):
        return True
    if t in ("false", "off", "no", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def parse_config(text):
    """Parse config text into a RunConfig (out_dir is set by the caller)."""
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in kv:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        kv[key] = val
    missing = [k for k in _KEYS if k not in kv]
    if missing:
        raise ConfigError("missing keys: " + ", ".join(missing))
    try:
        scheme = SchemeId.parse(kv["scheme"])
        grid = GridSpec(dim=int(kv["dim"]), n=int(kv["n"]))
        params = PhysParams(epsilon=float(kv["epsilon"]), sigma=float(kv["sigma"]),
                            theta=float(kv["theta"]), B=float(kv["bshift"]))
        init = InitSpec(variant=kv["init"].strip().lower(),
                        mean=float(kv["mean"]), amplitude=float(kv["amplitude"]))
        solver = SolverCfg(outer_rel_tol=float(kv["outer_tol"]),
                           inner_rel_tol=float(kv["inner_tol"]))
        return RunConfig(scheme=scheme, grid=grid, params=params,
                         dt=float(kv["dt"]), t_end=float(kv["t_end"]),
                         init=init, seed=int(kv["seed"]),
                         snapshot_every=int(kv["snapshot_every"]),
                         solver=solver, dealias=_parse_bool(kv["dealias"]))
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(str(err)) from err


def load_config(path):
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def format_config(cfg: RunConfig):
    p = cfg.params
    lines = [
        f"scheme = {cfg.scheme}",
        f"dim = {cfg.grid.dim}",
        f"n = {cfg.grid.n}",
        f"epsilon = {p.epsilon:.17g}",
        f"sigma = {p.sigma:.17g}",
        f"theta = {p.theta:.17g}",
        f"bshift = {p.B:.17g}",
        f"dt = {cfg.dt:.17g}",
        f"t_end = {cfg.t_end:.17g}",
        f"init = {cfg.init.variant}",
        f"mean = {cfg.init.mean:.17g}",
        f"amplitude = {cfg.init.amplitude:.17g}",
        f"seed = {cfg.seed}",
        f"snapshot_every = {cfg.snapshot_every}",
        f"outer_tol = {cfg.solver.outer_rel_tol:.17g}",
        f"inner_tol = {cfg.solver.inner_rel_tol:.17g}",
        f"dealias = {'true' if cfg.dealias else 'false'}",
    ]
    return "\n".join(lines) + "\n"


def _spinodal(dim, mean, t_end):
    return RunConfig(scheme=SchemeId.LS2_CN, grid=GridSpec(dim, 128),
                     dt=1e-3, t_end=t_end,
                     init=InitSpec(variant="random", mean=mean, amplitude=0.001),
                     seed=2024, snapshot_every=30000)


# Paper-scale presets; the long spinodal runs take hours and are meant for
# offline reproduction, not CI.
PRESETS = {
    # energy-curve comparison run (choose dt per run: 1e-4/5e-4/1e-3/3.5e-3)
    "fig4_1": RunConfig(scheme=SchemeId.LS2_CN, grid=GridSpec(2, 128),
                        dt=1e-3, t_end=10.0,
                        init=InitSpec(variant="random", mean=0.3, amplitude=0.001),
                        seed=2024, snapshot_every=2000),
    # temporal-convergence study grid/params (driver supplies the dt ladder)
    "table4_1": RunConfig(scheme=SchemeId.LS2_CN, grid=GridSpec(2, 128),
                          dt=5e-3, t_end=0.5,
                          init=InitSpec(variant="sinusoidal", mean=0.48,
                                        amplitude=0.25),
                          seed=0, snapshot_every=100),
    "spinodal2d_03": _spinodal(2, 0.3, 3000.0),
    "spinodal2d_05": _spinodal(2, 0.5, 3000.0),
    "spinodal2d_07": _spinodal(2, 0.7, 3000.0),
    "spinodal3d_03": _spinodal(3, 0.3, 2500.0),
    "spinodal3d_05": _spinodal(3, 0.5, 7500.0),
    "spinodal3d_07": _spinodal(3, 0.7, 2500.0),
}


def preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: "
                          + ", ".join(sorted(PRESETS))) from None
