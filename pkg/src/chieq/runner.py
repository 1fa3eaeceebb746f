"""Simulation driver: bootstrap, stepping loop, energy log, snapshots.

Outputs per run (when an output directory is given):

  energy.csv            one row per step (step 0 included), header
                        step,time,e_original,e_modified,mass,dissipation,
                        u_drift,outer_iters,inner_iters, values with 17
                        significant digits.
  snapshot_<step>.chsnap  magic b"CHIEQ1\\n", a text header line
                        "dim n scheme step time\\n", then n^dim float64
                        little-endian values in x-fastest order for phi,
                        followed by the same for U.

Snapshots are written at step 0, every `snapshot_every` steps, and at the
final step.  Identical RunConfig and seed reproduce both files bit for bit
on a given platform.
"""

import os

import numpy as np

from . import diagnostics as diag
from .config import RunConfig
from .initial import init_random, init_sinusoidal
from .schemes import SchemeId, SimState, TimeStepper, init_state
from .solver import NoConvergence
from .spectral import SpectralOps

SNAPSHOT_MAGIC = b"CHIEQ1\n"


class SolverFailure(RuntimeError):
    """A linear solve failed; carries the step index where it happened."""

    def __init__(self, step, cause):
        self.step = step
        self.cause = cause
        super().__init__(f"solver failed at step {step}: {cause}")


def _serialize_field(values):
    """Flatten in the canonical order: x fastest."""
    return np.asarray(values, dtype="<f8").T.tobytes()


def _deserialize_field(buf, grid):
    flat = np.frombuffer(buf, dtype="<f8", count=grid.npoints)
    return flat.reshape(grid.shape[::-1]).T.copy()


def write_snapshot(path, state: SimState, scheme: SchemeId, grid):
    header = f"{grid.dim} {grid.n} {scheme} {state.step} {state.time:.17g}\n"
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(header.encode("ascii"))
        f.write(_serialize_field(state.phi))
        f.write(_serialize_field(state.u))


def read_snapshot(path):
    """Returns (grid, scheme, state) from a snapshot file."""
    from .spectral import GridSpec

    with open(path, "rb") as f:
        magic = f.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a snapshot file (bad magic {magic!r})")
        header = f.readline().decode("ascii").split()
        dim, n = int(header[0]), int(header[1])
        scheme = SchemeId.parse(header[2])
        step, time = int(header[3]), float(header[4])
        grid = GridSpec(dim, n)
        nbytes = grid.npoints * 8
        phi = _deserialize_field(f.read(nbytes), grid)
        u = _deserialize_field(f.read(nbytes), grid)
    return grid, scheme, SimState(phi=phi, u=u, step=step, time=time)


def initial_field(cfg: RunConfig):
    if cfg.init.variant == "sinusoidal":
        return init_sinusoidal(cfg.grid)
    return init_random(cfg.grid, cfg.init.mean, cfg.init.amplitude, cfg.seed)


def _record(state, scheme, p, ops, dissipation, stats):
    return diag.EnergyRecord(
        step=state.step, time=state.time,
        e_original=diag.energy_original(state.phi, p, ops),
        e_modified=diag.energy_modified(state, scheme, p, ops),
        mass=diag.mass(state.phi, ops.grid),
        dissipation=dissipation,
        u_drift=diag.u_drift(state, p),
        outer_iters=stats.outer_iters if stats else 0,
        inner_iters=stats.total_inner_iters if stats else 0)


def run_simulation(cfg: RunConfig, out_dir=None, progress=None):
    """Run to t_end; returns (final SimState, list of EnergyRecord).

    progress: optional callable(step, n_steps, record) invoked per step.
    """
    ops = SpectralOps(cfg.grid, dealias=cfg.dealias)
    stepper = TimeStepper(cfg.scheme, cfg.grid, cfg.params, cfg.dt,
                          cfg=cfg.solver, ops=ops)
    state = init_state(initial_field(cfg), cfg.params)
    n_steps = cfg.n_steps

    csv_file = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_file = open(os.path.join(out_dir, "energy.csv"), "w",
                        encoding="utf-8", newline="\n")
        csv_file.write(diag.EnergyRecord.CSV_HEADER + "\n")

    records = []

    def emit(rec, state):
        records.append(rec)
        if csv_file is not None:
            csv_file.write(rec.csv_row() + "\n")
            if out_dir is not None and (state.step % cfg.snapshot_every == 0
                                        or state.step == n_steps):
                name = f"snapshot_{state.step:08d}.chsnap"
                write_snapshot(os.path.join(out_dir, name), state,
                               cfg.scheme, cfg.grid)
        if progress is not None:
            progress(state.step, n_steps, rec)

    try:
        # step 0: modified energy reported in the one-level form (no history)
        emit(_record(state, SchemeId.LS1, cfg.params, ops, 0.0, None), state)
        try:
            res = stepper.bootstrap(state)
            if res is not None:
                state = res.state
                emit(_record(state, cfg.scheme, cfg.params, ops,
                             res.dissipation, res.stats), state)
            while state.step < n_steps:
                res = stepper.step(state)
                state = res.state
                emit(_record(state, cfg.scheme, cfg.params, ops,
                             res.dissipation, res.stats), state)
        except NoConvergence as err:
            raise SolverFailure(state.step + 1, err) from err
    finally:
        if csv_file is not None:
            csv_file.close()
    return state, records
