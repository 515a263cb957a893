"""Conservative finite-volume solver for 2D compressible Euler flow.

Periodic unit square, MUSCL-minmod reconstruction of primitives,
Rusanov (local Lax-Friedrichs) interface fluxes, two-stage SSP
Runge-Kutta time stepping.  Because the update is written purely in
interface-flux differences, the discrete totals of mass, momentum and
energy telescope to floating-point roundoff.

Also hosts the initial-condition families used to build trajectory
datasets: quadrant Riemann problems (rp), curved-interface variants
(crp), Gaussian perturbations (gauss), Kelvin-Helmholtz shear layers
(kh), perturbed/displaced-interface Riemann problems (rpui) and a
shock hitting a corrugated density interface (rm).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .rng import RngStream, mix64

GAMMA_DEFAULT = 1.4
CFL_DEFAULT = 0.4
N_SNAPSHOTS = 21
T_FINAL = 1.0
CHANNELS = ("rho", "vx", "vy", "p")

FAMILIES = ("rp", "crp", "gauss", "kh", "rpui", "rm")


class SolverError(RuntimeError):
    """Positivity or stability failure during time stepping."""

    def __init__(self, msg: str, time: float | None = None):
        super().__init__(msg if time is None else f"{msg} (t={time:.6g})")
        self.time = time


class InvalidInitialCondition(ValueError):
    """IC parameters produce non-positive density or pressure."""


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid must be at least 8x8, got {self.nx}x{self.ny}")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("domain lengths must be positive")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    def cell_centers(self):
        """Coordinate arrays (nx, ny) of cell centers."""
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")


@dataclass(frozen=True)
class Snapshot:
    """One time slice of the four primitive fields on the grid."""

    rho: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    p: np.ndarray
    t: float

    def fields(self) -> np.ndarray:
        """Stacked (4, nx, ny) array in canonical channel order."""
        return np.stack([self.rho, self.vx, self.vy, self.p])

    @classmethod
    def from_fields(cls, arr: np.ndarray, t: float) -> "Snapshot":
        rho, vx, vy, p = (np.asarray(a, dtype=np.float64) for a in arr)
        return cls(rho=rho, vx=vx, vy=vy, p=p, t=float(t))

    def validate(self) -> None:
        for name, a in zip(CHANNELS, (self.rho, self.vx, self.vy, self.p)):
            if not np.all(np.isfinite(a)):
                raise SolverError(f"non-finite {name}", self.t)
        if np.min(self.rho) <= 0.0:
            raise SolverError("non-positive density", self.t)
        if np.min(self.p) <= 0.0:
            raise SolverError("non-positive pressure", self.t)


@dataclass(frozen=True)
class ICSpec:
    family: str
    params: dict
    seed: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInitialCondition(f"unknown IC family {self.family!r}")


@dataclass(frozen=True)
class Trajectory:
    ic: ICSpec
    snapshots: list[Snapshot]
    times: np.ndarray

    def __len__(self) -> int:
        return len(self.snapshots)


@dataclass
class Normalization:
    """Per-channel z-score statistics, computed on the train split only."""

    mean: np.ndarray            # (4,)
    std: np.ndarray             # (4,), floored away from zero

    STD_FLOOR = 1e-8

    @classmethod
    def from_trajectories(cls, trajs) -> "Normalization":
        acc = np.zeros(4)
        acc2 = np.zeros(4)
        count = 0
        for tr in trajs:
            for s in tr.snapshots:
                f = s.fields()
                acc += f.sum(axis=(1, 2))
                acc2 += (f * f).sum(axis=(1, 2))
                count += f.shape[1] * f.shape[2]
        mean = acc / count
        var = np.maximum(acc2 / count - mean * mean, 0.0)
        std = np.maximum(np.sqrt(var), cls.STD_FLOOR)
        return cls(mean=mean, std=std)

    def apply(self, fields: np.ndarray) -> np.ndarray:
        """Normalize a (..., 4, nx, ny) stack."""
        return (fields - self.mean[:, None, None]) / self.std[:, None, None]

    def unapply(self, fields: np.ndarray) -> np.ndarray:
        return fields * self.std[:, None, None] + self.mean[:, None, None]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        return cls(mean=np.asarray(d["mean"]), std=np.asarray(d["std"]))


@dataclass
class Dataset:
    grid: GridSpec
    gamma: float
    trajectories: list[Trajectory]
    split: dict                      # {"train": [idx...], "val": [...], "test": [...]}
    normalization: Normalization | None
    seed: int = 0
    families: tuple = ()

    def split_trajectories(self, name: str) -> list[Trajectory]:
        return [self.trajectories[i] for i in self.split[name]]


# ---------------------------------------------------------------------------
# Euler core


def energy_density(s: Snapshot, gamma: float) -> np.ndarray:
    """Total energy per cell: E = p/(gamma-1) + rho*(vx^2+vy^2)/2."""
    return s.p / (gamma - 1.0) + 0.5 * s.rho * (s.vx * s.vx + s.vy * s.vy)


def totals(s: Snapshot, gamma: float) -> np.ndarray:
    """Discrete sums of (mass, x-momentum, y-momentum, energy)."""
    return np.array([
        s.rho.sum(),
        (s.rho * s.vx).sum(),
        (s.rho * s.vy).sum(),
        energy_density(s, gamma).sum(),
    ])


def _prim_to_cons(W: np.ndarray, gamma: float) -> np.ndarray:
    rho, vx, vy, p = W
    return np.stack([
        rho, rho * vx, rho * vy,
        p / (gamma - 1.0) + 0.5 * rho * (vx * vx + vy * vy),
    ])


def _cons_to_prim(U: np.ndarray, gamma: float) -> np.ndarray:
    rho = U[0]
    vx = U[1] / rho
    vy = U[2] / rho
    p = (gamma - 1.0) * (U[3] - 0.5 * rho * (vx * vx + vy * vy))
    return np.stack([rho, vx, vy, p])


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 0.5 * (np.sign(a) + np.sign(b)) * np.minimum(np.abs(a), np.abs(b))


def _phys_flux(W: np.ndarray, gamma: float, axis: int) -> np.ndarray:
    rho, vx, vy, p = W
    en = p / (gamma - 1.0) + 0.5 * rho * (vx * vx + vy * vy)
    un = vx if axis == 0 else vy
    m = rho * un
    f = np.empty_like(W)
    f[0] = m
    f[1] = m * vx
    f[2] = m * vy
    f[3] = (en + p) * un
    f[1 + axis] += p
    return f


def _flux_divergence(W: np.ndarray, gamma: float, h: float, axis: int) -> np.ndarray:
    """(F_{i+1/2} - F_{i-1/2}) / h along one direction, periodic."""
    ax = 1 + axis
    dm = W - np.roll(W, 1, axis=ax)
    dp = np.roll(W, -1, axis=ax) - W
    slope = _minmod(dp, dm)
    wl = W + 0.5 * slope                       # left state at interface i+1/2
    wr = np.roll(W - 0.5 * slope, -1, axis=ax)  # right state at interface i+1/2
    ul = _prim_to_cons(wl, gamma)
    ur = _prim_to_cons(wr, gamma)
    cl = np.sqrt(gamma * wl[3] / wl[0])
    cr = np.sqrt(gamma * wr[3] / wr[0])
    un_l = wl[1 + axis]
    un_r = wr[1 + axis]
    smax = np.maximum(np.abs(un_l) + cl, np.abs(un_r) + cr)
    f = 0.5 * (_phys_flux(wl, gamma, axis) + _phys_flux(wr, gamma, axis)) \
        - 0.5 * smax * (ur - ul)
    return (f - np.roll(f, 1, axis=ax)) / h


def _rhs(U: np.ndarray, gamma: float, grid: GridSpec) -> np.ndarray:
    W = _cons_to_prim(U, gamma)
    if np.min(W[0]) <= 0.0 or np.min(W[3]) <= 0.0:
        raise SolverError("positivity lost in intermediate stage")
    return -(_flux_divergence(W, gamma, grid.dx, axis=0)
             + _flux_divergence(W, gamma, grid.dy, axis=1))


def max_stable_dt(s: Snapshot, grid: GridSpec, gamma: float, cfl: float = 1.0) -> float:
    """CFL bound cfl / (sx/dx + sy/dy) from the current max wave speeds."""
    c = np.sqrt(gamma * s.p / s.rho)
    sx = float(np.max(np.abs(s.vx) + c))
    sy = float(np.max(np.abs(s.vy) + c))
    return cfl / (sx / grid.dx + sy / grid.dy)


def fv_step(u: Snapshot, dt: float, gamma: float = GAMMA_DEFAULT,
            grid: GridSpec | None = None) -> Snapshot:
    """One conservative SSP-RK2 update with periodic boundaries."""
    if grid is None:
        grid = GridSpec(nx=u.rho.shape[0], ny=u.rho.shape[1])
    if dt <= 0.0:
        raise SolverError("dt must be positive", u.t)
    if dt > max_stable_dt(u, grid, gamma) * (1.0 + 1e-12):
        raise SolverError(f"dt={dt:.3e} violates the CFL bound", u.t)
    U = _prim_to_cons(u.fields(), gamma)
    try:
        k1 = _rhs(U, gamma, grid)
        U1 = U + dt * k1
        k2 = _rhs(U1, gamma, grid)
    except SolverError as exc:
        raise SolverError(str(exc), u.t) from None
    U2 = 0.5 * (U + U1 + dt * k2)
    out = Snapshot.from_fields(_cons_to_prim(U2, gamma), u.t + dt)
    out.validate()
    return out


def solve_trajectory(spec: ICSpec, grid: GridSpec, gamma: float = GAMMA_DEFAULT,
                     cfl: float = CFL_DEFAULT, n_snapshots: int = N_SNAPSHOTS,
                     t_final: float = T_FINAL) -> Trajectory:
    """Evolve an initial condition, storing uniformly spaced snapshots.

    The solver substeps adaptively under the CFL bound between output
    times; stored snapshot times are exact multiples of
    t_final/(n_snapshots-1).
    """
    cur = make_initial_condition(spec, grid)
    times = np.linspace(0.0, t_final, n_snapshots)
    snaps = [cur]
    for target in times[1:]:
        while cur.t < target - 1e-13:
            dt = min(max_stable_dt(cur, grid, gamma, cfl), target - cur.t)
            cur = fv_step(cur, dt, gamma, grid)
        cur = replace(cur, t=float(target))   # clear substep float drift
        snaps.append(cur)
    return Trajectory(ic=spec, snapshots=snaps, times=times)


def conservation_drift(traj: Trajectory, gamma: float = GAMMA_DEFAULT) -> dict:
    """Worst relative drift of the four discrete totals over a trajectory.

    Momentum totals can be legitimately near zero (antisymmetric flows),
    so momentum drift is normalized by max(|P(0)|, M(0) * mean sound
    speed at t=0) rather than by |P(0)| alone.
    """
    s0 = traj.snapshots[0]
    ref = totals(s0, gamma)
    c0 = float(np.mean(np.sqrt(gamma * s0.p / s0.rho)))
    scale = np.array([abs(ref[0]),
                      max(abs(ref[1]), ref[0] * c0),
                      max(abs(ref[2]), ref[0] * c0),
                      abs(ref[3])])
    worst = np.zeros(4)
    for s in traj.snapshots[1:]:
        worst = np.maximum(worst, np.abs(totals(s, gamma) - ref) / scale)
    return dict(zip(("mass", "momentum_x", "momentum_y", "energy"), worst))


# ---------------------------------------------------------------------------
# Initial-condition families
#
# Parameter ranges below are this package's own desk-scale choices; the
# families are qualitative analogs, not clones of any external dataset.

_STATE_RHO = (0.4, 1.4)
_STATE_P = (0.4, 1.4)
_STATE_V = (-0.25, 0.25)


def _draw_state(rng: RngStream) -> list[float]:
    u = rng.uniform(size=4)
    return [
        _STATE_RHO[0] + u[0] * (_STATE_RHO[1] - _STATE_RHO[0]),
        _STATE_V[0] + u[1] * (_STATE_V[1] - _STATE_V[0]),
        _STATE_V[0] + u[2] * (_STATE_V[1] - _STATE_V[0]),
        _STATE_P[0] + u[3] * (_STATE_P[1] - _STATE_P[0]),
    ]


def _quadrant_fields(grid, x_of_y, y_of_x, states):
    x, y = grid.cell_centers()
    right = x >= x_of_y(y)
    top = y >= y_of_x(x)
    fields = np.empty((4, grid.nx, grid.ny))
    masks = [~right & ~top, right & ~top, ~right & top, right & top]
    for mask, st in zip(masks, states):
        for c in range(4):
            fields[c][mask] = st[c]
    return fields


def _build_rp(params, grid):
    x0, y0 = params["x0"], params["y0"]
    return _quadrant_fields(grid, lambda y: x0, lambda x: y0, params["states"])


def _build_rpui(params, grid):
    x0, y0 = params["x0"], params["y0"]
    tx, ty = params["tilt_x"], params["tilt_y"]
    ax, ay = params["wave_amp_x"], params["wave_amp_y"]
    kx, ky = params["wave_k_x"], params["wave_k_y"]

    def x_of_y(y):
        return x0 + tx * (y - 0.5) + ax * np.sin(2.0 * np.pi * kx * y)

    def y_of_x(x):
        return y0 + ty * (x - 0.5) + ay * np.sin(2.0 * np.pi * ky * x)

    return _quadrant_fields(grid, x_of_y, y_of_x, params["states"])


def _build_crp(params, grid):
    x, y = grid.cell_centers()
    dx = x - params["x0"]
    dy = y - params["y0"]
    theta = np.arctan2(dy, dx)
    r_if = params["r0"] * (1.0 + sum(
        a * np.cos((k + 2) * theta + ph)
        for k, (a, ph) in enumerate(zip(params["amps"], params["phases"]))))
    inside = np.hypot(dx, dy) <= r_if
    fields = np.empty((4, grid.nx, grid.ny))
    for c in range(4):
        fields[c] = np.where(inside, params["inside"][c], params["outside"][c])
    return fields


def _wrapped_dist2(x, y, cx, cy, lx, ly):
    dx = np.remainder(x - cx + 0.5 * lx, lx) - 0.5 * lx
    dy = np.remainder(y - cy + 0.5 * ly, ly) - 0.5 * ly
    return dx * dx + dy * dy


def _build_gauss(params, grid):
    x, y = grid.cell_centers()
    rho = np.full((grid.nx, grid.ny), params["rho0"])
    p = np.full((grid.nx, grid.ny), params["p0"])
    for b in params["bumps"]:
        d2 = _wrapped_dist2(x, y, b["x"], b["y"], grid.lx, grid.ly)
        g = np.exp(-0.5 * d2 / (b["sigma"] ** 2))
        rho = rho + b["amp_rho"] * g
        p = p + b["amp_p"] * g
    z = np.zeros_like(rho)
    return np.stack([rho, z, z, p])


def _build_kh(params, grid):
    x, y = grid.cell_centers()
    yc = params.get("y_c", 0.5)
    hw = params.get("half_width", 0.25)
    s = np.tanh((hw - np.abs(y - yc)) / params["delta"])
    vx = params["u0"] * s
    rho = params["rho_out"] + (params["rho_in"] - params["rho_out"]) * 0.5 * (1.0 + s)
    sig = params.get("vy_sigma", 0.05)
    bump = (np.exp(-0.5 * ((y - (yc - hw)) / sig) ** 2)
            + np.exp(-0.5 * ((y - (yc + hw)) / sig) ** 2))
    vy = params["amp"] * np.sin(2.0 * np.pi * params["k_mode"] * x) * bump
    p = np.full_like(rho, params["p0"])
    return np.stack([rho, vx, vy, p])


def shock_jump_state(rho1: float, p1: float, mach: float, gamma: float):
    """Post-shock (rho, u, p) behind a right-moving shock into gas at rest."""
    m2 = mach * mach
    p2 = p1 * (1.0 + 2.0 * gamma / (gamma + 1.0) * (m2 - 1.0))
    rho2 = rho1 * (gamma + 1.0) * m2 / ((gamma - 1.0) * m2 + 2.0)
    c1 = np.sqrt(gamma * p1 / rho1)
    u2 = 2.0 / (gamma + 1.0) * (mach - 1.0 / mach) * c1
    return rho2, u2, p2


def _build_rm(params, grid):
    x, y = grid.cell_centers()
    gamma = params.get("gamma", GAMMA_DEFAULT)
    rho1, p1 = params["rho1"], params["p1"]
    rho_s, u_s, p_s = shock_jump_state(rho1, p1, params["mach"], gamma)
    xi = params["x_interface"] + sum(
        a * np.cos(2.0 * np.pi * k * y + ph)
        for a, k, ph in zip(params["amps"], params["modes"], params["phases"]))
    rho = np.where(x < params["x_shock"], rho_s,
                   np.where(x >= xi, params["rho2"], rho1))
    vx = np.where(x < params["x_shock"], u_s, 0.0)
    p = np.where(x < params["x_shock"], p_s, p1)
    vy = np.zeros_like(rho)
    return np.stack([rho, vx, vy, p])


_BUILDERS = {
    "rp": _build_rp,
    "crp": _build_crp,
    "gauss": _build_gauss,
    "kh": _build_kh,
    "rpui": _build_rpui,
    "rm": _build_rm,
}


def make_initial_condition(spec: ICSpec, grid: GridSpec) -> Snapshot:
    """Realize an ICSpec on the grid as the t=0 snapshot."""
    fields = _BUILDERS[spec.family](spec.params, grid)
    if np.min(fields[0]) <= 0.0 or np.min(fields[3]) <= 0.0:
        raise InvalidInitialCondition(
            f"{spec.family} parameters yield non-positive density/pressure")
    if not np.all(np.isfinite(fields)):
        raise InvalidInitialCondition(f"{spec.family} parameters yield non-finite fields")
    return Snapshot.from_fields(fields, 0.0)


def _uni(rng: RngStream, lo: float, hi: float, size=None):
    return lo + rng.uniform(size=size) * (hi - lo)


def _sample_rp(rng: RngStream) -> dict:
    return {
        "x0": float(_uni(rng, 0.4, 0.6)),
        "y0": float(_uni(rng, 0.4, 0.6)),
        "states": [_draw_state(rng) for _ in range(4)],
    }


def _sample_crp(rng: RngStream) -> dict:
    n_modes = 3
    return {
        "x0": float(_uni(rng, 0.4, 0.6)),
        "y0": float(_uni(rng, 0.4, 0.6)),
        "r0": float(_uni(rng, 0.15, 0.28)),
        "amps": [float(a) for a in _uni(rng, 0.0, 0.12, size=n_modes)],
        "phases": [float(a) for a in _uni(rng, 0.0, 2.0 * np.pi, size=n_modes)],
        "inside": _draw_state(rng),
        "outside": _draw_state(rng),
    }


def _sample_gauss(rng: RngStream) -> dict:
    rho0 = float(_uni(rng, 0.8, 1.2))
    p0 = float(_uni(rng, 0.8, 1.2))
    nb = int(rng.integers(2, 5))
    bumps = []
    for _ in range(nb):
        u = rng.uniform(size=5)
        # negative amplitudes capped so stacked bumps keep rho, p positive
        lo_rho, lo_p = -0.6 * rho0 / nb, -0.6 * p0 / nb
        bumps.append({
            "x": float(u[0]),
            "y": float(u[1]),
            "sigma": float(0.05 + 0.07 * u[2]),
            "amp_rho": float(lo_rho + u[3] * (0.45 - lo_rho)),
            "amp_p": float(lo_p + u[4] * (0.45 - lo_p)),
        })
    return {"rho0": rho0, "p0": p0, "bumps": bumps}


def _sample_kh(rng: RngStream) -> dict:
    return {
        "rho_in": float(_uni(rng, 1.6, 2.4)),
        "rho_out": float(_uni(rng, 0.8, 1.2)),
        "u0": float(_uni(rng, 0.3, 0.6)),
        "delta": float(_uni(rng, 0.02, 0.05)),
        "amp": float(_uni(rng, 0.005, 0.02)),
        "k_mode": int(rng.integers(1, 3)),
        "p0": float(_uni(rng, 1.5, 2.5)),
    }


def _sample_rpui(rng: RngStream) -> dict:
    params = _sample_rp(rng)
    params.update({
        "x0": float(_uni(rng, 0.35, 0.65)),
        "y0": float(_uni(rng, 0.35, 0.65)),
        "tilt_x": float(_uni(rng, -0.2, 0.2)),
        "tilt_y": float(_uni(rng, -0.2, 0.2)),
        "wave_amp_x": float(_uni(rng, 0.0, 0.05)),
        "wave_amp_y": float(_uni(rng, 0.0, 0.05)),
        "wave_k_x": int(rng.integers(1, 3)),
        "wave_k_y": int(rng.integers(1, 3)),
    })
    return params


def _sample_rm(rng: RngStream) -> dict:
    n_modes = 2
    return {
        "rho1": 1.0,
        "p1": 1.0,
        "mach": float(_uni(rng, 1.15, 1.7)),
        "x_shock": float(_uni(rng, 0.15, 0.25)),
        "x_interface": float(_uni(rng, 0.45, 0.6)),
        "rho2": float(_uni(rng, 1.6, 3.0)),
        "amps": [float(a) for a in _uni(rng, 0.005, 0.04, size=n_modes)],
        "modes": [1, 2],
        "phases": [float(a) for a in _uni(rng, 0.0, 2.0 * np.pi, size=n_modes)],
    }


_SAMPLERS = {
    "rp": _sample_rp,
    "crp": _sample_crp,
    "gauss": _sample_gauss,
    "kh": _sample_kh,
    "rpui": _sample_rpui,
    "rm": _sample_rm,
}


def sample_ic(family: str, seed: int, index: int = 0) -> ICSpec:
    """Draw a random ICSpec; deterministic in (family, seed, index)."""
    if family not in FAMILIES:
        raise InvalidInitialCondition(f"unknown IC family {family!r}")
    rng = RngStream(seed, mix64(FAMILIES.index(family), index))
    return ICSpec(family=family, params=_SAMPLERS[family](rng),
                  seed=mix64(seed, FAMILIES.index(family), index))


def split_indices(n: int, fractions, seed: int) -> dict:
    """Disjoint shuffled train/val/test index lists with exact counts."""
    fr = np.asarray(fractions, dtype=float)
    if fr.size != 3 or abs(fr.sum() - 1.0) > 1e-9 or np.any(fr < 0.0):
        raise ValueError(f"split fractions must be 3 non-negatives summing to 1, got {fractions}")
    perm = RngStream(seed, mix64(0x5B117)).permutation(n)
    n_train = int(round(fr[0] * n))
    n_val = int(round(fr[1] * n))
    n_val = min(n_val, n - n_train)
    return {
        "train": sorted(int(i) for i in perm[:n_train]),
        "val": sorted(int(i) for i in perm[n_train:n_train + n_val]),
        "test": sorted(int(i) for i in perm[n_train + n_val:]),
    }


def dataset_ic_specs(families, n_per_family: int, seed: int) -> list:
    """The deterministic ICSpec list of a dataset, in storage order."""
    families = tuple(families)
    for f in families:
        if f not in FAMILIES:
            raise InvalidInitialCondition(f"unknown IC family {f!r}")
    return [sample_ic(fam, seed, i) for fam in families for i in range(n_per_family)]


def assemble_dataset(trajectories: list, grid: GridSpec, seed: int, families,
                     split_fractions, gamma: float) -> Dataset:
    """Split solved trajectories and attach train-split normalization."""
    split = split_indices(len(trajectories), split_fractions, seed)
    train = [trajectories[i] for i in split["train"]]
    norm = Normalization.from_trajectories(train) if train else None
    return Dataset(grid=grid, gamma=gamma, trajectories=trajectories, split=split,
                   normalization=norm, seed=seed, families=tuple(families))


def generate_dataset(families, n_per_family: int, grid: GridSpec, seed: int,
                     split_fractions=(0.75, 0.125, 0.125),
                     gamma: float = GAMMA_DEFAULT, cfl: float = CFL_DEFAULT,
                     n_snapshots: int = N_SNAPSHOTS) -> Dataset:
    """Solve n_per_family trajectories per family into a split dataset.

    Deterministic given (families, n_per_family, grid, seed): the i-th
    trajectory of a family depends only on those values.
    """
    specs = dataset_ic_specs(families, n_per_family, seed)
    trajectories = [solve_trajectory(s, grid, gamma, cfl, n_snapshots) for s in specs]
    return assemble_dataset(trajectories, grid, seed, families, split_fractions, gamma)
