"""Demand-level Markov model: state grids, quantization, TPM estimation.

The stochastic solver treats the driver's demanded power as a Markov chain
on a fixed grid of demand levels. This module owns the discretization of
the full solver state (demand, speed, front slip, rear slip), the
nearest-node quantizer shared with the compiled kernel, the estimation of
the demand transition probability matrix (TPM) from observed demand
sequences, and the CSV + JSON-sidecar persistence of that matrix.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from . import _kernel as _k
from .errors import ArtifactMismatch, EmptyObservation, MissingArtifact, ParseError

__all__ = [
    "StateGrid", "Tpm", "quantize", "quantize_array", "estimate_tpm",
    "expected_value", "save_tpm", "load_tpm", "tpm_checksum",
    "DEFAULT_P_GRID", "DEFAULT_V_GRID", "DEFAULT_LAM_GRID", "default_u_grid",
]

# Demand levels: -12 kW to +19 kW in 1 kW steps (32 levels).
DEFAULT_P_GRID = np.arange(-12000.0, 19001.0, 1000.0)
# Speed nodes [m/s]; faster speeds clamp to the top node.
DEFAULT_V_GRID = np.array([0.0, 5.0, 10.0, 25.0])
# Slip nodes, dense near zero where the friction curve is steep.
DEFAULT_LAM_GRID = np.array([-1.0, -0.35, -0.21, -0.1, -0.001, 0.0,
                             0.001, 0.1, 0.21, 0.35, 1.0])


def default_u_grid(p_min: float = -12000.0, p_max: float = 19000.0,
                   n: int = 32) -> np.ndarray:
    """Front-power control levels spanning [min(0, p_min), p_max].

    The default count of 32 makes the step an even 1 kW and places an
    exact zero on the grid, so idle states admit a zero-power control.
    """
    return np.linspace(min(0.0, p_min), p_max, n)


def _as_grid(values, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError(f"{name} must be a 1-D grid with at least 2 nodes")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return arr


def quantize(value: float, grid: np.ndarray) -> int:
    """Index of the nearest grid node.

    Exact midpoint ties break to the lower index; values outside the span
    clamp to the end nodes.
    """
    g = np.ascontiguousarray(grid, dtype=np.float64)
    if g.size == 0:
        raise ValueError("grid must be nonempty")
    return int(_k.quantize_c(g, float(value)))


def quantize_array(values, grid: np.ndarray) -> np.ndarray:
    """Vectorized quantize with the same tie and clamp rules."""
    g = np.ascontiguousarray(grid, dtype=np.float64)
    mids = 0.5 * (g[:-1] + g[1:])
    return np.searchsorted(mids, np.asarray(values, dtype=np.float64),
                           side="left").astype(np.intp)


@dataclass(frozen=True)
class StateGrid:
    """Discretization of (P_dem, v, lambda_f, lambda_r) plus the control grid."""

    p_grid: np.ndarray
    v_grid: np.ndarray
    lam_grid: np.ndarray
    u_grid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_grid", _as_grid(self.p_grid, "p_grid"))
        object.__setattr__(self, "v_grid", _as_grid(self.v_grid, "v_grid"))
        object.__setattr__(self, "lam_grid", _as_grid(self.lam_grid, "lam_grid"))
        object.__setattr__(self, "u_grid", _as_grid(self.u_grid, "u_grid"))

    @classmethod
    def default(cls) -> "StateGrid":
        return cls(DEFAULT_P_GRID, DEFAULT_V_GRID, DEFAULT_LAM_GRID,
                   default_u_grid())

    @property
    def n_p(self) -> int:
        return self.p_grid.size

    @property
    def n_v(self) -> int:
        return self.v_grid.size

    @property
    def n_lam(self) -> int:
        return self.lam_grid.size

    @property
    def n_u(self) -> int:
        return self.u_grid.size

    @property
    def n_det(self) -> int:
        """Number of demand-independent (v, lam_f, lam_r) combinations."""
        return self.n_v * self.n_lam * self.n_lam

    @property
    def n_states(self) -> int:
        return self.n_p * self.n_det

    def state_index(self, ip: int, iv: int, ilf: int, ilr: int) -> int:
        """Flatten grid indices; demand is the slowest axis."""
        return ((ip * self.n_v + iv) * self.n_lam + ilf) * self.n_lam + ilr

    def state_tuple(self, s: int) -> tuple:
        """Inverse of state_index."""
        nl = self.n_lam
        ilr = s % nl
        s //= nl
        ilf = s % nl
        s //= nl
        iv = s % self.n_v
        ip = s // self.n_v
        return ip, iv, ilf, ilr

    def det_index(self, iv: int, ilf: int, ilr: int) -> int:
        """Flatten the demand-independent part of the state."""
        return (iv * self.n_lam + ilf) * self.n_lam + ilr

    def to_dict(self) -> dict:
        return {"p_grid": self.p_grid.tolist(), "v_grid": self.v_grid.tolist(),
                "lam_grid": self.lam_grid.tolist(),
                "u_grid": self.u_grid.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StateGrid":
        return cls(np.asarray(d["p_grid"]), np.asarray(d["v_grid"]),
                   np.asarray(d["lam_grid"]), np.asarray(d["u_grid"]))

    def matches(self, other: "StateGrid", tol: float = 1e-9) -> bool:
        for a, b in ((self.p_grid, other.p_grid), (self.v_grid, other.v_grid),
                     (self.lam_grid, other.lam_grid),
                     (self.u_grid, other.u_grid)):
            if a.size != b.size or np.max(np.abs(a - b)) > tol:
                return False
        return True


@dataclass(frozen=True)
class Tpm:
    """Row-stochastic one-step transition matrix over demand levels."""

    p: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.p, dtype=np.float64)
        c = np.ascontiguousarray(self.counts, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("transition matrix must be square")
        if c.shape != p.shape:
            raise ValueError("counts shape must match the matrix")
        if np.any(p < 0) or np.any(c < 0):
            raise ValueError("probabilities and counts must be nonnegative")
        rows = p.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-9:
            raise ValueError("every row must sum to 1 within 1e-9")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return self.p.shape[0]


def estimate_tpm(sequences, grid: StateGrid) -> Tpm:
    """Estimate the demand TPM from observed demand sequences.

    Each sequence is an iterable of demanded power [W] sampled at the
    decision period. Samples are quantized to the demand grid, transitions
    are counted within each sequence (never across sequence boundaries),
    and rows are normalized. Levels never observed as a source get a
    self-transition probability of 1.
    """
    n = grid.n_p
    counts = np.zeros((n, n), dtype=np.float64)
    total = 0
    for seq in sequences:
        arr = np.asarray(seq, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("each observation sequence must be 1-D")
        if arr.size < 2:
            continue
        idx = quantize_array(arr, grid.p_grid)
        np.add.at(counts, (idx[:-1], idx[1:]), 1.0)
        total += arr.size - 1
    if total == 0:
        raise EmptyObservation(
            "no usable observations: every sequence has fewer than 2 samples")
    rows = counts.sum(axis=1)
    p = np.zeros_like(counts)
    visited = rows > 0
    p[visited] = counts[visited] / rows[visited, None]
    for i in np.flatnonzero(~visited):
        p[i, i] = 1.0
    return Tpm(p=p, counts=counts)


def expected_value(row: np.ndarray, f) -> float:
    """Expectation of f over the next demand level given one TPM row.

    f may be a vector indexed by next-demand level or a callable on the
    level index.
    """
    row = np.asarray(row, dtype=np.float64)
    if callable(f):
        fv = np.array([f(j) for j in range(row.size)], dtype=np.float64)
    else:
        fv = np.asarray(f, dtype=np.float64)
        if fv.shape != row.shape:
            raise ValueError("f must have one value per next demand level")
    return float(row @ fv)


def _matrix_rows(p: np.ndarray):
    for row in p:
        yield [f"{x:.17g}" for x in row]


def tpm_checksum(tpm: Tpm) -> str:
    """Stable digest of the probability matrix (text form, full precision)."""
    h = hashlib.sha256()
    for row in _matrix_rows(tpm.p):
        h.update((",".join(row) + "\n").encode())
    return h.hexdigest()


def _sidecar_path(csv_path: str) -> str:
    base, _ = os.path.splitext(csv_path)
    return base + ".json"


def save_tpm(tpm: Tpm, csv_path: str, grid: StateGrid, dt_sdp: float,
             cycles=()) -> None:
    """Write the TPM as CSV plus a JSON sidecar.

    The CSV has one row per source demand level, first column the level in
    watts, remaining columns the transition probabilities. The sidecar
    records the grids, the decision period, the source cycle names, the
    raw counts, and a checksum that downstream artifacts can pin.
    """
    if tpm.n != grid.n_p:
        raise ValueError("TPM size does not match the demand grid")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p_from_w"] + [f"{x:.17g}" for x in grid.p_grid])
        for i, row in enumerate(_matrix_rows(tpm.p)):
            w.writerow([f"{grid.p_grid[i]:.17g}"] + row)
    meta = {
        "kind": "tpm",
        "grids": grid.to_dict(),
        "dt_sdp": dt_sdp,
        "cycles": list(cycles),
        "counts": tpm.counts.astype(int).tolist(),
        "checksum": tpm_checksum(tpm),
    }
    with open(_sidecar_path(csv_path), "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")


def load_tpm(csv_path: str, grid: StateGrid = None) -> tuple:
    """Load a TPM artifact; returns (Tpm, metadata dict).

    If a grid is supplied, the sidecar's grids must match it within 1e-9;
    a mismatch raises ArtifactMismatch rather than silently reindexing.
    """
    side = _sidecar_path(csv_path)
    if not os.path.exists(csv_path) and not os.path.exists(side):
        raise MissingArtifact(f"TPM artifact not found: {csv_path}")
    if not os.path.exists(csv_path) or not os.path.exists(side):
        missing = csv_path if not os.path.exists(csv_path) else side
        raise ArtifactMismatch(f"TPM artifact incomplete: missing {missing}")
    with open(side) as fh:
        meta = json.load(fh)
    if meta.get("kind") != "tpm":
        raise ArtifactMismatch(f"{side} is not a TPM sidecar")
    rows = []
    with open(csv_path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or header[0] != "p_from_w":
            raise ParseError(f"{csv_path}: expected a TPM header row")
        for line in r:
            rows.append([float(x) for x in line[1:]])
    p = np.asarray(rows, dtype=np.float64)
    counts = np.asarray(meta.get("counts", np.zeros_like(p)), dtype=np.float64)
    tpm = Tpm(p=p, counts=counts)
    saved = StateGrid.from_dict(meta["grids"])
    if meta.get("checksum") and meta["checksum"] != tpm_checksum(tpm):
        raise ArtifactMismatch(f"{csv_path}: checksum does not match sidecar")
    if grid is not None and not saved.matches(grid):
        raise ArtifactMismatch(
            f"{csv_path}: sidecar grids differ from the active configuration")
    return tpm, meta
