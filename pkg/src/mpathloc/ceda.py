"""Snapshot channel estimation and detection.

Search-and-subtract maximum-likelihood decomposition of one received
vector into delayed pulse components, stopping when the generalized
likelihood ratio test for a single component in noise falls below the
detection threshold.  Each detected component yields one (distance,
normalized amplitude) measurement.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .signals import DelayDictionary, RrcPulse, SignalConfig, Snapshot

__all__ = [
    "Measurement",
    "CedaConfig",
    "CedaResult",
    "u_ml",
    "estimate_snapshot",
    "write_snapshots_bin",
    "read_snapshots_bin",
    "write_measurements_csv",
    "read_measurements_csv",
]


@dataclass(frozen=True)
class Measurement:
    """One extracted component: distance in meters, normalized amplitude."""

    distance: float
    amplitude: float


@dataclass(frozen=True)
class CedaConfig:
    gamma: float = 1.7783  # detection threshold, linear amplitude (5 dB)
    grid_divisor: int = 3  # search grid step = ts / grid_divisor
    max_components: int = 50
    refine_iters: int = 30
    min_separation_ts: float = 0.125  # drop components closer than ts/8

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("detection threshold must be positive")


@dataclass
class CedaResult:
    measurements: list            # of Measurement, extraction order
    taus: np.ndarray              # delays, extraction order (seconds)
    alphas: np.ndarray            # joint-LS complex amplitudes
    sigma_hat: float              # noise level from the final residual
    residual: np.ndarray
    truncated: bool = False       # max-components safeguard hit


def u_ml(r, pulse: RrcPulse, cfg: SignalConfig, tau: float, sigma: float):
    """ML normalized amplitude |r^H s(tau)| / (sigma ||s(tau)||)."""
    if sigma <= 0:
        raise ValueError("noise level must be positive")
    from .signals import s_vec

    s = s_vec(pulse, cfg, tau)
    return float(np.abs(np.vdot(s, r)) / (sigma * np.linalg.norm(s)))


def _grid_peak(r_res, dct: DelayDictionary):
    """Argmax of |r^H s(tau)| / ||s(tau)|| over the dictionary grid."""
    corr = np.abs(dct.atoms.T @ np.conj(r_res)) / dct.norms
    k = int(np.argmax(corr))
    return k, float(corr[k])


def _refine_peak(r_res, pulse, cfg, dct, k, iters):
    """Derivative-free refinement within +-one grid step of the argmax."""
    lo = max(dct.taus[k] - dct.step, 0.0)
    hi = min(dct.taus[k] + dct.step, cfg.d_max / cfg.c)
    t_grid = cfg.sample_times

    def neg_obj(tau):
        s = pulse(t_grid - tau)
        return -abs(np.dot(s, np.conj(r_res))) / np.linalg.norm(s)

    res = minimize_scalar(
        neg_obj, bounds=(lo, hi), method="bounded",
        options={"maxiter": iters, "xatol": dct.step * 1e-4},
    )
    return float(res.x), float(-res.fun)


def estimate_snapshot(
    snapshot: Snapshot,
    pulse: RrcPulse,
    cfg: SignalConfig,
    ceda_cfg: CedaConfig = CedaConfig(),
    dictionary: Optional[DelayDictionary] = None,
) -> CedaResult:
    """Decompose one snapshot into components by search-and-subtract ML.

    Per iteration: the residual's strongest delay is found on a ts/3 grid
    and refined by a bounded local search; the component set's amplitudes
    are re-solved jointly in closed form on the original vector; the noise
    level is re-estimated from the residual as ||r_res||^2/(N_s - 1).  The
    loop stops once the residual's peak normalized amplitude drops below
    the detection threshold.  Measurements keep extraction order; any
    component whose final joint-LS amplitude falls below the threshold is
    excluded from the measurement list (the decomposition keeps it).
    """
    if dictionary is None:
        dictionary = DelayDictionary(pulse, cfg, step_divisor=ceda_cfg.grid_divisor)
    r = snapshot.r
    n_s = cfg.n_samples
    taus: list = []
    r_res = r.copy()
    truncated = False
    sigma_hat = float(np.linalg.norm(r_res) / np.sqrt(n_s - 1))
    min_sep = ceda_cfg.min_separation_ts * cfg.ts

    while True:
        sigma_hat = float(np.linalg.norm(r_res) / np.sqrt(n_s - 1))
        k, peak = _grid_peak(r_res, dictionary)
        tau_new, peak = _refine_peak(
            r_res, pulse, cfg, dictionary, k, ceda_cfg.refine_iters
        )
        if peak / sigma_hat < ceda_cfg.gamma:
            break
        if taus and np.min(np.abs(np.array(taus) - tau_new)) < min_sep:
            # near-singular Gram: drop the newer component and stop
            break
        taus.append(tau_new)
        s_mat = pulse(cfg.sample_times[:, None] - np.array(taus)[None, :]).astype(complex)
        alphas, *_ = np.linalg.lstsq(s_mat, r, rcond=None)
        r_res = r - s_mat @ alphas
        if len(taus) >= ceda_cfg.max_components:
            truncated = True
            break

    if not taus:
        return CedaResult(
            measurements=[],
            taus=np.empty(0),
            alphas=np.empty(0, dtype=complex),
            sigma_hat=sigma_hat,
            residual=r_res,
            truncated=False,
        )

    taus_arr = np.asarray(taus)
    s_mat = pulse(cfg.sample_times[:, None] - taus_arr[None, :]).astype(complex)
    sigma_hat = float(np.linalg.norm(r_res) / np.sqrt(n_s - 1))
    norms = np.linalg.norm(s_mat, axis=0)
    amps = np.abs(alphas) * norms / sigma_hat
    measurements = [
        Measurement(distance=float(t * cfg.c), amplitude=float(a))
        for t, a in zip(taus_arr, amps)
        if a >= ceda_cfg.gamma
    ]
    return CedaResult(
        measurements=measurements,
        taus=taus_arr,
        alphas=np.asarray(alphas),
        sigma_hat=sigma_hat,
        residual=r_res,
        truncated=truncated,
    )


# ----------------------------------------------------------------- file IO
#
# Snapshot batch file, little-endian:
#   uint32 N_s, uint32 count, then count*N_s complex samples stored as
#   interleaved (re, im) float64 pairs.

_HEADER = struct.Struct("<II")


def write_snapshots_bin(path, snapshots) -> None:
    snaps = list(snapshots)
    if not snaps:
        raise ValueError("nothing to write")
    n_s = snaps[0].r.size
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(n_s, len(snaps)))
        for snap in snaps:
            if snap.r.size != n_s:
                raise ValueError("inconsistent snapshot lengths")
            inter = np.empty(2 * n_s)
            inter[0::2] = np.real(snap.r)
            inter[1::2] = np.imag(snap.r)
            fh.write(inter.astype("<f8").tobytes())


def read_snapshots_bin(path) -> np.ndarray:
    """Returns a (count, N_s) complex array."""
    with open(path, "rb") as fh:
        n_s, count = _HEADER.unpack(fh.read(_HEADER.size))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != 2 * n_s * count:
        raise ValueError("snapshot file size does not match its header")
    raw = raw.reshape(count, 2 * n_s)
    return raw[:, 0::2] + 1j * raw[:, 1::2]


def write_measurements_csv(path, rows) -> None:
    """Rows of (n, j, Measurement) to CSV with header n,j,z_d_m,z_u."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "j", "z_d_m", "z_u"])
        for n, j, meas in rows:
            writer.writerow([n, j, repr(meas.distance), repr(meas.amplitude)])


def read_measurements_csv(path):
    """Yields (n, j, Measurement) tuples."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            yield (
                int(row["n"]),
                int(row["j"]),
                Measurement(distance=float(row["z_d_m"]), amplitude=float(row["z_u"])),
            )
