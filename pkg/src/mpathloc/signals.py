"""Radio snapshot synthesis.

Root-raised-cosine transmit pulse, delayed-signal vectors on the sampling
grid, the double-exponential delay power spectrum (DPS) of the dense
multipath process, deterministic and stochastic snapshot generators, and
image-source multipath geometry for floorplan scenarios.

Distance/delay convention: the sampling grid starts at t = 0 so that a
component at delay tau sits at distance d = c * tau inside the observable
window [0, d_max].  The window length N_s * T_s * c must cover d_max.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

__all__ = [
    "SPEED_OF_LIGHT",
    "RrcPulse",
    "make_rrc_pulse",
    "SignalConfig",
    "DpsParams",
    "Snapshot",
    "s_vec",
    "DelayDictionary",
    "dps_profile",
    "dps",
    "normalized_dps",
    "synth_deterministic",
    "noise_covariance",
    "los_amplitude_for_snr",
    "pulse_corr_length",
    "dnr_to_dps_power",
    "synth_stochastic",
    "Wall",
    "PathComponent",
    "MirrorResult",
    "mirror_mpcs",
    "load_floorplan",
    "load_waypoints",
]


@dataclass(eq=False)
class RrcPulse:
    """Root-raised-cosine pulse, unit peak at t = 0.

    ``duration`` is the symbol time T_p (inverse of the two-sided 3 dB
    bandwidth); with rolloff beta the spectrum occupies (1+beta)/T_p, so
    critical sampling uses ts = T_p / (1 + beta).
    """

    rolloff: float
    duration: float
    ts: float

    def __post_init__(self):
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError(f"rolloff must be in [0, 1], got {self.rolloff}")
        if self.duration <= 0 or self.ts <= 0:
            raise ValueError("duration and sample interval must be positive")
        self._beta_bw: Optional[float] = None
        self._samples: Optional[np.ndarray] = None

    def __call__(self, t):
        """Evaluate the pulse at arbitrary times (vectorized, real)."""
        t = np.asarray(t, dtype=float)
        beta = self.rolloff
        T = self.duration
        x = t / T
        if beta == 0.0:
            return np.sinc(x)
        peak = 1.0 + beta * (4.0 / np.pi - 1.0)
        fourbx = 4.0 * beta * x
        denom = np.pi * x * (1.0 - fourbx * fourbx)
        with np.errstate(divide="ignore", invalid="ignore"):
            num = np.sin(np.pi * x * (1.0 - beta)) + fourbx * np.cos(
                np.pi * x * (1.0 + beta)
            )
            out = num / denom
        # removable singularities: t = 0 and t = +-T/(4 beta)
        out = np.where(np.abs(x) < 1e-9, peak, out)
        sing = (beta / np.sqrt(2.0)) * (
            (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * beta))
            + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * beta))
        )
        out = np.where(np.abs(np.abs(fourbx) - 1.0) < 1e-9, sing, out)
        return out / peak

    @property
    def samples(self) -> np.ndarray:
        """Pulse sampled at ts over +-8 durations (for inspection/plots)."""
        if self._samples is None:
            half = int(np.ceil(8.0 * self.duration / self.ts))
            self._samples = self(np.arange(-half, half + 1) * self.ts)
        return self._samples

    @property
    def beta_bw(self) -> float:
        """Root-mean-squared bandwidth from an oversampled FFT spectrum."""
        if self._beta_bw is None:
            dt = self.ts / 16.0
            half = int(np.ceil(64.0 * self.duration / dt))
            t = np.arange(-half, half + 1) * dt
            s = self(t)
            spec = np.abs(np.fft.fft(s)) ** 2
            f = np.fft.fftfreq(t.size, d=dt)
            self._beta_bw = float(np.sqrt(np.sum(f * f * spec) / np.sum(spec)))
        return self._beta_bw


def make_rrc_pulse(rolloff: float, duration: float, ts: float) -> RrcPulse:
    return RrcPulse(rolloff=rolloff, duration=duration, ts=ts)


@dataclass(frozen=True)
class SignalConfig:
    """Sampling window: n_samples at interval ts, observable up to d_max."""

    n_samples: int = 161
    ts: float = 1.25e-9
    d_max: float = 60.0
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("need at least two samples")
        if self.d_max <= 0 or self.d_max > self.window_span + 1e-9:
            raise ValueError(
                f"d_max={self.d_max} outside the sampled window "
                f"(span {self.window_span:.2f} m)"
            )

    @property
    def window_span(self) -> float:
        return self.n_samples * self.ts * self.c

    @property
    def sample_times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.ts


@dataclass(frozen=True)
class DpsParams:
    """Dense-multipath delay power spectrum: double exponential.

    power is the total DPS power (linear); onset sits at the LOS distance
    plus bias, rises over gamma_r and falls over gamma_f (all meters).
    """

    power: float
    gamma_r: float
    gamma_f: float
    bias: float

    def __post_init__(self):
        if min(self.power, self.gamma_r, self.gamma_f, self.bias) <= 0:
            raise ValueError("all DPS parameters must be strictly positive")


@dataclass
class Snapshot:
    """One received baseband vector and its AWGN level."""

    r: np.ndarray
    sigma: float

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=complex)
        if self.r.ndim != 1:
            raise ValueError("snapshot must be a flat complex vector")
        if self.sigma <= 0:
            raise ValueError("noise level must be positive")


def s_vec(pulse: RrcPulse, cfg: SignalConfig, tau: float) -> np.ndarray:
    """Stacked samples of the pulse delayed by tau on the sampling grid."""
    d = tau * cfg.c
    if d < -1e-9 or d > cfg.d_max + 1e-9:
        raise ValueError(f"delay {tau:.3e} s ({d:.2f} m) outside [0, {cfg.d_max}] m")
    return pulse(cfg.sample_times - tau).astype(complex)


class DelayDictionary:
    """Precomputed delayed-pulse responses on a uniform delay grid.

    Shared by the channel estimator (correlation search) and the stochastic
    synthesizer (dense-process realization); build once per (pulse, cfg).
    """

    def __init__(self, pulse: RrcPulse, cfg: SignalConfig, step_divisor: int = 3):
        self.pulse = pulse
        self.cfg = cfg
        self.step = cfg.ts / step_divisor
        n_grid = int(np.floor(cfg.d_max / cfg.c / self.step)) + 1
        self.taus = np.arange(n_grid) * self.step
        self.distances = self.taus * cfg.c
        # (N_s, G) real matrix of pulse samples
        t = cfg.sample_times
        self.atoms = pulse(t[:, None] - self.taus[None, :])
        self.norms = np.linalg.norm(self.atoms, axis=0)

    def response(self, tau: float) -> np.ndarray:
        return self.pulse(self.cfg.sample_times - tau)


def dps_profile(delta, gamma_r, gamma_f):
    """Normalized DPS shape vs distance past the onset (integrates to 1).

    (gamma_f + gamma_r)/gamma_f^2 * (1 - exp(-delta/gamma_r)) * exp(-delta/gamma_f)
    for delta > 0, zero otherwise.  Broadcasts over all arguments.
    """
    delta, gamma_r, gamma_f = np.broadcast_arrays(
        np.asarray(delta, dtype=float), gamma_r, gamma_f
    )
    out = np.zeros(delta.shape)
    pos = delta > 0
    if np.any(pos):
        d = delta[pos]
        gr = np.broadcast_to(gamma_r, delta.shape)[pos]
        gf = np.broadcast_to(gamma_f, delta.shape)[pos]
        out[pos] = (
            (gf + gr) / (gf * gf) * -np.expm1(-d / gr) * np.exp(-d / gf)
        )
    return out


def normalized_dps(d, p_agent, p_anchor, shape) -> np.ndarray:
    """Unit-power DPS evaluated at distance d for the given geometry.

    ``shape`` is (bias, gamma_f, gamma_r); onset at d_LOS + bias.
    """
    bias, gamma_f, gamma_r = shape
    d_los = np.linalg.norm(np.asarray(p_agent) - np.asarray(p_anchor))
    return dps_profile(np.asarray(d, dtype=float) - d_los - bias, gamma_r, gamma_f)


def dps(d, p_agent, p_anchor, params: DpsParams) -> np.ndarray:
    """DPS power density per meter at distance d (integrates to power)."""
    return params.power * normalized_dps(
        d, p_agent, p_anchor, (params.bias, params.gamma_f, params.gamma_r)
    )


def synth_deterministic(
    pulse: RrcPulse,
    cfg: SignalConfig,
    components: Sequence[tuple],
    sigma: float,
    rng: np.random.Generator,
) -> Snapshot:
    """Sum of delayed pulses with complex amplitudes plus circular AWGN."""
    r = np.zeros(cfg.n_samples, dtype=complex)
    for tau, alpha in components:
        r += alpha * s_vec(pulse, cfg, tau)
    if sigma > 0:
        noise = rng.normal(0.0, sigma / np.sqrt(2.0), (cfg.n_samples, 2))
        r += noise[:, 0] + 1j * noise[:, 1]
    return Snapshot(r=r, sigma=max(sigma, 1e-300))


def pulse_corr_length(pulse: RrcPulse, c: float = SPEED_OF_LIGHT) -> float:
    """Integral of the squared normalized pulse autocorrelation, in meters.

    This is the effective width a delayed pulse projects onto the matched
    filter; it converts between the DPS power density and the amplitude
    statistics seen by a correlator.
    """
    dt = pulse.ts / 16.0
    half = int(np.ceil(32.0 * pulse.duration / dt))
    t = np.arange(-half, half + 1) * dt
    s = pulse(t)
    corr = np.correlate(s, s, mode="full") * dt
    corr /= corr[corr.size // 2]
    return float(np.sum(corr * corr) * dt * c)


def dnr_to_dps_power(dnr: float, pulse: RrcPulse, cfg: SignalConfig, sigma: float) -> float:
    """DPS power producing the requested dense-to-noise amplitude ratio.

    Calibrated so that the matched-filter output of the realized dense
    process follows the inference model's scale function at this DNR:
    power = dnr^2 sigma^2 / (||s||^2 * corr_length).
    """
    mid = 0.5 * cfg.d_max / cfg.c
    norm_sq = float(np.real(np.vdot(s_vec(pulse, cfg, mid), s_vec(pulse, cfg, mid))))
    return dnr**2 * sigma**2 / (norm_sq * pulse_corr_length(pulse, cfg.c))


def _dense_grid(pulse: RrcPulse, cfg: SignalConfig, dps_params, p_agent, p_anchor):
    """Per-component variances of the dense process on a T_s/4 delay grid."""
    dct = DelayDictionary(pulse, cfg, step_divisor=4)
    shape = (dps_params.bias, dps_params.gamma_f, dps_params.gamma_r)
    dens = dps_params.power * normalized_dps(dct.distances, p_agent, p_anchor, shape)
    var = dens * dct.step * cfg.c  # integration over distance in meters
    return dct, var


def noise_covariance(
    pulse: RrcPulse,
    cfg: SignalConfig,
    dps_params: DpsParams,
    p_agent,
    p_anchor,
    sigma: float,
) -> np.ndarray:
    """Snapshot covariance: dense-process term plus white noise."""
    dct, var = _dense_grid(pulse, cfg, dps_params, p_agent, p_anchor)
    a = dct.atoms * np.sqrt(var)[None, :]
    return (a @ a.T).astype(complex) + (sigma**2) * np.eye(cfg.n_samples)


def los_amplitude_for_snr(
    u: float,
    tau_los: float,
    pulse: RrcPulse,
    cfg: SignalConfig,
    dps_params: Optional[DpsParams],
    p_agent,
    p_anchor,
    sigma: float,
) -> float:
    """|alpha| such that the LOS normalized amplitude equals u.

    u^2 = |alpha|^2 s(tau)^H C_N^{-1} s(tau); without a dense component the
    covariance collapses to sigma^2 I.
    """
    s = s_vec(pulse, cfg, tau_los)
    if dps_params is None:
        quad_form = float(np.real(s.conj() @ s)) / sigma**2
    else:
        cn = noise_covariance(pulse, cfg, dps_params, p_agent, p_anchor, sigma)
        quad_form = float(np.real(s.conj() @ np.linalg.solve(cn, s)))
    return u / np.sqrt(quad_form)


def synth_stochastic(
    pulse: RrcPulse,
    cfg: SignalConfig,
    los: Optional[tuple],
    dps_params: DpsParams,
    p_agent,
    p_anchor,
    sigma: float,
    rng: np.random.Generator,
    dictionary: Optional[DelayDictionary] = None,
) -> Snapshot:
    """LOS component plus dense multipath realization plus AWGN.

    The dense process is realized on a T_s/4 delay grid with independent
    circular complex Gaussian coefficients of variance S_D(tau) dtau; the
    empirical snapshot covariance converges to :func:`noise_covariance`.
    ``los`` is an optional (tau, complex amplitude) pair.
    """
    if dictionary is None or dictionary.step != cfg.ts / 4:
        dictionary, var = _dense_grid(pulse, cfg, dps_params, p_agent, p_anchor)
    else:
        shape = (dps_params.bias, dps_params.gamma_f, dps_params.gamma_r)
        dens = dps_params.power * normalized_dps(
            dictionary.distances, p_agent, p_anchor, shape
        )
        var = dens * dictionary.step * cfg.c
    g = rng.normal(0.0, 1.0, (var.size, 2)) * np.sqrt(var / 2.0)[:, None]
    coeff = g[:, 0] + 1j * g[:, 1]
    r = (dictionary.atoms @ coeff).astype(complex)
    if los is not None:
        tau0, alpha0 = los
        r += alpha0 * s_vec(pulse, cfg, tau0)
    noise = rng.normal(0.0, sigma / np.sqrt(2.0), (cfg.n_samples, 2))
    r += noise[:, 0] + 1j * noise[:, 1]
    return Snapshot(r=r, sigma=sigma)


# --------------------------------------------------------------- geometry

Wall = tuple  # ((x1, y1), (x2, y2))


@dataclass(frozen=True)
class PathComponent:
    distance: float
    u: float          # normalized amplitude sqrt(SNR), linear
    order: int
    points: tuple = ()  # agent, reflection points, anchor (diagnostics)


@dataclass
class MirrorResult:
    los_visible: bool
    paths: list  # PathComponent, LOS included as order 0 when visible


def _seg_intersect(p1, p2, q1, q2, eps=1e-9) -> bool:
    """True if open segments (p1,p2) and (q1,q2) properly intersect."""
    p1 = np.asarray(p1, float)
    p2 = np.asarray(p2, float)
    q1 = np.asarray(q1, float)
    q2 = np.asarray(q2, float)
    r = p2 - p1
    s = q2 - q1
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < 1e-15:
        return False
    qp = q1 - p1
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    w = (qp[0] * r[1] - qp[1] * r[0]) / denom
    return eps < t < 1.0 - eps and eps < w < 1.0 - eps


def _mirror(p, wall):
    """Reflect point p across the infinite line carrying the wall."""
    a = np.asarray(wall[0], float)
    b = np.asarray(wall[1], float)
    d = b - a
    d = d / np.linalg.norm(d)
    v = np.asarray(p, float) - a
    along = (v @ d) * d
    return a + 2.0 * along - v


def _segment_clear(p1, p2, walls, skip=()) -> bool:
    """No wall (except indices in skip) blocks the open segment p1->p2."""
    for idx, w in enumerate(walls):
        if idx in skip:
            continue
        if _seg_intersect(p1, p2, w[0], w[1]):
            return False
    return True


def _path_snr_u(distance, order, snr_ref_db, ref_dist, refl_loss_db):
    snr_db = snr_ref_db - 20.0 * np.log10(max(distance, 1e-6) / ref_dist)
    snr_db -= refl_loss_db * order
    return 10.0 ** (snr_db / 20.0)


def mirror_mpcs(
    walls: Sequence[Wall],
    p_agent,
    p_anchor,
    max_order: int,
    snr_ref_db: float = 20.0,
    ref_dist: float = 1.0,
    refl_loss_db: float = 3.0,
    max_distance: Optional[float] = None,
) -> MirrorResult:
    """Image-source multipath paths up to the given reflection order.

    Amplitudes follow free-space path loss anchored at ``snr_ref_db`` at
    ``ref_dist`` with ``refl_loss_db`` extra attenuation per bounce.
    Visibility of every reflection leg is checked against all walls.
    """
    if max_order > 3:
        raise ValueError("image-source enumeration supported up to order 3")
    p_agent = np.asarray(p_agent, float)
    p_anchor = np.asarray(p_anchor, float)
    d_los = float(np.linalg.norm(p_agent - p_anchor))
    if d_los < 1e-9:
        raise ValueError("agent and anchor coincide")
    for w in walls:
        a = np.asarray(w[0], float)
        b = np.asarray(w[1], float)
        t = np.clip(
            ((p_agent - a) @ (b - a)) / max((b - a) @ (b - a), 1e-15), 0.0, 1.0
        )
        if np.linalg.norm(p_agent - (a + t * (b - a))) < 1e-9:
            raise ValueError("agent lies on a wall segment")

    los_visible = _segment_clear(p_agent, p_anchor, walls)
    paths = []
    if los_visible:
        paths.append(
            PathComponent(
                distance=d_los,
                u=_path_snr_u(d_los, 0, snr_ref_db, ref_dist, refl_loss_db),
                order=0,
                points=(tuple(p_agent), tuple(p_anchor)),
            )
        )
    if max_order == 0:
        return MirrorResult(los_visible=los_visible, paths=paths)

    n_walls = len(walls)
    seen_images = set()
    for order in range(1, max_order + 1):
        for seq in itertools.product(range(n_walls), repeat=order):
            if any(seq[i] == seq[i + 1] for i in range(order - 1)):
                continue
            # images[m] = anchor mirrored through walls seq[0..m]
            img = p_anchor
            images = []
            for widx in seq:
                img = _mirror(img, walls[widx])
                images.append(img)
            dist = float(np.linalg.norm(p_agent - img))
            if max_distance is not None and dist > max_distance:
                continue
            # permuted wall sequences can produce the same physical path
            key = (order, round(img[0], 9), round(img[1], 9))
            if key in seen_images:
                continue
            # walk back from the agent: each leg aims at the image of the
            # remaining chain and must cross its reflecting wall segment
            pts = [p_agent]
            ok = True
            for k in range(order - 1, -1, -1):
                wall = walls[seq[k]]
                prev = pts[-1]
                target = images[k]
                a = np.asarray(wall[0], float)
                b = np.asarray(wall[1], float)
                r = target - prev
                s = b - a
                denom = r[0] * s[1] - r[1] * s[0]
                if abs(denom) < 1e-15:
                    ok = False
                    break
                qp = a - prev
                t = (qp[0] * s[1] - qp[1] * s[0]) / denom
                w_par = (qp[0] * r[1] - qp[1] * r[0]) / denom
                if not (1e-9 < w_par < 1.0 - 1e-9) or not (1e-9 < t < 1.0 - 1e-9):
                    ok = False
                    break
                pts.append(prev + t * r)
            if not ok:
                continue
            pts.append(p_anchor)
            # occlusion: every leg must be clear of all other walls, and may
            # touch its own reflecting walls only at the reflection points
            clear = True
            leg_walls = [None] + list(reversed(seq)) + [None]
            for i in range(len(pts) - 1):
                skip = set()
                if leg_walls[i] is not None:
                    skip.add(leg_walls[i])
                if leg_walls[i + 1] is not None:
                    skip.add(leg_walls[i + 1])
                if not _segment_clear(pts[i], pts[i + 1], walls, skip=skip):
                    clear = False
                    break
            if not clear:
                continue
            seen_images.add(key)
            paths.append(
                PathComponent(
                    distance=dist,
                    u=_path_snr_u(dist, order, snr_ref_db, ref_dist, refl_loss_db),
                    order=order,
                    points=tuple(tuple(p) for p in pts),
                )
            )
    return MirrorResult(los_visible=los_visible, paths=paths)


def load_floorplan(path) -> list:
    """Walls from a JSON document: {"walls": [[x1, y1, x2, y2], ...]}."""
    with open(path) as fh:
        doc = json.load(fh)
    return [((w[0], w[1]), (w[2], w[3])) for w in doc["walls"]]


def load_waypoints(path) -> np.ndarray:
    """Waypoints from a JSON document: {"waypoints": [[x, y], ...]} (meters)."""
    with open(path) as fh:
        doc = json.load(fh)
    return np.asarray(doc["waypoints"], dtype=float)
