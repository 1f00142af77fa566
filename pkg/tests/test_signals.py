"""Tests for pulse shaping, snapshot synthesis and image-source geometry."""

import numpy as np
import pytest
from scipy.integrate import quad

from mpathloc.signals import (
    DelayDictionary,
    DpsParams,
    SignalConfig,
    dnr_to_dps_power,
    dps,
    dps_profile,
    los_amplitude_for_snr,
    make_rrc_pulse,
    mirror_mpcs,
    noise_covariance,
    normalized_dps,
    s_vec,
    synth_deterministic,
    synth_stochastic,
)

PULSE = make_rrc_pulse(rolloff=0.6, duration=2e-9, ts=1.25e-9)
CFG = SignalConfig()


# ---------------------------------------------------------------- oracles

def rc_spectrum(f, beta, T):
    """Raised-cosine power spectrum (= |RRC|^2), unnormalized."""
    f = np.abs(f)
    f1 = (1 - beta) / (2 * T)
    f2 = (1 + beta) / (2 * T)
    out = np.zeros_like(f)
    out[f <= f1] = 1.0
    mid = (f > f1) & (f <= f2)
    out[mid] = 0.5 * (1 + np.cos(np.pi * T / beta * (f[mid] - f1)))
    return out


def beta_bw_analytic_oracle(beta, T):
    """RMS bandwidth from dense quadrature of the analytic RC spectrum."""
    f2 = (1 + beta) / (2 * T)
    num, _ = quad(lambda f: f * f * rc_spectrum(np.array([f]), beta, T)[0], 0, f2, limit=400)
    den, _ = quad(lambda f: rc_spectrum(np.array([f]), beta, T)[0], 0, f2, limit=400)
    return np.sqrt(num / den)


def continuous_autocorr_oracle(pulse, lag):
    """<s(t), s(t - lag)> / ||s||^2 by dense oversampled summation."""
    dt = pulse.ts / 64.0
    half = int(np.ceil(32.0 * pulse.duration / dt))
    t = np.arange(-half, half + 1) * dt
    a = pulse(t)
    b = pulse(t - lag)
    return np.sum(a * b) / np.sum(a * a)


# -------------------------------------------------------------------- pulse

def test_rolloff_zero_is_sinc():
    p = make_rrc_pulse(rolloff=0.0, duration=2e-9, ts=1.25e-9)
    assert p(0.0) == pytest.approx(1.0)
    for k in [1, 2, 3, -2]:
        assert p(k * 2e-9) == pytest.approx(0.0, abs=1e-12)


def test_rrc_singularities_finite():
    beta, T = 0.6, 2e-9
    p = make_rrc_pulse(beta, T, 1.25e-9)
    ts = np.array([0.0, T / (4 * beta), -T / (4 * beta)])
    v = p(ts)
    assert np.all(np.isfinite(v))
    # limits are continuous: values just off the singular points agree
    eps = 1e-16
    assert p(T / (4 * beta) + 1e-15) == pytest.approx(v[1], rel=1e-5)
    assert p(eps) == pytest.approx(v[0], rel=1e-6)


def test_rrc_symmetric_unit_peak():
    t = np.linspace(-6e-9, 6e-9, 101)
    v = PULSE(t)
    assert np.allclose(v, v[::-1])
    assert PULSE(0.0) == pytest.approx(1.0)
    assert np.max(np.abs(PULSE.samples)) == pytest.approx(1.0)


def test_beta_bw_matches_analytic_spectrum():
    # beta_bw_analytic_oracle(0.6, 2e-9) = 158.41 MHz
    ref = beta_bw_analytic_oracle(0.6, 2e-9)
    assert PULSE.beta_bw == pytest.approx(ref, rel=0.005)
    assert ref == pytest.approx(1.5841e8, rel=1e-3)


# -------------------------------------------------------------------- s_vec

def test_s_vec_window_errors():
    with pytest.raises(ValueError):
        s_vec(PULSE, CFG, -1e-8)
    with pytest.raises(ValueError):
        s_vec(PULSE, CFG, (CFG.d_max + 1.0) / CFG.c)


def test_s_vec_integer_shift_alignment():
    v0 = s_vec(PULSE, CFG, 10 * CFG.ts)
    v5 = s_vec(PULSE, CFG, 15 * CFG.ts)
    assert np.allclose(v5[5:], v0[:-5], atol=1e-12)


def test_s_vec_autocorrelation_matches_continuous():
    tau = 30 * CFG.ts
    base = s_vec(PULSE, CFG, tau)
    for lag_samples in [0.25, 0.5, 1.0, 2.5, 4.0]:
        lag = lag_samples * CFG.ts
        shifted = s_vec(PULSE, CFG, tau + lag)
        got = np.real(np.vdot(base, shifted)) / np.real(np.vdot(base, base))
        ref = continuous_autocorr_oracle(PULSE, lag)
        assert got == pytest.approx(ref, abs=1e-6), lag_samples


def test_s_vec_energy_invariance():
    taus = np.linspace(10, 150, 29) * CFG.ts
    norms = [np.linalg.norm(s_vec(PULSE, CFG, t)) for t in taus]
    assert (max(norms) - min(norms)) / max(norms) < 1e-3


# ---------------------------------------------------------------------- DPS

def test_dps_zero_at_onset():
    params = DpsParams(power=2.0, gamma_r=0.7, gamma_f=6.0, bias=0.7)
    p_agent, p_anchor = np.array([0.0, 0.0]), np.array([5.0, 0.0])
    onset = 5.0 + params.bias
    # the profile is continuous and zero at the onset (up to fp dust)
    assert dps(onset, p_agent, p_anchor, params) == pytest.approx(0.0, abs=1e-12)
    assert dps(onset - 0.3, p_agent, p_anchor, params) == 0.0
    assert dps(onset + 0.3, p_agent, p_anchor, params) > 0.0


def test_dps_integral_equals_power():
    rng = np.random.default_rng(8)
    p_agent, p_anchor = np.array([0.0, 0.0]), np.array([4.0, 3.0])
    for _ in range(100):
        params = DpsParams(
            power=rng.uniform(0.1, 50.0),
            gamma_r=rng.uniform(0.05, 3.0),
            gamma_f=rng.uniform(0.5, 15.0),
            bias=rng.uniform(0.05, 5.0),
        )
        onset = 5.0 + params.bias
        val, _ = quad(
            lambda d: dps(d, p_agent, p_anchor, params),
            onset,
            onset + 60 * params.gamma_f,
            limit=300,
        )
        assert val == pytest.approx(params.power, rel=1e-6)


def test_dps_rise_limit_single_exponential():
    gamma_f = 6.0
    delta = np.linspace(0.1, 30, 200)
    tiny = dps_profile(delta, 1e-9, gamma_f)
    single = np.exp(-delta / gamma_f) / gamma_f
    assert np.allclose(tiny, single, rtol=1e-6)


def test_normalized_dps_is_dps_over_power():
    rng = np.random.default_rng(9)
    p_agent, p_anchor = np.array([1.0, 1.0]), np.array([6.0, 1.0])
    for _ in range(5):
        params = DpsParams(
            power=rng.uniform(0.5, 20.0), gamma_r=0.5, gamma_f=6.0, bias=0.7
        )
        d = np.linspace(0, 30, 301)
        lhs = normalized_dps(d, p_agent, p_anchor, (params.bias, params.gamma_f, params.gamma_r))
        rhs = dps(d, p_agent, p_anchor, params) / params.power
        assert np.allclose(lhs, rhs, rtol=1e-12)


def test_normalized_dps_peak_location():
    # calculus oracle: the peak sits at delta* = gamma_r ln(1 + gamma_f/gamma_r)
    gamma_r, gamma_f = 0.5, 6.0
    delta = np.linspace(1e-4, 10, 200_001)
    prof = dps_profile(delta, gamma_r, gamma_f)
    d_star_numeric = delta[np.argmax(prof)]
    d_star = gamma_r * np.log(1 + gamma_f / gamma_r)
    assert d_star_numeric == pytest.approx(d_star, abs=1e-3)


def test_fig_parameterization_shape():
    # onset 7 m, gamma_f 6 m, gamma_r 0.5 m: rises after onset, then decays
    p_agent, p_anchor = np.array([0.0, 0.0]), np.array([6.3, 0.0])
    shape = (0.7, 6.0, 0.5)  # bias, gamma_f, gamma_r -> onset at 7 m
    d = np.linspace(0, 30, 601)
    prof = normalized_dps(d, p_agent, p_anchor, shape)
    assert np.all(prof[d <= 7.0] < 1e-12)
    peak_idx = np.argmax(prof)
    assert 7.0 < d[peak_idx] < 9.5
    assert np.all(np.diff(prof[peak_idx:]) <= 1e-12)


# ---------------------------------------------------------------- synthesis

def test_noise_only_energy():
    rng = np.random.default_rng(12)
    energies = []
    for _ in range(100):
        snap = synth_deterministic(PULSE, CFG, [], sigma=1.0, rng=rng)
        energies.append(np.sum(np.abs(snap.r) ** 2) / CFG.n_samples)
    assert np.mean(energies) == pytest.approx(1.0, rel=0.05)


def test_single_component_noiseless():
    tau = 40 * CFG.ts
    alpha = 0.7 - 0.2j
    snap = synth_deterministic(PULSE, CFG, [(tau, alpha)], sigma=0.0, rng=np.random.default_rng(0))
    assert np.allclose(snap.r, alpha * s_vec(PULSE, CFG, tau))


def test_two_separated_components_peak_at_delays():
    rng = np.random.default_rng(13)
    t1, t2 = 30 * CFG.ts, 30 * CFG.ts + 4 * PULSE.duration
    snap = synth_deterministic(PULSE, CFG, [(t1, 1.0), (t2, 0.8)], sigma=0.01, rng=rng)
    dct = DelayDictionary(PULSE, CFG, step_divisor=3)
    mf = np.abs(snap.r.conj() @ dct.atoms) / dct.norms
    k1 = np.argmax(mf)
    # mask out the first peak's neighborhood, find the second
    mask = np.abs(dct.taus - dct.taus[k1]) > 2 * PULSE.duration
    k2 = np.flatnonzero(mask)[np.argmax(mf[mask])]
    found = sorted([dct.taus[k1], dct.taus[k2]])
    assert abs(found[0] - t1) <= CFG.ts
    assert abs(found[1] - t2) <= CFG.ts


def test_stochastic_reduces_to_deterministic_without_dense_power():
    # power -> 0 leaves only the LOS term and noise, statistically
    rng = np.random.default_rng(14)
    params = DpsParams(power=1e-18, gamma_r=0.7, gamma_f=6.0, bias=0.7)
    tau = 20 * CFG.ts
    snap = synth_stochastic(
        PULSE, CFG, (tau, 2.0), params, [0, 0], [5, 0], sigma=1e-9, rng=rng
    )
    assert np.allclose(snap.r, 2.0 * s_vec(PULSE, CFG, tau), atol=1e-6)


def test_stochastic_covariance_monte_carlo():
    # full-matrix Frobenius comparison has a sampling floor of
    # sqrt(N_s/n) ~= 28% at 2000 draws, so convergence is checked through
    # matched-filter quadratic forms s(d)^H C s(d), which carry all the
    # statistics the estimator ever sees
    rng = np.random.default_rng(15)
    params = DpsParams(power=0.5, gamma_r=0.7, gamma_f=6.0, bias=0.7)
    p_agent, p_anchor = np.array([0.0, 0.0]), np.array([5.0, 0.0])
    n_draws = 2000
    draws = np.empty((n_draws, CFG.n_samples), dtype=complex)
    dct = DelayDictionary(PULSE, CFG, step_divisor=4)
    for i in range(n_draws):
        draws[i] = synth_stochastic(
            PULSE, CFG, None, params, p_agent, p_anchor, 1.0, rng, dictionary=dct
        ).r
    ref = noise_covariance(PULSE, CFG, params, p_agent, p_anchor, 1.0)
    probes_d = np.linspace(2.0, 40.0, 25)
    rel_errs = []
    for d in probes_d:
        s = s_vec(PULSE, CFG, d / CFG.c)
        emp = np.mean(np.abs(draws @ s.conj()) ** 2)
        theo = np.real(s.conj() @ ref @ s)
        rel_errs.append(abs(emp - theo) / theo)
    assert np.mean(rel_errs) < 0.05
    assert np.max(rel_errs) < 0.12


def test_dense_process_matches_scale_function():
    # the calibrated dense process must reproduce the inference model's
    # amplitude scale s_u^2 = (dnr^2 * S_norm(d) + 1)/2 at the matched filter
    from mpathloc.signals import dnr_to_dps_power

    rng = np.random.default_rng(99)
    dnr = 10.0
    power = dnr_to_dps_power(dnr, PULSE, CFG, sigma=1.0)
    params = DpsParams(power=power, gamma_r=0.7, gamma_f=6.0, bias=0.7)
    p_agent, p_anchor = np.array([0.0, 0.0]), np.array([5.0, 0.0])
    n_draws = 3000
    dct = DelayDictionary(PULSE, CFG, step_divisor=4)
    draws = np.empty((n_draws, CFG.n_samples), dtype=complex)
    for i in range(n_draws):
        draws[i] = synth_stochastic(
            PULSE, CFG, None, params, p_agent, p_anchor, 1.0, rng, dictionary=dct
        ).r
    for d in [9.0, 12.0, 16.0]:  # well past the onset at 5.7 m
        s = s_vec(PULSE, CFG, d / CFG.c)
        norm_sq = np.real(np.vdot(s, s))
        emp_scale_sq = 0.5 * np.mean(np.abs(draws @ s.conj()) ** 2) / norm_sq
        shape = (params.bias, params.gamma_f, params.gamma_r)
        model = 0.5 * (dnr**2 * normalized_dps(d, p_agent, p_anchor, shape) + 1.0)
        assert emp_scale_sq == pytest.approx(model, rel=0.1), d


def test_snr_calibration():
    params = DpsParams(power=0.5, gamma_r=0.7, gamma_f=6.0, bias=0.7)
    p_agent, p_anchor = np.array([0.0, 0.0]), np.array([5.0, 0.0])
    tau = 5.0 / CFG.c
    u_req = 10.0
    alpha = los_amplitude_for_snr(u_req, tau, PULSE, CFG, params, p_agent, p_anchor, 1.0)
    cn = noise_covariance(PULSE, CFG, params, p_agent, p_anchor, 1.0)
    s = s_vec(PULSE, CFG, tau)
    u_sq = abs(alpha) ** 2 * np.real(s.conj() @ np.linalg.solve(cn, s))
    assert np.sqrt(u_sq) == pytest.approx(u_req, rel=0.02)
    # dense power raises the effective noise floor, so alpha must exceed
    # the AWGN-only calibration
    alpha_awgn = los_amplitude_for_snr(u_req, tau, PULSE, CFG, None, p_agent, p_anchor, 1.0)
    assert alpha > alpha_awgn


def test_dnr_power_scales_quadratically():
    p1 = dnr_to_dps_power(5.0, PULSE, CFG, sigma=1.0)
    p2 = dnr_to_dps_power(10.0, PULSE, CFG, sigma=1.0)
    assert p2 / p1 == pytest.approx(4.0, rel=1e-12)
    # doubling the noise level at fixed DNR quadruples the dense power
    p3 = dnr_to_dps_power(5.0, PULSE, CFG, sigma=2.0)
    assert p3 / p1 == pytest.approx(4.0, rel=1e-12)


# ----------------------------------------------------------- image sources

def reflection_oracle_validate(path, walls, agent, anchor):
    """Independent validity check of one returned propagation path."""
    pts = [np.asarray(p, float) for p in path.points]
    assert np.allclose(pts[0], agent) and np.allclose(pts[-1], anchor)
    # total length equals the reported distance
    length = sum(np.linalg.norm(b - a) for a, b in zip(pts[:-1], pts[1:]))
    assert length == pytest.approx(path.distance, rel=1e-9)
    # each interior point lies on a wall and obeys the reflection law
    for k in range(1, len(pts) - 1):
        p = pts[k]
        on = None
        for w in walls:
            a, b = np.asarray(w[0], float), np.asarray(w[1], float)
            t = np.dot(p - a, b - a) / np.dot(b - a, b - a)
            if -1e-9 < t < 1 + 1e-9 and np.linalg.norm(a + t * (b - a) - p) < 1e-7:
                on = (a, b)
                break
        assert on is not None, f"reflection point {p} not on any wall"
        d = (on[1] - on[0]) / np.linalg.norm(on[1] - on[0])
        n = np.array([-d[1], d[0]])
        vin = (p - pts[k - 1]) / np.linalg.norm(p - pts[k - 1])
        vout = (pts[k + 1] - p) / np.linalg.norm(pts[k + 1] - p)
        # specular: tangential component preserved, normal flipped
        assert np.dot(vin, d) == pytest.approx(np.dot(vout, d), abs=1e-7)
        assert np.dot(vin, n) == pytest.approx(-np.dot(vout, n), abs=1e-7)


def test_single_wall_mirror_symmetry():
    wall = ((-100.0, 0.0), (100.0, 0.0))
    agent, anchor = np.array([0.0, 1.0]), np.array([3.0, 1.0])
    res = mirror_mpcs([wall], agent, anchor, max_order=1)
    assert res.los_visible
    first = [p for p in res.paths if p.order == 1]
    assert len(first) == 1
    mirrored = np.array([3.0, -1.0])
    assert first[0].distance == pytest.approx(np.linalg.norm(agent - mirrored))
    reflection_oracle_validate(first[0], [wall], agent, anchor)


def test_obstacle_blocks_los():
    obstacle = ((1.0, -1.0), (1.0, 1.0))
    res = mirror_mpcs([obstacle], [0.0, 0.0], [3.0, 0.0], max_order=0)
    assert not res.los_visible
    assert res.paths == []


def test_max_order_zero_reports_los_only():
    res = mirror_mpcs([], [0.0, 0.0], [3.0, 0.0], max_order=0)
    assert res.los_visible
    assert len(res.paths) == 1 and res.paths[0].order == 0


def test_rectangle_room_image_counts_and_validity():
    # empty convex rectangle: the image lattice yields 4/8/12 distinct
    # valid paths at orders 1/2/3 for any interior agent/anchor
    lx, ly = 8.0, 6.0
    walls = [
        ((0.0, 0.0), (lx, 0.0)),
        ((lx, 0.0), (lx, ly)),
        ((lx, ly), (0.0, ly)),
        ((0.0, ly), (0.0, 0.0)),
    ]
    agent = np.array([2.0, 1.5])
    anchor = np.array([6.0, 4.0])
    res = mirror_mpcs(walls, agent, anchor, max_order=3)
    counts = {k: sum(1 for p in res.paths if p.order == k) for k in range(4)}
    assert counts[0] == 1
    assert counts[1] == 4
    assert counts[2] == 8
    assert counts[3] == 12
    for p in res.paths:
        if p.order > 0:
            reflection_oracle_validate(p, walls, agent, anchor)


def test_path_amplitude_follows_path_loss():
    wall = ((-100.0, 5.0), (100.0, 5.0))
    res = mirror_mpcs([wall], [0.0, 0.0], [4.0, 0.0], max_order=1)
    los = next(p for p in res.paths if p.order == 0)
    mpc = next(p for p in res.paths if p.order == 1)
    # 20 dB at 1 m, free-space: u = 10^((20 - 20 log10 d)/20) = 10/d
    assert los.u == pytest.approx(10.0 / los.distance, rel=1e-9)
    # one bounce costs 3 dB on top of path loss
    assert mpc.u == pytest.approx(10.0 / mpc.distance * 10 ** (-3 / 20), rel=1e-9)


def test_degenerate_geometry_raises():
    wall = ((0.0, -1.0), (0.0, 1.0))
    with pytest.raises(ValueError, match="on a wall"):
        mirror_mpcs([wall], [0.0, 0.0], [3.0, 0.0], max_order=1)
