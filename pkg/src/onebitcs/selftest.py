"""Quick end-to-end invariant battery behind the `selftest` CLI command.

Each check is small enough to run in a couple of seconds; the full pytest
suite remains the authoritative verification.
"""

from __future__ import annotations

import numpy as np

from .model import dft_dictionary, draw_channel, quantize, synthesize_measurement, zc_training
from .objective import ObjectiveContext, grad_h, h_objective, inv_mills, log_ndtr
from .operator import build_operator, coherence_bands, real_form, select_eta
from .solvers import SolverConfig, bms_threshold, hard_threshold, restricted_maximize, run_grasp


def _make_problem(m=4, n=4, t=8, b_rx=8, b_tx=8, l=2, rho=1.0, seed=7, mode="fft"):
    rng = np.random.default_rng(seed)
    training = zc_training(n, t)
    op = build_operator(training.S, dft_dictionary(m, b_rx), dft_dictionary(n, b_tx), mode)
    channel = draw_channel(l, m, n, rng)
    meas = synthesize_measurement(channel.H, training.S, rho, rng)
    return op, ObjectiveContext(op, meas), rng


def check_steering_and_quantize():
    rng = np.random.default_rng(0)
    training = zc_training(4, 8)
    assert np.allclose(np.abs(training.S), 1.0)
    assert np.allclose(training.S @ training.S.conj().T, 8 * np.eye(4), atol=1e-10)
    Y = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    q = quantize(Y)
    assert np.array_equal(quantize(q), q)
    assert np.array_equal(quantize(3.7 * Y), q)


def check_operator_paths():
    _, _, rng = _make_problem()
    training = zc_training(4, 8)
    dense = build_operator(training.S, dft_dictionary(4, 8), dft_dictionary(4, 8), "dense")
    fft = build_operator(training.S, dft_dictionary(4, 8), dft_dictionary(4, 8), "fft")
    for _ in range(5):
        x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        c = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        assert np.allclose(fft.apply(x), dense.apply(x), atol=1e-10)
        assert np.allclose(fft.apply_adjoint(c), dense.apply_adjoint(c), atol=1e-10)
        lhs = np.vdot(fft.apply(x), c)
        rhs = np.vdot(x, fft.apply_adjoint(c))
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def check_special_functions():
    assert abs(log_ndtr(0.0) + np.log(2.0)) < 1e-14
    assert abs(log_ndtr(-10.0) - (-53.23128515051247)) < 1e-9
    assert abs(inv_mills(0.0) - np.sqrt(2 / np.pi)) < 1e-14
    assert abs(inv_mills(-40.0) - 40.024968847207264) < 1e-9
    # phi underflows float64 past x ~ 38.6, so probe strictness below that
    grid = np.linspace(-60, 38, 401)
    vals = inv_mills(grid)
    assert np.all(vals > 0) and np.all(np.diff(vals) < 0)


def check_gradient():
    _, ctx, rng = _make_problem()
    x = (rng.standard_normal(ctx.op.B) + 1j * rng.standard_normal(ctx.op.B)) * 0.3
    g = real_form(grad_h(ctx, x))
    xr = real_form(x)
    step = 1e-5
    for k in rng.choice(2 * ctx.op.B, size=6, replace=False):
        e = np.zeros_like(xr)
        e[k] = step

        def h_at(v):
            half = v.shape[0] // 2
            return h_objective(ctx, v[:half] + 1j * v[half:])

        fd = (h_at(xr + e) - h_at(xr - e)) / (2 * step)
        assert abs(fd - g[k]) <= 1e-5 * max(1.0, abs(g[k]))


def check_band_structure():
    training = zc_training(4, 8)
    op = build_operator(training.S, dft_dictionary(4, 16), dft_dictionary(4, 16), "fft")
    selection = select_eta(op)
    assert selection.eta is not None and 0 < selection.eta < 1
    bands = coherence_bands(op, selection.eta)
    sizes = [b.size for b in bands.bands]
    assert min(sizes) >= 2
    for i in (0, 17, 255):
        assert i in bands.bands[i]


def check_thresholders():
    rng = np.random.default_rng(3)
    training = zc_training(4, 8)
    op = build_operator(training.S, dft_dictionary(4, 4), dft_dictionary(4, 4), "fft")
    bands = coherence_bands(op, 0.5)     # orthogonal columns: singleton bands
    z = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    idx_plain, _ = hard_threshold(z, 3)
    idx_bms, _ = bms_threshold(z, np.zeros(16, dtype=complex), 3, bands)
    assert np.array_equal(idx_plain, idx_bms)


def check_solver_round_trip():
    op, ctx, _ = _make_problem(rho=10.0, seed=11)
    config = SolverConfig(sparsity=2)
    report = run_grasp(ctx, config, use_bms=True)
    assert report.estimate.support.size <= 2
    x = restricted_maximize(ctx, report.estimate.support, init=report.estimate.x_hat)
    g = grad_h(ctx, x)
    assert np.linalg.norm(real_form(g)[np.concatenate(
        [report.estimate.support, report.estimate.support + op.B]
    )]) <= 1e-6 or report.estimate.support.size == 0
    repeat = run_grasp(ctx, config, use_bms=True)
    assert np.array_equal(repeat.estimate.x_hat, report.estimate.x_hat)


CHECKS = [
    ("steering/training/quantize", check_steering_and_quantize),
    ("operator fft-vs-dense + adjoint", check_operator_paths),
    ("stable special functions", check_special_functions),
    ("gradient vs finite differences", check_gradient),
    ("eta selection and bands", check_band_structure),
    ("thresholder degeneracy", check_thresholders),
    ("pursuit determinism", check_solver_round_trip),
]


def run_selftest(out=print) -> int:
    """Run all checks; returns 0 when everything passes."""
    failures = 0
    for name, check in CHECKS:
        try:
            check()
        except Exception as err:  # noqa: BLE001 - report and continue
            failures += 1
            out(f"FAIL {name}: {err!r}")
        else:
            out(f"PASS {name}")
    return 0 if failures == 0 else 1
