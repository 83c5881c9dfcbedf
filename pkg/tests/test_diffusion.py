import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchedit import diffusion
from sketchedit.diffusion import (
    make_schedule,
    p_sample,
    posterior_params,
    predict_z0,
    q_sample,
)
from sketchedit.seeds import stream


def test_schedule_tables_match_cumulative_products():
    sched = make_schedule(10, 1e-4, 0.02)
    assert sched.betas.shape == (10,)
    np.testing.assert_allclose(sched.alphas, 1.0 - sched.betas, rtol=0, atol=0)
    # independent running product
    run = 1.0
    for k in range(10):
        run *= 1.0 - sched.betas[k]
        assert math.isclose(sched.alpha_bars[k], run, rel_tol=1e-15)


def test_default_schedule_destroys_signal_but_keeps_first_step_clean():
    sched = make_schedule()
    assert sched.alpha_bars[0] > 0.99
    assert sched.alpha_bars[-1] < 0.05
    assert np.all(np.diff(sched.alpha_bars) < 0)


@pytest.mark.parametrize(
    "T,bs,be",
    [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)],
)
def test_make_schedule_rejects_bad_params(T, bs, be):
    with pytest.raises(ValueError):
        make_schedule(T, bs, be)


def test_q_sample_closed_form_scalar_oracle():
    sched = make_schedule(7, 1e-3, 0.3)
    rng = stream("test-q", 0)
    z0 = rng.standard_normal((3, 4))
    eps = rng.standard_normal((3, 4))
    for t in (1, 4, 7):
        abar = sched.alpha_bars[t - 1]
        want = np.sqrt(abar) * z0 + np.sqrt(1 - abar) * eps
        np.testing.assert_allclose(q_sample(z0, t, eps, sched), want, rtol=1e-15)


def test_q_sample_boundaries_and_errors():
    sched = make_schedule(5, 1e-3, 0.2)
    z0 = np.ones((2, 2))
    with pytest.raises(ValueError):
        q_sample(z0, 0, z0, sched)
    with pytest.raises(ValueError):
        q_sample(z0, 6, z0, sched)
    with pytest.raises(ValueError):
        q_sample(z0, 1, np.ones((2, 3)), sched)
    # zero noise leaves only the signal scaling
    out = q_sample(z0, 3, np.zeros_like(z0), sched)
    np.testing.assert_allclose(out, np.sqrt(sched.alpha_bars[2]) * z0, rtol=1e-15)


def test_predict_z0_inverts_q_sample():
    sched = make_schedule(9, 1e-3, 0.25)
    rng = stream("test-inv", 1)
    z0 = rng.standard_normal((2, 3, 3))
    eps = rng.standard_normal((2, 3, 3))
    for t in (1, 5, 9):
        z_t = q_sample(z0, t, eps, sched)
        np.testing.assert_allclose(predict_z0(z_t, eps, t, sched), z0, atol=1e-12)


def test_posterior_matches_hand_formula():
    sched = make_schedule(6, 2e-3, 0.1)
    rng = stream("test-post", 2)
    z_t = rng.standard_normal((4, 4))
    eps_hat = rng.standard_normal((4, 4))
    t = 4
    beta = sched.betas[t - 1]
    want_mu = (z_t - beta / np.sqrt(1 - sched.alpha_bars[t - 1]) * eps_hat) / np.sqrt(
        sched.alphas[t - 1]
    )
    params = posterior_params(z_t, eps_hat, t, sched)
    np.testing.assert_allclose(params.mu, want_mu, rtol=1e-14)
    assert math.isclose(params.sigma, math.sqrt(beta), rel_tol=1e-15)


def test_final_step_is_deterministic():
    sched = make_schedule(6, 2e-3, 0.1)
    params = posterior_params(np.ones((2, 2)), np.ones((2, 2)), 1, sched)
    assert params.sigma == 0.0
    noise = np.full((2, 2), 100.0)
    np.testing.assert_array_equal(p_sample(params, noise), params.mu)


def test_p_sample_shape_check():
    sched = make_schedule(6, 2e-3, 0.1)
    params = posterior_params(np.ones((2, 2)), np.ones((2, 2)), 3, sched)
    with pytest.raises(ValueError):
        p_sample(params, np.ones((3, 2)))


def test_torch_and_numpy_agree():
    sched = make_schedule(8, 1e-3, 0.2)
    rng = stream("test-torch", 3)
    z0 = rng.standard_normal((2, 3)).astype(np.float64)
    eps = rng.standard_normal((2, 3)).astype(np.float64)
    for t in (1, 8):
        a = q_sample(z0, t, eps, sched)
        b = q_sample(torch.from_numpy(z0), t, torch.from_numpy(eps), sched).numpy()
        np.testing.assert_array_equal(a, b)


def test_forward_process_variance_monte_carlo():
    """Empirical var of q_sample at fixed z0 tracks 1 - abar_t (10^5 draws)."""
    sched = make_schedule(50, 1e-4, 0.03)
    n = 100_000
    for t in (1, 25, 50):
        eps = stream("mc-var", t).standard_normal(n)
        z = q_sample(np.zeros(n), t, eps, sched)
        want = 1.0 - sched.alpha_bars[t - 1]
        tol = 3.0 * want * math.sqrt(2.0 / (n - 1))
        assert abs(z.var(ddof=1) - want) < tol


@settings(max_examples=30, deadline=None)
@given(
    t=st.integers(min_value=1, max_value=12),
    scale=st.floats(min_value=-3, max_value=3, allow_nan=False),
)
def test_q_sample_is_linear_in_z0(t, scale):
    sched = make_schedule(12, 1e-3, 0.2)
    z0 = stream("hyp-lin", t).standard_normal((3, 3))
    eps = np.zeros((3, 3))
    np.testing.assert_allclose(
        q_sample(scale * z0, t, eps, sched),
        scale * q_sample(z0, t, eps, sched),
        atol=1e-12,
    )


def test_schedule_config_round_trip():
    sched = make_schedule(17, 3e-4, 0.04)
    again = diffusion.NoiseSchedule.from_config(sched.to_config())
    np.testing.assert_array_equal(sched.betas, again.betas)
    with pytest.raises(ValueError):
        diffusion.NoiseSchedule.from_config({"T": 5, "beta_start": 1e-4, "beta_end": 0.02, "kind": "cosine"})
