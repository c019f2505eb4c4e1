import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from odcgan.losses import LossConfig, discriminator_loss, generator_loss
from oracles import central_diff, np_discriminator_loss, np_generator_loss

LN2 = 0.693147180559945309417232121458


def t(x):
    return torch.tensor(x, dtype=torch.float64)


def test_generator_loss_half_scores_no_l1():
    s = torch.full((2, 1, 30, 30), 0.5, dtype=torch.float64)
    m = (torch.rand(2, 1, 8, 8) > 0.5).double()
    for lam in (0.0, 1.0, 100.0):
        out = generator_loss(s, m, m, LossConfig(lambda_l1=lam))
        assert float(out.total) == pytest.approx(LN2, abs=1e-12)
        assert float(out.l1) == 0.0


def test_generator_loss_perfect_fool_is_bounded():
    s = torch.ones(1, 1, 30, 30, dtype=torch.float64)
    m = torch.zeros(1, 1, 4, 4, dtype=torch.float64)
    out = generator_loss(s, m, m)
    assert 0 <= float(out.total) <= 2e-7
    assert float(out.total) == pytest.approx(-math.log(1 - 1e-7), rel=1e-9)


def test_generator_loss_worked_value():
    # -ln(0.8) + 100 * 0.1, evaluated with 30-digit arithmetic
    pred = t([[[[0.2, 0.4]]]])
    gt = t([[[[0.0, 0.4]]]])  # mean |gt - pred| = 0.1
    out = generator_loss(t([[[[0.8]]]]), pred, gt, LossConfig(lambda_l1=100.0))
    assert float(out.total) == pytest.approx(10.2231435513142097557662950903, abs=1e-9)
    assert float(out.adversarial) + 100.0 * float(out.l1) == pytest.approx(float(out.total), rel=1e-9)


def test_discriminator_loss_symmetric_case():
    s = torch.full((1, 1, 30, 30), 0.5, dtype=torch.float64)
    out = discriminator_loss(s, s)
    assert float(out.total) == pytest.approx(2 * LN2, abs=1e-12)


def test_discriminator_loss_perfect_discriminator():
    out = discriminator_loss(torch.ones(1, 1, 3, 3, dtype=torch.float64),
                             torch.zeros(1, 1, 3, 3, dtype=torch.float64))
    assert 0 <= float(out.total) <= 3e-7


def test_discriminator_loss_worked_value():
    out = discriminator_loss(t([[[[0.9]]]]), t([[[[0.2]]]]))
    assert float(out.total) == pytest.approx(0.328504066972036056993796071149, abs=1e-9)
    assert float(out.real) + float(out.fake) == pytest.approx(float(out.total), rel=1e-9)


def test_errors():
    s = torch.full((1, 1, 2, 2), 0.5)
    with pytest.raises(ValueError):
        generator_loss(s, torch.zeros(1, 1, 4, 4), torch.zeros(1, 1, 5, 5))
    with pytest.raises(ValueError):
        generator_loss(s, torch.zeros(1, 1, 4, 4), torch.zeros(1, 1, 4, 4), LossConfig(lambda_l1=-1))
    with pytest.raises(ValueError):
        discriminator_loss(s, torch.full((1, 1, 3, 3), 0.5))
    with pytest.raises(ValueError):
        LossConfig(log_epsilon=0.1).validate()


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    lam = 3.0
    scores = rng.uniform(0.05, 0.95, (1, 1, 4, 4))
    pred = rng.uniform(0.05, 0.95, (1, 1, 4, 4))
    gt = (rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(float)
    fake = rng.uniform(0.05, 0.95, (1, 1, 4, 4))

    s_t = torch.tensor(scores, requires_grad=True)
    p_t = torch.tensor(pred, requires_grad=True)
    generator_loss(s_t, p_t, torch.tensor(gt), LossConfig(lambda_l1=lam)).total.backward()
    fd_s = central_diff(lambda s: np_generator_loss(s, pred, gt, lam), scores)
    fd_p = central_diff(lambda p: np_generator_loss(scores, p, gt, lam), pred)
    np.testing.assert_allclose(s_t.grad.numpy(), fd_s, rtol=1e-3)
    np.testing.assert_allclose(p_t.grad.numpy(), fd_p, rtol=1e-3)

    r_t = torch.tensor(scores, requires_grad=True)
    f_t = torch.tensor(fake, requires_grad=True)
    discriminator_loss(r_t, f_t).total.backward()
    np.testing.assert_allclose(r_t.grad.numpy(), central_diff(lambda r: np_discriminator_loss(r, fake), scores), rtol=1e-3)
    np.testing.assert_allclose(f_t.grad.numpy(), central_diff(lambda f: np_discriminator_loss(scores, f), fake), rtol=1e-3)


unit = st.floats(0.01, 0.99)


@settings(max_examples=60, deadline=None)
@given(a=unit, b=unit, c=unit, d=unit)
def test_monotonicity(a, b, c, d):
    lo, hi = sorted((a, b))
    if hi - lo < 1e-6:
        return
    m = torch.zeros(1, 1, 2, 2, dtype=torch.float64)
    p = torch.full_like(m, c)
    g_lo = float(generator_loss(t([[[[lo]]]]), p, m).total)
    g_hi = float(generator_loss(t([[[[hi]]]]), p, m).total)
    assert g_hi < g_lo
    fake = t([[[[d]]]])
    assert float(discriminator_loss(t([[[[hi]]]]), fake).total) < float(discriminator_loss(t([[[[lo]]]]), fake).total)
    real = t([[[[d]]]])
    assert float(discriminator_loss(real, t([[[[lo]]]])).total) < float(discriminator_loss(real, t([[[[hi]]]])).total)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**16), lam=st.floats(0, 500))
def test_lambda_affine_and_non_negative(seed, lam):
    g = torch.Generator().manual_seed(seed)
    s = torch.rand(2, 1, 3, 3, generator=g, dtype=torch.float64)
    p = torch.rand(2, 1, 5, 5, generator=g, dtype=torch.float64)
    y = (torch.rand(2, 1, 5, 5, generator=g) > 0.5).double()
    base = generator_loss(s, p, y, LossConfig(lambda_l1=0.0))
    out = generator_loss(s, p, y, LossConfig(lambda_l1=lam))
    assert float(out.total) == pytest.approx(float(base.total) + lam * float(base.l1), rel=1e-12, abs=1e-12)
    assert float(out.total) >= 0
    assert float(discriminator_loss(s, torch.rand(2, 1, 3, 3, generator=g, dtype=torch.float64)).total) >= 0


def test_extreme_scores_stay_finite():
    s = t([[[[0.0, 1.0]]]])
    assert math.isfinite(float(generator_loss(s, s, s).total))
    assert math.isfinite(float(discriminator_loss(s, s).total))
