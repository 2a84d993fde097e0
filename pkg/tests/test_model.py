from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cybersis._validation import DomainError, check_state, check_states_array
from cybersis.model import (
    ControlPair,
    CostParams,
    ModelParams,
    UpdateMode,
    diffusion,
    drift,
    drift_lipschitz,
    hamiltonian,
    hamiltonian_min,
    running_cost,
    update_controls,
)

P = ModelParams()
K = CostParams()

states = st.floats(0.001, 0.999)
unit = st.floats(0.0, 1.0)
rhos = st.floats(0.0, 10.0)
gradients = st.floats(-50.0, 50.0)


def test_benchmark_defaults():
    assert (P.alpha, P.beta, P.gamma, P.sigma, P.delta) == (0.5, 0.5, 0.15, 0.3, 0.05)
    assert (K.a0, K.aI, K.amI, K.amS, K.ar) == (0.5, 5.0, 2.5, 0.5, 5.0)
    assert K.standard


@pytest.mark.parametrize(
    "kwargs, message",
    [
        ({"delta": 0.0}, "delta > 0 required"),
        ({"sigma": -0.1}, "sigma"),
        ({"alpha": math.nan}, "alpha"),
    ],
)
def test_model_params_reject_invalid(kwargs, message):
    with pytest.raises(ValueError, match=message):
        ModelParams(**kwargs)


def test_cost_params_reject_negative():
    with pytest.raises(ValueError):
        CostParams(ar=-1.0)
    assert not CostParams(aI=0, amI=0, amS=0, ar=0).standard


# exact rational oracle: 1/2 * 1/2 + 1/2 * (1/2 * 1/2 - 3/20) = 3/10
def test_drift_values():
    assert drift(0.5, ControlPair(1.0, 0.0), P) == pytest.approx(0.3, abs=1e-15)
    assert drift(1 - 1e-13, ControlPair(0.3, 0.0), P) == pytest.approx(-0.15, abs=1e-12)
    assert drift(1e-12, ControlPair(0.0, 4.0), P) == pytest.approx(0.0, abs=1e-10)


def test_diffusion_values():
    assert diffusion(0.5, P) == pytest.approx(0.075, abs=1e-15)
    assert diffusion(1e-14, P) == pytest.approx(0.0, abs=1e-14)
    assert diffusion(1 - 1e-14, P) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DomainError):
        diffusion(1.0, P)


def test_running_cost_values():
    assert running_cost(1e-15, ControlPair(1.0, 0.0), K) == pytest.approx(K.a0)
    assert running_cost(0.5, ControlPair(0.0, 0.0), K) == pytest.approx(4.5, abs=1e-14)
    assert running_cost(0.5, ControlPair(1.0, 2.0), K) == pytest.approx(13.0, abs=1e-14)


def test_zero_gradient_gives_no_action():
    for mode in UpdateMode:
        eta, rho = update_controls(np.linspace(0.01, 0.99, 7), np.zeros(7), P, K, mode)
        np.testing.assert_array_equal(eta, 1.0)
        np.testing.assert_array_equal(rho, 0.0)


def test_as_printed_update():
    eta, rho = update_controls(0.5, 10.0, P, K, UpdateMode.AS_PRINTED)
    assert (eta, rho) == (0.0, pytest.approx(2.0))


# stationary point of the Hamiltonian solved symbolically: (eta, rho) = (1/11, 1)
def test_exact_update():
    eta, rho = update_controls(0.5, 10.0, P, K, UpdateMode.EXACT_FOC)
    assert rho == pytest.approx(1.0)
    assert eta == pytest.approx(1 / 11, rel=1e-12)
    assert isinstance(eta, float)


def test_rho_capped():
    _, rho = update_controls(0.5, 1e4, P, K, UpdateMode.EXACT_FOC, rho_max=3.0)
    assert rho == 3.0


def test_hamiltonian_min_values():
    const = CostParams(aI=0, amI=0, amS=0, ar=0)
    assert hamiltonian_min(0.4, const.a0 / P.delta, 0.0, 0.0, P, const) == pytest.approx(0.0, abs=1e-14)
    assert hamiltonian_min(0.5, 0.0, 0.0, 0.0, P, K) == pytest.approx(3.0, abs=1e-14)


def test_drift_lipschitz_bounds_difference_quotient():
    c = ControlPair(0.7, 1.3)
    x = np.linspace(1e-9, 1 - 1e-9, 2001)
    slope = np.abs(np.diff(drift(x, c, P))) / np.diff(x)
    assert slope.max() <= drift_lipschitz(c, P) + 1e-12


def _brute_force_min(x, dv, p, k, rho_max=10.0):
    eta = np.linspace(0, 1, 4001)[:, None]
    rho = np.linspace(0, rho_max, 4001)[None, :]
    c = ControlPair(eta, rho)
    h = drift(x, c, p) * dv + running_cost(x, c, k)
    return float(h.min())


@settings(max_examples=60, deadline=None)
@given(x=states, dv=gradients)
def test_exact_update_minimises_hamiltonian(x, dv):
    eta, rho = update_controls(x, dv, P, K, UpdateMode.EXACT_FOC)
    got = float(drift(x, ControlPair(eta, rho), P) * dv + running_cost(x, ControlPair(eta, rho), K))
    assert got <= _brute_force_min(x, dv, P, K) + 1e-6 * (1 + abs(got))


@settings(max_examples=100, deadline=None)
@given(x=states, dv=gradients, mode=st.sampled_from(list(UpdateMode)))
def test_controls_stay_admissible(x, dv, mode):
    eta, rho = update_controls(x, dv, P, K, mode, rho_max=10.0)
    assert 0.0 <= eta <= 1.0
    assert 0.0 <= rho <= 10.0


@settings(max_examples=100, deadline=None)
@given(x=states, eta=unit, rho=rhos)
def test_cost_at_least_a0_and_diffusion_nonnegative(x, eta, rho):
    c = ControlPair(eta, rho)
    assert running_cost(x, c, K) >= K.a0 - 1e-12
    assert diffusion(x, P) >= 0


@settings(max_examples=100, deadline=None)
@given(x=states, eta=unit, rho=rhos, v=st.floats(-50, 50), dv=gradients, d2v=gradients)
def test_hamiltonian_min_is_lower_bound(x, eta, rho, v, dv, d2v):
    lo = hamiltonian_min(x, v, dv, d2v, P, K)
    assert lo <= hamiltonian(x, ControlPair(eta, rho), v, dv, d2v, P, K) + 1e-9 * (1 + abs(lo))


def test_check_state():
    check_state(np.array([0.2, 0.8]))
    with pytest.raises(DomainError):
        check_state(1.0)
    with pytest.raises(DomainError):
        check_state([0.5, -0.1])


def test_check_states_array_shapes():
    np.testing.assert_array_equal(check_states_array(0.3), [0.3])
    np.testing.assert_array_equal(check_states_array([[0.1], [0.2]]), [0.1, 0.2])
    with pytest.raises(ValueError):
        check_states_array([[0.1, 0.2]])
    with pytest.raises(ValueError):
        check_states_array([np.nan])
