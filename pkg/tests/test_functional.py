import math

import numpy as np
import pytest

from pathgap.functional import (
    CylindricalFunction,
    EntropyDomainError,
    FunctionalError,
    GradientKind,
    base_from_spec,
    bump,
    chain_damped,
    chain_damped_modified,
    chain_modified,
    cylindrical_from_spec,
    dirichlet_energy,
    energy_samples,
    entropy,
    entropy_samples,
    exp_linear,
    gradient_at,
    gradient_coords,
    gradient_fd_error,
    linear,
    variance,
)
from pathgap.geometry import Euclidean, EvolvingSphere, Hyperbolic, Sphere, ou_drift, pinching, zero_drift
from pathgap.pathsim import SimConfig, simulate


def _ens(model, drift, T=1.0, steps=64, n=2000, seed=0, times=(), record_every=8, x0=None, q=True):
    cfg = SimConfig(T=T, steps=steps, n_paths=n, seed=seed, record_every=record_every, compute_q=q)
    return simulate(model, drift, model.origin() if x0 is None else x0, cfg, times)


def test_validation_and_spec_round_trip():
    with pytest.raises(FunctionalError):
        CylindricalFunction((0.5, 0.25), (linear([1.0]), linear([1.0])))
    with pytest.raises(FunctionalError):
        CylindricalFunction((0.5,), (linear([1.0]), linear([1.0])))
    with pytest.raises(FunctionalError):
        CylindricalFunction((0.5,), (linear([1.0]),), combine="max")
    with pytest.raises(FunctionalError):
        base_from_spec({"kind": "cubic"})
    F = CylindricalFunction.product([exp_linear([1.0, 0.0], 0.5), bump([0.0, 0.0])], [0.5, 1.0])
    G = cylindrical_from_spec(F.spec())
    x = [np.array([[0.3, -0.2]]), np.array([[1.0, 2.0]])]
    assert G.evaluate_points(x) == pytest.approx(F.evaluate_points(x))


@pytest.mark.parametrize("model", [Euclidean(3), Sphere(2), Hyperbolic(2, -1.0)], ids=lambda m: m.kind)
@pytest.mark.parametrize("combine", ["product", "sum"])
def test_gradients_match_finite_differences(model, combine):
    D = model.ambient_dim
    fs = [linear(np.arange(1, D + 1) / D), bump(model.origin(), 0.8), exp_linear(np.ones(D), 0.3)]
    F = CylindricalFunction((0.2, 0.5, 1.0), tuple(fs), combine)
    assert gradient_fd_error(F, model) < 1e-6


def test_intrinsic_energy_two_time_sum_is_exact():
    v, w = np.array([1.0, 2.0]), np.array([-0.5, 0.5])
    F = CylindricalFunction.sum([linear(v), linear(w)], [0.25, 1.0])
    ens = _ens(Euclidean(2), zero_drift(), steps=16, n=50, times=(0.25,), record_every=0, q=False)
    e = energy_samples(F, ens)
    np.testing.assert_allclose(e, 0.25 * np.sum((v + w) ** 2) + 0.75 * np.sum(w**2), rtol=1e-14)
    # strict indicator: at t = t_1 only the later factor contributes
    np.testing.assert_allclose(gradient_coords(F, ens, 0.25), np.broadcast_to(w, (50, 2)))
    np.testing.assert_allclose(gradient_at(F, ens, 0.0), np.broadcast_to(v + w, (50, 2)))


def test_ou_damped_and_modified_energies():
    v = np.array([1.0, 0.5])
    F = CylindricalFunction.single(linear(v), 1.0)
    ens = _ens(Euclidean(2), ou_drift(2), steps=256, n=20, record_every=4)
    exact = np.sum(v**2) * (1 - math.exp(-1.0))
    np.testing.assert_allclose(energy_samples(F, ens, GradientKind.DAMPED), exact, rtol=1e-4)
    np.testing.assert_allclose(energy_samples(F, ens, GradientKind.MODIFIED, (1.0, 1.0)), exact, rtol=1e-13)
    np.testing.assert_allclose(energy_samples(F, ens), np.sum(v**2), rtol=1e-14)
    D = gradient_coords(F, ens, 0.5, GradientKind.DAMPED)
    np.testing.assert_allclose(D, np.broadcast_to(math.exp(-0.25) * v, D.shape), atol=1e-12)


def test_damped_equals_modified_at_constant_curvature():
    F = CylindricalFunction.product([exp_linear([1.0, 0.0, 0.0], 0.5), bump([0.0, 0.0, 1.0])], [0.5, 1.0])
    ens = _ens(Sphere(2), zero_drift(), steps=128, n=500, times=(0.5,), record_every=2)
    d = energy_samples(F, ens, GradientKind.DAMPED)
    m = energy_samples(F, ens, GradientKind.MODIFIED, (1.0, 1.0))
    np.testing.assert_allclose(d, m, rtol=1e-4)
    assert dirichlet_energy(F, ens, "Damped").estimator.startswith("Damped")


def test_gradient_kind_requirements():
    F = CylindricalFunction.single(linear([1.0]), 1.0)
    ens = _ens(Euclidean(1), zero_drift(), steps=16, n=5, record_every=0, q=False)
    with pytest.raises(FunctionalError):
        energy_samples(F, ens, GradientKind.MODIFIED)
    with pytest.raises(FunctionalError):
        energy_samples(F, ens, GradientKind.DAMPED)


def test_entropy_lognormal_oracle(rng):
    sigma = 0.6
    G = np.exp(sigma * rng.standard_normal(200_000))
    ent, infl, _ = entropy_samples(G)
    exact = 0.5 * sigma**2 * math.exp(0.5 * sigma**2)
    se = infl.std() / math.sqrt(G.size)
    assert abs(ent - exact) < 4 * se
    assert entropy_samples(np.full(10, 3.0))[0] == pytest.approx(0.0, abs=1e-14)


def test_entropy_zero_convention():
    G = np.array([0.0, 1.0, 4.0])
    ent, _, _ = entropy_samples(G)
    m = G.mean()
    assert ent == pytest.approx((4 * math.log(4)) / 3 - m * math.log(m))
    with pytest.raises(EntropyDomainError):
        entropy_samples(G, zero_convention=False)


def test_entropy_and_variance_estimates_flat():
    # F = <v, B_1> ~ N(0, s^2), s^2 = 2: Var F = s^2 and Ent(F^2) = s^2 (2 - log 2 - gamma)
    v = np.array([1.0, 1.0])
    F = CylindricalFunction.single(linear(v), 1.0)
    ens = _ens(Euclidean(2), zero_drift(), steps=16, n=40_000, record_every=0, q=False)
    var = variance(F, ens)
    assert abs(var.mean - 2.0) < 4 * var.std_error
    ent = entropy(F, ens)
    exact = 2.0 * (2 - math.log(2) - np.euler_gamma)
    assert abs(ent.mean - exact) < 4 * ent.std_error
    assert abs(ent.bias) < ent.std_error


@pytest.mark.parametrize("model,drift,pin", [
    (Sphere(2), zero_drift(), (1.0, 1.0)),
    (Hyperbolic(2, -1.0), zero_drift(), (-1.0, -1.0)),
    (Euclidean(2), ou_drift(2), (1.0, 1.0)),
], ids=["sphere", "hyperbolic", "ou"])
def test_chain_inequalities_hold(model, drift, pin):
    D = model.ambient_dim
    F = CylindricalFunction.product([exp_linear(np.eye(D)[1], 0.5), bump(model.origin(), 1.0)], [0.5, 1.0])
    ens = _ens(model, drift, steps=128, n=1000, times=(0.5,), record_every=4)
    for rep in (chain_damped(F, ens, *pin), chain_damped_modified(F, ens, *pin), chain_modified(F, ens, *pin)):
        assert rep.holds, rep
        assert rep.n_checked == 1000 * (ens.partition.size - 1)


def test_chain_inequalities_with_wider_pinching_are_slacker():
    F = CylindricalFunction.single(linear([1.0, 0.0, 0.0]), 1.0)
    ens = _ens(Sphere(2), zero_drift(), steps=128, n=200, record_every=4)
    tight = chain_damped(F, ens, 1.0, 1.0)
    loose = chain_damped(F, ens, 0.0, 3.0)
    assert loose.holds and loose.max_excess <= tight.max_excess + 1e-12


def test_chain_modified_time_dependent():
    m = EvolvingSphere.ricci_flow(2, flow=0.5)
    cert = pinching(m, zero_drift(), 0.5)
    F = CylindricalFunction.product([linear([1.0, 0.0, 0.0]), bump([0.0, 0.0, 1.0])], [0.25, 0.5])
    ens = _ens(m, zero_drift(), T=0.5, steps=64, n=500, times=(0.25,), record_every=4)
    assert chain_modified(F, ens, cert.k1, cert.k2).holds
    e = energy_samples(F, ens, GradientKind.MODIFIED, cert)
    assert np.all(e > 0)
