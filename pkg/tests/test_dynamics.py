import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghisd.config import SearchConfig
from ghisd.dynamics import (
    CONVERGED,
    DIVERGED,
    MAX_ITERS,
    GhisdOutcome,
    ghisd_run,
    ghisd_step,
    refine_saddle,
    verify_point,
)
from ghisd.errors import PreconditionError
from ghisd.frame import Frame, orthonormalize
from ghisd.systems import SystemSpec, VectorFieldSystem, eval_energy, make_system

from oracles import TABLE1, euler, euler_until, quartic_field, quartic_stationary_points, toy3d_jacobian

seeds = st.integers(0, 2**32 - 1)
CFG = SearchConfig()


def quartic():
    return make_system(SystemSpec("quartic2d"))


def toy3d():
    return make_system(SystemSpec("toy3d"))


def converged_at(x, k=0, n=2):
    frame = Frame(np.eye(n)[:k]) if k else Frame.empty(n)
    return GhisdOutcome(CONVERGED, np.asarray(x, dtype=float), frame, 0.0, 0)


# ghisd_step

def test_k0_step_is_explicit_euler():
    s = quartic()
    x = np.array([0.3, -0.7])
    x_new, frame = ghisd_step(s, x, Frame.empty(2), CFG)
    np.testing.assert_array_equal(x_new, x + CFG.alpha * quartic_field(x))
    assert frame.k == 0


def test_full_reflection_reverses_a_symmetric_field():
    s = VectorFieldSystem(3, lambda x: -x)
    x = np.array([0.5, -1.0, 2.0])
    x_new, _ = ghisd_step(s, x, Frame(np.eye(3)), CFG)
    np.testing.assert_allclose(x_new, x - CFG.alpha * (-x), rtol=1e-15)


def test_stationary_input_with_exact_basis_stays_put():
    s = quartic()
    x = np.array([1.0, 0.0])
    frame = Frame(np.array([[0.0, 1.0]]))
    x_new, f_new = ghisd_step(s, x, frame, CFG)
    np.testing.assert_array_equal(x_new, x)
    assert np.max(np.abs(np.abs(f_new.vectors) - frame.vectors)) <= CFG.beta * 8 * 1e-10


def test_directions_follow_the_new_position():
    s = toy3d()
    x = np.array([4.0, 3.5, 3.7])
    frame = orthonormalize(np.eye(3)[:2])
    a, fa = ghisd_step(s, x, frame, CFG)
    b, fb = ghisd_step(s, x, frame, CFG.replace(dimer_at_new_position=False))
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(fa.vectors, fb.vectors, rtol=0, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, k=st.integers(1, 3))
def test_frames_stay_orthonormal(seed, k):
    s = toy3d()
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 6, 3)
    frame = orthonormalize(rng.standard_normal((k, 3)))
    for _ in range(20):
        x, frame = ghisd_step(s, x, frame, CFG)
        assert frame.orthonormality_error() <= 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=seeds, k=st.integers(0, 5), n=st.integers(5, 12))
def test_reflection_is_an_involution(seed, k, n):
    rng = np.random.default_rng(seed)
    frame = orthonormalize(rng.standard_normal((k, n))) if k else Frame.empty(n)
    u = rng.standard_normal(n)
    np.testing.assert_allclose(frame.reflect(frame.reflect(u)), u, atol=1e-12)


# ghisd_run

def reflected_flow_oracle(x0, v, alpha, tol):
    # the quartic Jacobian is diagonal, so an axis direction never rotates
    v = np.asarray(v, dtype=float)

    def flow(x):
        f = quartic_field(x)
        return f - 2.0 * (f @ v) * v
    x, _ = euler_until(lambda x: flow(x) if np.linalg.norm(quartic_field(x)) > tol else 0 * x,
                       x0, alpha, tol)
    return x


@pytest.mark.parametrize("v0, target", [((0.0, 1.0), (1.0, 0.0)), ((1.0, 0.0), (0.0, 1.0))])
def test_one_saddles_of_quartic(v0, target):
    # ascent runs along v0: from (0.2, 0.9), v0 = (0, 1) climbs y to 0 while x
    # descends to 1, and v0 = (1, 0) gives the saddle (0, 1)
    out = ghisd_run(quartic(), [0.2, 0.9], Frame(np.array([v0])), CFG)
    assert out.status == CONVERGED
    ref = reflected_flow_oracle([0.2, 0.9], v0, CFG.alpha, CFG.residual_tol)
    np.testing.assert_allclose(ref, target, atol=1e-6)
    np.testing.assert_allclose(out.x, target, atol=1e-6)


def test_k0_run_reaches_the_forward_euler_minimum():
    x_ref, _ = euler_until(quartic_field, [0.2, 0.9], CFG.alpha, CFG.residual_tol)
    out = ghisd_run(quartic(), [0.2, 0.9], Frame.empty(2), CFG)
    assert out.converged
    np.testing.assert_allclose(out.x, x_ref, atol=1e-9)
    np.testing.assert_allclose(out.x, [1.0, 1.0], atol=1e-6)


def test_k0_run_is_bitwise_euler():
    cfg = CFG.replace(max_iters=250, residual_tol=1e-300)
    out = ghisd_run(quartic(), [0.2, 0.9], Frame.empty(2), cfg)
    assert out.status == MAX_ITERS and out.iterations == 250
    np.testing.assert_array_equal(out.x, euler(quartic_field, [0.2, 0.9], cfg.alpha, 250))


def test_source_of_toy3d_by_full_reflection():
    out = ghisd_run(toy3d(), [4.0, 3.5, 3.7], Frame(np.eye(3)), CFG)
    assert out.converged
    np.testing.assert_allclose(out.x, TABLE1["a1"], atol=1e-3)


def test_converged_outcome_meets_tolerance():
    out = ghisd_run(quartic(), [0.3, 0.2], Frame.empty(2), CFG)
    assert out.converged and out.residual <= CFG.residual_tol


def test_divergence_is_detected():
    s = VectorFieldSystem(1, lambda x: x)
    out = ghisd_run(s, [1.0], Frame.empty(1), CFG.replace(alpha=0.5))
    assert out.status == DIVERGED


def test_iteration_cap():
    out = ghisd_run(quartic(), [0.2, 0.9], Frame.empty(2), CFG.replace(max_iters=3))
    assert out.status == MAX_ITERS and out.iterations == 3


def test_energy_is_nonincreasing_for_k0():
    s = quartic()
    x = np.array([0.05, 1.4])
    energies = []
    for _ in range(500):
        energies.append(eval_energy(s, x))
        x, _ = ghisd_step(s, x, Frame.empty(2), CFG)
    assert np.all(np.diff(energies) <= 0.0)


@pytest.mark.parametrize("point, k", quartic_stationary_points())
def test_linear_stability_of_saddles(point, k):
    # start within 1e-2 of (x*, exact eigenbasis): the coupled dynamics returns
    s = quartic()
    x_star = np.array(point)
    axes = [i for i in range(2) if point[i] == 0.0]
    rng = np.random.default_rng(hash(point) % 2**32)
    x0 = x_star + 1e-2 * rng.uniform(-1, 1, 2) / np.sqrt(2)
    if k:
        raw = np.eye(2)[axes] + 1e-2 * rng.uniform(-1, 1, (k, 2)) / np.sqrt(2)
        frame = orthonormalize(raw)
    else:
        frame = Frame.empty(2)
    out = ghisd_run(s, x0, frame, CFG.replace(residual_tol=1e-8))
    assert out.converged and out.residual <= 1e-8
    np.testing.assert_allclose(out.x, x_star, atol=1e-8)


# refine_saddle / verify_point

@pytest.mark.parametrize("x, k, index", [((0.0, 0.0), 2, 2), ((1.0, 0.0), 1, 1), ((-1.0, 1.0), 0, 0)])
def test_refine_quartic_points(x, k, index):
    rec = refine_saddle(quartic(), converged_at(x, k), CFG)
    assert rec.index == index and rec.basis.k == index
    assert not rec.index_mismatch


def test_refine_toy3d_one_saddle():
    s = toy3d()
    out = ghisd_run(s, TABLE1["c3"], Frame(np.eye(3)[:1]), CFG)
    rec = refine_saddle(s, out, CFG)
    assert rec.index == 1
    expected = int(np.sum(np.linalg.eigvals(toy3d_jacobian(rec.x)).real > 0))
    assert expected == 1
    np.testing.assert_allclose(rec.x, TABLE1["c3"], atol=1e-3)


def test_refine_records_index_mismatch():
    rec = refine_saddle(quartic(), converged_at((1.0, 1.0), 1), CFG)
    assert rec.index == 0 and rec.search_index == 1 and rec.index_mismatch


def test_refine_needs_convergence():
    bad = GhisdOutcome(MAX_ITERS, np.zeros(2), Frame.empty(2), 1.0, 10)
    with pytest.raises(PreconditionError):
        refine_saddle(quartic(), bad, CFG)


def test_verify_point_measures_index():
    rec = verify_point(toy3d(), np.array(TABLE1["a1"]), CFG.replace(residual_tol=1e-3))
    assert rec.index == 3 and rec.search_index is None
