import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xfields.errors import (Inconclusive, InvalidParameter, NearSingularTime, StepTooLarge,
                            TailTooLong)
from xfields.grid import StateField, build_grid
from xfields.operators import HamiltonianSpec
from xfields.propagator import (MehlerKernelSpec, TimeWindows, apply_free_propagator,
                                decay_envelope, phase_a, phase_a_closed_form, phase_b, phase_c,
                                relative_error, resolvent_time_integral, timestep_oracle,
                                validate_kernel)
from xfields.resolvent import ResolventSolver

from conftest import gaussian


@pytest.fixture(scope="module")
def box12():
    return build_grid([(-12, 12), (-12, 12)], (128, 128), "periodic_spectral")


# ---------------------------------------------------------------- phases

def test_phase_b_examples():
    assert np.allclose(phase_b(np.pi / 2), (0, 1), atol=1e-15)
    assert np.allclose(phase_b(0), (0, 0))
    assert phase_c(0, "stated")[1] == 0


def test_phase_c_variants():
    assert np.allclose(phase_c(np.pi / 2, "stated"), (-1, np.pi / 2))
    assert np.allclose(phase_c(np.pi / 2, "shifted"), (-2, np.pi / 2))
    # the classical path starts at rest at the origin
    assert np.allclose(phase_c(0, "classical"), (0, 0))
    with pytest.raises(InvalidParameter):
        phase_c(1.0, "other")


@given(t=st.floats(0, 20))
def test_phase_identities(t):
    b = phase_b(t)
    assert b[0] == -np.sin(2 * t) / 2 and b[1] == (1 - np.cos(2 * t)) / 2
    for v in ("stated", "shifted"):
        assert phase_c(t, v)[1] == t - np.sin(2 * t)
    assert phase_c(t, "stated")[0] - phase_c(t, "shifted")[0] == pytest.approx(1.0)


def test_phase_a_zero_and_self_consistency():
    assert phase_a(0.0) == 0.0
    fine = phase_a(0.3, MehlerKernelSpec(a_tol=1e-10))
    coarse = phase_a(0.3, MehlerKernelSpec(a_tol=1e-6))
    assert abs(fine - coarse) <= 1e-6
    assert fine == pytest.approx(phase_a_closed_form(0.3), abs=1e-10)


def test_phase_a_continuity():
    ts = np.linspace(0, 1, 41)
    jumps = [abs(phase_a(t + 1e-4) - phase_a(t)) for t in ts]
    assert max(jumps) <= 1e-3


# ---------------------------------------------------------------- kernel

def test_free_propagator_unitary(box12):
    f = gaussian(box12)
    out = apply_free_propagator(0.5, f)
    assert out.norm() / f.norm() == pytest.approx(1, abs=1e-3)


def test_free_propagator_singular_time(box12):
    with pytest.raises(NearSingularTime):
        apply_free_propagator(np.pi, gaussian(box12))


def test_free_propagator_matches_oracle(box12):
    f = gaussian(box12, 0.5, -0.5)
    ref = timestep_oracle(0.5, f, 400)
    assert relative_error(apply_free_propagator(0.5, f), ref) <= 1e-3


# ---------------------------------------------------------------- oracle

def test_oracle_identity_at_zero(periodic64):
    f = gaussian(periodic64)
    assert np.array_equal(timestep_oracle(0.0, f, 10).values, f.values)


def test_oracle_norm_preservation(periodic64, fd64):
    f = gaussian(periodic64)
    assert timestep_oracle(0.5, f, 200).norm() / f.norm() == pytest.approx(1, abs=1e-6)
    g = gaussian(fd64)
    out = timestep_oracle(0.5, g, 200, method="crank_nicolson")
    assert out.norm() / g.norm() == pytest.approx(1, abs=1e-6)


@pytest.mark.parametrize("method,grid_name", [("strang_split", "periodic64"),
                                              ("crank_nicolson", "fd64")])
def test_oracle_second_order(method, grid_name, request):
    grid = request.getfixturevalue(grid_name)
    f = gaussian(grid, width=1.2)
    ref = timestep_oracle(0.5, f, 3200, method)
    e1 = relative_error(timestep_oracle(0.5, f, 100, method), ref)
    e2 = relative_error(timestep_oracle(0.5, f, 200, method), ref)
    assert e1 / e2 == pytest.approx(4, rel=0.25)


def test_oracle_step_too_large(periodic64):
    with pytest.raises(StepTooLarge):
        timestep_oracle(1.0, gaussian(periodic64), 10)


# ---------------------------------------------------------------- kernel validation

def test_validate_kernel_table(box12):
    v = validate_kernel([0.2, 0.5, 1.0], [gaussian(box12)], variants=("stated", "shifted"),
                        threshold=10.0)
    assert set(v.errors) == {"stated", "shifted"}
    assert all(len(e) == 3 for e in v.errors.values())
    assert len(v.as_rows()) == 6


def test_validate_kernel_is_deterministic(box12):
    f = gaussian(box12)
    v1 = validate_kernel([0.2, 0.5], [f], variants=("stated", "classical"))
    v2 = validate_kernel([0.2, 0.5], [f], variants=("classical", "stated"))
    assert v1.errors["classical"] == v2.errors["classical"]
    assert v1.errors["stated"] == v2.errors["stated"]
    assert v1.variant == v2.variant == "classical"


def test_validate_kernel_coarse_grid_inconclusive():
    g = build_grid([(-30, 30), (-30, 30)], (32, 32), "periodic_spectral")
    with pytest.raises(Inconclusive):
        validate_kernel([0.2, 0.5, 1.0], [gaussian(g)])


# ---------------------------------------------------------------- time windows

@given(theta=st.floats(0.05, 0.5), lam=st.floats(1.01, 1e4), T=st.floats(0.1, 30))
def test_windows_partition(theta, lam, T):
    w = TimeWindows(theta, lam)
    segs = w.segments(T)
    assert segs[0][0] == 0 and segs[-1][1] == pytest.approx(T)
    for (a0, a1, _), (b0, _, _) in zip(segs[:-1], segs[1:]):
        assert a1 == b0
    if w.disjoint():
        ts = np.linspace(0, T, 301)
        outside = ~w.in_window(ts)
        assert np.all(np.abs(np.sin(ts[outside])) >= w.half_width / 2)


def test_envelope_formula():
    nu = 0.5
    expected = (100 ** -0.5 + (1 + nu) / 100 + (1 + nu**-2) * 100 ** -0.5) / nu
    assert decay_envelope(100.0, nu, 0.5, 2.0) == pytest.approx(expected, rel=1e-14)


# ---------------------------------------------------------------- time-integral resolvent

def test_time_integral_tail_too_long(periodic64):
    with pytest.raises(TailTooLong):
        resolvent_time_integral(5.0, 1e-6, 0.5, gaussian(periodic64))


def test_time_integral_residual():
    g = build_grid([(-8, 8), (-8, 24)], (64, 64), "periodic_spectral")
    f = gaussian(g)
    r = resolvent_time_integral(1.0, 1.0, 0.5, f)
    s = ResolventSolver(HamiltonianSpec(g), 1.0, 1.0)
    res = np.linalg.norm(s.apply_operator(r.values) - f.values) / np.linalg.norm(f.values)
    assert res <= 1e-2


def test_time_integral_parameter_checks(periodic64):
    with pytest.raises(InvalidParameter):
        resolvent_time_integral(0.5, 0.5, 0.5, gaussian(periodic64))
    with pytest.raises(InvalidParameter):
        TimeWindows(0.7, 10.0)
