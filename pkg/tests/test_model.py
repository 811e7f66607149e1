import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from porous_opt.errors import ConfigError, DomainError
from porous_opt.mesh import square_mesh
from porous_opt.model import (
    RunConfig,
    build_wells,
    default_model,
    unit_model,
    wells_from_tris,
)


def test_default_model_plug_in_values():
    m = default_model(delta_floor=0.05)
    assert m.alpha(0.0) == pytest.approx(1.0 / (2 * 0.05 + 1.0))
    assert m.b(0.0) == 0.0
    assert m.f(0.0) == pytest.approx(-0.05)
    assert m.b(1.0) == pytest.approx(2.0)
    assert m.f(1.0) == pytest.approx(-1.05)


def test_default_model_bounds_positive():
    m = default_model()
    grid = np.linspace(0.0, 1.0, 1001)
    inv_alpha = 1.0 / m.alpha(grid)
    assert inv_alpha.min() >= m.a_low - 1e-12 and inv_alpha.max() <= m.a_high + 1e-12
    d = m.diffusion(grid)
    assert d.min() > 0.0
    assert d.min() == pytest.approx(m.d_low)
    assert d.max() == pytest.approx(m.d_high)


def test_default_model_validate():
    assert default_model().validate()
    assert unit_model().validate()


@settings(deadline=None, max_examples=60)
@given(c=st.floats(min_value=0.001, max_value=0.999))
def test_derivatives_match_finite_differences(c):
    m = default_model()
    h = 1e-6
    fd_alpha = (m.alpha(c + h) - m.alpha(c - h)) / (2 * h)
    fd_d = (m.diffusion(c + h) - m.diffusion(c - h)) / (2 * h)
    assert abs(fd_alpha - m.alpha_prime(c)) < 1e-6
    assert abs(fd_d - m.diffusion_prime(c)) < 1e-6


def test_bad_model_parameters():
    with pytest.raises(ConfigError):
        default_model(delta_floor=0.0)
    with pytest.raises(ConfigError):
        default_model(peclet=-1.0)


# ---------------------------------------------------------------------------
# wells
# ---------------------------------------------------------------------------

def test_single_element_patches():
    mesh = square_mesh(8)
    w = wells_from_tris(mesh, [0], [mesh.num_triangles - 1], T=1.0)
    assert w.sigma0 == pytest.approx(mesh.tri_area[0])
    r0 = w.r0_values()
    assert r0[0] == pytest.approx(1.0 / mesh.tri_area[0])
    assert np.count_nonzero(r0) == 1


def test_sources_normalized_and_balanced():
    mesh = square_mesh(8)
    w = build_wells(mesh, (0.1, 0.1), (0.9, 0.9), 0.02, T=1.0)
    area = mesh.tri_area
    assert w.r0_values() @ area == pytest.approx(1.0, abs=1e-12)
    assert w.r1_values() @ area == pytest.approx(1.0, abs=1e-12)
    assert (w.r0_values() - w.r1_values()) @ area == pytest.approx(0.0, abs=1e-12)
    assert w.sigma0 >= 0.02


def test_quarter_five_spot_patches_disjoint():
    mesh = square_mesh(16)
    w = build_wells(mesh, (0.1, 0.1), (0.9, 0.9), 0.02, T=1.0)
    assert np.intersect1d(w.injection_tris, w.production_tris).size == 0


def test_overlapping_patches_rejected():
    mesh = square_mesh(4)
    with pytest.raises(DomainError):
        build_wells(mesh, (0.45, 0.5), (0.55, 0.5), 0.3, T=1.0)


def test_well_outside_domain_rejected():
    mesh = square_mesh(4)
    with pytest.raises(DomainError):
        build_wells(mesh, (1.5, 0.5), (0.2, 0.2), 0.02, T=1.0)


def test_coincident_wells_rejected():
    mesh = square_mesh(4)
    with pytest.raises(DomainError):
        build_wells(mesh, (0.5, 0.5), (0.5, 0.5), 0.02, T=1.0)


def test_terminal_weight_window():
    mesh = square_mesh(2)
    w = wells_from_tris(mesh, [0], [7], T=1.0, wtilde=3.0, epsilon=0.25)
    assert w.w(0.5) == 0.0
    assert w.w(0.74) == 0.0
    assert w.w(0.9) == pytest.approx(12.0)
    assert w.w(1.0) == pytest.approx(12.0)
    # the window integrates to wtilde
    ts = np.linspace(0.0, 1.0, 100001)
    integral = np.trapezoid([w.w(t) for t in ts], ts)
    assert integral == pytest.approx(3.0, rel=1e-3)


def test_well_model_validation():
    mesh = square_mesh(2)
    with pytest.raises(ConfigError):
        wells_from_tris(mesh, [0], [7], T=1.0, alpha0=0.0)
    with pytest.raises(ConfigError):
        wells_from_tris(mesh, [0], [7], T=1.0, epsilon=2.0)
    with pytest.raises(DomainError):
        wells_from_tris(mesh, [0, 1], [1, 2], T=1.0)


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

def test_run_config_grids():
    rc = RunConfig(T=2.0, m_steps=4, n_steps=12)
    assert rc.dt == pytest.approx(2.0 / 12.0)
    assert rc.dt_coarse == pytest.approx(0.5)
    assert rc.substeps == 3
    assert rc.fine_times().size == 13
    assert rc.coarse_times().size == 5


@pytest.mark.parametrize("kwargs", [
    {"T": -1.0},
    {"n_steps": 10, "m_steps": 4},
    {"xi": -2.0},
    {"c0": 1.5},
    {"kmax": 0},
])
def test_run_config_validation(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs)
