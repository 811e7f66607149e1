"""Coefficient functions, regularized well data, and run configuration.

The default coefficient set uses quadratic relative mobilities with a small
floor ``delta_floor`` so that the diffusion coefficient stays strictly
positive on [0, 1]:

    lam_o(c) = delta_floor + c**2          (oil mobility)
    lam_w(c) = delta_floor + (1 - c)**2    (water mobility)
    lam      = lam_o + lam_w
    alpha(c) = 1 / lam(c)                  (inverse total mobility)
    b(c)     = lam_o'(c) = 2 c
    D(c)     = lam * lam_o * lam_w * peclet
    f(c)     = -lam_o(c)

Permeability ``kappa(x)`` and porosity ``phi(x)`` enter as separate spatial
factors (both default to 1): the Darcy coefficient is alpha(c)/kappa(x) and
the diffusion coefficient kappa(x)*D(c).

Wells are regularized Dirac sources: disjoint patches of triangles around
the injection/production points, with densities 1/|patch| so each patch
integrates to one.  The terminal objective weight is a box window in time,
w(t) = wtilde/epsilon for t in the final window of width epsilon, whose
time integral is exactly wtilde.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError
from .mesh import PrimalMesh

_GRID = np.linspace(0.0, 1.0, 1001)


@dataclass(frozen=True)
class CoefficientModel:
    """Saturation-dependent coefficients with their sampled bounds.

    All callables accept numpy arrays.  ``kappa`` and ``phi`` map (n, 2)
    point arrays to (n,) values.
    """

    alpha: Callable
    alpha_prime: Callable
    b: Callable
    diffusion: Callable
    diffusion_prime: Callable
    f: Callable
    kappa: Callable
    phi: Callable
    a_low: float
    a_high: float
    d_low: float
    d_high: float
    phi_low: float
    phi_high: float
    lipschitz: dict = field(default_factory=dict)

    def validate(self, fd_step=1e-5, fd_tol=1e-6):
        """Check positivity bounds and derivative consistency on a 1001-grid.

        Raises :class:`ConfigError` when a bound fails or a finite-difference
        probe of alpha' or D' deviates by more than ``fd_tol``.
        """
        inv_alpha = 1.0 / self.alpha(_GRID)
        dvals = self.diffusion(_GRID)
        if inv_alpha.min() <= 0.0 or dvals.min() <= 0.0:
            raise ConfigError("coefficient bounds violated: alpha^-1 or D not positive")
        if not (
            self.a_low <= inv_alpha.min() + 1e-12
            and inv_alpha.max() <= self.a_high + 1e-12
        ):
            raise ConfigError("declared alpha bounds do not cover the samples")
        if not (self.d_low <= dvals.min() + 1e-12 and dvals.max() <= self.d_high + 1e-12):
            raise ConfigError("declared diffusion bounds do not cover the samples")
        interior = _GRID[(_GRID > fd_step) & (_GRID < 1.0 - fd_step)]
        for fun, der, name in (
            (self.alpha, self.alpha_prime, "alpha"),
            (self.diffusion, self.diffusion_prime, "D"),
        ):
            fd = (fun(interior + fd_step) - fun(interior - fd_step)) / (2.0 * fd_step)
            err = np.max(np.abs(fd - der(interior)))
            if err > fd_tol:
                raise ConfigError(f"{name}' disagrees with finite differences: {err:.2e}")
        return True


def default_model(delta_floor=0.05, peclet=1.0, kappa=None, phi=None) -> CoefficientModel:
    """Quadratic-mobility coefficient set with floored diffusion."""
    if delta_floor <= 0.0:
        raise ConfigError("delta_floor must be > 0")
    if peclet <= 0.0:
        raise ConfigError("peclet must be > 0")

    def lam_o(c):
        return delta_floor + np.square(c)

    def lam_w(c):
        return delta_floor + np.square(1.0 - c)

    def lam(c):
        return lam_o(c) + lam_w(c)

    def lam_prime(c):
        return 4.0 * np.asarray(c) - 2.0

    def alpha(c):
        return 1.0 / lam(c)

    def alpha_prime(c):
        return -lam_prime(c) / np.square(lam(c))

    def b(c):
        return 2.0 * np.asarray(c, dtype=float)

    def diffusion(c):
        return peclet * lam(c) * lam_o(c) * lam_w(c)

    def diffusion_prime(c):
        c = np.asarray(c, dtype=float)
        return peclet * (
            lam_prime(c) * lam_o(c) * lam_w(c)
            + lam(c) * 2.0 * c * lam_w(c)
            - lam(c) * lam_o(c) * 2.0 * (1.0 - c)
        )

    def f(c):
        return -lam_o(c)

    kappa = kappa if kappa is not None else (lambda pts: np.ones(np.asarray(pts).shape[0]))
    phi = phi if phi is not None else (lambda pts: np.ones(np.asarray(pts).shape[0]))

    inv_alpha = lam(_GRID)
    dvals = diffusion(_GRID)
    probe = np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]])
    phivals = phi(probe)

    def max_abs_slope(fun):
        vals = fun(_GRID)
        return float(np.max(np.abs(np.diff(vals) / np.diff(_GRID))))

    return CoefficientModel(
        alpha=alpha,
        alpha_prime=alpha_prime,
        b=b,
        diffusion=diffusion,
        diffusion_prime=diffusion_prime,
        f=f,
        kappa=kappa,
        phi=phi,
        a_low=float(inv_alpha.min()),
        a_high=float(inv_alpha.max()),
        d_low=float(dvals.min()),
        d_high=float(dvals.max()),
        phi_low=float(np.min(phivals)),
        phi_high=float(np.max(phivals)),
        lipschitz={
            "alpha": max_abs_slope(alpha),
            "b": 2.0,
            "D": max_abs_slope(diffusion),
            "f": max_abs_slope(f),
        },
    )


def unit_model() -> CoefficientModel:
    """Constant-coefficient model (alpha = D = 1, b = f' ... all frozen).

    Handy for linear manufactured-solution studies of the Darcy block.
    """
    one = lambda c: np.ones_like(np.asarray(c, dtype=float))
    zero = lambda c: np.zeros_like(np.asarray(c, dtype=float))
    ptsone = lambda pts: np.ones(np.asarray(pts).shape[0])
    return CoefficientModel(
        alpha=one,
        alpha_prime=zero,
        b=zero,
        diffusion=one,
        diffusion_prime=zero,
        f=zero,
        kappa=ptsone,
        phi=ptsone,
        a_low=1.0,
        a_high=1.0,
        d_low=1.0,
        d_high=1.0,
        phi_low=1.0,
        phi_high=1.0,
    )


@dataclass(frozen=True)
class WellModel:
    """Regularized injection/production wells plus objective prices.

    ``injection_tris`` / ``production_tris`` are disjoint triangle index
    sets; the source densities are 1/sigma_i on each patch so both
    integrate to exactly one.
    """

    mesh: PrimalMesh
    x0: np.ndarray
    x1: np.ndarray
    injection_tris: np.ndarray
    production_tris: np.ndarray
    sigma0: float
    sigma1: float
    wtilde: float
    epsilon: float
    alpha0: float
    qhat: float
    T: float

    def __post_init__(self):
        if self.alpha0 <= 0.0:
            raise ConfigError("alpha0 (water price) must be > 0")
        if self.qhat <= 0.0:
            raise ConfigError("qhat (control bound) must be > 0")
        if self.epsilon <= 0.0 or self.epsilon > self.T:
            raise ConfigError("epsilon must lie in (0, T]")
        if np.intersect1d(self.injection_tris, self.production_tris).size:
            raise DomainError("well patches overlap")

    @property
    def sigma(self):
        """Patch area (the two patches match in area on symmetric setups)."""
        return self.sigma0

    def r0_values(self):
        """Element-wise density of the injection source, integrates to 1."""
        r = np.zeros(self.mesh.num_triangles)
        r[self.injection_tris] = 1.0 / self.sigma0
        return r

    def r1_values(self):
        r = np.zeros(self.mesh.num_triangles)
        r[self.production_tris] = 1.0 / self.sigma1
        return r

    def w(self, t):
        """Terminal objective weight at time t.

        Nonzero (= wtilde/epsilon) on the window (T - epsilon, T]; the open
        left end makes the right-endpoint time quadrature of the window
        integrate to exactly wtilde.
        """
        if t > self.T - self.epsilon + 1e-12 * max(self.T, 1.0) and t <= self.T + 1e-12:
            return self.wtilde / self.epsilon
        return 0.0


def build_wells(
    mesh: PrimalMesh,
    x0,
    x1,
    target_sigma,
    *,
    T,
    wtilde=1.0,
    epsilon=None,
    alpha0=1.0,
    qhat=1.0,
) -> WellModel:
    """Construct well patches as the smallest barycentre-balls of triangles
    reaching ``target_sigma`` in area around each well point.

    Raises :class:`DomainError` when a well point lies outside the mesh or
    the two patches overlap.
    """
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if np.allclose(x0, x1):
        raise DomainError("injection and production wells coincide")
    if epsilon is None:
        epsilon = T / 10.0

    patches = []
    sigmas = []
    for x in (x0, x1):
        if not _point_in_mesh(mesh, x):
            raise DomainError(f"well at {x.tolist()} lies outside the domain")
        dist = np.linalg.norm(mesh.barycentre - x, axis=1)
        order = np.argsort(dist, kind="stable")
        acc = np.cumsum(mesh.tri_area[order])
        count = int(np.searchsorted(acc, target_sigma - 1e-14) + 1)
        count = min(count, mesh.num_triangles)
        patches.append(np.sort(order[:count]))
        sigmas.append(float(acc[count - 1]))

    return WellModel(
        mesh=mesh,
        x0=x0,
        x1=x1,
        injection_tris=patches[0],
        production_tris=patches[1],
        sigma0=sigmas[0],
        sigma1=sigmas[1],
        wtilde=wtilde,
        epsilon=float(epsilon),
        alpha0=alpha0,
        qhat=qhat,
        T=float(T),
    )


def wells_from_tris(mesh, injection_tris, production_tris, *, T, wtilde=1.0,
                    epsilon=None, alpha0=1.0, qhat=1.0) -> WellModel:
    """Well patches from explicit triangle index sets.

    Used by convergence studies that need the same geometric patch on every
    refinement level.
    """
    injection_tris = np.asarray(injection_tris, dtype=np.int64)
    production_tris = np.asarray(production_tris, dtype=np.int64)
    if injection_tris.size == 0 or production_tris.size == 0:
        raise DomainError("well patches must be non-empty")
    if epsilon is None:
        epsilon = T / 10.0
    bc0 = mesh.barycentre[injection_tris].mean(axis=0)
    bc1 = mesh.barycentre[production_tris].mean(axis=0)
    return WellModel(
        mesh=mesh,
        x0=bc0,
        x1=bc1,
        injection_tris=np.sort(injection_tris),
        production_tris=np.sort(production_tris),
        sigma0=float(mesh.tri_area[injection_tris].sum()),
        sigma1=float(mesh.tri_area[production_tris].sum()),
        wtilde=wtilde,
        epsilon=float(epsilon),
        alpha0=alpha0,
        qhat=qhat,
        T=float(T),
    )


def _cross2(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _point_in_mesh(mesh, x, tol=1e-12):
    pts = mesh.tri_vertices()
    v0, v1, v2 = pts[:, 0], pts[:, 1], pts[:, 2]
    d = _cross2(v1 - v0, v2 - v0)
    l1 = _cross2(v1 - x, v2 - x) / d
    l2 = _cross2(v2 - x, v0 - x) / d
    l3 = 1.0 - l1 - l2
    return bool(np.any(np.minimum(np.minimum(l1, l2), l3) >= -tol))


@dataclass(frozen=True)
class RunConfig:
    """Time grids, scheme parameters, and solver knobs.

    The pressure grid has ``m_steps`` uniform intervals and the saturation
    grid ``n_steps`` (a multiple of ``m_steps``).  ``xi`` is the interior
    penalty constant; ``None`` resolves to 10 * d_high of the model in use.
    """

    T: float = 1.0
    m_steps: int = 4
    n_steps: int = 16
    xi: Optional[float] = None
    delta_floor: float = 0.05
    peclet: float = 1.0
    c0: float = 0.5
    q_init: Optional[float] = None
    kmax: int = 50
    q_tol: float = 1e-9
    solver_tol: float = 1e-10
    tri_quad_degree: int = 4
    edge_quad_degree: int = 3

    def __post_init__(self):
        if self.T <= 0.0:
            raise ConfigError("T must be > 0")
        if self.m_steps < 1 or self.n_steps < 1:
            raise ConfigError("step counts must be >= 1")
        if self.n_steps % self.m_steps != 0:
            raise ConfigError("n_steps must be a multiple of m_steps")
        if self.xi is not None and self.xi <= 0.0:
            raise ConfigError("xi must be > 0")
        if not 0.0 <= self.c0 <= 1.0:
            raise ConfigError("c0 must lie in [0, 1]")
        if self.kmax < 1:
            raise ConfigError("kmax must be >= 1")

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def dt_coarse(self):
        return self.T / self.m_steps

    @property
    def substeps(self):
        return self.n_steps // self.m_steps

    def fine_times(self):
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def coarse_times(self):
        return np.linspace(0.0, self.T, self.m_steps + 1)

    def with_(self, **kwargs):
        return replace(self, **kwargs)
