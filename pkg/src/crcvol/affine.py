"""Model state types and the exponential-affine transform of the log price.

The model is a square-root stochastic-variance diffusion with deterministic
carry (rate r, yield q) plus an independent compound-Poisson jump stream
whose lognormal jump-size law is piecewise constant over calendar-time
buckets. The conditional transform is exponential-affine:

    E[exp(z * X_tau) | x0, v0] = exp(z * x0 + phi(z, tau) + psi(z, tau) * v0
                                     + mu_jump(z, tau))

with phi/psi the closed-form Riccati flow from `kernels` (carry drift
included in phi) and mu_jump the bucketed jump cumulant, compensated so
z = 1 is a martingale direction.

``riccati_solve`` / ``jump_cumulant`` work in the exponent argument z;
``char_fn`` / ``forward_characteristic`` take the Fourier argument u and
evaluate at z = i*u.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NumericDomainError

#: left edges of the jump calendar buckets plus the final right edge, in
#: years (365-day convention); the last bucket extends beyond the final edge
DEFAULT_BUCKET_EDGES = (
    0.0,
    11.0 / 365.0,
    28.0 / 365.0,
    70.0 / 365.0,
    175.0 / 365.0,
    440.0 / 365.0,
)


def _require_finite(name, value):
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class HestonParams:
    """Diffusion parameters and carry. Feller's condition is enforced strictly."""

    r: float
    q: float
    kappa: float
    theta: float
    sigma: float
    rho: float

    def __post_init__(self):
        for name in ("r", "q", "kappa", "theta", "sigma", "rho"):
            _require_finite(name, getattr(self, name))
        if self.kappa <= 0.0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.theta <= 0.0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        if 2.0 * self.kappa * self.theta <= self.sigma * self.sigma:
            raise ValueError(
                "Feller condition violated: need 2*kappa*theta > sigma^2, got "
                f"2*{self.kappa}*{self.theta} <= {self.sigma}^2"
            )


@dataclass(frozen=True)
class MarketState:
    """Current log price x, instantaneous variance v, and a reference spot
    level used for reporting (defaults to exp(x))."""

    x: float
    v: float
    s0_ref: float = None  # type: ignore[assignment]

    def __post_init__(self):
        _require_finite("x", self.x)
        _require_finite("v", self.v)
        if self.v < 0.0:
            raise ValueError(f"variance v must be non-negative, got {self.v}")
        if self.s0_ref is None:
            object.__setattr__(self, "s0_ref", math.exp(self.x))
        else:
            _require_finite("s0_ref", self.s0_ref)
            if self.s0_ref <= 0.0:
                raise ValueError(f"s0_ref must be positive, got {self.s0_ref}")

    @property
    def spot(self) -> float:
        return math.exp(self.x)


@dataclass(frozen=True)
class JumpSpec:
    """Compound-Poisson jump stream: constant intensity, lognormal sizes with
    bucket-dependent location ``nus`` and scale ``deltas`` over calendar-time
    buckets delimited by ``edges`` (len(nus) + 1 entries, first one 0)."""

    intensity: float
    nus: tuple
    deltas: tuple
    edges: tuple = DEFAULT_BUCKET_EDGES

    def __post_init__(self):
        object.__setattr__(self, "nus", tuple(float(v) for v in self.nus))
        object.__setattr__(self, "deltas", tuple(float(v) for v in self.deltas))
        object.__setattr__(self, "edges", tuple(float(v) for v in self.edges))
        _require_finite("intensity", self.intensity)
        if self.intensity < 0.0:
            raise ValueError(f"intensity must be non-negative, got {self.intensity}")
        if len(self.nus) != len(self.deltas):
            raise ValueError(
                f"nus and deltas disagree in length: {len(self.nus)} vs {len(self.deltas)}"
            )
        if len(self.edges) != len(self.nus) + 1:
            raise ValueError(
                f"need {len(self.nus) + 1} edges for {len(self.nus)} buckets, got {len(self.edges)}"
            )
        for name, seq in (("nus", self.nus), ("deltas", self.deltas), ("edges", self.edges)):
            for v in seq:
                _require_finite(name, v)
        if any(d < 0.0 for d in self.deltas):
            raise ValueError("deltas must be non-negative")
        if self.edges[0] != 0.0:
            raise ValueError(f"first bucket edge must be 0, got {self.edges[0]}")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError(f"edges must be strictly increasing, got {self.edges}")

    def bucket_index(self, t: float) -> int:
        """Bucket active at calendar time t (right-open membership; times past
        the final edge belong to the last bucket)."""
        if t < 0.0:
            raise ValueError(f"calendar time must be non-negative, got {t}")
        for bi in range(len(self.nus) - 1):
            if t < self.edges[bi + 1]:
                return bi
        return len(self.nus) - 1


def flat_jump_spec(intensity: float, nu: float, delta: float, edges=DEFAULT_BUCKET_EDGES) -> JumpSpec:
    """Jump spec with one lognormal law replicated across all buckets."""
    nb = len(edges) - 1
    return JumpSpec(intensity, (nu,) * nb, (delta,) * nb, tuple(edges))


@dataclass(frozen=True)
class RiccatiSolution:
    """Exponent coefficients at a single (z, tau): drift part phi and
    variance loading psi."""

    phi: complex
    psi: complex


def riccati_solve(u: complex, tau: float, p: HestonParams) -> RiccatiSolution:
    """Closed-form Riccati flow at exponent argument u and horizon tau.

    Raises NumericDomainError when the flow explodes at or before tau.
    """
    if tau < 0.0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    phi, psi, blown = kernels.riccati_batch(
        np.array([complex(u)]), tau, p.kappa, p.theta, p.sigma, p.rho, p.r, p.q
    )
    if blown[0]:
        raise NumericDomainError(
            f"Riccati flow explodes at or before tau={tau} for argument u={u}"
        )
    return RiccatiSolution(phi=complex(phi[0]), psi=complex(psi[0]))


def jump_cumulant(u: complex, tau: float, j: JumpSpec) -> complex:
    """Compensated jump exponent at exponent argument u over [0, tau]."""
    if tau < 0.0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    val, blown = kernels.cumulant_batch(
        np.array([complex(u)]), tau, j.intensity, j.nus, j.deltas, j.edges
    )
    if blown[0]:
        raise NumericDomainError(
            f"jump cumulant overflows for argument u={u} at tau={tau}"
        )
    return complex(val[0])


def char_fn_batch(u, tau: float, state: MarketState, p: HestonParams, j: JumpSpec):
    """Characteristic function E[exp(i*u*X_tau)] on an array of real or
    complex Fourier arguments u. Returns (values, blown) without raising."""
    z = 1j * np.asarray(u, dtype=np.complex128)
    phi, psi, blown_r = kernels.riccati_batch(
        z, tau, p.kappa, p.theta, p.sigma, p.rho, p.r, p.q
    )
    mu, blown_j = kernels.cumulant_batch(z, tau, j.intensity, j.nus, j.deltas, j.edges)
    expo = z * state.x + phi + psi * state.v + mu
    blown = blown_r | blown_j | (expo.real > 700.0)
    vals = np.exp(np.where(blown, 0.0, expo))
    vals = np.where(blown, 0.0, vals)
    return vals, blown


def char_fn(u, tau: float, state: MarketState, p: HestonParams, j: JumpSpec) -> complex:
    """Characteristic function E[exp(i*u*X_tau)] at a single Fourier argument.

    Raises NumericDomainError when the exponent explodes or overflows.
    """
    if tau < 0.0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    vals, blown = char_fn_batch(np.array([u]), tau, state, p, j)
    if blown[0]:
        raise NumericDomainError(
            f"characteristic function explodes for u={u} at tau={tau}"
        )
    return complex(vals[0])


def _jump_rate(z: complex, t_cal: float, j: JumpSpec) -> complex:
    """Instantaneous compensated jump exponent rate at calendar time t_cal."""
    if j.intensity == 0.0:
        return 0.0 + 0.0j
    bi = j.bucket_index(t_cal)
    nu_b = j.nus[bi]
    de_b = j.deltas[bi]
    zd = z * de_b
    term = np.exp(z * nu_b + 0.5 * zd * zd) - 1.0
    comp = z * math.expm1(nu_b + 0.5 * de_b * de_b)
    return complex(j.intensity * (term - comp))


def forward_characteristic(
    u: float, x_ttm: float, t_cal: float, v: float, p: HestonParams, j: JumpSpec
) -> complex:
    """Instantaneous exponent rate of the conditional transform: the
    derivative in time-to-maturity x_ttm of log E_t[exp(i*u*X_{t+x_ttm})],
    holding the time-t state fixed at variance v. The jump clock sits at
    calendar time t_cal + x_ttm.

    Integrating this rate over x_ttm recovers the log characteristic
    function up to the i*u*x_t term.
    """
    if x_ttm < 0.0:
        raise ValueError(f"x_ttm must be non-negative, got {x_ttm}")
    z = 1j * u
    if x_ttm == 0.0:
        psi_x = 0.0 + 0.0j
    else:
        sol = riccati_solve(z, x_ttm, p)
        psi_x = sol.psi
    drift = (
        p.kappa * p.theta * psi_x
        + (p.r - p.q) * z
        + _jump_rate(z, t_cal + x_ttm, j)
    )
    quad = (
        0.5 * z * (z - 1.0)
        + 0.5 * p.sigma * p.sigma * psi_x * psi_x
        + (p.sigma * p.rho * z - p.kappa) * psi_x
    )
    out = drift + quad * v
    if not (math.isfinite(out.real) and math.isfinite(out.imag)):
        raise NumericDomainError(
            f"forward characteristic overflows for u={u}, x_ttm={x_ttm}"
        )
    return complex(out)
