"""Implied-vol surfaces on a fixed maturity/moneyness grid: construction
from model parameters, static-arbitrage auditing, surface distance, and CSV
persistence.

Moneyness is strike over spot. Surfaces built from the exponential-affine
model at fixed moneyness are invariant to the spot level, which is why
datasets can be generated at unit spot and reused at any scale.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .affine import HestonParams, JumpSpec, MarketState
from .errors import AccuracyError, CrcvolError, NoArbitrageBandError
from .pricing import DampingConfig, call_prices

_CSV_HEADER = "tau_days,moneyness,iv"


@dataclass(frozen=True)
class Grid:
    """Rectangular quote grid: maturities in years, moneyness as K/S."""

    maturities: tuple
    moneyness: tuple

    def __post_init__(self):
        object.__setattr__(self, "maturities", tuple(float(t) for t in self.maturities))
        object.__setattr__(self, "moneyness", tuple(float(m) for m in self.moneyness))
        if not self.maturities or not self.moneyness:
            raise ValueError("grid must have at least one maturity and one moneyness")
        for t in self.maturities:
            if not (math.isfinite(t) and t > 0.0):
                raise ValueError(f"maturities must be positive, got {t}")
        for m in self.moneyness:
            if not (math.isfinite(m) and m > 0.0):
                raise ValueError(f"moneyness must be positive, got {m}")
        if any(b <= a for a, b in zip(self.maturities, self.maturities[1:])):
            raise ValueError("maturities must be strictly increasing")
        if any(b <= a for a, b in zip(self.moneyness, self.moneyness[1:])):
            raise ValueError("moneyness must be strictly increasing")

    @property
    def shape(self):
        return (len(self.maturities), len(self.moneyness))

    @property
    def days(self):
        return tuple(t * 365.0 for t in self.maturities)


def default_grid() -> Grid:
    """Ten log-spaced maturities from one week to about 14 months (in whole
    days over 365) by thirteen moneyness levels from 0.8 to 1.2."""
    days = (7, 11, 18, 28, 44, 70, 111, 175, 278, 440)
    money = tuple(0.8 + k / 30.0 for k in range(13))
    return Grid(tuple(d / 365.0 for d in days), money)


@dataclass(frozen=True)
class VolSurface:
    """Implied vols on a grid, with the spot the quotes refer to."""

    grid: Grid
    vols: np.ndarray
    spot: float

    def __post_init__(self):
        vols = np.array(self.vols, dtype=np.float64)
        if vols.shape != self.grid.shape:
            raise ValueError(
                f"vols shape {vols.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(vols)) or np.any(vols <= 0.0):
            raise ValueError("vols must be finite and positive")
        vols.setflags(write=False)
        object.__setattr__(self, "vols", vols)
        if not (math.isfinite(self.spot) and self.spot > 0.0):
            raise ValueError(f"spot must be positive, got {self.spot}")


@dataclass(frozen=True)
class ArbReport:
    """Static-arbitrage audit: lists of (maturity index, moneyness index,
    magnitude) for butterfly and calendar violations, and the largest one."""

    butterfly: tuple
    calendar: tuple
    max_violation: float

    @property
    def clean(self) -> bool:
        return not self.butterfly and not self.calendar


def _context(err: CrcvolError, where: str) -> CrcvolError:
    msg = f"{err} [{where}]"
    if isinstance(err, NoArbitrageBandError):
        return NoArbitrageBandError(msg, bound=err.bound)
    return type(err)(msg)


def build_surface(state: MarketState, p: HestonParams, j: JumpSpec,
                  grid: Grid = None, cfg: DampingConfig = None) -> VolSurface:
    """Price the full grid of calls and invert each to an implied vol.

    Pricing or inversion failures propagate with the offending grid
    coordinates appended to the message.
    """
    grid = grid or default_grid()
    cfg = cfg or DampingConfig()
    spot = state.spot
    money = np.asarray(grid.moneyness, dtype=np.float64)
    vols = np.empty(grid.shape, dtype=np.float64)
    for i, tau in enumerate(grid.maturities):
        where = f"grid maturity {i} (tau={tau:.6g}y)"
        try:
            prices = call_prices(state, p, j, spot * money, tau, cfg)
        except CrcvolError as e:
            raise _context(e, where) from e
        row, status = kernels.iv_batch(prices, spot, spot * money, tau, p.r, p.q, True)
        bad = np.nonzero(status)[0]
        if bad.size:
            jj = int(bad[0])
            st = int(status[jj])
            where = f"grid point ({i}, {jj}): tau={tau:.6g}y, moneyness={money[jj]:.6g}"
            if st == 1:
                raise NoArbitrageBandError(
                    f"price {prices[jj]:.6g} at or below the lower bound [{where}]",
                    bound="lower",
                )
            if st == 2:
                raise NoArbitrageBandError(
                    f"price {prices[jj]:.6g} at or above the upper bound [{where}]",
                    bound="upper",
                )
            raise AccuracyError(f"implied-vol iteration stalled [{where}]")
        vols[i] = row
    return VolSurface(grid=grid, vols=vols, spot=spot)


def check_static_arbitrage(surface: VolSurface, r: float, q: float,
                           tol: float = 1e-7) -> ArbReport:
    """Audit a surface for butterfly and calendar-spread violations.

    Butterfly: for each maturity, call prices (per unit spot, from the vols
    via Black-Scholes at the given carry) must be convex in strike; the
    reported magnitude is the negative part of the second divided difference
    scaled by the mean strike gap, which reduces to the plain second
    difference on a uniform grid. Calendar: total implied variance vol^2 *
    tau must not decrease in maturity at fixed moneyness. Fixed-moneyness
    calendar ordering is a proxy for the fixed-forward-moneyness condition;
    they coincide when r = q.
    """
    grid = surface.grid
    money = np.asarray(grid.moneyness, dtype=np.float64)
    n_t, n_m = grid.shape
    butterfly = []
    for i, tau in enumerate(grid.maturities):
        prices = kernels.bs_batch(1.0, money, tau, surface.vols[i], r, q, True)
        dk_l = money[1:-1] - money[:-2]
        dk_r = money[2:] - money[1:-1]
        cost = prices[:-2] * dk_r - prices[1:-1] * (dk_l + dk_r) + prices[2:] * dk_l
        mag = -cost / (0.5 * (dk_l + dk_r))
        for jj in np.nonzero(mag > tol)[0]:
            butterfly.append((i, int(jj) + 1, float(mag[jj])))
    calendar = []
    w = surface.vols**2 * np.asarray(grid.maturities)[:, None]
    drop = w[:-1] - w[1:]
    for i, jj in zip(*np.nonzero(drop > tol)):
        calendar.append((int(i), int(jj), float(drop[i, jj])))
    mags = [m for *_ij, m in butterfly] + [m for *_ij, m in calendar]
    return ArbReport(
        butterfly=tuple(butterfly),
        calendar=tuple(calendar),
        max_violation=max(mags, default=0.0),
    )


def delta_c(model: VolSurface, observed: VolSurface, spot: float,
            r: float = 0.0, q: float = 0.0) -> float:
    """Mean squared call-price distance between two surfaces on one grid.

    Vols convert to prices via Black-Scholes at the given spot and carry
    (zero carry by default, making this a fixed pseudometric on surfaces).
    Units are price squared.
    """
    if model.grid != observed.grid:
        raise ValueError("surfaces live on different grids")
    if not (math.isfinite(spot) and spot > 0.0):
        raise ValueError(f"spot must be positive, got {spot}")
    grid = model.grid
    strikes = spot * np.asarray(grid.moneyness, dtype=np.float64)
    total = 0.0
    for i, tau in enumerate(grid.maturities):
        pm = kernels.bs_batch(spot, strikes, tau, model.vols[i], r, q, True)
        po = kernels.bs_batch(spot, strikes, tau, observed.vols[i], r, q, True)
        diff = pm - po
        total += float(diff @ diff)
    return total / (grid.shape[0] * grid.shape[1])


def write_surface_csv(surface: VolSurface, path) -> None:
    """Write a surface as CSV rows (tau_days, moneyness, iv) in row-major
    grid order, full double precision."""
    lines = [_CSV_HEADER]
    for i, tau in enumerate(surface.grid.maturities):
        days = tau * 365.0
        for jj, m in enumerate(surface.grid.moneyness):
            lines.append(f"{days:.17g},{m:.17g},{surface.vols[i, jj]:.17g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_surface_csv(path, spot: float) -> VolSurface:
    """Read a surface written by ``write_surface_csv``.

    The file stores no spot, so the caller supplies the level the quotes
    refer to. Day counts within 1e-9 of an integer are snapped to day/365 so
    grids built from whole-day maturities round-trip bit-exactly.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != _CSV_HEADER:
        raise ValueError(
            f"{path}: expected header {_CSV_HEADER!r}, got {lines[0] if lines else 'empty file'!r}"
        )
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise ValueError(f"{path}: malformed row {ln!r}")
        days, m, iv = (float(x) for x in parts)
        if abs(days - round(days)) < 1e-9:
            tau = round(days) / 365.0
        else:
            tau = days / 365.0
        rows.append((tau, m, iv))
    taus = tuple(sorted({t for t, _, _ in rows}))
    money = tuple(sorted({m for _, m, _ in rows}))
    if len(rows) != len(taus) * len(money):
        raise ValueError(
            f"{path}: {len(rows)} rows do not fill a {len(taus)}x{len(money)} grid"
        )
    grid = Grid(taus, money)
    ti = {t: i for i, t in enumerate(taus)}
    mi = {m: i for i, m in enumerate(money)}
    vols = np.full(grid.shape, np.nan)
    for t, m, iv in rows:
        vols[ti[t], mi[m]] = iv
    if np.any(np.isnan(vols)):
        raise ValueError(f"{path}: duplicate rows leave grid cells unfilled")
    return VolSurface(grid=grid, vols=vols, spot=spot)
