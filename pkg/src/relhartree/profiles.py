"""Phase-space profiles built from sums of Gaussians.

The same descriptor seeds the quantum initial data (through the coherent
mixture) and the classical Vlasov solver, so both start from one ``f0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erf

__all__ = ["PhaseSpaceGaussian", "GaussianProfile"]


def _tuple(value, d: int) -> tuple[float, ...]:
    return tuple(float(v) for v in np.broadcast_to(np.asarray(value, dtype=float), (d,)))


@dataclass(frozen=True)
class PhaseSpaceGaussian:
    """``weight * exp(-|x-x0|^2/(2 sx^2) - |xi-xi0|^2/(2 sxi^2))`` (per axis widths)."""

    weight: float
    center_x: tuple[float, ...]
    center_xi: tuple[float, ...]
    width_x: tuple[float, ...]
    width_xi: tuple[float, ...]

    @classmethod
    def create(cls, weight, center_x, center_xi, width_x, width_xi, d: int = 1) -> "PhaseSpaceGaussian":
        g = cls(
            float(weight),
            _tuple(center_x, d),
            _tuple(center_xi, d),
            _tuple(width_x, d),
            _tuple(width_xi, d),
        )
        if g.weight < 0:
            raise ValueError("profile weights must be non-negative")
        if min(g.width_x + g.width_xi) <= 0:
            raise ValueError("profile widths must be positive")
        return g

    @property
    def mass(self) -> float:
        return self.weight * float(np.prod(2 * np.pi * np.array(self.width_x) * np.array(self.width_xi)))


@dataclass(frozen=True)
class GaussianProfile:
    """Non-negative phase-space density ``f0(x, xi)`` as a sum of Gaussians."""

    components: tuple[PhaseSpaceGaussian, ...]

    def __post_init__(self) -> None:
        if not self.components:
            raise ValueError("profile needs at least one component")
        dims = {len(c.center_x) for c in self.components}
        if len(dims) != 1:
            raise ValueError("all components must share one dimension")

    @classmethod
    def single(cls, weight, center_x, center_xi, width_x, width_xi, d: int = 1) -> "GaussianProfile":
        return cls((PhaseSpaceGaussian.create(weight, center_x, center_xi, width_x, width_xi, d),))

    @classmethod
    def from_dicts(cls, items: Sequence[dict], d: int) -> "GaussianProfile":
        return cls(tuple(
            PhaseSpaceGaussian.create(
                it["weight"], it["center_x"], it["center_xi"], it["width_x"], it["width_xi"], d
            )
            for it in items
        ))

    def to_dicts(self) -> list[dict]:
        return [
            {
                "weight": c.weight,
                "center_x": list(c.center_x),
                "center_xi": list(c.center_xi),
                "width_x": list(c.width_x),
                "width_xi": list(c.width_xi),
            }
            for c in self.components
        ]

    @property
    def dim(self) -> int:
        return len(self.components[0].center_x)

    @property
    def mass(self) -> float:
        return float(sum(c.mass for c in self.components))

    def __call__(self, x: Sequence[np.ndarray] | np.ndarray, xi: Sequence[np.ndarray] | np.ndarray,
                 period: Sequence[float] | None = None) -> np.ndarray:
        """Evaluate on broadcastable coordinate arrays (one per axis).

        With ``period`` given, the x-dependence is summed over the nearest
        periodic images, which is the profile seen on a torus.
        """
        d = self.dim
        xs = [np.asarray(x)] if d == 1 and not isinstance(x, (list, tuple)) else [np.asarray(v) for v in x]
        xis = [np.asarray(xi)] if d == 1 and not isinstance(xi, (list, tuple)) else [np.asarray(v) for v in xi]
        total = 0.0
        for c in self.components:
            term = c.weight
            for a in range(d):
                if period is None:
                    gx = np.exp(-((xs[a] - c.center_x[a]) ** 2) / (2 * c.width_x[a] ** 2))
                else:
                    gx = sum(
                        np.exp(-((xs[a] - c.center_x[a] + m * period[a]) ** 2) / (2 * c.width_x[a] ** 2))
                        for m in (-2, -1, 0, 1, 2)
                    )
                term = term * gx * np.exp(-((xis[a] - c.center_xi[a]) ** 2) / (2 * c.width_xi[a] ** 2))
            total = total + term
        return np.asarray(total, dtype=float)

    def bounding_box(self, nsig: float = 6.0) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(x_lo, x_hi, xi_lo, xi_hi) arrays enclosing every component to ``nsig`` widths."""
        cx = np.array([c.center_x for c in self.components])
        cxi = np.array([c.center_xi for c in self.components])
        wx = np.array([c.width_x for c in self.components])
        wxi = np.array([c.width_xi for c in self.components])
        return (
            (cx - nsig * wx).min(axis=0),
            (cx + nsig * wx).max(axis=0),
            (cxi - nsig * wxi).min(axis=0),
            (cxi + nsig * wxi).max(axis=0),
        )

    def box_mass(self, x_lo, x_hi, xi_lo, xi_hi) -> np.ndarray:
        """Mass inside axis-aligned boxes; bounds broadcast as arrays with trailing axis d."""
        x_lo, x_hi, xi_lo, xi_hi = (np.asarray(v, dtype=float) for v in (x_lo, x_hi, xi_lo, xi_hi))

        def interval(lo, hi, c, s):
            return 0.5 * (erf((hi - c) / (np.sqrt(2) * s)) - erf((lo - c) / (np.sqrt(2) * s))) * np.sqrt(2 * np.pi) * s

        total = 0.0
        for comp in self.components:
            term = comp.weight
            for a in range(self.dim):
                term = term * interval(x_lo[..., a], x_hi[..., a], comp.center_x[a], comp.width_x[a])
                term = term * interval(xi_lo[..., a], xi_hi[..., a], comp.center_xi[a], comp.width_xi[a])
            total = total + term
        return np.asarray(total)

    def support_radius(self) -> tuple[np.ndarray, np.ndarray]:
        """Half extent of the 3-sigma box per axis, in x and in xi."""
        x_lo, x_hi, xi_lo, xi_hi = self.bounding_box(3.0)
        return (x_hi - x_lo) / 2, (xi_hi - xi_lo) / 2
