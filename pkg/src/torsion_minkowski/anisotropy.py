"""Norms ``F`` of class I_p: values, gradients, duals and Wulff constants.

All evaluation methods are vectorised over an ``(m, 2)`` array of
arguments.  The PDE solver only needs ``F^2`` and its first two
derivatives, which every norm supplies through :meth:`AnisotropicNorm.square`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, ZeroArgument
from .geometry import ConvexPolygon, SupportVector, wulff_shape


def _as_points(xi) -> tuple[np.ndarray, bool]:
    x = np.asarray(xi, dtype=float)
    single = x.ndim == 1
    return x.reshape(-1, 2), single


def _check_nonzero(x: np.ndarray) -> None:
    if np.any((x[:, 0] == 0) & (x[:, 1] == 0)):
        raise ZeroArgument("norm gradient is undefined at the origin")


class AnisotropicNorm:
    """Base class; subclasses implement :meth:`square`."""

    kind = "abstract"

    def square(self, x: np.ndarray):
        """Return ``(G, dG, d2G)`` for ``G = F^2`` at rows of ``x``.

        Shapes are ``(m,)``, ``(m, 2)`` and ``(m, 2, 2)``.
        """
        raise NotImplementedError

    def __call__(self, xi):
        return self.value(xi)

    def value(self, xi):
        x, single = _as_points(xi)
        if np.any((x[:, 0] == 0) & (x[:, 1] == 0)):
            raise ZeroArgument("F is evaluated only at nonzero vectors")
        g = np.sqrt(self.square(x)[0])
        return float(g[0]) if single else g

    def grad(self, xi):
        x, single = _as_points(xi)
        _check_nonzero(x)
        G, dG, _ = self.square(x)
        out = dG / (2.0 * np.sqrt(G))[:, None]
        return out[0] if single else out

    def flux(self, xi, p: float):
        """``F^(p-1)(xi) grad F(xi)``, the vector field inside the operator."""
        x, single = _as_points(xi)
        _check_nonzero(x)
        G, dG, _ = self.square(x)
        out = 0.5 * G[:, None] ** (p / 2 - 1) * dG
        return out[0] if single else out

    def hessian_fp(self, xi, p: float):
        """Hessian of ``F^p / p`` (exact, from the derivatives of ``F^2``)."""
        x, single = _as_points(xi)
        _check_nonzero(x)
        G, dG, d2G = self.square(x)
        a = 0.5 * G ** (p / 2 - 1)
        b = 0.25 * (p - 2) * G ** (p / 2 - 2)
        out = a[:, None, None] * d2G + b[:, None, None] * np.einsum("mi,mj->mij", dG, dG)
        return out[0] if single else out

    def to_json(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True, eq=False)
class EllipseNorm(AnisotropicNorm):
    """``F(xi) = sqrt(xi^T A xi)`` with ``A`` symmetric positive definite."""

    A: np.ndarray = field(default_factory=lambda: np.eye(2))
    kind = "ellipse"

    def __post_init__(self):
        A = np.array(self.A, dtype=float).reshape(2, 2)
        if not np.allclose(A, A.T, rtol=0, atol=1e-14 * np.abs(A).max()):
            raise PreconditionError("ellipse matrix must be symmetric")
        if np.linalg.eigvalsh(A).min() <= 0:
            raise PreconditionError("ellipse matrix must be positive definite")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    def square(self, x):
        Ax = x @ self.A
        G = np.einsum("mi,mi->m", x, Ax)
        return G, 2.0 * Ax, np.broadcast_to(2.0 * self.A, (len(x), 2, 2))

    def to_json(self):
        return {"kind": self.kind, "A": self.A.tolist()}


@dataclass(frozen=True, eq=False)
class EuclideanNorm(EllipseNorm):
    kind = "euclidean"

    def to_json(self):
        return {"kind": self.kind}


@dataclass(frozen=True, eq=False)
class SmoothedLsNorm(AnisotropicNorm):
    """Smoothed ``l^s`` norm, normalised so that ``F(e_1) = 1``.

    ``F(xi) = c (sum_i (xi_i^2 + delta^2 |xi|^2)^(s/2))^(1/s)``.  The
    ``delta`` term keeps ``F^p`` strictly convex on the coordinate axes,
    where plain ``l^s`` (``s > 2``) has a degenerate Hessian.
    """

    s: float = 4.0
    delta: float = 1e-3
    kind = "smoothed-ls"

    def __post_init__(self):
        if self.s < 2:
            raise PreconditionError("smoothed-ls needs s >= 2")
        if self.delta <= 0:
            raise PreconditionError("smoothed-ls needs delta > 0")

    @property
    def _norm_const(self) -> float:
        s, d2 = self.s, self.delta**2
        raw = ((1 + d2) ** (s / 2) + d2 ** (s / 2)) ** (1 / s)
        return 1.0 / raw

    def square(self, x):
        s, d2 = self.s, self.delta**2
        r2 = np.einsum("mi,mi->m", x, x)
        a = x**2 + d2 * r2[:, None]
        b = a ** (s / 2 - 1)
        c = (s - 2) * a ** (s / 2 - 2)
        S = (a ** (s / 2)).sum(axis=1)
        B = b.sum(axis=1)
        C = c.sum(axis=1)
        dS = s * x * (b + d2 * B[:, None])
        eye = np.eye(2)
        cx = c * x
        d2S = s * (
            eye[None] * (b + d2 * B[:, None])[:, :, None]
            + x[:, :, None]
            * (
                cx[:, None, :] * eye[None]
                + d2 * c[:, :, None] * x[:, None, :]
                + d2 * cx[:, None, :]
                + d2 * d2 * (C[:, None] * x)[:, None, :]
            )
        )
        k2 = self._norm_const**2
        G = k2 * S ** (2 / s)
        dG = k2 * (2 / s) * S[:, None] ** (2 / s - 1) * dS
        d2G = k2 * (2 / s) * (
            S[:, None, None] ** (2 / s - 1) * d2S
            + (2 / s - 1) * S[:, None, None] ** (2 / s - 2) * np.einsum("mi,mj->mij", dS, dS)
        )
        return G, dG, d2G

    def to_json(self):
        return {"kind": self.kind, "s": self.s, "delta": self.delta}


def norm_from_config(cfg: dict | str | None) -> AnisotropicNorm:
    """Build a norm from its JSON config (or a bare kind name)."""
    if cfg is None:
        return EuclideanNorm()
    if isinstance(cfg, str):
        cfg = {"kind": cfg}
    kind = cfg.get("kind", "euclidean")
    if kind == "euclidean":
        return EuclideanNorm()
    if kind == "ellipse":
        if "A" not in cfg:
            raise PreconditionError("ellipse norm requires the matrix 'A'")
        return EllipseNorm(np.asarray(cfg["A"], dtype=float))
    if kind in ("smoothed-ls", "smoothed_ls"):
        return SmoothedLsNorm(float(cfg.get("s", 4.0)), float(cfg.get("delta", 1e-3)))
    raise PreconditionError(f"unknown norm kind {kind!r}")


@dataclass(frozen=True, eq=False)
class DualData:
    directions: np.ndarray
    F_values: np.ndarray
    wulff_body: ConvexPolygon
    kappa: float

    def dual_norm(self, xi):
        """``H^o(xi) = max_v <xi, v> / F(v)`` over the direction grid."""
        x, single = _as_points(xi)
        vals = (x @ self.directions.T / self.F_values).max(axis=1)
        return float(vals[0]) if single else vals


def dual_and_wulff(F: AnisotropicNorm, resolution: int = 4096) -> DualData:
    """Dual gauge, its unit ball ``{H^o < 1}`` and that ball's area."""
    if resolution < 64:
        raise PreconditionError("resolution must be at least 64")
    t = 2 * np.pi * np.arange(resolution) / resolution
    V = np.column_stack([np.cos(t), np.sin(t)])
    Fv = F.value(V)
    body = wulff_shape(SupportVector(V, Fv))
    return DualData(V, Fv, body, body.area)
