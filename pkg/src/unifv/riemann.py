"""Interface numerics: segment path, Osher-type (DOT) flux, jump terms.

All path integrals run along the straight segment between the two interface
traces and are evaluated with a fixed Gauss-Legendre rule.  The direction
flag eta (+1 forward, -1 backward) signs both the flux dissipation and the
non-conservative jump contribution so that one set of formulas serves both
time directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelSpec, NonDiagonalizableError, UnifiedModel, unify


@dataclass(frozen=True)
class PathQuadrature:
    """Quadrature rule on [0, 1] for segment-path integrals."""

    nodes: tuple
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights)
        s = np.asarray(self.nodes)
        if np.any(w <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(float(w.sum()) - 1.0) > 1e-14:
            raise ValueError("quadrature weights must sum to 1")
        if np.any(s < 0) or np.any(s > 1):
            raise ValueError("quadrature nodes must lie in [0, 1]")


def gauss_legendre_path(points: int = 3) -> PathQuadrature:
    """Gauss-Legendre rule mapped to [0, 1]; 3 points integrate degree 5."""
    x, w = np.polynomial.legendre.leggauss(points)
    return PathQuadrature(nodes=tuple((x + 1.0) / 2.0), weights=tuple(w / 2.0))


GAUSS3 = gauss_legendre_path(3)


def _pair(q_left, q_right):
    ql = np.asarray(q_left, dtype=float)
    qr = np.asarray(q_right, dtype=float)
    squeeze = ql.ndim == 1
    if squeeze:
        ql = ql[None, :]
        qr = qr[None, :]
    return ql, qr, squeeze


def segment_path(q_left, q_right, s: float):
    """Linear state path Psi(s) = QL + s (QR - QL), s in [0, 1]."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("path parameter must lie in [0, 1]")
    ql = np.asarray(q_left, dtype=float)
    qr = np.asarray(q_right, dtype=float)
    return ql + s * (qr - ql)


def dot_flux(model, q_left, q_right, eta: int, quad: PathQuadrature = GAUSS3):
    """Path-integrated Osher-type numerical flux.

    Central flux average minus eta/2 times the path integral of the model's
    absolute system matrix applied to dPsi/ds, so every wave family of the
    unified system is upwinded.  Consistency dot_flux(Q, Q, eta) = F(Q) is
    exact.
    """
    um = unify(model)
    ql, qr, squeeze = _pair(q_left, q_right)
    dq = qr - ql
    out = 0.5 * (um.flux(ql) + um.flux(qr))
    for s, w in zip(quad.nodes, quad.weights):
        psi = ql + s * dq
        out -= eta * 0.5 * w * um.abs_flux_jac_mul(psi, dq)
    return out[0] if squeeze else out


def jump_term(model, q_left, q_right, eta: int, quad: PathQuadrature = GAUSS3):
    """Non-conservative interface contribution eta/2 * int B(Psi) dPsi."""
    um = unify(model)
    ql, qr, squeeze = _pair(q_left, q_right)
    dq = qr - ql
    out = np.zeros_like(ql)
    for s, w in zip(quad.nodes, quad.weights):
        psi = ql + s * dq
        out += w * um.b_mul(psi, dq)
    out *= eta * 0.5
    return out[0] if squeeze else out


def matrix_abs(a: np.ndarray) -> np.ndarray:
    """|A| = R |Lambda| R^{-1} through a dense real eigendecomposition.

    Raises NonDiagonalizableError when the spectrum is complex or the
    eigenvector basis is numerically defective.  Small eigenvalues are kept
    as-is: no entropy modification is applied.
    """
    a = np.asarray(a, dtype=float)
    vals, vecs = np.linalg.eig(a)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.max(np.abs(vals.imag)) > 1e-9 * scale:
        raise NonDiagonalizableError("non-diagonalizable interface state: complex eigenvalues")
    vals = vals.real
    vecs = vecs.real
    if np.linalg.cond(vecs) > 1e12:
        raise NonDiagonalizableError("non-diagonalizable interface state: defective eigenbasis")
    return vecs @ np.diag(np.abs(vals)) @ np.linalg.inv(vecs)


def rusanov_flux(model: ModelSpec, u_left, u_right, b):
    """Local Lax-Friedrichs flux for the constraint PDE alone.

    The dissipation speed is the larger spectral radius of dR/dU on the two
    sides.
    """
    ul = np.asarray(u_left, dtype=float)
    ur = np.asarray(u_right, dtype=float)
    bb = np.asarray(b, dtype=float)
    squeeze = ul.ndim == 1
    if squeeze:
        ul = ul[None, :]
        ur = ur[None, :]
        bb = bb.reshape(1, -1)
    lam_l = np.max(np.abs(np.linalg.eigvals(model.flux_jacobian_U(ul, bb))), axis=-1)
    lam_r = np.max(np.abs(np.linalg.eigvals(model.flux_jacobian_U(ur, bb))), axis=-1)
    lam = np.maximum(lam_l.real, lam_r.real)
    out = 0.5 * (model.flux(ul, bb) + model.flux(ur, bb)) - 0.5 * lam[:, None] * (ur - ul)
    return out[0] if squeeze else out
