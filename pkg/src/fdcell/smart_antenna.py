"""
UE-side uniform linear array processing.

Conventions
-----------
Element ``x`` (``x = 0..Nr-1``) of the steering vector toward angle ``psi`` is
``a_x = exp(-2j*pi*x*d*sin(psi))`` with ``d`` the spacing in wavelengths and
``psi`` measured from broadside. A weight vector ``W`` combines the antennas as
``y = sum_k w_k y_k``, so the array gain toward ``psi`` is ``a(psi)^T W``. The
same weights are reused on transmit: antenna ``k`` radiates ``a_k w_k s``.

Beam design is a linearly constrained minimum-output-power problem solved with
Frost's constrained LMS: a gradient step on output power followed by a
projection back onto ``{W : A^T W = f}``. With the constraint set of one look
direction (``f = 1``) and the other UEs (``f = 0``) the array keeps unit gain
toward the eNB and places nulls on the other UEs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .numerics import DimensionError, RngStream, complex_gaussian

__all__ = [
    "DoaEstimationError",
    "BeamformerState",
    "steering_vector",
    "steering_matrix",
    "array_gain",
    "beam_pattern",
    "quiescent_weights",
    "lcmv_weights",
    "clms_train",
    "root_music_doa",
    "music_spectrum",
    "array_snapshots",
    "rx_combine",
    "tx_steer",
]


class DoaEstimationError(RuntimeError):
    """Root-MUSIC could not produce the requested number of valid angles."""


def steering_vector(psi, n_r: int, spacing_wl: float = 0.45) -> np.ndarray:
    """Array response ``exp(-2j pi x d sin psi)``; `psi` in radians.

    A scalar `psi` gives shape ``(n_r,)``; an array of angles gives
    ``psi.shape + (n_r,)``.
    """
    if n_r < 1:
        raise ValueError("need at least one antenna")
    psi = np.asarray(psi, dtype=float)
    x = np.arange(n_r)
    return np.exp(-2j * np.pi * spacing_wl * np.sin(psi)[..., None] * x)


def steering_matrix(psis, n_r: int, spacing_wl: float = 0.45) -> np.ndarray:
    """Columns are steering vectors, shape ``(n_r, len(psis))``."""
    psis = np.atleast_1d(np.asarray(psis, dtype=float))
    return steering_vector(psis, n_r, spacing_wl).T


def array_gain(w, psi, spacing_wl: float = 0.45) -> np.ndarray:
    """Complex gain ``a(psi)^T W`` for one or many angles."""
    w = np.asarray(w, dtype=complex)
    return steering_vector(psi, w.size, spacing_wl) @ w


def beam_pattern(w, spacing_wl: float, grid) -> np.ndarray:
    """Power pattern ``|a(psi)^T W|^2`` over `grid` (radians)."""
    return np.abs(array_gain(w, grid, spacing_wl)) ** 2


def _constraint_ops(a: np.ndarray, f: np.ndarray):
    """Projection ``P`` and quiescent vector ``F`` for the constraint ``A^T W = f``."""
    c = a.conj()
    gram = c.conj().T @ c
    if np.linalg.matrix_rank(gram) < c.shape[1]:
        raise ValueError("constraint directions are linearly dependent")
    ginv = np.linalg.inv(gram)
    quiescent = c @ ginv @ f
    proj = np.eye(c.shape[0]) - c @ ginv @ c.conj().T
    return proj, quiescent


def _response(a: np.ndarray, f) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    if f is None:
        f = np.zeros(a.shape[1], dtype=complex)
        f[0] = 1.0
    f = np.asarray(f, dtype=complex)
    if a.shape[1] > a.shape[0]:
        raise ValueError(f"{a.shape[1]} constraints exceed {a.shape[0]} antennas")
    if f.shape != (a.shape[1],):
        raise DimensionError("response vector length must equal constraint count")
    return f


def quiescent_weights(a, f=None) -> np.ndarray:
    """Minimum-norm ``W`` with ``A^T W = f``; ``f`` defaults to ``[1, 0, ...]``."""
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    f = _response(a, f)
    return _constraint_ops(a, f)[1]


def lcmv_weights(a, cov, f=None) -> np.ndarray:
    """Closed-form minimum-power solution under ``A^T W = f``.

    `cov` is the covariance of the antenna signals ``E[x x^H]``. The combiner
    output power ``E|W^T x|^2`` equals ``W^H conj(cov) W``, so ``conj(cov)``
    enters the usual LCMV formula.
    """
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    f = _response(a, f)
    c = a.conj()
    rz_inv = np.linalg.inv(np.asarray(cov, dtype=complex).conj())
    return rz_inv @ c @ np.linalg.solve(c.conj().T @ rz_inv @ c, f)


@dataclass
class BeamformerState:
    """Weights and constraints of one UE beam.

    Attributes
    ----------
    weights : ndarray, shape (Nr,)
    constraints : ndarray, shape (Nr, C)
        Steering columns; the first is the look direction.
    response : ndarray, shape (C,)
    mu : float
    iterations : int
    residual : float
        ``max |A^T W - f|`` after the last iteration.
    doas : ndarray
        Constraint angles in radians, in column order.
    """

    weights: np.ndarray
    constraints: np.ndarray
    response: np.ndarray
    mu: float
    iterations: int
    residual: float
    doas: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def converged(self) -> bool:
        return self.residual < 1e-3

    def gain(self, psi, spacing_wl: float) -> np.ndarray:
        return array_gain(self.weights, psi, spacing_wl)


def clms_train(a, snapshots, mu: float = 0.01, iters: int = 500, f=None,
               doas=None) -> BeamformerState:
    """Frost constrained LMS over cycled snapshots.

    Parameters
    ----------
    a : ndarray, shape (Nr, C)
        Constraint steering columns; column 0 is the look direction.
    snapshots : ndarray, shape (Nr, T)
        Antenna samples; iteration ``p`` uses column ``p mod T``.
    mu : float
        Step size. A warning is issued above ``1 / (3 trace R)``.
    iters : int
    f : array_like, optional
        Desired responses, default ``[1, 0, ..., 0]``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    f = _response(a, f)
    x = np.asarray(snapshots, dtype=complex)
    if x.ndim != 2 or x.shape[0] != a.shape[0]:
        raise DimensionError("snapshots must have shape (Nr, T) matching the constraints")
    if mu < 0 or iters < 0:
        raise ValueError("mu and iters must be non-negative")
    proj, quiescent = _constraint_ops(a, f)
    z = x.conj()
    trace = float(np.real(np.sum(np.abs(x) ** 2))) / x.shape[1]
    if trace > 0 and mu >= 1.0 / (3.0 * trace):
        warnings.warn(f"step size {mu} exceeds the stability bound {1 / (3 * trace):.3g}",
                      RuntimeWarning, stacklevel=2)

    w = quiescent.copy()
    t = x.shape[1]
    for p in range(iters):
        zp = z[:, p % t]
        y = np.vdot(w, zp)
        w = proj @ (w - mu * zp * np.conj(y)) + quiescent
    residual = float(np.max(np.abs(a.T @ w - f)))
    return BeamformerState(w, a, f, mu, iters, residual,
                           np.zeros(0) if doas is None else np.asarray(doas, dtype=float))


def array_snapshots(rng: RngStream, doas, n_r: int, spacing_wl: float, n_snap: int,
                    snr_db: float | None) -> np.ndarray:
    """Narrowband snapshots: unit-power sources at `doas` plus white noise.

    ``snr_db = None`` gives noiseless snapshots.
    """
    a = steering_matrix(doas, n_r, spacing_wl)
    s = complex_gaussian(rng.child(0), (a.shape[1], n_snap), 1.0)
    x = a @ s
    if snr_db is not None:
        x = x + complex_gaussian(rng.child(1), x.shape, 10 ** (-snr_db / 10.0))
    return x


def _noise_projector(x: np.ndarray, n_sources: int) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2:
        raise DimensionError("snapshots must be a 2-D (Nr, T) matrix")
    n_r, t = x.shape
    if not 0 < n_sources < n_r:
        raise ValueError(f"need 0 < n_sources < Nr, got {n_sources} for Nr={n_r}")
    if t < n_r:
        raise ValueError(f"{t} snapshots cannot give a full-rank {n_r}x{n_r} covariance")
    r = x @ x.conj().T / t
    _, vecs = np.linalg.eigh(r)
    en = vecs[:, : n_r - n_sources]
    return en @ en.conj().T


def music_spectrum(snapshots, n_sources: int, spacing_wl: float, grid) -> np.ndarray:
    """Spectral MUSIC pseudo-spectrum ``1 / (a^H En En^H a)`` over `grid` (radians)."""
    cn = _noise_projector(snapshots, n_sources)
    a = steering_vector(grid, cn.shape[0], spacing_wl)
    denom = np.real(np.einsum("gi,ij,gj->g", a.conj(), cn, a))
    return 1.0 / np.maximum(denom, 1e-300)


def root_music_doa(snapshots, n_sources: int, spacing_wl: float = 0.45) -> np.ndarray:
    """Root-MUSIC angle estimates (radians, ascending).

    With ``z = exp(-2j pi d sin psi)`` the null spectrum ``a^H En En^H a`` is a
    Laurent polynomial in ``z`` whose coefficient of ``z^p`` is the sum of the
    ``p``-th diagonal of ``En En^H``. Its roots come in pairs mirrored about
    the unit circle; the `n_sources` inside roots nearest the circle give the
    angles.
    """
    cn = _noise_projector(snapshots, n_sources)
    n_r = cn.shape[0]
    # highest power first: p = n_r - 1 ... -(n_r - 1)
    coeffs = np.array([np.trace(cn, offset=p) for p in range(n_r - 1, -n_r, -1)])
    roots = np.roots(coeffs)
    inside = roots[np.abs(roots) <= 1.0 + 1e-9]
    # noiseless signal roots are double roots on the circle that split by
    # about sqrt(eps); keep one root per pair
    best = []
    for z in inside[np.argsort(np.abs(1.0 - np.abs(inside)))]:
        if all(abs(z - b) > 1e-6 and abs(z - 1.0 / np.conj(b)) > 1e-6 for b in best):
            best.append(z)
        if len(best) == n_sources:
            break
    if len(best) < n_sources:
        raise DoaEstimationError(f"only {len(best)} candidate roots for {n_sources} sources")
    best = np.array(best)
    s = -np.angle(best) / (2 * np.pi * spacing_wl)
    if np.any(np.abs(s) > 1.0):
        raise DoaEstimationError("root phase maps outside the visible region")
    return np.sort(np.arcsin(s))


def rx_combine(y, w) -> np.ndarray:
    """Weighted sum ``sum_k w_k y_k`` over the antenna axis (axis 0)."""
    y = np.asarray(y, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if y.shape[0] != w.size:
        raise DimensionError(f"{y.shape[0]} antenna signals for {w.size} weights")
    return np.tensordot(w, y, axes=(0, 0))


def tx_steer(s, w, alpha_look) -> np.ndarray:
    """Per-antenna transmit copies ``a_k w_k s``, shape ``(Nr,) + s.shape``."""
    s = np.asarray(s, dtype=complex)
    w = np.asarray(w, dtype=complex)
    alpha_look = np.asarray(alpha_look, dtype=complex)
    if w.shape != alpha_look.shape or w.ndim != 1:
        raise DimensionError("weights and steering vector must be equal-length vectors")
    return (alpha_look * w).reshape((-1,) + (1,) * s.ndim) * s
