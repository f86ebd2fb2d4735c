"""Batched numpy kernels behind the adaptive filter.

Everything here carries a leading trial axis so that a whole Monte Carlo
batch advances in lockstep; the single-instance operations in
:mod:`csiguard.estimator` call these kernels with a batch of one.

The algebra exploits two structural facts to avoid any dense Q x Q work
per candidate distortion:

* The phase-error matrix ``E`` is diagonal unitary, so the innovation
  covariance factors as ``Sigma(d) = E Sigma0 E^H`` with
  ``Sigma0 = C P C^H + s2 I`` independent of the distortion, and the
  whitened residual energy becomes
  ``(E^H h - C mu)^H Sigma0^{-1} (E^H h - C mu)``.
* ``Sigma0`` is a rank-L update of the identity, so its inverse acts in
  O(Q L) through the Woodbury identity with the L x L core
  ``G = I + P^{1/2} C^H C P^{1/2} / s2``.

For a fixed phase slope the objective is an exact cosine in the phase
offset, so the offset is minimized in closed form and the numeric search
runs over the slope axis only: a coarse grid, golden-section shrinking of
the bracketing interval, and a final three-point parabolic polish (the
valley is locally quadratic, and leaving the slope at golden-section
resolution would leak into the offset estimate through the slope-offset
coupling of the likelihood).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .observation import PilotGrid, partial_dft

_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _int_power(base: np.ndarray, k: int) -> np.ndarray:
    """base**k for integer k >= 0 by square-and-multiply (elementwise)."""
    result = np.ones_like(base)
    factor = base
    while k:
        if k & 1:
            result = result * factor
        k >>= 1
        if k:
            factor = factor * factor
    return result


@dataclass(frozen=True, eq=False)
class GridTables:
    """Constant per-(grid, channel length) arrays used by every step."""

    c: np.ndarray          # (Q, L) partial DFT
    c_conj: np.ndarray     # (Q, L)
    c_t: np.ndarray        # (L, Q) contiguous C.T for right-multiplication
    chc: np.ndarray        # (L, L) C^H C
    chc_diag: np.ndarray   # (L,) real diagonal of C^H C
    q: np.ndarray          # (Q,) pilot indices as float
    ramp_q0: int
    ramp_groups: tuple[tuple[int, np.ndarray], ...]

    def ramp(self, x: np.ndarray) -> np.ndarray:
        """exp(-1j * x[:, None] * q) via one exp per distinct index step.

        The pilot indices are integers, so the ramp is a cumulative
        product of per-step factors base**dq; this replaces Q complex
        exponentials per trial with a handful plus one cumprod.
        """
        base = np.exp(-1j * x)
        fac = np.empty((x.shape[0], self.q.shape[0]), dtype=np.complex128)
        fac[:, 0] = _int_power(base, self.ramp_q0)
        for power, cols in self.ramp_groups:
            fac[:, cols] = _int_power(base, power)[:, None]
        return np.cumprod(fac, axis=1)


@functools.lru_cache(maxsize=16)
def grid_tables(grid: PilotGrid, num_paths: int) -> GridTables:
    c = partial_dft(grid, num_paths)
    qi = np.asarray(grid.pilot_indices, dtype=np.int64)
    diffs = np.diff(qi)
    groups = []
    for power in np.unique(diffs):
        cols = np.flatnonzero(diffs == power) + 1
        cols.setflags(write=False)
        groups.append((int(power), cols))
    arrays = dict(
        c=c,
        c_conj=np.ascontiguousarray(c.conj()),
        c_t=np.ascontiguousarray(c.T),
        chc=np.ascontiguousarray(c.conj().T @ c),
        q=np.asarray(grid.pilot_indices, dtype=float),
    )
    for a in arrays.values():
        a.setflags(write=False)
    return GridTables(
        chc_diag=np.ascontiguousarray(arrays["chc"].diagonal().real),
        ramp_q0=int(qi[0]),
        ramp_groups=tuple(groups),
        **arrays,
    )


@functools.lru_cache(maxsize=16)
def slope_tables(
    grid: PilotGrid, num_points: int, bound: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Slope grid and its phase table: slopes, Phi=exp(-1j slope q), Phi.T."""
    slopes = np.linspace(-bound, bound, num_points)
    q = np.asarray(grid.pilot_indices, dtype=float)
    phi = np.exp(-1j * np.outer(slopes, q))
    phi_t = np.ascontiguousarray(phi.T)
    for a in (slopes, phi, phi_t):
        a.setflags(write=False)
    return slopes, phi, phi_t


@dataclass(eq=False)
class StatePrep:
    """Per-step quantities derived from the predicted state batch.

    gs is the scaled Woodbury core ``P^{1/2} G^{-1} P^{1/2}`` so that
    ``Sigma0^{-1} x = x/s2 - C (gs (C^H x)) / s2^2``.
    """

    noise_var: float
    gs: np.ndarray       # (T, L, L)
    m: np.ndarray        # (T, Q) predicted DFT-domain channel C mu
    w: np.ndarray        # (T, Q) Sigma0^{-1} m
    m_quad: np.ndarray   # (T,) real m^H Sigma0^{-1} m
    log_det: np.ndarray | None = None  # (T,) log det Sigma0 when requested


def prepare_state(
    mean: np.ndarray,
    cov_diag: np.ndarray,
    noise_var: float,
    tables: GridTables,
    include_log_det: bool = False,
) -> StatePrep:
    t, num_paths = mean.shape
    s2 = noise_var
    sp = np.sqrt(cov_diag)
    core = np.eye(num_paths)[None] + (sp[:, :, None] * sp[:, None, :]) * tables.chc[None] / s2
    log_det = None
    if include_log_det:
        # det Sigma0 = s2^Q det(core); constant in the distortion since the
        # phase rotation is unitary.
        num_pilots = tables.c.shape[0]
        log_det = num_pilots * np.log(s2) + np.linalg.slogdet(core)[1]
    gs = np.linalg.inv(core)
    gs *= sp[:, :, None] * sp[:, None, :]
    m = mean @ tables.c_t
    w = _apply_whitener(m, gs, s2, tables)
    m_quad = np.einsum("tq,tq->t", m.conj(), w).real
    return StatePrep(noise_var=s2, gs=gs, m=m, w=w, m_quad=m_quad, log_det=log_det)


def _apply_whitener(
    x: np.ndarray, gs: np.ndarray, s2: float, tables: GridTables
) -> np.ndarray:
    """Sigma0^{-1} x through the Woodbury identity, batched over trials."""
    ctx = x @ tables.c_conj                                   # (T, L) C^H x
    g = np.matmul(gs, ctx[:, :, None])[:, :, 0]
    return x / s2 - (g @ tables.c_t) / (s2 * s2)


def whitened_quadform(
    r: np.ndarray, prep: StatePrep, tables: GridTables
) -> tuple[np.ndarray, np.ndarray]:
    """Return (Sigma0^{-1} r, real quadratic form r^H Sigma0^{-1} r)."""
    y = _apply_whitener(r, prep.gs, prep.noise_var, tables)
    quad = np.einsum("tq,tq->t", r.conj(), y).real
    return y, quad


def _candidate_objective(
    ramp: np.ndarray,
    w1: np.ndarray,
    zvec: np.ndarray,
    prep: StatePrep,
    base_quad: np.ndarray,
    const: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Offset-profiled objective at one slope candidate per trial.

    ramp is exp(-1j slope q); w1 is the per-trial (Q, L) matrix
    ``conj(C) * h`` so that ``ramp @ w1 = C^H (ramp * h)``.
    Returns (objective, zc) with zc the conjugate of the offset coupling
    term; the optimal offset is angle(zc).
    """
    s2 = prep.noise_var
    s = np.matmul(ramp[:, None, :], w1)[:, 0, :]
    g = np.matmul(prep.gs, s[:, :, None])[:, :, 0]
    quad = base_quad - np.einsum("tl,tl->t", s.conj(), g).real / (s2 * s2)
    zc = np.einsum("tq,tq->t", ramp, zvec)
    return quad + const - 2.0 * np.abs(zc), zc


def phase_search(
    h_obs: np.ndarray,
    prep: StatePrep,
    grid: PilotGrid,
    tables: GridTables,
    cfg,
) -> tuple[np.ndarray, np.ndarray]:
    """Jointly estimate (offset, slope) for a batch of observations.

    Minimizes the whitened residual energy (or, with
    ``cfg.objective == "paper-literal"``, the unwhitened cross-term
    variant) over the slope grid, refines the bracket by golden section
    to ``cfg.refine_tolerance``, polishes with a parabolic fit, and
    recovers the offset in closed form.  Exact objective ties resolve
    toward the smaller |slope|, then the smaller |offset|.
    """
    s2 = prep.noise_var
    whitened = cfg.objective == "whitened"
    zsrc = prep.w if whitened else prep.m
    zvec = h_obs * zsrc.conj()
    base_quad = np.einsum("tq,tq->t", h_obs.conj(), h_obs).real / s2
    const = prep.m_quad if whitened else np.zeros_like(base_quad)
    if cfg.include_log_det and prep.log_det is not None:
        const = const + prep.log_det
    w1 = tables.c_conj[None] * h_obs[:, :, None]

    slopes, phi, phi_t = slope_tables(grid, cfg.slope_grid_points, cfg.slope_search_bound)

    # Coarse grid, all candidates at once.
    s = np.matmul(phi, w1)                                    # (T, G, L)
    g = np.matmul(s, np.conj(prep.gs))                        # rows s_g @ gs^T = (gs s_g)^T
    quad = base_quad[:, None] - np.einsum("tgl,tgl->tg", s.conj(), g).real / (s2 * s2)
    zc = zvec @ phi_t                                         # (T, G)
    obj = quad + const[:, None] - 2.0 * np.abs(zc)

    idx = _argmin_with_ties(obj, slopes, zc)
    if cfg.refine_iterations <= 0:
        slope = slopes[idx]
        zc_star = np.take_along_axis(zc, idx[:, None], axis=1)[:, 0]
        return _wrap_offset(np.angle(zc_star)), slope

    num_grid = len(slopes)
    a = slopes[np.maximum(idx - 1, 0)]
    b = slopes[np.minimum(idx + 1, num_grid - 1)]

    def evaluate(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _candidate_objective(tables.ramp(x), w1, zvec, prep, base_quad, const)

    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, _ = evaluate(c)
    fd, _ = evaluate(d)
    for _ in range(cfg.refine_iterations):
        if np.max(b - a) <= cfg.refine_tolerance:
            break
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c = b - _INV_GOLDEN * (b - a)
        d = a + _INV_GOLDEN * (b - a)
        # After a left shrink the new d coincides with the old c (and
        # symmetrically on the right), so only one fresh evaluation is needed.
        x_new = np.where(left, c, d)
        f_new, _ = evaluate(x_new)
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)

    # Parabolic polish through (c, mid, d): equally spaced interior points
    # of the final bracket.  The golden bracket alone leaves a slope error
    # of order refine_tolerance, which the likelihood's slope-offset
    # coupling would amplify into the offset by the mean pilot index.
    mid = 0.5 * (a + b)
    fm, _ = evaluate(mid)
    denom = fc - 2.0 * fm + fd
    half = mid - c
    with np.errstate(divide="ignore", invalid="ignore"):
        vertex = mid - 0.5 * half * (fd - fc) / denom
    best_interior = np.where(np.minimum(fc, fd) < fm, np.where(fc < fd, c, d), mid)
    vertex = np.where((denom > 0.0) & np.isfinite(vertex), vertex, best_interior)
    slope = np.clip(vertex, a, b)
    f_star, zc_star = evaluate(slope)
    # Keep whichever of {vertex, best interior point} actually scored lower.
    f_best = np.minimum(np.minimum(fc, fd), fm)
    keep = f_star <= f_best
    if not np.all(keep):
        slope = np.where(keep, slope, best_interior)
        _, zc_star = evaluate(slope)
    return _wrap_offset(np.angle(zc_star)), slope


def _argmin_with_ties(obj: np.ndarray, slopes: np.ndarray, zc: np.ndarray) -> np.ndarray:
    """Column index of the minimum, exact ties toward smaller |slope| then |offset|."""
    best = obj.min(axis=1, keepdims=True)
    tied = obj == best
    abs_slope = np.where(tied, np.abs(slopes)[None, :], np.inf)
    best_slope = abs_slope.min(axis=1, keepdims=True)
    tied &= abs_slope == best_slope
    abs_offset = np.where(tied, np.abs(_wrap_offset(np.angle(zc))), np.inf)
    return np.argmin(abs_offset, axis=1)


def _wrap_offset(theta: np.ndarray) -> np.ndarray:
    """Map angles from (-pi, pi] (np.angle) onto [-pi, pi)."""
    return np.where(theta >= np.pi, -np.pi, theta)


def kalman_update(
    mean: np.ndarray,
    cov_diag: np.ndarray,
    rotated_residual: np.ndarray,
    y: np.ndarray,
    prep: StatePrep,
    tables: GridTables,
) -> tuple[np.ndarray, np.ndarray]:
    """Measurement update in the de-rotated frame.

    ``rotated_residual`` is E^H eps and ``y = Sigma0^{-1} rotated_residual``;
    the phase matrices cancel out of both the mean correction
    ``P C^H Sigma0^{-1} (E^H eps)`` and the covariance contraction
    ``P - P C^H Sigma0^{-1} C P``, whose diagonal is kept.
    Returns (new_mean, new_cov_diag); callers decide how to handle
    negative diagonal entries (mathematically the diagonal is >= 0).
    """
    s2 = prep.noise_var
    new_mean = mean + cov_diag * (y @ tables.c_conj)
    a1 = np.matmul(tables.chc[None], prep.gs)                 # (T, L, L)
    quad_diag = np.einsum("tlk,kl->tl", a1, tables.chc).real
    d_diag = tables.chc_diag[None] / s2 - quad_diag / (s2 * s2)
    new_cov = cov_diag * (1.0 - cov_diag * d_diag)
    return new_mean, new_cov
