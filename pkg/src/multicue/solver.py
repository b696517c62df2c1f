"""Sparse Levenberg-Marquardt over the pose graph with manifold updates."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels
from .factors import Factor
from .geometry import so3_exp, so3_log

DENSE_BELOW = 60
LAMBDA_FAIL = 1e8
DIAG_FLOOR = 1e-9


class LinearSolveFailure(RuntimeError):
    """Damped normal equations stayed singular up to the damping ceiling."""


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 50
    chi2_rel_tol: float = 1e-6
    step_tol: float = 1e-8
    lm_lambda_init: float = 1e-4
    lm_lambda_factor: float = 10.0
    jacobian_eps: float = 1e-6

    def __post_init__(self):
        for name in ("max_iterations", "chi2_rel_tol", "step_tol", "lm_lambda_init",
                     "lm_lambda_factor", "jacobian_eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.lm_lambda_factor > 1:
            raise ValueError("lm_lambda_factor must exceed 1")


@dataclass
class SolveReport:
    iterations: int
    initial_chi2: float
    final_chi2: float
    converged: bool
    wall_time: float
    chi2_trace: list = field(default_factory=list)
    n_nodes: int = 0
    n_factors: int = 0


def _active_mask(g, active) -> np.ndarray:
    n = len(g)
    mask = np.zeros(n, dtype=bool)
    if active is None:
        mask[:] = True
    else:
        idx = np.fromiter(active, dtype=np.int64) if not isinstance(active, np.ndarray) else active
        mask[np.asarray(idx, dtype=np.int64)] = True
    mask[: g.frozen_below] = False
    return mask


def _select(g, mask):
    kinds, ii, jj, z, info = g.packed()
    touch = mask[ii] | ((jj >= 0) & mask[np.maximum(jj, 0)])
    return kinds[touch], ii[touch], jj[touch], z[touch], info[touch]


def _var_index(mask):
    vi = np.full(len(mask), -1, dtype=np.int64)
    vi[mask] = np.arange(int(mask.sum()))
    return vi


def _assemble(E, Ji, Jj, info, ii, jj, vi, nvar):
    """Normal equations ``H = sum J^T W J``, ``b = sum J^T W e`` in CSC form."""
    WJi = info @ Ji
    WJj = info @ Jj
    We = np.einsum("fab,fb->fa", info, E)
    a = vi[ii]
    c = np.where(jj >= 0, vi[np.maximum(jj, 0)], -1)
    blocks = (
        (a, a, np.einsum("fka,fkb->fab", Ji, WJi)),
        (a, c, np.einsum("fka,fkb->fab", Ji, WJj)),
        (c, a, np.einsum("fka,fkb->fab", Jj, WJi)),
        (c, c, np.einsum("fka,fkb->fab", Jj, WJj)),
    )
    ar6 = np.arange(6)
    rows, cols, vals = [], [], []
    for r, s, B in blocks:
        ok = (r >= 0) & (s >= 0)
        if not np.any(ok):
            continue
        rr = 6 * r[ok, None, None] + ar6[None, :, None]
        cc = 6 * s[ok, None, None] + ar6[None, None, :]
        rows.append(np.broadcast_to(rr, B[ok].shape).ravel())
        cols.append(np.broadcast_to(cc, B[ok].shape).ravel())
        vals.append(B[ok].ravel())
    n = 6 * nvar
    if rows:
        H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsc()
    else:
        H = sp.csc_matrix((n, n))
    b = np.zeros(n)
    for r, J in ((a, Ji), (c, Jj)):
        ok = r >= 0
        if np.any(ok):
            g_ = np.einsum("fka,fk->fa", J[ok], We[ok])
            np.add.at(b, (6 * r[ok, None] + ar6[None, :]).ravel(), g_.ravel())
    return H, b


def linearize(g, active=None, eps: float = 1e-6, impl=None):
    """Gauss-Newton system over the active, non-frozen nodes.

    Variables are ordered by node id, six per node, in local coordinates
    (translation offset, right-composed rotation increment).  Factors that
    touch a frozen node still contribute through their other endpoint.
    Returns ``(H, b)`` with ``H`` a CSC matrix.
    """
    mask = _active_mask(g, active)
    vi = _var_index(mask)
    nvar = int(mask.sum())
    kinds, ii, jj, z, info = _select(g, mask)
    if len(kinds) == 0:
        return sp.csc_matrix((6 * nvar, 6 * nvar)), np.zeros(6 * nvar)
    E, Ji, Jj = kernels.jacobians(g.states, kinds, ii, jj, z, eps, impl=impl)
    return _assemble(E, Ji, Jj, info, ii, jj, vi, nvar)


def numeric_jacobian(f: Factor, states, eps: float = 1e-6, impl=None):
    """``(J_i, J_j)`` blocks of one factor; ``J_j`` is None for unary factors."""
    states = np.asarray(states, dtype=float)
    jj = -1 if f.node_j is None else f.node_j
    _, Ji, Jj = kernels.jacobians(states, [int(f.kind)], [f.node_i], [jj], f.z[None], eps, impl=impl)
    return Ji[0], (None if f.node_j is None else Jj[0])


def _chi2(states, kinds, ii, jj, z, info, impl):
    if len(kinds) == 0:
        return 0.0
    E = kernels.residuals(states, kinds, ii, jj, z, impl=impl)
    return float(np.einsum("fi,fij,fj->", E, info, E))


def _solve(H, b, lam):
    """Solve ``(H + lam * diag(H)) x = -b``; returns None if singular."""
    d = H.diagonal()
    d = np.maximum(d, DIAG_FLOOR * max(1.0, float(d.max(initial=0.0))))
    n = len(b)
    if n < DENSE_BELOW:
        A = H.toarray()
        A[np.diag_indices(n)] += lam * d
        try:
            with warnings.catch_warnings():
                # unobserved directions sit on the diagonal floor by design
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                x = scipy.linalg.solve(A, -b, assume_a="pos", check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            return None
    else:
        A = (H + sp.diags(lam * d, format="csc")).tocsc()
        try:
            x = splu(A, permc_spec="COLAMD").solve(-b)
        except RuntimeError:
            return None
    return x if np.all(np.isfinite(x)) else None


def _retract_batch(states, nodes, x):
    # additive translation, right-composed rotation
    out = states.copy()
    d = x.reshape(-1, 6)
    out[nodes, :3] += d[:, :3]
    R = so3_exp(states[nodes, 3:]) @ so3_exp(d[:, 3:])
    out[nodes, 3:] = so3_log(R)
    return out


def lm_optimize(g, active: Optional[Iterable[int]] = None, cfg: SolverConfig = SolverConfig(),
                impl=None) -> SolveReport:
    """Levenberg-Marquardt on the nodes in ``active`` (default: all non-frozen).

    States are updated in place in ``g``.  Nodes below ``g.frozen_below`` and
    nodes outside ``active`` are held fixed.  Raises
    :class:`LinearSolveFailure` when the damped system cannot be solved even
    at a damping of 1e8.
    """
    t0 = time.perf_counter()
    mask = _active_mask(g, active)
    nodes = np.flatnonzero(mask)
    vi = _var_index(mask)
    nvar = len(nodes)
    kinds, ii, jj, z, info = _select(g, mask)
    states = g.states
    chi2 = _chi2(states, kinds, ii, jj, z, info, impl)
    report = SolveReport(0, chi2, chi2, False, 0.0, [chi2], nvar, len(kinds))
    if nvar == 0 or len(kinds) == 0:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return report

    lam = cfg.lm_lambda_init
    for it in range(cfg.max_iterations):
        report.iterations = it + 1
        E, Ji, Jj = kernels.jacobians(states, kinds, ii, jj, z, cfg.jacobian_eps, impl=impl)
        H, b = _assemble(E, Ji, Jj, info, ii, jj, vi, nvar)
        accepted = False
        while True:
            x = _solve(H, b, lam)
            if x is None:
                lam *= cfg.lm_lambda_factor
                if lam >= LAMBDA_FAIL:
                    raise LinearSolveFailure(
                        f"damped system singular at lambda={lam:.3g} ({nvar} free nodes); "
                        "is the gauge fixed?")
                continue
            cand = _retract_batch(states, nodes, x)
            new = _chi2(cand, kinds, ii, jj, z, info, impl)
            if new < chi2:
                accepted = True
                break
            lam *= cfg.lm_lambda_factor
            if lam >= LAMBDA_FAIL:
                break
        step = float(np.linalg.norm(x)) if x is not None else 0.0
        if not accepted:
            # no descent direction left at any damping: numerically converged
            report.converged = True
            break
        states[nodes] = cand[nodes]
        rel = (chi2 - new) / max(chi2, 1e-300)
        chi2 = new
        report.chi2_trace.append(chi2)
        lam = max(lam / cfg.lm_lambda_factor, 1e-12)
        if rel < cfg.chi2_rel_tol or step < cfg.step_tol or chi2 == 0.0:
            report.converged = True
            break
    report.final_chi2 = chi2
    report.wall_time = time.perf_counter() - t0
    return report
