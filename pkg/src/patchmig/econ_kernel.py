"""Estimation kernel: OLS, label-restricted SUR, damped Gauss-Newton.

Parameters are addressed by string label. Equations in a system may share
labels, which is how cross-equation equality restrictions are imposed: a
shared label is literally one free parameter whose design entries accumulate
from every equation using it. Explicit ``restrictions`` pairs merge two
labels the same way.

Residual covariance across equations uses the n denominator (not n - k);
standard errors inherit that convention. Feasible GLS runs in two steps in
the Zellner fashion, with optional iteration to convergence.

Observation alignment: each equation may carry an ``index`` of hashable keys.
``mode="balanced"`` requires identical indexes, ``mode="intersect"`` drops
keys missing from any equation (counts reported), ``mode="pairwise"`` keeps
every row, estimates the residual covariance from pairwise-complete overlaps,
and applies per-pattern GLS weights. With no index given, equations must
simply agree on row count and are treated as balanced.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.stats import norm

from .errors import ConfigError, DataError, NumericalError

__all__ = [
    "Equation",
    "LinearSystemSpec",
    "EstimateSet",
    "ols",
    "sur",
    "nls_system",
    "fd_jacobian",
    "confidence_interval",
]

log = logging.getLogger(__name__)

# Rank-check threshold, relative to the Frobenius norm of the design.
RANK_TOL = 1e-10


@dataclass
class Equation:
    """One equation of a linear system: response, design, column labels."""

    name: str
    y: np.ndarray
    X: np.ndarray
    labels: list[str]
    index: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if self.X.shape[0] != self.y.shape[0]:
            raise DataError(
                f"equation {self.name}: X has {self.X.shape[0]} rows, y has {self.y.shape[0]}"
            )
        if len(self.labels) != self.X.shape[1]:
            raise DataError(
                f"equation {self.name}: {self.X.shape[1]} columns but {len(self.labels)} labels"
            )
        if len(set(self.labels)) != len(self.labels):
            raise DataError(f"equation {self.name}: duplicate column labels")
        if self.index is not None:
            self.index = np.asarray(self.index)
            if self.index.ndim != 1:
                raise DataError(
                    f"equation {self.name}: observation keys must be scalars (1-d index)"
                )
            if self.index.shape[0] != self.y.shape[0]:
                raise DataError(f"equation {self.name}: index length mismatch")
            if len(set(self.index.tolist())) != self.index.shape[0]:
                raise DataError(f"equation {self.name}: duplicate observation keys")
        if not np.all(np.isfinite(self.y)) or not np.all(np.isfinite(self.X)):
            raise DataError(f"equation {self.name}: non-finite values in y or X")


@dataclass
class LinearSystemSpec:
    """A system of equations plus cross-equation equality restrictions."""

    equations: list[Equation]
    restrictions: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.equations) < 1:
            raise ConfigError("system needs at least one equation")
        names = [e.name for e in self.equations]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate equation names")


@dataclass
class EstimateSet:
    """Labelled estimates with covariance and per-equation fit diagnostics.

    ``alias`` maps every original label (including ones merged away by
    restrictions) to the canonical label that carries the estimate.
    """

    labels: list[str]
    values: np.ndarray
    cov: np.ndarray
    alias: dict[str, str]
    sigma: np.ndarray | None = None
    equation_names: list[str] = field(default_factory=list)
    nobs: dict[str, int] = field(default_factory=dict)
    r_squared: dict[str, float] = field(default_factory=dict)
    residuals: dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def _pos(self, label: str) -> int:
        canon = self.alias.get(label, label)
        try:
            return self.labels.index(canon)
        except ValueError:
            raise DataError(f"unknown parameter label {label!r}") from None

    def param(self, label: str) -> float:
        return float(self.values[self._pos(label)])

    def se(self, label: str) -> float:
        i = self._pos(label)
        return float(np.sqrt(max(self.cov[i, i], 0.0)))

    def zvalue(self, label: str) -> float:
        s = self.se(label)
        return float(self.values[self._pos(label)] / s) if s > 0 else float("nan")

    def as_dict(self) -> dict[str, float]:
        return {lab: float(v) for lab, v in zip(self.labels, self.values)}


# ---------------------------------------------------------------------------
# OLS
# ---------------------------------------------------------------------------

def _rank_check(X: np.ndarray, labels: list[str]) -> None:
    """Pivoted-QR rank check; names the dependent columns on failure."""
    if X.shape[1] == 0:
        raise DataError("design matrix has no columns")
    _, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    thresh = RANK_TOL * max(np.linalg.norm(X), 1e-300)
    bad = np.where(diag <= thresh)[0]
    if bad.size:
        dependent = [labels[piv[i]] for i in bad]
        raise DataError(f"design matrix is rank deficient; dependent columns: {dependent}")


def _solve_ls(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least squares solve plus unscaled (X'X)^-1 for covariance assembly."""
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    xtx_inv = np.linalg.pinv(X.T @ X, hermitian=True)
    return beta, xtx_inv


def ols(y, X, labels: list[str] | None = None, name: str = "eq0") -> EstimateSet:
    """Ordinary least squares with labelled columns.

    Covariance is sigma2 * (X'X)^-1 with sigma2 = RSS / n, matching the
    system estimator's denominator convention.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != y.shape[0]:
        raise DataError(f"X has {X.shape[0]} rows, y has {y.shape[0]}")
    n, p = X.shape
    if n < p:
        raise DataError(f"need at least as many rows ({n}) as columns ({p})")
    if labels is None:
        labels = [f"b{j}" for j in range(p)]
    if len(labels) != p:
        raise DataError(f"{p} columns but {len(labels)} labels")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise DataError("non-finite values in y or X")
    _rank_check(X, labels)
    beta, xtx_inv = _solve_ls(X, y)
    resid = y - X @ beta
    sigma2 = float(resid @ resid) / n
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else float("nan")
    return EstimateSet(
        labels=list(labels),
        values=beta,
        cov=sigma2 * xtx_inv,
        alias={},
        sigma=np.array([[sigma2]]),
        equation_names=[name],
        nobs={name: n},
        r_squared={name: r2},
        residuals={name: resid},
        diagnostics={"estimator": "ols", "n_params": {name: p}},
    )


# ---------------------------------------------------------------------------
# SUR
# ---------------------------------------------------------------------------

def _canonical_labels(spec: LinearSystemSpec) -> tuple[dict[str, str], list[str]]:
    """Union-find over restriction pairs; canonical = first label seen."""
    parent: dict[str, str] = {}

    def find(a: str) -> str:
        parent.setdefault(a, a)
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    order: list[str] = []
    seen = set()
    for eq in spec.equations:
        for lab in eq.labels:
            if lab not in seen:
                seen.add(lab)
                order.append(lab)
    for a, b in spec.restrictions:
        if a not in seen or b not in seen:
            missing = a if a not in seen else b
            raise ConfigError(f"restriction references unknown label {missing!r}")
        ra, rb = find(a), find(b)
        if ra != rb:
            # Keep the earlier label as canonical.
            if order.index(ra) < order.index(rb):
                parent[rb] = ra
            else:
                parent[ra] = rb
    alias = {lab: find(lab) for lab in order}
    canon = [lab for lab in order if alias[lab] == lab]
    return alias, canon


def _align_rows(spec: LinearSystemSpec, mode: str):
    """Resolve observation keys per equation according to the mode.

    Returns (n_keys, eq_rows, keep_masks, dropped): eq_rows[i] maps each kept
    row of equation i to a position in the ordered key union, keep_masks[i]
    selects the kept rows, and dropped counts removed rows per equation.
    """
    m = len(spec.equations)
    if any(eq.index is None for eq in spec.equations):
        if not all(eq.index is None for eq in spec.equations):
            raise ConfigError("either every equation carries an index or none does")
        n = spec.equations[0].y.shape[0]
        if any(eq.y.shape[0] != n for eq in spec.equations):
            raise DataError("equations without an index must have equal row counts")
        rows = [np.arange(n) for _ in range(m)]
        keeps = [np.ones(n, dtype=bool) for _ in range(m)]
        return n, rows, keeps, {eq.name: 0 for eq in spec.equations}

    sets = [set(eq.index.tolist()) for eq in spec.equations]
    if mode == "balanced":
        if any(s != sets[0] for s in sets[1:]):
            raise DataError(
                "unbalanced observation indexes; pass mode='intersect' or 'pairwise'"
            )
        union = sorted(sets[0])
    elif mode == "intersect":
        common = set.intersection(*sets)
        if not common:
            raise DataError("no common observation keys across equations")
        union = sorted(common)
    elif mode == "pairwise":
        union = sorted(set.union(*sets))
    else:
        raise ConfigError(f"unknown mode {mode!r}")

    pos = {k: i for i, k in enumerate(union)}
    eq_rows, keeps, dropped = [], [], {}
    for eq in spec.equations:
        keep = np.array([k in pos for k in eq.index.tolist()], dtype=bool)
        keeps.append(keep)
        dropped[eq.name] = int((~keep).sum())
        eq_rows.append(np.array([pos[k] for k in eq.index[keep].tolist()], dtype=int))
    return len(union), eq_rows, keeps, dropped


def _regularize_sigma(sigma: np.ndarray) -> tuple[np.ndarray, float]:
    """Make the residual covariance safely positive definite.

    Clips negative eigenvalues (possible with pairwise-complete estimates)
    and adds escalating diagonal jitter until Cholesky succeeds. Returns the
    repaired matrix and the total jitter added.
    """
    s = 0.5 * (sigma + sigma.T)
    w, v = np.linalg.eigh(s)
    if w.min() < 0:
        s = (v * np.maximum(w, 0.0)) @ v.T
    scale = max(float(np.trace(s)) / s.shape[0], 1e-300)
    jitter_total = 0.0
    jitter = 1e-12 * scale
    for _ in range(40):
        try:
            c = np.linalg.cholesky(s)
            cond = (np.diag(c).max() / np.diag(c).min()) ** 2
            if np.isfinite(cond) and cond < 1e14:
                return s, jitter_total
        except np.linalg.LinAlgError:
            pass
        s = s + jitter * np.eye(s.shape[0])
        jitter_total += jitter
        jitter *= 10.0
    raise NumericalError("residual covariance could not be regularized")


def sur(
    spec: LinearSystemSpec,
    mode: str = "balanced",
    iterate: bool = False,
    max_iter: int = 50,
    tol: float = 1e-8,
    exact: tuple[str, ...] = (),
) -> EstimateSet:
    """Feasible GLS for a system of equations with shared-label restrictions.

    Step 1 fits the whole stacked system by least squares (which honors any
    shared labels), estimates the residual covariance across equations from
    those residuals, then reweights. With ``iterate=True`` the covariance and
    coefficients are updated until the coefficients move less than ``tol``.

    Equations named in ``exact`` carry no disturbance in the model: their
    rows are imposed as equality constraints, which is the GLS limit of an
    error variance going to zero. The remaining equations are estimated
    inside the constrained parameter subspace, and the reported covariance
    is degenerate along the constrained directions. The residual covariance
    matrix keeps one row/column per equation, with zeros for exact ones.
    """
    if len(spec.equations) < 2:
        raise ConfigError("a system estimator needs at least two equations")
    alias, canon = _canonical_labels(spec)
    pos_of = {lab: i for i, lab in enumerate(canon)}
    P = len(canon)
    m = len(spec.equations)
    nk, eq_rows, keeps, dropped = _align_rows(spec, mode)

    exact = tuple(exact)
    names = [eq.name for eq in spec.equations]
    unknown = [nm for nm in exact if nm not in names]
    if unknown:
        raise ConfigError(f"exact equations not in the system: {unknown}")
    ex_idx = [i for i, nm in enumerate(names) if nm in exact]
    fit_idx = [i for i in range(m) if i not in ex_idx]
    if exact and not fit_idx:
        raise ConfigError("every equation is marked exact; nothing to estimate")

    # Per-equation designs over canonical columns, aligned to key positions.
    designs = []
    for eq, rows, keep in zip(spec.equations, eq_rows, keeps):
        sub_y, sub_X = eq.y[keep], eq.X[keep]
        G = np.zeros((sub_X.shape[0], P))
        for j, lab in enumerate(eq.labels):
            G[:, pos_of[alias[lab]]] += sub_X[:, j]
        designs.append((sub_y, G, rows))
        if sub_y.shape[0] == 0:
            raise DataError(f"equation {eq.name} has no usable rows")

    G_all = np.vstack([g for _, g, _ in designs])
    if G_all.shape[0] < P:
        raise DataError(f"system has {G_all.shape[0]} rows for {P} parameters")
    _rank_check(G_all, canon)

    if ex_idx:
        # Solve the identities once, then estimate the free directions.
        C = np.vstack([designs[i][1] for i in ex_idx])
        d = np.concatenate([designs[i][0] for i in ex_idx])
        beta0, *_ = np.linalg.lstsq(C, d, rcond=None)
        gap = float(np.abs(C @ beta0 - d).max())
        if gap > 1e-8 * max(1.0, float(np.abs(d).max())):
            raise DataError(
                f"exact equations {list(exact)} cannot hold jointly; "
                f"largest violation {gap:.3e}"
            )
        sv_all = np.linalg.svd(C, compute_uv=False)
        rank = int((sv_all > sv_all[0] * max(C.shape) * np.finfo(float).eps).sum())
        Z = np.linalg.svd(C, full_matrices=True)[2][rank:].T
        if Z.shape[1] == 0:
            raise DataError("exact equations pin every parameter; nothing to estimate")
        fit_designs = [
            (designs[i][0] - designs[i][1] @ beta0, designs[i][1] @ Z, designs[i][2])
            for i in fit_idx
        ]
        Pfit = Z.shape[1]
        rows_fit = sum(g.shape[0] for _, g, _ in fit_designs)
        if rows_fit < Pfit:
            raise DataError(
                f"system has {rows_fit} disturbance rows for {Pfit} free parameters"
            )
    else:
        beta0, Z = None, None
        fit_designs = designs
        Pfit = P

    def lift(th):
        return beta0 + Z @ th if ex_idx else th

    theta, _ = _solve_ls(
        np.vstack([g for _, g, _ in fit_designs]),
        np.concatenate([y for y, _, _ in fit_designs]),
    )
    beta = lift(theta)

    # Residual matrix over (key, equation) with NaN where an equation lacks a key.
    def residual_matrix(b):
        R = np.full((nk, m), np.nan)
        for i, (y_i, G_i, rows) in enumerate(designs):
            R[rows, i] = y_i - G_i @ b
        return R

    def estimate_sigma(R):
        Rf = R[:, fit_idx]
        M = ~np.isnan(Rf)
        Rz = np.where(M, Rf, 0.0)
        counts = M.T.astype(float) @ M.astype(float)
        sums = Rz.T @ Rz
        with np.errstate(invalid="ignore"):
            s = np.where(counts > 0, sums / np.maximum(counts, 1.0), 0.0)
        return s

    present = np.zeros((nk, len(fit_idx)), dtype=bool)
    for a, i in enumerate(fit_idx):
        present[designs[i][2], a] = True
    patterns: dict[tuple, list[int]] = {}
    for t in range(nk):
        patterns.setdefault(tuple(np.where(present[t])[0]), []).append(t)

    # Row positions per fit equation keyed by key position.
    row_of = []
    for _, _, rows in fit_designs:
        lookup = -np.ones(nk, dtype=int)
        lookup[rows] = np.arange(rows.shape[0])
        row_of.append(lookup)

    def gls_pass(sigma_pd):
        # Group keys by equation-presence pattern and weight each block by
        # the Cholesky inverse of the matching covariance submatrix.
        rows_out, y_out = [], []
        for patt, key_list in sorted(patterns.items()):
            if not patt:
                continue
            sub = sigma_pd[np.ix_(patt, patt)]
            L = np.linalg.cholesky(sub)
            Linv = scipy.linalg.solve_triangular(L, np.eye(len(patt)), lower=True)
            kidx = np.array(key_list, dtype=int)
            Gten = np.stack([fit_designs[a][1][row_of[a][kidx]] for a in patt])
            yten = np.stack([fit_designs[a][0][row_of[a][kidx]] for a in patt])
            Gw = np.einsum("ab,bkp->akp", Linv, Gten)
            yw = np.einsum("ab,bk->ak", Linv, yten)
            rows_out.append(Gw.reshape(-1, Pfit))
            y_out.append(yw.ravel())
        Gw_all = np.vstack(rows_out)
        yw_all = np.concatenate(y_out)
        th, xtx_inv = _solve_ls(Gw_all, yw_all)
        return th, xtx_inv

    sigma_raw = estimate_sigma(residual_matrix(beta))
    sigma_pd, jitter = _regularize_sigma(sigma_raw)
    theta_new, cov_th = gls_pass(sigma_pd)
    iterations = 1
    if iterate:
        for iterations in range(2, max_iter + 1):
            if np.max(np.abs(theta_new - theta)) < tol:
                break
            theta = theta_new
            sigma_raw = estimate_sigma(residual_matrix(lift(theta)))
            sigma_pd, j2 = _regularize_sigma(sigma_raw)
            jitter = max(jitter, j2)
            theta_new, cov_th = gls_pass(sigma_pd)
    beta = lift(theta_new)
    cov = Z @ cov_th @ Z.T if ex_idx else cov_th

    R = residual_matrix(beta)
    nobs, r2, residuals = {}, {}, {}
    for i, eq in enumerate(spec.equations):
        y_i, _, rows = designs[i]
        e_i = R[rows, i]
        nobs[eq.name] = int(y_i.shape[0])
        tss = float(np.sum((y_i - y_i.mean()) ** 2))
        r2[eq.name] = 1.0 - float(e_i @ e_i) / tss if tss > 0 else float("nan")
        residuals[eq.name] = e_i
    if jitter > 0:
        log.warning("singular residual covariance; ridge jitter %.3e applied", jitter)
    sigma_full = np.zeros((m, m))
    sigma_full[np.ix_(fit_idx, fit_idx)] = sigma_pd
    return EstimateSet(
        labels=canon,
        values=beta,
        cov=cov,
        alias=alias,
        sigma=sigma_full,
        equation_names=[eq.name for eq in spec.equations],
        nobs=nobs,
        r_squared=r2,
        residuals=residuals,
        diagnostics={
            "estimator": "sur",
            "mode": mode,
            "iterations": iterations,
            "sigma_jitter": jitter,
            "dropped_rows": dropped,
            "exact_equations": list(exact),
            "n_params": {
                eq.name: len({alias[lab] for lab in eq.labels})
                for eq in spec.equations
            },
        },
    )


# ---------------------------------------------------------------------------
# Nonlinear least squares
# ---------------------------------------------------------------------------

def fd_jacobian(fn, theta: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a residual function at theta."""
    theta = np.asarray(theta, dtype=float)
    r0 = np.asarray(fn(theta), dtype=float)
    J = np.empty((r0.shape[0], theta.shape[0]))
    for j in range(theta.shape[0]):
        step = h * max(abs(theta[j]), 1.0)
        up, dn = theta.copy(), theta.copy()
        up[j] += step
        dn[j] -= step
        J[:, j] = (np.asarray(fn(up)) - np.asarray(fn(dn))) / (2.0 * step)
    return J


def nls_system(
    residual_fn,
    start,
    labels: list[str] | None = None,
    jacobian=None,
    max_iter: int = 500,
    step_tol: float = 1e-10,
    obj_tol: float = 1e-12,
) -> EstimateSet:
    """Levenberg-damped Gauss-Newton on a stacked residual vector.

    ``residual_fn(theta)`` returns the residual vector; ``jacobian`` is
    optional and defaults to central finite differences. Convergence is
    declared on step norm < step_tol * (1 + |theta|) or relative objective
    change < obj_tol. Non-convergence raises NumericalError carrying the
    best point found. Covariance comes from the final Jacobian.
    """
    theta = np.asarray(start, dtype=float).copy()
    p = theta.shape[0]
    if labels is None:
        labels = [f"b{j}" for j in range(p)]
    if len(labels) != p:
        raise ConfigError(f"{p} parameters but {len(labels)} labels")
    jac = jacobian if jacobian is not None else (lambda th: fd_jacobian(residual_fn, th))

    r = np.asarray(residual_fn(theta), dtype=float)
    if not np.all(np.isfinite(r)):
        raise NumericalError("residuals not finite at the starting point")
    ssr = float(r @ r)
    lam = 1e-3
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        J = np.asarray(jac(theta), dtype=float)
        if J.shape != (r.shape[0], p):
            raise NumericalError(
                f"jacobian shape {J.shape} does not match ({r.shape[0]}, {p})"
            )
        g = J.T @ r
        JtJ = J.T @ J
        accepted = False
        for _ in range(40):
            damp = JtJ + lam * np.diag(np.maximum(np.diag(JtJ), 1e-14))
            try:
                delta = np.linalg.solve(damp, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta + delta
            r_trial = np.asarray(residual_fn(trial), dtype=float)
            ssr_trial = float(r_trial @ r_trial) if np.all(np.isfinite(r_trial)) else np.inf
            if ssr_trial <= ssr:
                accepted = True
                break
            lam *= 3.0
        if not accepted:
            break
        step_norm = float(np.linalg.norm(delta))
        rel_change = (ssr - ssr_trial) / max(ssr, 1e-300)
        theta, r, ssr = trial, r_trial, ssr_trial
        lam = max(lam / 3.0, 1e-14)
        if step_norm < step_tol * (1.0 + float(np.linalg.norm(theta))) or rel_change < obj_tol:
            converged = True
            break
    if not converged:
        raise NumericalError(
            f"no convergence after {iterations} iterations",
            diagnostics={
                "iterations": iterations,
                "best_params": theta.tolist(),
                "best_objective": ssr,
            },
        )

    J = np.asarray(jac(theta), dtype=float)
    JtJ = J.T @ J
    n = r.shape[0]
    eigvals = np.linalg.eigvalsh(JtJ)
    singular = bool(eigvals.min() <= 1e-12 * max(eigvals.max(), 1e-300))
    sigma2 = ssr / max(n - p, 1)
    cov = sigma2 * np.linalg.pinv(JtJ, hermitian=True)
    return EstimateSet(
        labels=list(labels),
        values=theta,
        cov=cov,
        alias={},
        sigma=np.array([[sigma2]]),
        equation_names=["nls"],
        nobs={"nls": n},
        r_squared={"nls": float("nan")},
        residuals={"nls": r},
        diagnostics={
            "estimator": "nls",
            "iterations": iterations,
            "objective": ssr,
            "singular_jacobian": singular,
            "lambda": lam,
        },
    )


# ---------------------------------------------------------------------------
# Confidence intervals
# ---------------------------------------------------------------------------

def confidence_interval(est: EstimateSet, label: str, level: float) -> tuple[float, float]:
    """Two-sided normal-quantile interval for one labelled parameter.

    level = 0.80 uses z = 1.2816, level = 0.90 uses z = 1.6449. A zero
    standard error yields the degenerate point interval.
    """
    if not 0.0 < level < 1.0:
        raise ConfigError(f"confidence level must be in (0, 1), got {level}")
    point = est.param(label)
    z = float(norm.ppf(0.5 + level / 2.0))
    half = z * est.se(label)
    return point - half, point + half
