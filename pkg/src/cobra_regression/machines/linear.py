"""Ridge and lasso regression with an unpenalized intercept.

Both fit on centered data, so the intercept is ``mean(y) - mean(X) @ coef``.
When no penalty is given, it is picked from a 25-point log grid by 5-fold
cross-validation on the training data.

The lasso objective is ``||y - X b||^2 / (2 n) + lam * ||b||_1`` and is
solved by cyclic coordinate descent, stopped on a relative duality gap.
"""

import numpy as np
from numba import njit

from .exceptions import ConvergenceError, SingularDesignError


def _center(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xm = X.mean(axis=0)
    ym = y.mean()
    return X - xm, y - ym, xm, ym


def _folds(n, n_folds, rng):
    n_folds = min(n_folds, n)
    order = rng.generator.permutation(n) if rng is not None else np.arange(n)
    return [np.sort(f) for f in np.array_split(order, n_folds)]


def _cv_argmin(errors):
    # errors: (n_lambdas,) mean CV loss; ties resolve to the first grid entry
    return int(np.argmin(errors))


@njit(cache=True, nogil=True)
def _affine(X, coef, intercept):
    # row-by-row dot product: a row's output never depends on its batch
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        s = 0.0
        for j in range(X.shape[1]):
            s += X[i, j] * coef[j]
        out[i] = s + intercept
    return out


def _predict_linear(X, coef, intercept):
    return _affine(np.ascontiguousarray(X, dtype=np.float64), coef, intercept)


# ---------------------------------------------------------------- ridge


def ridge_solve(Xc, yc, lam):
    """Solve ``(Xc'Xc + lam I) b = Xc'yc`` for centered data."""
    n, d = Xc.shape
    if lam == 0.0 and np.linalg.matrix_rank(Xc) < d:
        raise SingularDesignError("ridge with lambda=0 on a rank-deficient design")
    if d <= n or lam == 0.0:
        A = Xc.T @ Xc
        A[np.diag_indices(d)] += lam
        return np.linalg.solve(A, Xc.T @ yc)
    # wide design: (X'X + lam I)^-1 X' = X' (X X' + lam I)^-1
    K = Xc @ Xc.T
    K[np.diag_indices(n)] += lam
    return Xc.T @ np.linalg.solve(K, yc)


def ridge_lambda_grid(Xc, n_lambdas=25):
    scale = float(np.sum(Xc * Xc)) / Xc.shape[1]
    if scale <= 0.0:
        scale = 1.0
    return scale * np.logspace(-4, 2, n_lambdas)


def _ridge_path_predictions(Xtr, ytr, Xva, lambdas):
    Xc, yc, xm, ym = _center(Xtr, ytr)
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    Uty = U.T @ yc
    shrink = s[None, :] / (s[None, :] ** 2 + lambdas[:, None])
    coefs = (shrink * Uty[None, :]) @ Vt  # (n_lambdas, d)
    return (Xva - xm) @ coefs.T + ym  # (n_va, n_lambdas)


class RidgeRegressor:
    def __init__(self, lam=None, n_lambdas=25, cv_folds=5):
        if lam is not None and lam < 0:
            raise ValueError(f"ridge lambda must be >= 0, got {lam}")
        self.lam = lam
        self.n_lambdas = int(n_lambdas)
        self.cv_folds = int(cv_folds)

    def fit(self, X, y, rng=None):
        Xc, yc, xm, ym = _center(X, y)
        lam = self.lam
        if lam is None:
            lam = self._cross_validate(np.asarray(X, float), np.asarray(y, float), Xc, rng)
        self.lam_ = float(lam)
        self.coef_ = ridge_solve(Xc, yc, self.lam_)
        self.intercept_ = float(ym - xm @ self.coef_)
        return self

    def _cross_validate(self, X, y, Xc, rng):
        grid = ridge_lambda_grid(Xc, self.n_lambdas)
        self.lambda_grid_ = grid
        n = X.shape[0]
        if n < 2:
            return float(grid[len(grid) // 2])
        err = np.zeros(len(grid))
        for fold in _folds(n, self.cv_folds, rng):
            mask = np.ones(n, bool)
            mask[fold] = False
            pred = _ridge_path_predictions(X[mask], y[mask], X[fold], grid)
            err += ((pred - y[fold, None]) ** 2).sum(axis=0)
        self.cv_errors_ = err / n
        return float(grid[_cv_argmin(self.cv_errors_)])

    def predict(self, X):
        return _predict_linear(X, self.coef_, self.intercept_)

    def get_state(self):
        return {"lam": self.lam_, "coef": self.coef_.tolist(),
                "intercept": self.intercept_}

    @classmethod
    def from_state(cls, state):
        self = cls(state["lam"])
        self.lam_ = float(state["lam"])
        self.coef_ = np.asarray(state["coef"], dtype=np.float64)
        self.intercept_ = float(state["intercept"])
        return self


# ---------------------------------------------------------------- lasso


@njit(cache=True, nogil=True)
def _duality_gap(XT, y, r, beta, lam):
    d, n = XT.shape
    rr = 0.0
    yy = 0.0
    for i in range(n):
        rr += r[i] * r[i]
        yy += y[i] * y[i]
    l1 = 0.0
    xtr = 0.0
    for j in range(d):
        l1 += abs(beta[j])
        g = 0.0
        for i in range(n):
            g += XT[j, i] * r[i]
        if abs(g) > xtr:
            xtr = abs(g)
    s = 1.0
    if xtr > n * lam:
        s = n * lam / xtr
    dist = 0.0
    for i in range(n):
        t = y[i] - s * r[i]
        dist += t * t
    primal = rr / (2 * n) + lam * l1
    dual = (yy - dist) / (2 * n)
    return primal - dual, yy / (2 * n)


@njit(cache=True, nogil=True)
def _sweep(XT, r, beta, col_sq, thresh, coords, n_coords):
    n = XT.shape[1]
    max_step = 0.0
    for c in range(n_coords):
        j = coords[c]
        cs = col_sq[j]
        if cs == 0.0:
            continue
        old = beta[j]
        rho = cs * old
        for i in range(n):
            rho += XT[j, i] * r[i]
        if rho > thresh:
            new = (rho - thresh) / cs
        elif rho < -thresh:
            new = (rho + thresh) / cs
        else:
            new = 0.0
        if new != old:
            delta = new - old
            for i in range(n):
                r[i] -= XT[j, i] * delta
            beta[j] = new
            step = abs(delta) * np.sqrt(cs)
            if step > max_step:
                max_step = step
    return max_step


@njit(cache=True, nogil=True)
def _lasso_cd(XT, y, lam, beta, col_sq, max_sweeps, tol):
    """Active-set cyclic coordinate descent, in place on ``beta``.

    Full sweeps alternate with sweeps restricted to the nonzero coefficients;
    the duality gap is checked after every full sweep. Returns
    ``(sweeps, gap)`` with ``sweeps = -1`` on non-convergence.
    """
    d, n = XT.shape
    r = y.copy()
    for j in range(d):
        if beta[j] != 0.0:
            for i in range(n):
                r[i] -= XT[j, i] * beta[j]
    thresh = n * lam
    everything = np.arange(d)
    active = np.empty(d, np.int64)
    ynorm = 0.0
    for i in range(n):
        ynorm += y[i] * y[i]
    inner_tol = 1e-4 * np.sqrt(tol * ynorm) + 1e-300
    sweeps = 0
    gap = np.inf
    while sweeps < max_sweeps:
        _sweep(XT, r, beta, col_sq, thresh, everything, d)
        sweeps += 1
        gap, scale = _duality_gap(XT, y, r, beta, lam)
        if gap <= tol * scale or scale == 0.0:
            return sweeps, gap
        n_active = 0
        for j in range(d):
            if beta[j] != 0.0:
                active[n_active] = j
                n_active += 1
        while sweeps < max_sweeps:
            step = _sweep(XT, r, beta, col_sq, thresh, active, n_active)
            sweeps += 1
            if step <= inner_tol:
                break
    return -1, gap


def lasso_lambda_max(Xc, yc):
    return float(np.abs(Xc.T @ yc).max()) / Xc.shape[0]


def lasso_lambda_grid(Xc, yc, n_lambdas=25):
    n, d = Xc.shape
    lmax = lasso_lambda_max(Xc, yc)
    if lmax <= 0.0:
        return np.zeros(1)
    ratio = 1e-4 if n > d else 1e-2
    return np.geomspace(lmax, lmax * ratio, n_lambdas)


def lasso_path(Xc, yc, lambdas, tol=1e-6, max_sweeps=20_000, machine=None):
    """Warm-started coordinate descent along a decreasing ``lambdas`` grid."""
    XT = np.ascontiguousarray(np.asarray(Xc).T)
    yc = np.ascontiguousarray(yc)
    col_sq = np.einsum("ij,ij->i", XT, XT)
    beta = np.zeros(Xc.shape[1])
    coefs = np.empty((len(lambdas), Xc.shape[1]))
    lmax = lasso_lambda_max(Xc, yc)
    for t, lam in enumerate(lambdas):
        if lam >= lmax:
            # zero satisfies the KKT conditions exactly; skip the rounding-prone sweep
            beta[:] = 0.0
            coefs[t] = 0.0
            continue
        sweeps, gap = _lasso_cd(XT, yc, float(lam), beta, col_sq, max_sweeps, tol)
        if sweeps < 0:
            raise ConvergenceError(
                f"coordinate descent did not converge in {max_sweeps} sweeps "
                f"at lambda={lam:.6g} (duality gap {gap:.3g})", machine)
        coefs[t] = beta
    return coefs


class LassoRegressor:
    def __init__(self, lam=None, n_lambdas=25, cv_folds=5, tol=1e-6,
                 max_sweeps=20_000):
        if lam is not None and lam < 0:
            raise ValueError(f"lasso lambda must be >= 0, got {lam}")
        self.lam = lam
        self.n_lambdas = int(n_lambdas)
        self.cv_folds = int(cv_folds)
        self.tol = tol
        self.max_sweeps = int(max_sweeps)

    def fit(self, X, y, rng=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        Xc, yc, xm, ym = _center(X, y)
        if self.lam is not None:
            lambdas = np.array([float(self.lam)])
            if self.lam > 0:
                lmax = lasso_lambda_max(Xc, yc)
                # warm start from lambda_max keeps small penalties cheap
                if self.lam < lmax:
                    lambdas = np.geomspace(lmax, self.lam, 10)
            coefs = lasso_path(Xc, yc, lambdas, self.tol, self.max_sweeps)
            self.lam_ = float(self.lam)
            self.coef_ = coefs[-1].copy()
        else:
            grid = lasso_lambda_grid(Xc, yc, self.n_lambdas)
            self.lambda_grid_ = grid
            best = self._cross_validate(X, y, grid, rng) if len(grid) > 1 else 0
            coefs = lasso_path(Xc, yc, grid[: best + 1], self.tol, self.max_sweeps)
            self.lam_ = float(grid[best])
            self.coef_ = coefs[-1].copy()
        self.intercept_ = float(ym - xm @ self.coef_)
        return self

    def _cross_validate(self, X, y, grid, rng):
        n = X.shape[0]
        if n < 2:
            return 0
        err = np.zeros(len(grid))
        for fold in _folds(n, self.cv_folds, rng):
            mask = np.ones(n, bool)
            mask[fold] = False
            Xc, yc, xm, ym = _center(X[mask], y[mask])
            coefs = lasso_path(Xc, yc, grid, self.tol, self.max_sweeps)
            pred = (X[fold] - xm) @ coefs.T + ym
            err += ((pred - y[fold, None]) ** 2).sum(axis=0)
        self.cv_errors_ = err / n
        return _cv_argmin(self.cv_errors_)

    def predict(self, X):
        return _predict_linear(X, self.coef_, self.intercept_)

    def get_state(self):
        return {"lam": self.lam_, "coef": self.coef_.tolist(),
                "intercept": self.intercept_}

    @classmethod
    def from_state(cls, state):
        self = cls(state["lam"])
        self.lam_ = float(state["lam"])
        self.coef_ = np.asarray(state["coef"], dtype=np.float64)
        self.intercept_ = float(state["intercept"])
        return self
