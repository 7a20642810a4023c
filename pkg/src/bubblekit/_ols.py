from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._validation import NumericError


@dataclass
class OLSResult:
    params: np.ndarray
    resid: np.ndarray
    sigma2: float
    cov: np.ndarray
    nobs: int
    rss: float

    @property
    def bse(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def tvalues(self) -> np.ndarray:
        return self.params / self.bse


def ols(y: np.ndarray, X: np.ndarray, rcond: float = 1e-12) -> OLSResult:
    """Least squares via QR; raises :class:`NumericError` on a rank-deficient design."""
    n, k = X.shape
    if n <= k:
        raise NumericError(f"insufficient observations: {n} rows for {k} regressors")
    q, r = linalg.qr(X, mode="economic")
    diag = np.abs(np.diag(r))
    if diag.min() <= rcond * max(diag.max(), 1.0):
        raise NumericError("singular regressor matrix")
    beta = linalg.solve_triangular(r, q.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    sigma2 = rss / (n - k)
    rinv = linalg.solve_triangular(r, np.eye(k))
    cov = sigma2 * (rinv @ rinv.T)
    return OLSResult(beta, resid, sigma2, cov, n, rss)


def r_squared(y: np.ndarray, X: np.ndarray) -> float:
    """Centered R^2 of ``y`` on ``X`` (``X`` must contain a constant column)."""
    res = ols(y, X)
    tss = float(((y - y.mean()) ** 2).sum())
    if tss == 0:
        raise NumericError("dependent variable is constant")
    return 1.0 - res.rss / tss
