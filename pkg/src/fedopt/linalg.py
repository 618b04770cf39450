import numpy as np

from .errors import NumericalError


def conjugate_gradient(matvec, rhs, x0=None, rtol=1e-10, max_iter=None):
    """Solve ``M x = rhs`` for symmetric positive definite ``M`` given as a matvec.

    Stops once ``||M x - rhs|| <= rtol * ||rhs||``. Raises ``NumericalError``
    if that is not reached within ``max_iter`` (default ``10 * len(rhs)``)
    iterations, or if ``M`` shows non-positive curvature.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    n = rhs.shape[0]
    if max_iter is None:
        max_iter = 10 * max(n, 1)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n)
    target = rtol * bnorm
    r = rhs - matvec(x)
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return x
    p = r.copy()
    rr = np.dot(r, r)
    for it in range(max_iter):
        Mp = matvec(p)
        pMp = np.dot(p, Mp)
        if not pMp > 0.0:
            raise NumericalError(f"CG: non-positive curvature {pMp!r} at iteration {it}; "
                                 "system is singular or indefinite")
        step = rr / pMp
        x += step * p
        r -= step * Mp
        rr_new = np.dot(r, r)
        if np.sqrt(rr_new) <= target:
            # guard against drift of the recursive residual
            true_r = np.linalg.norm(rhs - matvec(x))
            if true_r <= target:
                return x
            r = rhs - matvec(x)
            rr_new = np.dot(r, r)
            p = r.copy()
            rr = rr_new
            continue
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise NumericalError(f"CG did not reach relative residual {rtol:g} in {max_iter} iterations "
                         f"(residual {np.linalg.norm(rhs - matvec(x)) / bnorm:.3e})")
