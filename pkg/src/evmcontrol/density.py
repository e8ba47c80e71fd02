"""2-D Gaussian kernel density estimation and anomaly scoring.

The density model for the (t, c) point cloud at one earned-value pivot is
a kernel density estimate with a full (oriented) bandwidth matrix H:

    f(x) = (1/n) sum_i K_H(x - x_i),   K_H = bivariate normal, covariance H.

Bandwidths come either from the normal-reference rule or from minimizing
the smoothed cross-validation criterion (Hall, Marron & Park 1992; Duong &
Hazelton 2005), evaluated in closed form for Gaussian kernels:

    SCV(H) = (4 pi)^(-d/2) |H|^(-1/2) / n
           + n^(-2) sum_ij (phi_{2H+2G} - 2 phi_{H+2G} + phi_{2G})(x_i - x_j)

with a normal-scale pilot G and phi_S the N(0, S) density.  The double sum
runs over all ordered pairs including i = j.

Anomaly scores use highest-density-region exceedance: the score of a
status is the fraction of a held-out reference sample whose fitted density
is strictly larger.  Scores near 0 are typical; a score above 0.95 places
the status outside the 5% density contour.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .errors import ValidationError
from .rng import generator

SCV_MIN_POINTS = 50
SCV_SUBSAMPLE_DEFAULT = 2000


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError("points must be an (n, 2) array")
    return pts


def check_bandwidth(H) -> np.ndarray:
    """Validate a 2x2 symmetric positive-definite bandwidth matrix."""
    H = np.asarray(H, dtype=float)
    if H.shape != (2, 2) or not np.allclose(H, H.T, rtol=1e-10, atol=0):
        raise ValidationError("bandwidth must be a symmetric 2x2 matrix")
    det = H[0, 0] * H[1, 1] - H[0, 1] ** 2
    if H[0, 0] <= 0 or det <= 0:
        raise ValidationError("bandwidth matrix must be positive definite")
    return H


def normal_scale_bandwidth(points) -> np.ndarray:
    """Normal-reference bandwidth n^(-2/(d+4)) (4/(d+2))^(2/(d+4)) Cov."""
    pts = _as_points(points)
    n, d = pts.shape
    if n < 3:
        raise ValidationError("normal-scale bandwidth needs at least 3 points")
    cov = np.cov(pts.T, ddof=1)
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] ** 2
    scale = max(cov[0, 0], cov[1, 1])
    if not np.isfinite(det) or det <= 1e-12 * max(scale, 1e-300) ** 2:
        raise ValidationError("sample covariance is singular (points are collinear)")
    factor = n ** (-2.0 / (d + 4)) * (4.0 / (d + 2)) ** (2.0 / (d + 4))
    return factor * cov


def _scv_criterion_factory(pts: np.ndarray, G: np.ndarray):
    """Closed-form SCV objective over candidate H for a fixed pilot G."""
    n = len(pts)
    iu, ju = np.triu_indices(n, k=1)
    du = pts[iu, 0] - pts[ju, 0]
    dv = pts[iu, 1] - pts[ju, 1]
    p_uu, p_uv, p_vv = du * du, du * dv, dv * dv

    def phi_sum(S: np.ndarray) -> float:
        # sum over all ordered pairs (incl. i = j) of the N(0, S) density
        det = S[0, 0] * S[1, 1] - S[0, 1] ** 2
        if not np.isfinite(det) or det <= 0:
            return np.inf
        a00 = S[1, 1] / det
        a11 = S[0, 0] / det
        a01 = -S[0, 1] / det
        q = a00 * p_uu + 2 * a01 * p_uv + a11 * p_vv
        with np.errstate(under="ignore"):
            total = n + 2.0 * np.exp(-0.5 * q).sum()
        return total / (2 * np.pi * np.sqrt(det))

    const_2g = phi_sum(2 * G)

    def criterion(H: np.ndarray) -> float:
        det = H[0, 0] * H[1, 1] - H[0, 1] ** 2
        if not np.isfinite(det) or det <= 0:
            return np.inf
        term1 = 1.0 / (4 * np.pi * n * np.sqrt(det))
        pair = phi_sum(2 * H + 2 * G) - 2 * phi_sum(H + 2 * G) + const_2g
        return term1 + pair / n**2

    return criterion


def _theta_to_h(theta: np.ndarray) -> np.ndarray:
    # lower-triangular square root with positive diagonal
    l00 = np.exp(theta[0])
    l11 = np.exp(theta[2])
    l10 = theta[1]
    return np.array([[l00 * l00, l00 * l10], [l00 * l10, l10 * l10 + l11 * l11]])


def scv_bandwidth(
    points,
    subsample: int = SCV_SUBSAMPLE_DEFAULT,
    seed: int = 0,
    maxiter: int = 150,
) -> np.ndarray:
    """Full bandwidth matrix minimizing the SCV criterion.

    The objective is optimized over SPD matrices through their Cholesky
    factor (log-parameterized diagonal) with Nelder-Mead, started at the
    normal-scale bandwidth.  Samples larger than ``subsample`` are reduced
    to a seeded subsample before the O(n^2) criterion is formed.  Falls
    back to the normal-scale rule (with a warning) below
    ``SCV_MIN_POINTS`` points or when the optimizer fails to improve.
    """
    pts = _as_points(points)
    h0 = normal_scale_bandwidth(pts)
    if len(pts) < SCV_MIN_POINTS:
        warnings.warn(
            f"fewer than {SCV_MIN_POINTS} points: falling back to the normal-scale bandwidth"
        )
        return h0
    if len(pts) > subsample:
        keep = generator(seed, 0xBA17D).choice(len(pts), size=subsample, replace=False)
        pts = pts[np.sort(keep)]
        h0 = normal_scale_bandwidth(pts)

    pilot = normal_scale_bandwidth(pts)
    criterion = _scv_criterion_factory(pts, pilot)

    chol = np.linalg.cholesky(h0)
    theta0 = np.array([np.log(chol[0, 0]), chol[1, 0], np.log(chol[1, 1])])
    f0 = criterion(h0)
    result = minimize(
        lambda th: criterion(_theta_to_h(th)),
        theta0,
        method="Nelder-Mead",
        options={"maxiter": maxiter, "xatol": 1e-3, "fatol": abs(f0) * 1e-7},
    )
    h_opt = _theta_to_h(result.x)
    if not np.isfinite(result.fun) or result.fun >= criterion(h0):
        warnings.warn("SCV optimizer failed to improve; returning the normal-scale bandwidth")
        return h0
    return check_bandwidth(h_opt)


def _gaussian_eval(centers: np.ndarray, H: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Mean Gaussian kernel density of ``queries`` against ``centers``."""
    det = H[0, 0] * H[1, 1] - H[0, 1] ** 2
    A = np.array([[H[1, 1], -H[0, 1]], [-H[0, 1], H[0, 0]]]) / det
    norm = 1.0 / (2 * np.pi * np.sqrt(det) * len(centers))
    ca = centers @ A
    rc = (ca * centers).sum(axis=1)
    out = np.empty(len(queries))
    chunk = max(1, int(4_000_000 // max(len(centers), 1)))
    for start in range(0, len(queries), chunk):
        q = queries[start : start + chunk]
        qa = q @ A
        rq = (qa * q).sum(axis=1)
        sq = rq[:, None] + rc[None, :] - 2.0 * (qa @ centers.T)
        np.maximum(sq, 0.0, out=sq)  # clip round-off negatives
        with np.errstate(under="ignore"):
            out[start : start + chunk] = np.exp(-0.5 * sq).sum(axis=1) * norm
    return out


@dataclass(frozen=True)
class DensityModel:
    """Fitted KDE plus a held-out reference sample for anomaly scoring.

    ``reference_densities`` is sorted ascending; ``reference_points`` keeps
    the raw sample for marginal summaries of the highest-density region.
    """

    points: np.ndarray
    H: np.ndarray
    reference_densities: np.ndarray
    reference_points: np.ndarray

    def evaluate(self, queries) -> np.ndarray | float:
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        vals = _gaussian_eval(self.points, self.H, q)
        return float(vals[0]) if np.ndim(queries) == 1 else vals

    def evaluate_grid(self, ts, cs) -> np.ndarray:
        """Density on the product grid; result[i, j] = f(ts[i], cs[j])."""
        tt, cc = np.meshgrid(np.asarray(ts, float), np.asarray(cs, float), indexing="ij")
        flat = np.column_stack([tt.ravel(), cc.ravel()])
        return self.evaluate(flat).reshape(tt.shape)


def kde_fit(points, H, reference_points=None) -> DensityModel:
    """Fit the KDE; optionally score a held-out reference sample.

    ``reference_points`` should be disjoint from ``points`` so that the
    anomaly score of a fresh status is rank-calibrated.
    """
    pts = _as_points(points)
    if len(pts) < 1:
        raise ValidationError("kde_fit needs at least one point")
    H = check_bandwidth(H)
    refs = np.array([])
    ref_pts = np.empty((0, 2))
    if reference_points is not None:
        ref_pts = _as_points(reference_points)
        refs = np.sort(_gaussian_eval(pts, H, ref_pts))
    return DensityModel(points=pts, H=H, reference_densities=refs, reference_points=ref_pts)


def anomaly_probability(model: DensityModel, status) -> np.ndarray | float:
    """Fraction of reference densities strictly greater than f(status)."""
    refs = model.reference_densities
    if refs.size == 0:
        raise ValidationError("density model has no reference sample")
    dens = np.atleast_1d(model.evaluate(np.atleast_2d(np.asarray(status, float))))
    greater = refs.size - np.searchsorted(refs, dens, side="right")
    score = greater / refs.size
    return float(score[0]) if np.ndim(status) == 1 else score


def fit_anomaly_model(
    t,
    c,
    seed: int = 0,
    bandwidth: str = "scv",
    fit_cap: int = 8000,
    reference_cap: int = 8000,
    scv_subsample: int = SCV_SUBSAMPLE_DEFAULT,
) -> DensityModel:
    """Split a triad cloud into fit/reference halves and build the model.

    Fitting on one half and ranking against the other avoids the
    optimistic bias of scoring training points against themselves.
    """
    pts = np.column_stack([np.asarray(t, float), np.asarray(c, float)])
    if len(pts) < 4:
        raise ValidationError("anomaly model needs at least 4 points")
    perm = generator(seed, 0x5B117).permutation(len(pts))
    half = len(pts) // 2
    fit_idx = perm[:half][:fit_cap]
    ref_idx = perm[half:][:reference_cap]
    fit_pts = pts[np.sort(fit_idx)]
    if bandwidth == "scv":
        H = scv_bandwidth(fit_pts, subsample=scv_subsample, seed=seed)
    elif bandwidth == "normal_scale":
        H = normal_scale_bandwidth(fit_pts)
    else:
        raise ValidationError(f"unknown bandwidth rule: {bandwidth}")
    return kde_fit(fit_pts, H, reference_points=pts[np.sort(ref_idx)])


@dataclass(frozen=True)
class ConfidenceRectangle:
    """Independent marginal percentile box for (t, c) at one pivot."""

    level: float
    t_lo: float
    t_hi: float
    c_lo: float
    c_hi: float

    def contains(self, t: float, c: float) -> bool:
        return self.t_lo <= t <= self.t_hi and self.c_lo <= c <= self.c_hi


def percentile_rectangle(t, c, level: float) -> ConfidenceRectangle:
    """Marginal empirical percentiles at (1 +- level)/2 for t and c."""
    t = np.asarray(t, dtype=float)
    c = np.asarray(c, dtype=float)
    if t.size < 2 or c.size != t.size:
        raise ValidationError("percentile rectangle needs >= 2 paired rows")
    if not 0 < level < 1:
        raise ValidationError("level must lie in (0, 1)")
    lo, hi = (1 - level) / 2, (1 + level) / 2
    t_lo, t_hi = np.quantile(t, [lo, hi])
    c_lo, c_hi = np.quantile(c, [lo, hi])
    return ConfidenceRectangle(level, float(t_lo), float(t_hi), float(c_lo), float(c_hi))


def write_density_grid_csv(model: DensityModel, ts, cs, path: str | Path) -> None:
    """Export ``t,c,density,anomaly_score`` over the product grid."""
    ts = np.asarray(ts, float)
    cs = np.asarray(cs, float)
    tt, cc = np.meshgrid(ts, cs, indexing="ij")
    flat = np.column_stack([tt.ravel(), cc.ravel()])
    dens = model.evaluate(flat)
    refs = model.reference_densities
    score = (
        (refs.size - np.searchsorted(refs, dens, side="right")) / refs.size
        if refs.size
        else np.full(len(flat), np.nan)
    )
    cols = np.column_stack([flat[:, 0], flat[:, 1], dens, score])
    np.savetxt(
        path, cols, fmt="%.9g", delimiter=",", header="t,c,density,anomaly_score", comments=""
    )
