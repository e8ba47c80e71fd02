"""End-to-end orchestration: simulate, analyze, report.

``cmd_simulate`` writes the triad ensemble per pivot level as CSV plus a
manifest.  ``cmd_analyze`` takes an observed status (AT, AC, EV), pivots
the ensemble at EV/BAC, and assembles a control report: anomaly score
from the fitted density model, over-cost / delay probabilities from the
classifier family chosen by nested cross-validation, and expected final
cost / duration from the additive-model family chosen the same way.

Everything is seeded through one configuration value, so a fixed
``RunConfig`` reproduces its outputs byte for byte.  Fitted models are
cached (write-once, content-addressed by project fingerprint, seed, pivot
level and the model settings) so repeated status queries do not refit.

Performance defaults: learners with superlinear cost (SVM, forest, loess,
SCV) train on seeded subsamples whose sizes live in ``RunConfig``; the
defaults keep a full analysis in the minutes range on a laptop while
leaving the estimators' statistical behavior intact.  Grids are ordered
from the simplest parameterization to the most flexible, which is also
the inner-loop tie-breaking order.
"""

from __future__ import annotations

import hashlib
import json
import os
import pickle
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import classify, density, gam
from .errors import ValidationError
from .forest import forest_fit, forest_predict
from .geometry import convex_hull, marching_squares, points_in_hull
from .model_selection import Family, SelectionReport, nested_cv
from .project import ProjectSpec, baseline_pv, evm_status, load_project
from .rng import generator, mix_seed
from .simulate import TriadDataset, read_triads_csv, run_ensemble
from .svm import svm_fit, svm_predict

DEFAULT_EV_LEVELS = tuple(round(0.1 * k, 1) for k in range(1, 10))
CONTOUR_LEVELS = (0.5, 0.75, 0.95)


def _stable_tag(name: str) -> int:
    """Deterministic 32-bit tag for seed derivation (hash() is salted)."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "big")


def _grid_pairs(values, reverse=False):
    ordered = sorted(values, reverse=reverse)
    return tuple(
        {"a": a, "b": b} for a in ordered for b in ordered
    )


@dataclass(frozen=True)
class RunConfig:
    """Pipeline settings; echoed verbatim into every output."""

    project: str
    runs: int = 20000
    seed: int = 0
    ev_levels: tuple[float, ...] = DEFAULT_EV_LEVELS
    grid_resolution: int = 60
    density_grid_resolution: int = 200
    out_dir: str = "evmcontrol-out"
    # sampling caps for superlinear learners
    train_subsample: int = 1500
    kde_fit_cap: int = 8000
    kde_reference_cap: int = 10000
    scv_subsample: int = 2000
    # model selection
    k_outer: int = 5
    k_inner: int = 5
    svm_grid: tuple[Mapping, ...] = ({"C": 1.0, "gamma": 0.5}, {"C": 1.0, "gamma": 2.0})
    forest_grid: tuple[Mapping, ...] = ({"min_node": 25}, {"min_node": 5})
    knot_grid: tuple[Mapping, ...] = _grid_pairs((2, 4, 6, 8))
    span_grid: tuple[Mapping, ...] = _grid_pairs((1.0, 0.6, 0.3), reverse=True)
    cv_forest_ntree: int = 60
    final_forest_ntree: int = 300

    def to_dict(self) -> dict:
        return {
            "project": str(self.project),
            "runs": self.runs,
            "seed": self.seed,
            "ev_levels": list(self.ev_levels),
            "grid_resolution": self.grid_resolution,
            "density_grid_resolution": self.density_grid_resolution,
            "out_dir": str(self.out_dir),
            "train_subsample": self.train_subsample,
            "kde_fit_cap": self.kde_fit_cap,
            "kde_reference_cap": self.kde_reference_cap,
            "scv_subsample": self.scv_subsample,
            "k_outer": self.k_outer,
            "k_inner": self.k_inner,
            "svm_grid": [dict(g) for g in self.svm_grid],
            "forest_grid": [dict(g) for g in self.forest_grid],
            "knot_grid": [dict(g) for g in self.knot_grid],
            "span_grid": [dict(g) for g in self.span_grid],
            "cv_forest_ntree": self.cv_forest_ntree,
            "final_forest_ntree": self.final_forest_ntree,
        }


@dataclass(frozen=True)
class ControlReport:
    """Everything a status check reports at one pivot level."""

    ev_level: float
    at: float
    ac: float
    ev: float
    sv: float
    cv: float
    x: float
    bac: float
    pd: float
    p_anomaly: float
    p_overcost: float
    p_delay: float
    expected_final_cost: float
    expected_overcost: float
    expected_final_duration: float
    expected_delay: float
    overcost_model: dict
    delay_model: dict
    cost_model: dict
    duration_model: dict
    status_in_trusted_region: bool
    cost_extrapolated: bool
    duration_extrapolated: bool
    band_t: tuple[float, float]
    band_c: tuple[float, float]

    def to_dict(self) -> dict:
        out = {
            "ev_level": self.ev_level,
            "at": self.at,
            "ac": self.ac,
            "ev": self.ev,
            "sv": self.sv,
            "cv": self.cv,
            "x": self.x,
            "bac": self.bac,
            "pd": self.pd,
            "p_anomaly": self.p_anomaly,
            "p_overcost": self.p_overcost,
            "p_delay": self.p_delay,
            "expected_final_cost": self.expected_final_cost,
            "expected_overcost": self.expected_overcost,
            "expected_final_duration": self.expected_final_duration,
            "expected_delay": self.expected_delay,
            "overcost_model": self.overcost_model,
            "delay_model": self.delay_model,
            "cost_model": self.cost_model,
            "duration_model": self.duration_model,
            "status_in_trusted_region": self.status_in_trusted_region,
            "cost_extrapolated": self.cost_extrapolated,
            "duration_extrapolated": self.duration_extrapolated,
            "band_t": list(self.band_t),
            "band_c": list(self.band_c),
        }
        return out


# ---------------------------------------------------------------------------
# simulate


def _level_filename(level: float) -> str:
    return f"triads_ev{level:.9g}.csv"


def cmd_simulate(config: RunConfig, spec: ProjectSpec | None = None) -> dict:
    """Run the ensemble and write one triad CSV per pivot level + manifest."""
    if spec is None:
        spec = load_project(config.project)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = run_ensemble(spec, config.runs, config.seed, config.ev_levels)
    files = {}
    for level in config.ev_levels:
        name = _level_filename(level)
        dataset.rows_at(level).write_csv(out / name)
        files[f"{level:.9g}"] = name
    manifest = {
        "fingerprint": spec.fingerprint(),
        "seed": config.seed,
        "runs": config.runs,
        "ev_levels": [float(l) for l in config.ev_levels],
        "bac": spec.bac,
        "pd": spec.pd,
        "files": files,
        "config": config.to_dict(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


# ---------------------------------------------------------------------------
# model families


def _qda_family() -> Family:
    def fit(X, y, params):
        model = classify.qda_fit(X, y)
        return lambda Q: classify.qda_predict(model, Q)[:, 1] > 0.5

    return Family(name="qda", kind="classifier", fit=fit)


def _forest_family(ntree: int, seed: int) -> Family:
    def fit(X, y, params):
        model = forest_fit(X, y, ntree=ntree, mtry=1,
                           min_node=params.get("min_node", 5), seed=seed)
        return lambda Q: forest_predict(model, Q)[:, 1] > 0.5

    return Family(name="forest", kind="classifier", fit=fit)


def _svm_family() -> Family:
    def fit(X, y, params):
        model = svm_fit(X, y, C=params["C"], gamma=params["gamma"])
        return lambda Q: svm_predict(model, Q) > 0.5

    return Family(name="svm", kind="classifier", fit=fit)


def _spline_gam_family() -> Family:
    def fit(X, y, params):
        model = gam.backfit_gam(X, y, [gam.spline_spec(params["a"]), gam.spline_spec(params["b"])])
        return lambda Q: gam.gam_predict(model, Q)[0]

    return Family(name="gam_splines", kind="regressor", fit=fit)


def _loess_gam_family() -> Family:
    def fit(X, y, params):
        model = gam.backfit_gam(X, y, [gam.loess_spec(params["a"]), gam.loess_spec(params["b"])])
        return lambda Q: gam.gam_predict(model, Q)[0]

    return Family(name="gam_loess", kind="regressor", fit=fit)


def _fit_final_classifier(name: str, params: Mapping, X, y, config: RunConfig, seed: int):
    if name == "qda":
        return classify.qda_fit(X, y)
    if name == "forest":
        return forest_fit(X, y, ntree=config.final_forest_ntree, mtry=1,
                          min_node=params.get("min_node", 5), seed=seed)
    if name == "svm":
        return svm_fit(X, y, C=params["C"], gamma=params["gamma"])
    raise ValidationError(f"unknown classifier family {name!r}")


def _fit_final_gam(name: str, params: Mapping, X, y) -> gam.GamModel:
    if name == "gam_splines":
        specs = [gam.spline_spec(params["a"]), gam.spline_spec(params["b"])]
    elif name == "gam_loess":
        specs = [gam.loess_spec(params["a"]), gam.loess_spec(params["b"])]
    else:
        raise ValidationError(f"unknown regression family {name!r}")
    return gam.backfit_gam(X, y, specs)


@dataclass
class ClassifierArtifact:
    target: str
    degenerate: bool
    fixed_probability: float | None
    family: str
    params: dict
    model: object | None
    selection: dict
    boundary: classify.DecisionBoundary | None = None


def classifier_predict_proba(art: ClassifierArtifact, X) -> np.ndarray:
    """Positive-class probability from whichever family was selected."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if art.degenerate:
        return np.full(len(X), art.fixed_probability)
    if art.family == "qda":
        return classify.qda_predict(art.model, X)[:, 1]
    if art.family == "forest":
        return forest_predict(art.model, X)[:, 1]
    if art.family == "svm":
        return svm_predict(art.model, X)
    raise ValidationError(f"unknown classifier family {art.family!r}")


@dataclass
class RegressorArtifact:
    target: str
    family: str
    params: dict
    model: gam.GamModel
    selection: dict
    anova: dict


@dataclass
class AnalysisArtifacts:
    level_rows: TriadDataset
    density_model: density.DensityModel | None
    classifiers: dict
    regressors: dict
    hull: np.ndarray
    t_grid: np.ndarray
    c_grid: np.ndarray
    degenerate: bool = False
    # populated only for degenerate (zero-spread) clouds
    bbox: tuple[float, float, float, float] | None = None
    const_expectations: dict | None = None


def _select_classifier(X, y, config: RunConfig, seed: int, target: str) -> ClassifierArtifact:
    data = classify.LabeledData(target=target, X=X, y=y)
    if data.single_class:
        fixed = 1.0 if y.all() else 0.0
        return ClassifierArtifact(
            target=target, degenerate=True, fixed_probability=fixed,
            family="degenerate", params={}, model=None,
            selection={"note": "single-class target; probability fixed", "fixed": fixed},
        )
    families = [
        (_qda_family(), ({},)),
        (_forest_family(config.cv_forest_ntree, mix_seed(seed, 0xF0)), config.forest_grid),
        (_svm_family(), config.svm_grid),
    ]
    reports: list[SelectionReport] = []
    for fam, grid in families:
        reports.append(
            nested_cv(X, y, fam, grid, k_outer=config.k_outer, k_inner=config.k_inner,
                      seed=mix_seed(seed, _stable_tag(fam.name)))
        )
    best = min(range(len(reports)), key=lambda i: (reports[i].outer_mean, i))
    chosen = reports[best]
    params = chosen.best_params()
    model = _fit_final_classifier(chosen.family, params, X, y, config,
                                  seed=mix_seed(seed, 0xF1))
    selection = {
        "chosen_family": chosen.family,
        "chosen_params": dict(params),
        "outer_error": chosen.outer_mean,
        "outer_error_std": chosen.outer_std,
        "per_family": {r.family: r.outer_mean for r in reports},
        "class_balance": float(np.asarray(y).mean()),
    }
    if chosen.family == "qda":
        selection["class_priors"] = model.priors.tolist()
    return ClassifierArtifact(
        target=target, degenerate=False, fixed_probability=None,
        family=chosen.family, params=dict(params), model=model,
        selection=selection,
    )


def _select_regressor(X, y, config: RunConfig, seed: int, target: str) -> RegressorArtifact:
    families = [
        (_spline_gam_family(), config.knot_grid),
        (_loess_gam_family(), config.span_grid),
    ]
    reports: list[SelectionReport] = []
    for fam, grid in families:
        reports.append(
            nested_cv(X, y, fam, grid, k_outer=config.k_outer, k_inner=config.k_inner,
                      seed=mix_seed(seed, _stable_tag(fam.name)), stratified=False)
        )
    best = min(range(len(reports)), key=lambda i: (reports[i].outer_mean, i))
    chosen = reports[best]
    params = chosen.best_params()
    model = _fit_final_gam(chosen.family, params, X, y)
    # head-to-head comparison of the two family winners on the same rows
    other = reports[1 - best]
    other_model = _fit_final_gam(other.family, other.best_params(), X, y)
    small, large = sorted([model, other_model], key=lambda m: m.df)
    try:
        anova = gam.anova_compare(small, large)
        anova_dict = {
            "f_stat": anova.f_stat,
            "p_value": anova.p_value,
            "df_num": anova.df_num,
            "df_den": anova.df_den,
            "larger_model_better": anova.p_value < 0.05,
            "note": anova.note,
        }
    except ValidationError as exc:
        anova_dict = {"note": f"comparison unavailable: {exc}"}
    return RegressorArtifact(
        target=target, family=chosen.family, params=dict(params), model=model,
        selection={
            "chosen_family": chosen.family,
            "chosen_params": dict(params),
            "outer_mse": chosen.outer_mean,
            "outer_mse_std": chosen.outer_std,
            "per_family": {r.family: r.outer_mean for r in reports},
        },
        anova=anova_dict,
    )


# ---------------------------------------------------------------------------
# analyze


def _load_or_simulate_level(config: RunConfig, spec: ProjectSpec, level: float,
                            data_dir: str | None) -> TriadDataset:
    if data_dir:
        manifest_path = Path(data_dir) / "manifest.json"
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text())
            if manifest.get("fingerprint") == spec.fingerprint():
                for key, name in manifest.get("files", {}).items():
                    if abs(float(key) - level) <= 1e-9:
                        ds = read_triads_csv(Path(data_dir) / name,
                                             fingerprint=manifest["fingerprint"],
                                             seed=manifest["seed"])
                        return ds
    cache = Path(config.out_dir) / "cache"
    cache.mkdir(parents=True, exist_ok=True)
    key = hashlib.sha256(
        f"{spec.fingerprint()}|{config.seed}|{config.runs}|{level:.12g}".encode()
    ).hexdigest()[:20]
    cached = cache / f"triads_{key}.csv"
    if cached.exists():
        return read_triads_csv(cached, fingerprint=spec.fingerprint(), seed=config.seed)
    ds = run_ensemble(spec, config.runs, config.seed, [level])
    _write_once(cached, lambda p: ds.write_csv(p))
    return ds


def _write_once(path: Path, writer: Callable[[Path], None]) -> None:
    """Content-addressed cache write: first writer wins, later ones no-op."""
    if path.exists():
        return
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        writer(Path(tmp))
        try:
            os.link(tmp, path)  # atomic; fails if someone beat us to it
        except FileExistsError:
            pass
    finally:
        Path(tmp).unlink(missing_ok=True)


def _models_cache_key(config: RunConfig, spec: ProjectSpec, level: float) -> str:
    knobs = config.to_dict()
    knobs.pop("out_dir")
    knobs.pop("ev_levels")
    blob = json.dumps({"fp": spec.fingerprint(), "level": round(level, 12), "knobs": knobs},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def _cloud_degenerate(t: np.ndarray, c: np.ndarray) -> bool:
    spread_t = np.ptp(t) <= 1e-9 * max(1.0, abs(float(t.mean())))
    spread_c = np.ptp(c) <= 1e-9 * max(1.0, abs(float(c.mean())))
    return spread_t or spread_c


def _fit_level_models(config: RunConfig, spec: ProjectSpec, level_rows: TriadDataset,
                      level: float) -> AnalysisArtifacts:
    seed = mix_seed(config.seed, int(round(level * 1e6)))
    t, c = level_rows.t, level_rows.c
    if _cloud_degenerate(t, c):
        # zero-spread cloud (e.g. a deterministic project): membership scoring
        # replaces the density model; outcomes are the observed constants
        pts = np.column_stack([t, c])
        sub = generator(seed, 0x7A1).permutation(len(t))[: config.train_subsample]
        classifiers = {}
        for target in ("over_budget", "late"):
            y = (level_rows.over_budget if target == "over_budget" else level_rows.late)[sub]
            classifiers[target] = _select_classifier(
                pts[sub], y, config, mix_seed(seed, _stable_tag(target)), target
            )
        return AnalysisArtifacts(
            level_rows=level_rows,
            density_model=None,
            classifiers=classifiers,
            regressors={},
            hull=convex_hull(pts),
            t_grid=np.array([t.min(), t.max()]),
            c_grid=np.array([c.min(), c.max()]),
            degenerate=True,
            bbox=(float(t.min()), float(t.max()), float(c.min()), float(c.max())),
            const_expectations={
                "final_cost": float(level_rows.final_c.mean()),
                "final_duration": float(level_rows.final_t.mean()),
            },
        )
    dens = density.fit_anomaly_model(
        t, c, seed=seed, bandwidth="scv",
        fit_cap=config.kde_fit_cap, reference_cap=config.kde_reference_cap,
        scv_subsample=config.scv_subsample,
    )
    pts = np.column_stack([t, c])
    sub = generator(seed, 0x7A1).permutation(len(t))[: config.train_subsample]
    sub = np.sort(sub)
    Xs = pts[sub]
    hull = convex_hull(pts)
    pad_t = (t.max() - t.min()) * 0.05 + 1e-9
    pad_c = (c.max() - c.min()) * 0.05 + 1e-9
    t_grid = np.linspace(t.min() - pad_t, t.max() + pad_t, config.grid_resolution)
    c_grid = np.linspace(c.min() - pad_c, c.max() + pad_c, config.grid_resolution)

    classifiers = {}
    for target in ("over_budget", "late"):
        y = (level_rows.over_budget if target == "over_budget" else level_rows.late)[sub]
        art = _select_classifier(Xs, y, config, mix_seed(seed, _stable_tag(target)), target)
        if not art.degenerate:
            art.boundary = classify.decision_boundary(
                lambda Q, a=art: classifier_predict_proba(a, Q), t_grid, c_grid, pts
            )
        classifiers[target] = art

    regressors = {}
    for target, values in (("final_cost", level_rows.final_c), ("final_duration", level_rows.final_t)):
        art = _select_regressor(Xs, values[sub], config,
                                mix_seed(seed, _stable_tag(target)), target)
        regressors[target] = art

    return AnalysisArtifacts(
        level_rows=level_rows,
        density_model=dens,
        classifiers=classifiers,
        regressors=regressors,
        hull=hull,
        t_grid=t_grid,
        c_grid=c_grid,
    )


def _anomaly_grid(artifacts: AnalysisArtifacts, resolution: int):
    """Anomaly scores on the density chart grid (bbox + 3 bandwidth sds)."""
    model = artifacts.density_model
    pts = model.points
    sd_t = np.sqrt(model.H[0, 0])
    sd_c = np.sqrt(model.H[1, 1])
    ts = np.linspace(pts[:, 0].min() - 3 * sd_t, pts[:, 0].max() + 3 * sd_t, resolution)
    cs = np.linspace(pts[:, 1].min() - 3 * sd_c, pts[:, 1].max() + 3 * sd_c, resolution)
    dens = model.evaluate_grid(ts, cs)
    refs = model.reference_densities
    scores = (refs.size - np.searchsorted(refs, dens.ravel(), side="right")) / refs.size
    return ts, cs, scores.reshape(dens.shape)


def _variability_band(artifacts: AnalysisArtifacts) -> tuple[tuple[float, float], tuple[float, float]]:
    """Marginal extent of the 95% highest-density region of the reference sample."""
    model = artifacts.density_model
    refs = model.reference_points
    scores = density.anomaly_probability(model, refs)
    keep = scores <= 0.95
    if not keep.any():
        keep = np.ones(len(refs), dtype=bool)
    return (
        (float(refs[keep, 0].min()), float(refs[keep, 0].max())),
        (float(refs[keep, 1].min()), float(refs[keep, 1].max())),
    )


@dataclass
class AnalysisResult:
    report: ControlReport
    document: dict
    artifacts: AnalysisArtifacts


def cmd_analyze(config: RunConfig, at: float, ac: float, ev: float,
                data_dir: str | None = None, spec: ProjectSpec | None = None,
                write: bool = True) -> AnalysisResult:
    """Full status analysis at the pivot level EV / BAC."""
    if spec is None:
        spec = load_project(config.project)
    if not 0 < ev < spec.bac:
        raise ValidationError("analysis needs EV strictly inside (0, BAC)")
    status = evm_status(spec, at, ac, ev)
    level = status.x
    level_rows = _load_or_simulate_level(config, spec, level, data_dir)

    cache_dir = Path(config.out_dir) / "cache"
    cache_dir.mkdir(parents=True, exist_ok=True)
    model_key = _models_cache_key(config, spec, level)
    model_path = cache_dir / f"models_{model_key}.pkl"
    artifacts = None
    if model_path.exists():
        try:
            with open(model_path, "rb") as fh:
                artifacts = pickle.load(fh)
        except Exception:
            artifacts = None
    if artifacts is None:
        artifacts = _fit_level_models(config, spec, level_rows, level)
        _write_once(model_path, lambda p: p.write_bytes(pickle.dumps(artifacts)))

    point = np.array([at, ac])
    if artifacts.degenerate:
        t_lo, t_hi, c_lo, c_hi = artifacts.bbox
        tol_t = 1e-9 * max(1.0, abs(t_hi))
        tol_c = 1e-9 * max(1.0, abs(c_hi))
        inside = (t_lo - tol_t <= at <= t_hi + tol_t) and (c_lo - tol_c <= ac <= c_hi + tol_c)
        p_anomaly = 0.0 if inside else 1.0
    else:
        p_anomaly = float(density.anomaly_probability(artifacts.density_model, point))

    probs = {}
    for target, art in artifacts.classifiers.items():
        probs[target] = float(classifier_predict_proba(art, point[None, :])[0])

    expectations = {}
    extrapolated = {}
    if artifacts.degenerate:
        expectations = dict(artifacts.const_expectations)
        t_lo, t_hi, c_lo, c_hi = artifacts.bbox
        outside = not (t_lo <= at <= t_hi and c_lo <= ac <= c_hi)
        extrapolated = {"final_cost": outside, "final_duration": outside}
    else:
        for target, art in artifacts.regressors.items():
            yhat, flag = gam.gam_predict(art.model, point[None, :])
            expectations[target] = float(yhat[0])
            extrapolated[target] = bool(flag[0])

    if artifacts.degenerate:
        t_lo, t_hi, c_lo, c_hi = artifacts.bbox
        band_t, band_c = (t_lo, t_hi), (c_lo, c_hi)
    else:
        band_t, band_c = _variability_band(artifacts)
    in_hull = bool(points_in_hull(point[None, :], artifacts.hull)[0])

    report = ControlReport(
        ev_level=level,
        at=status.at, ac=status.ac, ev=status.ev,
        sv=status.sv, cv=status.cv, x=status.x,
        bac=spec.bac, pd=spec.pd,
        p_anomaly=p_anomaly,
        p_overcost=probs["over_budget"],
        p_delay=probs["late"],
        expected_final_cost=expectations["final_cost"],
        expected_overcost=expectations["final_cost"] - spec.bac,
        expected_final_duration=expectations["final_duration"],
        expected_delay=expectations["final_duration"] - spec.pd,
        overcost_model=artifacts.classifiers["over_budget"].selection,
        delay_model=artifacts.classifiers["late"].selection,
        cost_model=(artifacts.regressors["final_cost"].selection
                    if "final_cost" in artifacts.regressors
                    else {"note": "degenerate cloud; observed constant reported"}),
        duration_model=(artifacts.regressors["final_duration"].selection
                        if "final_duration" in artifacts.regressors
                        else {"note": "degenerate cloud; observed constant reported"}),
        status_in_trusted_region=in_hull,
        cost_extrapolated=extrapolated["final_cost"],
        duration_extrapolated=extrapolated["final_duration"],
        band_t=band_t,
        band_c=band_c,
    )
    document = _build_document(config, spec, report, artifacts)
    if write:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(document, indent=2))
    return AnalysisResult(report=report, document=document, artifacts=artifacts)


def write_prediction_grid_csv(artifacts: AnalysisArtifacts, ts, cs, path) -> None:
    """Export ``t,c,expected_final_cost,expected_final_duration,extrapolated``."""
    if artifacts.degenerate:
        raise ValidationError("prediction grid unavailable for a degenerate cloud")
    ts = np.asarray(ts, float)
    cs = np.asarray(cs, float)
    tt, cc = np.meshgrid(ts, cs, indexing="ij")
    flat = np.column_stack([tt.ravel(), cc.ravel()])
    cost, flag_cost = gam.gam_predict(artifacts.regressors["final_cost"].model, flat)
    duration, flag_dur = gam.gam_predict(artifacts.regressors["final_duration"].model, flat)
    cols = np.column_stack([flat[:, 0], flat[:, 1], cost, duration,
                            (flag_cost | flag_dur).astype(int)])
    np.savetxt(path, cols, fmt=["%.9g", "%.9g", "%.9g", "%.9g", "%d"], delimiter=",",
               header="t,c,expected_final_cost,expected_final_duration,extrapolated",
               comments="")


def _polylines_json(polylines) -> list:
    return [np.asarray(p).tolist() for p in polylines]


def _build_document(config: RunConfig, spec: ProjectSpec, report: ControlReport,
                    artifacts: AnalysisArtifacts) -> dict:
    pv = baseline_pv(spec)
    if artifacts.degenerate:
        contours = {f"{lvl:g}": [] for lvl in CONTOUR_LEVELS}
    else:
        ts, cs, scores = _anomaly_grid(artifacts, config.density_grid_resolution)
        contours = {
            f"{lvl:g}": _polylines_json(marching_squares(ts, cs, scores, lvl))
            for lvl in CONTOUR_LEVELS
        }
    boundaries = {}
    for target, art in artifacts.classifiers.items():
        if art.boundary is None:
            boundaries[target] = []
        else:
            boundaries[target] = _polylines_json(art.boundary.polylines)
    rows = artifacts.level_rows
    rectangles = {}
    for lvl in (0.95, 0.75):
        rect = density.percentile_rectangle(rows.t, rows.c, lvl)
        rectangles[f"{lvl:g}"] = {
            "t_lo": rect.t_lo, "t_hi": rect.t_hi, "c_lo": rect.c_lo, "c_hi": rect.c_hi,
        }
    return {
        "config": config.to_dict(),
        "report": report.to_dict(),
        "chart": {
            "pv": np.column_stack([pv.times, pv.values]).tolist(),
            "status": {"t": report.at, "c": report.ac, "ev": report.ev},
            "contour_levels": list(CONTOUR_LEVELS),
            "contours": contours,
            "boundaries": boundaries,
            "rectangles": rectangles,
            "hull": artifacts.hull.tolist(),
            "band": {"t": list(report.band_t), "c": list(report.band_c)},
            # favorable (green) below the plan totals, problematic (red) above
            "heatmap_thresholds": {
                "expected_final_cost": spec.bac,
                "expected_final_duration": spec.pd,
            },
        },
    }
