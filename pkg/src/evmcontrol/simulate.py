"""Monte Carlo ensemble generation and (EV, t, c) triad extraction.

Each run samples every activity duration from ``Normal(mean, variance)``
(draws below ``EPS_DURATION`` are rejected and redrawn), schedules the run
earliest-start, and accrues two piecewise-linear curves over the actual
intervals: actual cost at ``cost_rate`` per time unit, and earned value at
``budget / sampled_duration`` per time unit so that every activity
contributes exactly its budget when it completes.

For an earned-value pivot level the triad ``(level, t, c)`` records the
earliest time the EV curve reaches ``level * BAC`` (linear interpolation
inside the breakpoint segment containing the crossing) together with the
actual cost at that time.  Final duration and final cost of the run are
carried along and labelled against the baseline (over budget / late).

Randomness is counter-based (see :mod:`evmcontrol.rng`): run ``i`` of an
ensemble uses the key ``fold(seed, i)``, activity ``j`` (in lexicographic
id order) the key ``fold(run_key, j)``, and rejection attempt ``a`` the key
``fold(act_key, a)``.  Normals come from inverting the standard normal CDF
on those uniforms, so ensembles are reproducible bit for bit regardless of
chunking, threading or row order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .errors import NumericsError, ValidationError
from .project import ProjectSpec, earliest_start_schedule
from .rng import fold, unit_uniform

EPS_DURATION = 1e-6
MAX_REJECTIONS = 1000

TRIAD_CSV_HEADER = "run,ev_level,t,c,final_t,final_c,over_budget,late"

_CHUNK_RUNS = 16384


def _activity_arrays(spec: ProjectSpec):
    """Means, std devs, rates and budgets in canonical (sorted-id) order."""
    ids = spec.sorted_ids()
    by_id = {a.id: a for a in spec.activities}
    means = np.array([by_id[i].mean_duration for i in ids])
    sds = np.array([np.sqrt(by_id[i].variance) for i in ids])
    rates = np.array([by_id[i].cost_rate for i in ids])
    budgets = means * rates
    return ids, means, sds, rates, budgets


def _sample_matrix(run_keys: np.ndarray, means: np.ndarray, sds: np.ndarray) -> np.ndarray:
    """Durations for each (run, activity); rejection below EPS_DURATION."""
    n, m = len(run_keys), len(means)
    act_keys = fold(run_keys[:, None], np.arange(m)[None, :])
    d = means + sds * ndtri(unit_uniform(fold(act_keys, 0)))
    bad = d < EPS_DURATION
    attempt = 1
    mean_grid = np.broadcast_to(means, (n, m))
    sd_grid = np.broadcast_to(sds, (n, m))
    while bad.any():
        if attempt > MAX_REJECTIONS:
            run_ix, act_ix = np.argwhere(bad)[0]
            raise NumericsError(
                f"duration sampling rejected {MAX_REJECTIONS} times "
                f"(run {run_ix}, activity column {act_ix}); "
                "the duration distribution has almost no mass above zero"
            )
        redraw = ndtri(unit_uniform(fold(act_keys[bad], attempt)))
        d[bad] = mean_grid[bad] + sd_grid[bad] * redraw
        attempt += 1
        bad = d < EPS_DURATION
    return d


def sample_durations(spec: ProjectSpec, run_seed: int) -> dict[str, float]:
    """One duration vector keyed by activity id; deterministic in run_seed."""
    ids, means, sds, _, _ = _activity_arrays(spec)
    row = _sample_matrix(np.asarray([run_seed], dtype=np.uint64), means, sds)[0]
    return {i: float(v) for i, v in zip(ids, row)}


@dataclass(frozen=True)
class RunTrace:
    """One simulated realization: schedule plus cumulative AC/EV curves.

    ``times`` holds the breakpoints (every activity start/finish event);
    both curves are linear between breakpoints.
    """

    durations: dict[str, float]
    schedule: dict[str, tuple[float, float]]
    times: np.ndarray
    ev_values: np.ndarray
    ac_values: np.ndarray
    final_t: float
    final_c: float


def simulate_run(spec: ProjectSpec, run_seed: int) -> RunTrace:
    durations = sample_durations(spec, run_seed)
    schedule = earliest_start_schedule(spec, durations)
    events = {0.0}
    for s, f in schedule.values():
        events.add(s)
        events.add(f)
    times = np.array(sorted(events))
    ev = np.zeros_like(times)
    ac = np.zeros_like(times)
    for a in spec.activities:
        s, f = schedule[a.id]
        frac = np.clip((times - s) / (f - s), 0.0, 1.0)
        ev += a.budget * frac
        ac += a.cost_rate * durations[a.id] * frac
    final_t = max(f for _, f in schedule.values())
    final_c = float(sum(a.cost_rate * durations[a.id] for a in spec.activities))
    return RunTrace(
        durations=durations,
        schedule=schedule,
        times=times,
        ev_values=ev,
        ac_values=ac,
        final_t=float(final_t),
        final_c=final_c,
    )


@dataclass(frozen=True)
class Triad:
    ev_level: float
    t: float
    c: float
    final_t: float
    final_c: float


def extract_triad(trace: RunTrace, ev_level: float) -> Triad:
    """Earliest EV-curve crossing of ``ev_level * BAC`` and the AC there."""
    if not 0 < ev_level <= 1:
        raise ValidationError("ev_level must lie in (0, 1]")
    bac = float(trace.ev_values[-1])
    if bac == 0:
        return Triad(ev_level, 0.0, 0.0, trace.final_t, trace.final_c)
    target = ev_level * bac
    idx = int(np.searchsorted(trace.ev_values, target, side="left"))
    idx = min(max(idx, 1), len(trace.times) - 1)
    ev_lo, ev_hi = trace.ev_values[idx - 1], trace.ev_values[idx]
    t_lo, t_hi = trace.times[idx - 1], trace.times[idx]
    if ev_hi > ev_lo:
        t = t_lo + (target - ev_lo) * (t_hi - t_lo) / (ev_hi - ev_lo)
    else:
        t = t_hi
    c = float(np.interp(t, trace.times, trace.ac_values))
    return Triad(ev_level, float(t), c, trace.final_t, trace.final_c)


@dataclass(frozen=True)
class TriadDataset:
    """Ensemble triads at fixed EV pivots, labelled against the baseline.

    Rows are ordered run-major (all pivot levels of run 0, then run 1, ...).
    """

    fingerprint: str
    seed: int
    n_runs: int
    ev_levels: tuple[float, ...]
    run: np.ndarray
    ev_level: np.ndarray
    t: np.ndarray
    c: np.ndarray
    final_t: np.ndarray
    final_c: np.ndarray
    over_budget: np.ndarray
    late: np.ndarray

    def rows_at(self, level: float) -> "TriadDataset":
        """Subset at one pivot level (row order preserved)."""
        mask = np.abs(self.ev_level - level) <= 1e-9 * max(1.0, abs(level))
        if not mask.any():
            raise ValidationError(f"no rows at ev_level {level}")
        return TriadDataset(
            fingerprint=self.fingerprint,
            seed=self.seed,
            n_runs=int(mask.sum()),
            ev_levels=(level,),
            run=self.run[mask],
            ev_level=self.ev_level[mask],
            t=self.t[mask],
            c=self.c[mask],
            final_t=self.final_t[mask],
            final_c=self.final_c[mask],
            over_budget=self.over_budget[mask],
            late=self.late[mask],
        )

    def write_csv(self, path: str | Path) -> None:
        cols = np.column_stack(
            [
                self.run,
                self.ev_level,
                self.t,
                self.c,
                self.final_t,
                self.final_c,
                self.over_budget.astype(int),
                self.late.astype(int),
            ]
        )
        fmt = ["%d", "%.9g", "%.9g", "%.9g", "%.9g", "%.9g", "%d", "%d"]
        np.savetxt(path, cols, fmt=fmt, delimiter=",", header=TRIAD_CSV_HEADER, comments="")


def read_triads_csv(path: str | Path, fingerprint: str = "", seed: int = 0) -> TriadDataset:
    raw = np.genfromtxt(path, delimiter=",", names=True)
    raw = np.atleast_1d(raw)
    levels = tuple(np.unique(raw["ev_level"]).tolist())
    n_levels = max(len(levels), 1)
    return TriadDataset(
        fingerprint=fingerprint,
        seed=seed,
        n_runs=len(raw) // n_levels,
        ev_levels=levels,
        run=raw["run"].astype(np.int64),
        ev_level=raw["ev_level"].astype(float),
        t=raw["t"].astype(float),
        c=raw["c"].astype(float),
        final_t=raw["final_t"].astype(float),
        final_c=raw["final_c"].astype(float),
        over_budget=raw["over_budget"] > 0.5,
        late=raw["late"] > 0.5,
    )


def run_ensemble(
    spec: ProjectSpec,
    n_runs: int,
    seed: int,
    ev_levels: Sequence[float],
) -> TriadDataset:
    """Simulate ``n_runs`` independent realizations and extract their triads.

    Fully vectorized over runs; results are identical to calling
    ``simulate_run(spec, fold(seed, i))`` run by run.
    """
    if n_runs < 1:
        raise ValidationError("n_runs must be >= 1")
    levels = [float(l) for l in ev_levels]
    if not levels:
        raise ValidationError("ev_levels must not be empty")
    for l in levels:
        if not 0 < l <= 1:
            raise ValidationError(f"ev_level {l} outside (0, 1]")

    ids, means, sds, rates, budgets = _activity_arrays(spec)
    m = len(ids)
    pos = {i: j for j, i in enumerate(ids)}
    preds = spec.predecessors()
    topo = [pos[i] for i in spec.topological_order()]
    pred_pos = {pos[i]: [pos[p] for p in preds[i]] for i in spec.ids}

    run_keys = fold(np.uint64(seed & ((1 << 64) - 1)), np.arange(n_runs))
    D = _sample_matrix(run_keys, means, sds)

    S = np.zeros_like(D)
    for j in topo:
        if pred_pos[j]:
            S[:, j] = np.maximum.reduce([S[:, p] + D[:, p] for p in pred_pos[j]])
    F = S + D
    final_t = F.max(axis=1)
    final_c = D @ rates

    bac, pd_ = spec.bac, spec.pd
    n_levels = len(levels)
    t_all = np.empty((n_runs, n_levels))
    c_all = np.empty((n_runs, n_levels))
    for start in range(0, n_runs, _CHUNK_RUNS):
        stop = min(start + _CHUNK_RUNS, n_runs)
        Sc, Dc, Fc = S[start:stop], D[start:stop], F[start:stop]
        T = np.sort(np.concatenate([Sc, Fc], axis=1), axis=1)
        frac = np.clip((T[:, :, None] - Sc[:, None, :]) / Dc[:, None, :], 0.0, 1.0)
        EV = frac @ budgets
        rows = np.arange(stop - start)
        for li, level in enumerate(levels):
            if bac == 0:
                t_all[start:stop, li] = 0.0
                c_all[start:stop, li] = 0.0
                continue
            target = level * bac
            idx = np.clip((EV < target).sum(axis=1), 1, T.shape[1] - 1)
            ev_lo, ev_hi = EV[rows, idx - 1], EV[rows, idx]
            t_lo, t_hi = T[rows, idx - 1], T[rows, idx]
            den = ev_hi - ev_lo
            with np.errstate(divide="ignore", invalid="ignore"):
                t_star = np.where(den > 0, t_lo + (target - ev_lo) * (t_hi - t_lo) / den, t_hi)
            t_all[start:stop, li] = t_star
            c_all[start:stop, li] = (np.clip(t_star[:, None] - Sc, 0.0, Dc) * rates).sum(axis=1)

    reps = np.repeat(np.arange(n_runs, dtype=np.int64), n_levels)
    return TriadDataset(
        fingerprint=spec.fingerprint(),
        seed=int(seed),
        n_runs=n_runs,
        ev_levels=tuple(levels),
        run=reps,
        ev_level=np.tile(np.asarray(levels), n_runs),
        t=t_all.reshape(-1),
        c=c_all.reshape(-1),
        final_t=np.repeat(final_t, n_levels),
        final_c=np.repeat(final_c, n_levels),
        over_budget=np.repeat(final_c > bac, n_levels),
        late=np.repeat(final_t > pd_, n_levels),
    )
