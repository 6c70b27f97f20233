"""Monte Carlo and multilevel Monte Carlo estimation of the mean energy.

The multilevel estimator telescopes the mean over a ladder of mesh
resolutions: Y = E[W_0] + sum over l >= 1 of E[W_l - W_{l-1}], each term
estimated with independent plain MC.  Coupled terms evaluate the SAME
parameter sample on the level-l and level-(l-1) meshes.

Sample streams are counter based: the i-th sample of the level-l term
uses counter index (l << 48) + i, so every (master_seed, level, i) maps
to one fixed parameter draw.  Extending a level reuses all previously
computed values, and parallel execution returns bit-identical results.

Tolerances are relative: the driver screens a few coarse levels first
and converts the requested eps into an absolute target
eps_abs = eps * |Y_screen|.  The mean-square error budget is split
evenly, variance <= eps_abs^2/2 and bias^2 <= eps_abs^2/2.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fem import evaluate_pair, evaluate_qoi
from .mesh import LevelSpec, dof_count
from .model import ModelParams, ParameterDistributions, ParamSample, draw_samples

N_MIN = 10  # samples per active level in the driver
_LEVEL_STRIDE = 1 << 48  # counter offset separating level streams


class MlmcError(RuntimeError):
    """Estimator failed to reach a well-defined state."""


@dataclass(frozen=True)
class LevelStats:
    """Per-level screening moments (unbiased variances).

    At level 0 the "difference" is W_0 itself, matching the telescoping
    sum.  ``cost_per_sample`` counts degrees of freedom: fine plus coarse
    mesh for coupled levels.
    """

    level: int
    n_used: int
    mean_w: float
    var_w: float
    mean_diff: float
    var_diff: float
    cost_per_sample: int


@dataclass(frozen=True)
class MlmcResult:
    epsilon: float
    epsilon_abs: float
    y: float
    y_screen: float
    levels: tuple[LevelStats, ...]
    n_per_level: tuple[int, ...]
    variance_budget: float
    bias_estimate: float
    alpha: float
    total_cost: int
    finest_level: int
    bias_converged: bool


@dataclass(frozen=True)
class CostRow:
    """One row of the MC-vs-MLMC cost comparison."""

    epsilon: float
    epsilon_abs: float
    finest_level: int
    cost_mc: int
    cost_mlmc: int
    y_mc: float
    y_mlmc: float
    n_mc_model: int
    n_mc_used: int
    var_w_fine: float
    mlmc_cheaper: bool


def level_sample_index(level: int, i: int) -> int:
    """Counter index of sample i in the level-``level`` stream."""
    return (level << 48) + i


def _sample_at(
    dists: ParameterDistributions, master_seed: int, level: int, i: int
) -> ParamSample:
    idx = level_sample_index(level, i)
    r1, i0, mu3 = draw_samples(dists, master_seed, [idx])
    return ParamSample(
        r1=float(r1[0]), i0=float(i0[0]), mu3=float(mu3[0]),
        sample_index=idx, master_seed=master_seed,
    )


def _eval_chunk(payload) -> tuple[list[float], list[float]]:
    """Evaluate one contiguous index range of a level stream (worker)."""
    fixed, dists, master_seed, level, start, stop, base_spec = payload
    fine: list[float] = []
    coarse: list[float] = []
    for i in range(start, stop):
        s = _sample_at(dists, master_seed, level, i)
        if level == 0:
            fine.append(evaluate_qoi(s, 0, fixed, base_spec))
            coarse.append(0.0)
        else:
            wf, wc = evaluate_pair(s, level, fixed, base_spec)
            fine.append(wf)
            coarse.append(wc)
    return fine, coarse


class MlmcEngine:
    """Evaluation bank plus estimator drivers.

    The bank caches (W_l, W_{l-1}) pairs by (level, sample index), so
    repeated runs at different tolerances on one engine reuse samples and
    stay bit-identical to standalone runs.
    """

    def __init__(
        self,
        fixed: ModelParams,
        dists: ParameterDistributions,
        master_seed: int,
        base_spec: LevelSpec | None = None,
        threads: int = 1,
    ):
        dists.check_compatible(fixed)
        self.fixed = fixed
        self.dists = dists
        self.master_seed = master_seed
        self.base_spec = base_spec
        self.threads = max(1, threads)
        self._fine: dict[int, list[float]] = {}
        self._coarse: dict[int, list[float]] = {}
        self._pool: ProcessPoolExecutor | None = None

    # -- evaluation bank ------------------------------------------------

    def _spec(self, level: int) -> LevelSpec:
        return LevelSpec.for_level(level, self.base_spec)

    def cost_per_sample(self, level: int) -> int:
        fine = dof_count(self._spec(level))
        if level == 0:
            return fine
        return fine + dof_count(self._spec(level - 1))

    def n_available(self, level: int) -> int:
        return len(self._fine.get(level, ()))

    def ensure(self, level: int, n: int) -> None:
        """Extend the level stream to at least n evaluated samples."""
        fine = self._fine.setdefault(level, [])
        coarse = self._coarse.setdefault(level, [])
        start = len(fine)
        if n <= start:
            return
        if self.threads == 1 or n - start < 4:
            f, c = _eval_chunk(
                (self.fixed, self.dists, self.master_seed, level, start, n,
                 self.base_spec)
            )
            fine.extend(f)
            coarse.extend(c)
            return
        if self._pool is None:
            self._pool = ProcessPoolExecutor(max_workers=self.threads)
        chunk = max(1, math.ceil((n - start) / (self.threads * 4)))
        payloads = [
            (self.fixed, self.dists, self.master_seed, level, lo,
             min(lo + chunk, n), self.base_spec)
            for lo in range(start, n, chunk)
        ]
        # results concatenated in submission order: scheduling-independent
        for f, c in self._pool.map(_eval_chunk, payloads):
            fine.extend(f)
            coarse.extend(c)

    def values(self, level: int, n: int) -> tuple[np.ndarray, np.ndarray]:
        self.ensure(level, n)
        return (
            np.array(self._fine[level][:n]),
            np.array(self._coarse[level][:n]),
        )

    def level_stats(self, level: int, n: int) -> LevelStats:
        if n < 2:
            raise MlmcError("variance estimation needs at least 2 samples")
        fine, coarse = self.values(level, n)
        diff = fine if level == 0 else fine - coarse
        return LevelStats(
            level=level,
            n_used=n,
            mean_w=float(fine.mean()),
            var_w=float(fine.var(ddof=1)),
            mean_diff=float(diff.mean()),
            var_diff=float(diff.var(ddof=1)),
            cost_per_sample=self.cost_per_sample(level),
        )

    # -- estimators -----------------------------------------------------

    def screening(self, max_level: int, n_warm: int) -> list[LevelStats]:
        """Warm-up moments on levels 0..max_level (n_warm coupled samples)."""
        if n_warm < 2:
            raise MlmcError("screening needs n_warm >= 2")
        return [self.level_stats(l, n_warm) for l in range(max_level + 1)]

    def mlmc_estimate(
        self,
        eps: float,
        l_start: int = 2,
        l_max: int = 4,
        n_warm: int = 100,
        n_min: int = N_MIN,
    ) -> MlmcResult:
        """Adaptive MLMC targeting a relative mean-square error eps^2.

        Screens levels 0..l_start with n_warm samples to fix the absolute
        tolerance, then alternates optimal re-allocation (reusing all
        samples) with a weak-error check that appends finer levels up to
        l_max.  A result that exhausts l_max is returned flagged
        ``bias_converged=False``.
        """
        if eps <= 0.0:
            raise ValueError("eps must be positive")
        if not (1 <= l_start <= l_max):
            raise ValueError("need 1 <= l_start <= l_max")

        for l in range(l_start + 1):
            self.ensure(l, n_warm)
        n_used = {l: n_warm for l in range(l_start + 1)}
        stats = {l: self.level_stats(l, n_used[l]) for l in n_used}
        y_screen = sum(s.mean_diff for s in stats.values())
        if y_screen == 0.0:
            raise MlmcError("screening estimate of E[W] is zero; "
                            "relative tolerance is undefined")
        eps_abs = eps * abs(y_screen)

        level = l_start
        while True:
            # extend until the optimal allocation is satisfied everywhere
            for _ in range(100):
                v = [stats[l].var_diff for l in range(level + 1)]
                c = [stats[l].cost_per_sample for l in range(level + 1)]
                alloc = allocate_samples(v, c, eps_abs, n_min=n_min)
                grew = False
                for l in range(level + 1):
                    if alloc[l] > n_used[l]:
                        self.ensure(l, int(alloc[l]))
                        n_used[l] = int(alloc[l])
                        stats[l] = self.level_stats(l, n_used[l])
                        grew = True
                if not grew:
                    break
            else:  # pragma: no cover - allocation oscillation guard
                raise MlmcError("sample allocation failed to stabilize")

            alpha = _decay_rate(
                [stats[l].mean_diff for l in range(1, level + 1)],
                range(1, level + 1),
            )
            bias = _bias_remainder(stats, level, alpha)
            if bias <= eps_abs / math.sqrt(2.0):
                converged = True
                break
            if level >= l_max:
                converged = False
                break
            level += 1
            self.ensure(level, max(n_min, 2))
            n_used[level] = max(n_min, 2)
            stats[level] = self.level_stats(level, n_used[level])

        ordered = [stats[l] for l in range(level + 1)]
        y = sum(s.mean_diff for s in ordered)
        budget = sum(s.var_diff / s.n_used for s in ordered)
        total_cost = sum(s.n_used * s.cost_per_sample for s in ordered)
        return MlmcResult(
            epsilon=eps,
            epsilon_abs=eps_abs,
            y=y,
            y_screen=y_screen,
            levels=tuple(ordered),
            n_per_level=tuple(s.n_used for s in ordered),
            variance_budget=budget,
            bias_estimate=bias,
            alpha=alpha,
            total_cost=total_cost,
            finest_level=level,
            bias_converged=converged,
        )

    def cost_compare(
        self,
        eps_list,
        l_start: int = 2,
        l_max: int = 4,
        n_warm: int = 100,
        n_min: int = N_MIN,
        mc_sample_cap: int = 400,
    ) -> list[CostRow]:
        """MC-vs-MLMC cost model rows, one per tolerance.

        The MC cost is the model N_mc * dof(L) with N_mc = ceil(2 V[W_L] /
        eps_abs^2) and L the finest level the MLMC bias check demanded.
        The MC estimate itself is evaluated with at most ``mc_sample_cap``
        samples (the model N_mc would take hours at small eps); the
        reported cost always uses the model count.
        """
        rows = []
        for eps in eps_list:
            res = self.mlmc_estimate(eps, l_start, l_max, n_warm, n_min)
            lvl = res.finest_level
            var_w = res.levels[lvl].var_w
            n_mc_model = max(1, math.ceil(2.0 * var_w / res.epsilon_abs**2))
            n_mc_used = min(n_mc_model, mc_sample_cap)
            fine, _ = self.values(lvl, max(n_mc_used, 2))
            y_mc = float(fine[:n_mc_used].mean())
            cost_mc = n_mc_model * dof_count(self._spec(lvl))
            rows.append(
                CostRow(
                    epsilon=eps,
                    epsilon_abs=res.epsilon_abs,
                    finest_level=lvl,
                    cost_mc=cost_mc,
                    cost_mlmc=res.total_cost,
                    y_mc=y_mc,
                    y_mlmc=res.y,
                    n_mc_model=n_mc_model,
                    n_mc_used=n_mc_used,
                    var_w_fine=var_w,
                    mlmc_cheaper=res.total_cost < cost_mc,
                )
            )
        return rows


def _decay_rate(values, levels) -> float:
    """Least-squares rate a in |v_l| ~ c 2^(-a l), clamped to >= 0.5."""
    v = np.maximum(np.abs(np.asarray(values, dtype=float)), 1e-300)
    lv = np.asarray(list(levels), dtype=float)
    if len(v) == 1:
        return 1.0
    design = np.vstack([lv, np.ones(len(lv))]).T
    slope = np.linalg.lstsq(design, np.log2(v), rcond=None)[0][0]
    return max(0.5, -float(slope))


def _bias_remainder(stats, level: int, alpha: float) -> float:
    """Geometric-tail estimate of |E[W - W_level]| from the last two
    corrections."""
    m_l = abs(stats[level].mean_diff)
    m_prev = abs(stats[level - 1].mean_diff) if level >= 2 else m_l
    return max(m_l, m_prev / 2.0**alpha) / (2.0**alpha - 1.0)


def allocate_samples(variances, costs, eps_abs: float, n_min: int = 1):
    """Optimal per-level sample counts for variance budget eps_abs^2 / 2.

    N_l = ceil(2 eps^-2 sqrt(V_l/C_l) sum_k sqrt(V_k C_k)), the standard
    constrained minimizer of total cost subject to the variance bound.
    All-zero variances return n_min everywhere.
    """
    v = np.asarray(variances, dtype=float)
    c = np.asarray(costs, dtype=float)
    if np.any(v < 0.0) or np.any(c <= 0.0) or eps_abs <= 0.0:
        raise ValueError("need variances >= 0, costs > 0 and eps_abs > 0")
    if np.all(v == 0.0):
        return np.full(len(v), n_min, dtype=int)
    total = float(np.sum(np.sqrt(v * c)))
    raw = 2.0 / eps_abs**2 * np.sqrt(v / c) * total
    return np.maximum(np.ceil(raw).astype(int), n_min)


def mc_estimate(
    level: int,
    n: int,
    seed: int,
    fixed: ModelParams,
    dists: ParameterDistributions,
    base_spec: LevelSpec | None = None,
) -> tuple[float, float, int]:
    """Plain MC at one level: (sample mean, unbiased variance, cost).

    Uses the same counter stream as the MLMC level-``level`` term, so the
    values coincide with the fine legs of the coupled estimator.
    """
    if n < 2:
        raise MlmcError("mc_estimate needs n >= 2")
    values = np.empty(n)
    for i in range(n):
        s = _sample_at(dists, seed, level, i)
        values[i] = evaluate_qoi(s, level, fixed, base_spec)
    cost = n * dof_count(LevelSpec.for_level(level, base_spec))
    return float(values.mean()), float(values.var(ddof=1)), cost


def screening(
    max_level: int,
    n_warm: int,
    seed: int,
    fixed: ModelParams,
    dists: ParameterDistributions,
    base_spec: LevelSpec | None = None,
    threads: int = 1,
) -> list[LevelStats]:
    """Warm-up variance screening over levels 0..max_level."""
    engine = MlmcEngine(fixed, dists, seed, base_spec, threads)
    return engine.screening(max_level, n_warm)


def mlmc_estimate(
    eps: float,
    fixed: ModelParams,
    dists: ParameterDistributions,
    seed: int,
    l_start: int = 2,
    l_max: int = 4,
    n_warm: int = 100,
    n_min: int = N_MIN,
    base_spec: LevelSpec | None = None,
    threads: int = 1,
) -> MlmcResult:
    """One-shot adaptive MLMC run (see MlmcEngine.mlmc_estimate)."""
    engine = MlmcEngine(fixed, dists, seed, base_spec, threads)
    return engine.mlmc_estimate(eps, l_start, l_max, n_warm, n_min)


def cost_compare(
    eps_list,
    fixed: ModelParams,
    dists: ParameterDistributions,
    seed: int,
    l_start: int = 2,
    l_max: int = 4,
    n_warm: int = 100,
    n_min: int = N_MIN,
    mc_sample_cap: int = 400,
    base_spec: LevelSpec | None = None,
    threads: int = 1,
) -> list[CostRow]:
    """One-shot MC-vs-MLMC comparison over a tolerance list."""
    engine = MlmcEngine(fixed, dists, seed, base_spec, threads)
    return engine.cost_compare(eps_list, l_start, l_max, n_warm, n_min,
                               mc_sample_cap)
