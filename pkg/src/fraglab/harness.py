"""Experiment orchestration: seeded replication over an n-grid, fitting, CSV.

Every replica owns the RNG stream keyed by (seed, n-index, replica), so the
output is a function of the configuration alone, whatever the worker count.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from fraglab import generators as gen
from fraglab import theory, urn
from fraglab.models import BetaType, FordAlpha, Stable, make_model, parse_params
from fraglab.tree import AncestorStats, ancestor_stats

R_MAX = 5
CSV_HEADER = (
    ["model", "params", "k", "n", "replicas", "mean_N", "var_N"]
    + [f"mean_Nr_{r}" for r in range(1, R_MAX + 1)]
    + ["seed"]
)

GENERATOR_OF = {
    "remy": "remy",
    "ford": "ford",
    "beta_splitting": "beta_splitting",
    "gw": "gw",
    "dirichlet": "cascade",
    "betatype": "cascade",
    "zipf": "urn",
    "geometric": "urn",
}
# creation-order / planar leaf labels are exchangeable only for Remy's chain
DEFAULT_POLICY = {"remy": "consecutive"}


class ExperimentError(RuntimeError):
    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)


def replica_rng(seed: int, n_index: int, replica: int) -> np.random.Generator:
    """Counter-based stream for one replica."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, n_index, replica])))


def parse_n_grid(text: str) -> tuple:
    """``start:stop:factor`` (geometric, stop inclusive) or a comma list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"n-grid must be start:stop:factor, got {text!r}")
        start, stop, factor = (int(float(p)) for p in parts)
        if start < 1 or factor < 2 or stop < start:
            raise ValueError(f"bad n-grid {text!r}")
        grid = []
        n = start
        while n <= stop:
            grid.append(n)
            n *= factor
        return tuple(grid)
    return tuple(int(float(p)) for p in text.split(",") if p.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    params: dict = field(default_factory=dict)
    k: int = 2
    n_grid: tuple = (1024,)
    replicas: int = 10
    seed: int = 0
    policy: str | None = None
    generator: str | None = None
    out: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.generator is None:
            if self.model not in GENERATOR_OF:
                raise ValueError(f"unknown model {self.model!r}; choose from {sorted(GENERATOR_OF)}")
            object.__setattr__(self, "generator", GENERATOR_OF[self.model])
        if self.policy is None:
            object.__setattr__(self, "policy", DEFAULT_POLICY.get(self.generator, "random_disjoint"))
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ValueError(f"n-grid must be positive and strictly increasing, got {grid}")
        object.__setattr__(self, "n_grid", grid)
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.generator == "urn":
            object.__setattr__(self, "k", 1)  # one draw per "group"
        elif self.k < 2:
            raise ValueError("k must be at least 2")

    @property
    def params_str(self) -> str:
        return ";".join(f"{k}={v:g}" for k, v in self.params.items())

    def law(self) -> urn.UrnLaw:
        return urn.make_law(self.model, **self.params)

    def theory_model(self):
        """Dislocation measure whose fragmentation tree the generator samples."""
        g, p = self.generator, self.params
        if g == "remy":
            return FordAlpha(0.5)
        if g == "ford":
            return FordAlpha(p["a"])
        if g == "beta_splitting":
            return BetaType(p["beta"] + 1, p["beta"] + 1)
        if g == "gw":
            return Stable(p["beta"])
        if g == "cascade":
            return make_model(self.model, p)
        return None

    def prediction(self) -> theory.RegimePrediction:
        if self.generator == "urn":
            law = self.law()
            if not isinstance(law, urn.ZipfLaw):
                raise ValueError("only Zipf laws have a Karlin power-law prediction")
            rho = 1.0 / law.s
            L = law.zeta ** -rho
            consts = tuple(urn.karlin_prediction(rho, L, r)[1] for r in range(1, R_MAX + 1))
            return theory.RegimePrediction(
                theory.KARLIN, 1, rho, rho, False, urn.karlin_prediction(rho, L), False, consts
            )
        return theory.classify(self.theory_model(), self.k, r_max=R_MAX)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        return cls.from_mapping({**read_config_file(path), **overrides})

    @classmethod
    def from_mapping(cls, items: dict) -> "ExperimentConfig":
        items = {k.replace("-", "_"): v for k, v in items.items() if v is not None}
        kw = {}
        for key, value in items.items():
            if key in ("param", "params"):
                kw["params"] = parse_params(value) if isinstance(value, str) else dict(value)
            elif key == "n_grid":
                kw["n_grid"] = parse_n_grid(value) if isinstance(value, str) else tuple(value)
            elif key in ("k", "replicas", "seed", "workers"):
                kw[key] = int(value)
            elif key in ("model", "policy", "generator", "out"):
                kw[key] = str(value)
            else:
                raise ValueError(f"unknown configuration key {key!r}")
        if "model" not in kw:
            raise ValueError("configuration needs a model")
        return cls(**kw)


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            out[key.strip()] = value.strip()
    return out


# -- replicas ----------------------------------------------------------------------------

def replica_stats(config: ExperimentConfig, n: int, rng: np.random.Generator) -> AncestorStats:
    g, p, k = config.generator, config.params, config.k
    if g == "cascade":
        return gen.cascade_mrca(config.theory_model(), n, k, rng)
    if g == "urn":
        return urn.simulate_occupancy(config.law(), n, rng)
    L = k * n
    if g == "remy":
        tree = gen.remy(L, rng)
    elif g == "ford":
        tree = gen.ford(p["a"], L, rng)
    elif g == "beta_splitting":
        tree = gen.beta_splitting(p["beta"], L, rng)
    elif g == "gw":
        tree = gen.gw_stable_tree(p["beta"], L, rng)
    else:
        raise ValueError(f"unknown generator {g!r}")
    grouping = gen.group_leaves(tree, k, config.policy, rng)
    return ancestor_stats(tree, grouping)


def _run_block(config, jobs):
    out = []
    for n_index, n, replica in jobs:
        try:
            st = replica_stats(config, n, replica_rng(config.seed, n_index, replica))
            if sum(r * c for r, c in st.histogram.items()) != n:
                raise AssertionError("sum_r r N_r != n")
            out.append((n_index, replica, st.N, [st.N_r(r) for r in range(1, R_MAX + 1)], None))
        except Exception as exc:  # reported with its replica index
            out.append((n_index, replica, None, None, f"{type(exc).__name__}: {exc}"))
    return out


@dataclass
class GridRow:
    n: int
    replicas: int
    N: np.ndarray  # per-replica values, in replica order
    Nr: np.ndarray  # shape (replicas, R_MAX)

    @property
    def mean_N(self) -> float:
        return float(self.N.mean())

    @property
    def var_N(self) -> float:
        return float(self.N.var(ddof=1)) if self.replicas > 1 else 0.0

    @property
    def mean_Nr(self) -> np.ndarray:
        return self.Nr.mean(axis=0)

    @property
    def cov(self) -> float:
        return math.sqrt(self.var_N) / self.mean_N if self.mean_N > 0 else math.nan


@dataclass
class ResultTable:
    config: ExperimentConfig
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        c = self.config
        for row in self.rows:
            w.writerow(
                [c.model, c.params_str, c.k, row.n, row.replicas, repr(row.mean_N), repr(row.var_N)]
                + [repr(float(v)) for v in row.mean_Nr]
                + [c.seed]
            )
        return buf.getvalue()

    def write(self, path=None):
        path = path or self.config.out
        if path:
            with open(path, "w", newline="") as fh:
                fh.write(self.to_csv())


def run_experiment(config: ExperimentConfig, progress: Callable | None = None) -> ResultTable:
    """Replicate the ancestor-counting statistic over the n-grid."""
    jobs = [(i, n, r) for i, n in enumerate(config.n_grid) for r in range(config.replicas)]
    if config.workers > 1:
        blocks = [jobs[w::config.workers] for w in range(config.workers)]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = [x for part in pool.map(_run_block, [config] * len(blocks), blocks) for x in part]
    else:
        results = []
        for i, n in enumerate(config.n_grid):
            t0 = time.perf_counter()
            results += _run_block(config, [j for j in jobs if j[0] == i])
            if progress:
                progress(n, time.perf_counter() - t0)
    by_key = {(i, r): (N, Nr, err) for i, r, N, Nr, err in results}
    rows, failures = [], []
    for i, n in enumerate(config.n_grid):
        cells = [by_key[(i, r)] for r in range(config.replicas)]
        bad = [(n, r, err) for r, (_, _, err) in enumerate(cells) if err is not None]
        if bad:
            failures += bad
            continue
        rows.append(GridRow(n, config.replicas,
                            np.array([c[0] for c in cells], dtype=float),
                            np.array([c[1] for c in cells], dtype=float)))
    table = ResultTable(config, rows)
    table.write()
    if failures:
        head = "; ".join(f"n={n} replica={r}: {e}" for n, r, e in failures[:5])
        raise ExperimentError(f"{len(failures)} replica(s) failed ({head})", failures)
    return table


def read_csv(path_or_text) -> list:
    """Rows of a harness CSV as dicts of floats (model/params kept as text)."""
    text = path_or_text
    if "\n" not in str(path_or_text):
        with open(path_or_text) as fh:
            text = fh.read()
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append({k: (v if k in ("model", "params") else float(v)) for k, v in rec.items()})
    return rows


# -- fitting -----------------------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    regime: str
    exponent: float
    exponent_se: float
    constant: float
    constant_se: float
    intercept: float  # additive n^{1/k} term of a critical fit, log C otherwise
    predicted_exponent: float
    predicted_constant: float

    @property
    def rel_dev(self) -> float:
        return self.constant / self.predicted_constant - 1.0

    @property
    def z_score(self) -> float:
        if self.constant_se > 0:
            return (self.constant - self.predicted_constant) / self.constant_se
        return 0.0 if self.constant == self.predicted_constant else math.copysign(math.inf, self.rel_dev)

    @property
    def exponent_z(self) -> float:
        if self.exponent_se > 0:
            return (self.exponent - self.predicted_exponent) / self.exponent_se
        return 0.0 if self.exponent == self.predicted_exponent else math.inf


def _wls(x, y, w):
    X = np.column_stack((np.ones_like(x), x))
    W = w / w.mean()
    A = X.T @ (W[:, None] * X)
    beta = np.linalg.solve(A, X.T @ (W * y))
    resid = y - X @ beta
    dof = len(x) - 2
    s2 = float(W @ resid**2) / dof if dof > 0 else 0.0
    cov = np.linalg.inv(A) * s2
    return beta, np.sqrt(np.maximum(np.diag(cov), 0.0))


def _grid_arrays(table):
    if isinstance(table, ResultTable):
        n = np.array([r.n for r in table.rows], dtype=float)
        m = np.array([r.mean_N for r in table.rows])
        v = np.array([r.var_N / r.replicas for r in table.rows])
    else:
        n = np.array([r["n"] for r in table], dtype=float)
        m = np.array([r["mean_N"] for r in table], dtype=float)
        v = np.array([r["var_N"] / r["replicas"] for r in table], dtype=float)
    return n, m, v


def fit_scaling(table, prediction: theory.RegimePrediction) -> FitResult:
    """Weighted least-squares scaling fit of mean N_n against the predicted regime.

    Power regimes regress log N on log n.  The critical regime regresses
    N / n^{1/k} on log n, so the slope is the constant and any additive
    n^{1/k} term lands in the intercept.
    """
    n, m, v = _grid_arrays(table)
    if n.size < 4:
        raise ValueError("fit_scaling needs at least 4 grid points")
    if np.unique(n).size != n.size or (m <= 0).any():
        raise ValueError("degenerate grid for fitting")
    x = np.log(n)
    if prediction.log_correction:
        e = prediction.exponent
        y = m / n**e
        var = v / n ** (2 * e)
        w = 1.0 / var if (var > 0).all() else np.ones_like(y)
        (b0, b1), (s0, s1) = _wls(x, y, w)
        return FitResult(prediction.regime, e, 0.0, float(b1), float(s1), float(b0),
                         e, prediction.constant)
    y = np.log(m)
    var = v / m**2
    w = 1.0 / var if (var > 0).all() else np.ones_like(y)
    (b0, b1), (s0, s1) = _wls(x, y, w)
    C = math.exp(b0)
    return FitResult(prediction.regime, float(b1), float(s1), C, C * float(s0), float(b0),
                     prediction.exponent, prediction.constant)


def multiplicity_ratio_report(table: ResultTable, prediction: theory.RegimePrediction) -> list:
    """Empirical N_{n,r} / N_n next to their deterministic targets."""
    out = []
    for row in table.rows:
        for r in range(1, R_MAX + 1):
            ratio = float(row.mean_Nr[r - 1] / row.mean_N)
            target = prediction.ratio_target(r)
            out.append({"n": row.n, "r": r, "ratio": ratio, "target": target,
                        "rel_dev": ratio / target - 1.0})
    return out


# -- self test ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    ok: bool
    detail: str
    seconds: float


@dataclass
class SelftestReport:
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def lines(self):
        for c in self.checks:
            yield f"{'PASS' if c.ok else 'FAIL'}  {c.name:<34} {c.detail}  ({c.seconds:.1f}s)"


def _check_phi():
    from fraglab.models import DirichletBinary
    worst = 0.0
    for m in (DirichletBinary(1, 1), FordAlpha(0.8), Stable(2.0), BetaType(-0.6, -0.6), Stable(1.5)):
        for q in (0.5, 1.0, 2.5):
            worst = max(worst, abs(theory.phi(m, q) / theory.phi_quad(m, q) - 1))
        worst = max(worst, abs(theory.phi_prime0(m) / theory.phi_prime0_quad(m) - 1))
    return worst <= 1e-8, f"max rel err {worst:.2e}"


def _check_constants():
    e3 = abs(theory.expected_Xk(3) - math.sqrt(3 * math.pi))
    e4 = abs(theory.expected_Xk(4) - 4 / math.sqrt(math.pi))
    c = abs(theory.classify(Stable(2.0), 2).constant * math.sqrt(2 * math.pi) - 1)
    ok = max(e3, e4) <= 1e-12 and c <= 1e-12
    return ok, f"E[X3] err {e3:.1e}, E[X4] err {e4:.1e}, Brownian constant err {c:.1e}"


def _check_potential():
    worst = 0.0
    for a in (0.3, 0.8):
        for q in (0.5, 2.0):
            L = theory.potential_laplace(lambda t: theory.ford_potential_density(a, t), q)
            worst = max(worst, abs(L * theory.phi(FordAlpha(a), q) - 1))
    return worst <= 1e-6, f"max rel err {worst:.2e}"


def _check_lca():
    from fraglab.tree import build_tree, lca_group, mrca_distribution
    rng = np.random.default_rng(11)
    worst = 0
    for _ in range(20):
        size = int(rng.integers(2, 40))
        parent = np.concatenate(([-1], [int(rng.integers(0, i)) for i in range(1, size)]))
        tree = build_tree(parent)

        def path(v):
            out = []
            while v != -1:
                out.append(v)
                v = parent[v]
            return out

        for _ in range(20):
            u, v = rng.integers(0, size, 2)
            pu = path(int(u))
            naive = next(a for a in path(int(v)) if a in pu)
            worst += naive != lca_group(tree, [u, v])
        if tree.n_leaves >= 2:
            worst += abs(sum(mrca_distribution(tree, 2).values()) - 1) > 1e-12
    return worst == 0, f"{worst} mismatches"


def _check_urn():
    rng = replica_rng(5, 0, 0)
    law = urn.ExplicitLaw.from_weights(rng.random(12))
    n, reps = 30, 4000
    ex = urn.expected_counts(law, n)
    samples = np.array([urn.simulate_occupancy(law, n, rng).N for _ in range(reps)])
    z = (samples.mean() - ex.N) / (samples.std(ddof=1) / math.sqrt(reps))
    return abs(z) < 4, f"z = {z:+.2f}"


def _check_cascade():
    from fraglab.models import DirichletBinary
    rng = replica_rng(6, 0, 0)
    m = DirichletBinary(1, 1)
    ones = all(gen.cascade_mrca(m, 1, 2, rng).N == 1 for _ in range(50))
    hits = np.array([gen.cascade_mrca(m, 1, 2, rng).multiplicity.get(0, 0) for _ in range(20000)])
    p = hits.mean()
    z = (p - 1 / 3) / math.sqrt(2 / 9 / hits.size)
    return ones and abs(z) < 4, f"P(root) = {p:.4f}, z = {z:+.2f}"


def _check_determinism():
    cfg = ExperimentConfig("dirichlet", {"a": 1.0, "b": 1.0}, k=2, n_grid=(64, 256), replicas=3, seed=42)
    first = run_experiment(cfg).to_csv()
    second = run_experiment(cfg).to_csv()
    # a replica's value must not depend on which other replicas ran
    solo = replica_stats(cfg, 256, replica_rng(42, 1, 2)).N
    table = run_experiment(cfg)
    ok = first == second and solo == table.rows[1].N[2]
    return ok, "identical CSV bytes" if ok else "outputs differ between runs"


def _check_fit():
    n = 2.0 ** np.arange(8, 16)
    pred = theory.RegimePrediction(theory.SUPERCRITICAL, 2, 0.8, 0.8, False, 2.0, True)
    rows = [{"n": x, "mean_N": 2 * x**0.8, "var_N": 0.0, "replicas": 1} for x in n]
    f = fit_scaling(rows, pred)
    crit = theory.RegimePrediction(theory.CRITICAL, 2, 0.5, 0.5, True, 0.4, False)
    rows = [{"n": x, "mean_N": math.sqrt(x) * (0.4 * math.log(x) + 7), "var_N": 0.0, "replicas": 1} for x in n]
    g = fit_scaling(rows, crit)
    err = max(abs(f.exponent - 0.8), abs(f.constant - 2) / 2, abs(g.constant - 0.4))
    return err <= 1e-10, f"max err {err:.1e}"


def _check_depth():
    from fraglab import fragproc
    rng = replica_rng(7, 0, 0)
    est = fragproc.area_estimate(Stable(2.0), 3, 20000, rng)
    z = (est.mean - theory.expected_area(Stable(2.0), 3)) / est.stderr
    return abs(z) < 4, f"E[A_3] = {est.mean:.4f} +- {est.stderr:.4f}, z = {z:+.2f}"


SELFTEST_CHECKS = [
    ("phi closed form vs quadrature", _check_phi),
    ("Gamma-ratio constants", _check_constants),
    ("Ford potential density transform", _check_potential),
    ("LCA vs naive ancestor walk", _check_lca),
    ("urn Monte Carlo vs exact mean", _check_urn),
    ("cascade root-resolution law", _check_cascade),
    ("seeded determinism", _check_determinism),
    ("scaling fit on exact data", _check_fit),
    ("tagged depth mean", _check_depth),
]


def selftest(checks=None) -> SelftestReport:
    """Small-scale run of the core invariants; every check is independent."""
    out = []
    for name, fn in checks or SELFTEST_CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(Check(name, bool(ok), detail, time.perf_counter() - t0))
    return SelftestReport(out)


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
