"""Cross-validated studies: single-method regression (``part1``),
worst-first incremental fusion (``part2``) and the existing/regressed/boosted comparison."""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import CompletenessError, DegenerateInputError, IQABoostError
from .evaluation import (
    CriterionResult,
    apply_logistic_map,
    evaluate_criteria,
    fit_logistic_map,
    hash64,
    make_fold_plan,
    significance_threshold,
)
from .metrics import DEFAULT_REGISTRY, build_feature_matrix
from .optim import LMOptions
from .regressors import (
    SVR_DEFAULT_C,
    SVR_DEFAULT_EPSILON,
    SVR_DEFAULT_TOL,
    predict_nn,
    predict_svr,
    train_nn,
    train_svr,
)

CRITERIA = ("RMSE", "PLCC", "SRCC")
LEARNERS = ("nn", "svr")
EXCLUSION_LIMIT = 0.05


@dataclass
class ExperimentConfig:
    k: int = 5
    runs: int = 100
    master_seed: int = 0
    learners: tuple = LEARNERS
    alpha: float = 0.05
    databases: tuple = ()
    registry: tuple = DEFAULT_REGISTRY
    hidden_dim: int | None = None          # None: registry size
    svr_C: float = SVR_DEFAULT_C
    svr_epsilon: float = SVR_DEFAULT_EPSILON
    map_learner_outputs: bool = True       # logistic mapping on learner outputs too
    granularity: str = "pooled"            # pooled | fold
    significance_n: str = "database"       # database | fold
    threads: int | None = None

    def __post_init__(self):
        self.learners = tuple(self.learners)
        self.databases = tuple(self.databases)
        self.registry = tuple(self.registry)
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if not self.registry:
            raise ValueError("registry must not be empty")
        if len(set(self.registry)) != len(self.registry):
            raise ValueError("registry contains duplicate metric ids")
        bad = set(self.learners) - set(LEARNERS)
        if bad or not self.learners:
            raise ValueError(f"learners must be a non-empty subset of {LEARNERS}")
        if self.granularity not in ("pooled", "fold"):
            raise ValueError("granularity must be 'pooled' or 'fold'")
        if self.significance_n not in ("database", "fold"):
            raise ValueError("significance_n must be 'database' or 'fold'")

    @property
    def effective_hidden_dim(self) -> int:
        return self.hidden_dim or len(self.registry)

    def to_json(self) -> dict:
        d = asdict(self)
        for key in ("learners", "databases", "registry"):
            d[key] = list(d[key])
        d.pop("threads")
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def settings_header(cfg: ExperimentConfig) -> dict:
    """Everything needed to reproduce a report, plus a digest of it."""
    header = {
        "package_version": __version__,
        "config": cfg.to_json(),
        "lm_defaults": asdict(LMOptions()),
        "svr": {"C": cfg.svr_C, "epsilon": cfg.svr_epsilon, "kkt_tol": SVR_DEFAULT_TOL,
                "max_passes": "10*n"},
        "nn": {"hidden_dim": cfg.effective_hidden_dim, "activation": "tanh",
               "init": "uniform(+-1/sqrt(fan_in)), Philox"},
        "mapping": ("logistic map fitted on training folds, applied to every method's test output"
                    if cfg.map_learner_outputs else
                    "logistic map on existing methods only"),
        "criteria": "RMSE/PLCC after mapping, SRCC before mapping",
        "granularity": cfg.granularity,
    }
    digest = hashlib.sha256(json.dumps(header, sort_keys=True).encode()).hexdigest()
    header["settings_hash"] = digest
    return header


# -- aggregation ------------------------------------------------------------

def aggregate_runs(values) -> tuple[float, float]:
    """Mean and population standard deviation, summed in the given order."""
    vals = [float(v) for v in values]
    if not vals:
        raise DegenerateInputError("cannot aggregate an empty run list")
    n = len(vals)
    mean = math.fsum(vals) / n
    var = math.fsum((v - mean) ** 2 for v in vals) / n
    return mean, math.sqrt(var)


def _finite_or_none(x):
    return x if x is not None and math.isfinite(x) else None


def _none_to_nan(x):
    return float("nan") if x is None else x


@dataclass
class ReportEntry:
    database: str
    method: str
    criterion: str
    mean: float
    std: float
    run_count: int
    excluded: int
    values: list = field(repr=False)


@dataclass
class EvaluationReport:
    entries: dict  # (database, method, criterion) -> ReportEntry
    provenance: dict
    databases: list
    methods: list

    @property
    def exclusion_rate(self) -> float:
        total = sum(len(e.values) + e.excluded for e in self.entries.values())
        bad = sum(e.excluded for e in self.entries.values())
        return bad / total if total else 0.0

    @property
    def valid(self) -> bool:
        return self.exclusion_rate <= EXCLUSION_LIMIT

    def get(self, database, method, criterion) -> ReportEntry:
        try:
            return self.entries[(database, method, criterion)]
        except KeyError:
            raise CompletenessError(f"report has no entry for {database}/{method}/{criterion}") from None

    def to_json(self) -> dict:
        return {
            "format": "iqaboost.report",
            "version": 1,
            "provenance": self.provenance,
            "databases": list(self.databases),
            "methods": list(self.methods),
            "valid": self.valid,
            "exclusion_rate": self.exclusion_rate,
            "entries": [
                {"database": e.database, "method": e.method, "criterion": e.criterion,
                 "mean": _finite_or_none(e.mean), "std": _finite_or_none(e.std),
                 "run_count": e.run_count,
                 "excluded": e.excluded, "values": list(e.values)}
                for e in self.entries.values()
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "EvaluationReport":
        entries = {}
        for e in d["entries"]:
            entry = ReportEntry(e["database"], e["method"], e["criterion"],
                                _none_to_nan(e["mean"]), _none_to_nan(e["std"]),
                                e["run_count"], e["excluded"], list(e.get("values", [])))
            entries[(entry.database, entry.method, entry.criterion)] = entry
        return cls(entries, d.get("provenance", {}), list(d["databases"]), list(d["methods"]))

    def merge(self, other: "EvaluationReport") -> "EvaluationReport":
        entries = dict(self.entries)
        entries.update(other.entries)
        dbs = list(dict.fromkeys(list(self.databases) + list(other.databases)))
        methods = list(dict.fromkeys(list(self.methods) + list(other.methods)))
        return EvaluationReport(entries, self.provenance, dbs, methods)


# -- the per-run work unit --------------------------------------------------

@dataclass(frozen=True)
class Task:
    label: str
    kind: str        # existing | nn | svr
    columns: tuple   # column indices into the feature matrix


def existing_label(mid):
    return f"existing:{mid}"


def regressed_label(learner, mid):
    return f"{learner}:{mid}"


def boost_label(learner):
    return f"{learner}:boost"


def _fit_predict(task, Xtr, ytr, Xte, cfg, seed):
    """Return (raw test output, mapped test output) for one fold."""
    if task.kind == "existing":
        xtr, xte = Xtr[:, 0], Xte[:, 0]
        fit = fit_logistic_map(xtr, ytr)
        return xte, apply_logistic_map(fit, xte)
    if task.kind == "nn":
        model = train_nn(Xtr, ytr, cfg.effective_hidden_dim, seed)
        ptr, pte = predict_nn(model, Xtr), predict_nn(model, Xte)
    else:
        model = train_svr(Xtr, ytr, cfg.svr_C, cfg.svr_epsilon)
        ptr, pte = predict_svr(model, Xtr), predict_svr(model, Xte)
    if not cfg.map_learner_outputs:
        return pte, pte
    try:
        fit = fit_logistic_map(ptr, ytr)
    except DegenerateInputError:
        return pte, pte
    return pte, apply_logistic_map(fit, pte)


def _criteria_tuple(res: CriterionResult):
    return (res.rmse, res.plcc, res.srcc)


def run_once(X, y, tasks, cfg: ExperimentConfig, database_id: str, run_index: int):
    """One run of k-fold cross validation for every task.

    Returns {label: (rmse, plcc, srcc) or None when the learner failed}.
    """
    n = X.shape[0]
    plan = make_fold_plan(n, cfg.k, run_index, cfg.master_seed, stream=database_id)
    folds = []
    for f in range(cfg.k):
        tr, te = plan.train_indices(f), plan.test_indices(f)
        if np.intersect1d(tr, te).size:
            raise AssertionError(f"fold {f} of run {run_index}: train and test overlap")
        folds.append((tr, te))

    out = {}
    for task in tasks:
        raw = np.empty(n)
        mapped = np.empty(n)
        per_fold = []
        failed = False
        cols = list(task.columns)
        for f, (tr, te) in enumerate(folds):
            seed = hash64(cfg.master_seed, database_id, run_index, task.kind, f)
            try:
                r, mp = _fit_predict(task, X[np.ix_(tr, cols)], y[tr], X[np.ix_(te, cols)], cfg, seed)
            except IQABoostError:
                failed = True
                break
            if not (np.all(np.isfinite(r)) and np.all(np.isfinite(mp))):
                failed = True
                break
            raw[te], mapped[te] = r, mp
            if cfg.granularity == "fold":
                per_fold.append(_criteria_tuple(evaluate_criteria(r, y[te], mp)))
        if failed:
            out[task.label] = None
        elif cfg.granularity == "fold":
            out[task.label] = tuple(math.fsum(v[c] for v in per_fold) / len(per_fold)
                                    for c in range(3))
        else:
            out[task.label] = _criteria_tuple(evaluate_criteria(raw, y, mapped))
    return out


def _run_job(args):
    return run_once(*args)


def worker_count(cfg: ExperimentConfig) -> int:
    if cfg.threads:
        return max(1, int(cfg.threads))
    env = os.environ.get("IQABOOST_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_all(X, y, tasks, cfg: ExperimentConfig, database_id: str):
    """Results for runs 0..runs-1, ordered by run index."""
    jobs = [(X, y, tasks, cfg, database_id, r) for r in range(cfg.runs)]
    workers = min(worker_count(cfg), cfg.runs)
    if workers <= 1:
        return [run_once(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def _collect(per_run, label):
    """Per-criterion value lists for one label plus the exclusion count."""
    ok = [res[label] for res in per_run if res[label] is not None]
    excluded = len(per_run) - len(ok)
    return [[v[c] for v in ok] for c in range(3)], excluded


def _entries_for(database_id, label, per_run, multiplier=1):
    cols, excluded = _collect(per_run, label)
    entries = {}
    for c, crit in enumerate(CRITERIA):
        vals = cols[c]
        if vals and all(v is not None for v in vals):
            mean, std = aggregate_runs(vals)
        else:
            mean, std = float("nan"), float("nan")
        entries[(database_id, label, crit)] = ReportEntry(
            database_id, label, crit, mean, std, len(vals) * multiplier,
            excluded * multiplier, vals)
    return entries


# -- studies ------------------------------------------------------------------

def _prepare(db, table, cfg):
    X, y = build_feature_matrix(db, table, cfg.registry)
    return X, y


def _study(db, table, cfg: ExperimentConfig, include_single=True, include_boost=False,
           include_regressed=True):
    X, y = _prepare(db, table, cfg)
    m = len(cfg.registry)
    tasks = []
    if include_single:
        tasks += [Task(existing_label(mid), "existing", (j,)) for j, mid in enumerate(cfg.registry)]
    if include_single and include_regressed:
        for learner in cfg.learners:
            tasks += [Task(regressed_label(learner, mid), learner, (j,))
                      for j, mid in enumerate(cfg.registry)]
    if include_boost:
        tasks += [Task(boost_label(learner), learner, tuple(range(m))) for learner in cfg.learners]
    per_run = run_all(X, y, tasks, cfg, db.database_id)
    entries = {}
    for task in tasks:
        mult = len(cfg.learners) * m if task.kind == "existing" else 1
        entries.update(_entries_for(db.database_id, task.label, per_run, mult))
    return EvaluationReport(entries, settings_header(cfg), [db.database_id],
                            [t.label for t in tasks])


def run_single_method_study(db, table, cfg: ExperimentConfig) -> EvaluationReport:
    """Existing methods (logistic-mapped) and each learner on every single metric.

    Existing-method rows count every learner stream and registry slot, so
    ``run_count`` is runs * learners * registry size; their values do not
    depend on the learner.
    """
    return _study(db, table, cfg, include_single=True, include_boost=False)


def run_existing_study(db, table, cfg: ExperimentConfig) -> EvaluationReport:
    """Existing-method rows only; enough to derive worst-first orderings."""
    return _study(db, table, cfg, include_single=True, include_regressed=False)


def rank_estimators(report: EvaluationReport, database_id: str, criterion: str,
                    registry=None, prefix="existing") -> list:
    """Worst-first ordering: descending RMSE, ascending correlations.

    Ties keep registry order.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    if registry is None:
        registry = [m.split(":", 1)[1] for m in report.methods if m.startswith(prefix + ":")]
    keyed = []
    for pos, mid in enumerate(registry):
        entry = report.get(database_id, f"{prefix}:{mid}", criterion)
        key = -entry.mean if criterion == "RMSE" else entry.mean
        keyed.append((key, pos, mid))
    keyed.sort()
    return [mid for _, _, mid in keyed]


@dataclass
class FusionCurve:
    database: str
    ordering: list
    learners: list
    sizes: list
    stats: dict           # (size, learner, criterion) -> (mean, std)
    significance_line: dict  # criterion -> value or None
    ranked_by: str = ""
    values: dict = field(default_factory=dict, repr=False)  # (size, learner, criterion) -> list

    def to_json(self) -> dict:
        return {
            "database": self.database,
            "ranked_by": self.ranked_by,
            "ordering": list(self.ordering),
            "learners": list(self.learners),
            "sizes": list(self.sizes),
            "significance_line": dict(self.significance_line),
            "points": [
                {"size": s, "learner": lr, "criterion": c,
                 "mean": _finite_or_none(v[0]), "std": _finite_or_none(v[1])}
                for (s, lr, c), v in self.stats.items()
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "FusionCurve":
        stats = {(p["size"], p["learner"], p["criterion"]): (_none_to_nan(p["mean"]), _none_to_nan(p["std"]))
                 for p in d["points"]}
        return cls(d["database"], list(d["ordering"]), list(d["learners"]), list(d["sizes"]),
                   stats, dict(d["significance_line"]), d.get("ranked_by", ""))


def _fusion_columns(prefix, registry):
    # columns are kept in registry order so the network sees the same layout
    # regardless of the ordering that produced the subset
    pos = {mid: j for j, mid in enumerate(registry)}
    return tuple(sorted(pos[mid] for mid in prefix))


def run_fusion_studies(db, table, cfg: ExperimentConfig, orderings: dict) -> dict:
    """Incremental fusion for several orderings, sharing identical subsets.

    ``orderings`` maps a name (typically the ranking criterion) to a list of
    metric ids. Returns name -> FusionCurve.
    """
    for name, ordering in orderings.items():
        unknown = [mid for mid in ordering if mid not in cfg.registry]
        if unknown:
            raise CompletenessError(f"ordering {name!r} names metrics outside the registry: {unknown}")
        if len(set(ordering)) != len(ordering) or not ordering:
            raise ValueError(f"ordering {name!r} must be a non-empty list of distinct metrics")
    X, y = _prepare(db, table, cfg)
    tasks = {}
    for ordering in orderings.values():
        for s in range(1, len(ordering) + 1):
            cols = _fusion_columns(ordering[:s], cfg.registry)
            for learner in cfg.learners:
                label = f"{learner}:fuse:" + "+".join(cfg.registry[j] for j in cols)
                tasks[label] = Task(label, learner, cols)
    per_run = run_all(X, y, list(tasks.values()), cfg, db.database_id)

    n_sig = len(y) if cfg.significance_n == "database" else len(y) // cfg.k
    curves = {}
    for name, ordering in orderings.items():
        stats, values = {}, {}
        for s in range(1, len(ordering) + 1):
            cols = _fusion_columns(ordering[:s], cfg.registry)
            for learner in cfg.learners:
                label = f"{learner}:fuse:" + "+".join(cfg.registry[j] for j in cols)
                cols_vals, _ = _collect(per_run, label)
                for c, crit in enumerate(CRITERIA):
                    vals = cols_vals[c]
                    stats[(s, learner, crit)] = (aggregate_runs(vals) if vals
                                                 else (float("nan"), float("nan")))
                    values[(s, learner, crit)] = vals
        sig = {"RMSE": None}
        for crit in ("PLCC", "SRCC"):
            base = max(stats[(1, lr, crit)][0] for lr in cfg.learners)
            if math.isfinite(base) and abs(base) < 1 and n_sig > 3:
                sig[crit] = significance_threshold(base, n_sig, cfg.alpha)
            else:
                sig[crit] = None
        curves[name] = FusionCurve(db.database_id, list(ordering), list(cfg.learners),
                                   list(range(1, len(ordering) + 1)), stats, sig,
                                   ranked_by=str(name), values=values)
    return curves


def run_incremental_fusion_study(db, table, cfg: ExperimentConfig, ordering) -> FusionCurve:
    return run_fusion_studies(db, table, cfg, {"explicit": list(ordering)})["explicit"]


def part2_orderings(report: EvaluationReport, database_id: str, registry) -> dict:
    """Worst-first ordering per criterion, from the existing-method rows."""
    return {crit: rank_estimators(report, database_id, crit, registry) for crit in CRITERIA}


SUMMARY_COLUMNS = ("Existing Best", "NN Best", "SVR Best", "NN Boost", "SVR Boost")


def run_full_fusion_study(dbs, tables, cfg: ExperimentConfig) -> EvaluationReport:
    """Existing, single-metric regressed and all-metric boosted rows per database."""
    report = None
    for db, table in zip(dbs, tables):
        part = _study(db, table, cfg, include_single=True, include_boost=True)
        report = part if report is None else report.merge(part)
    return report


def _best(report, database_id, prefix, registry, criterion):
    best = None
    for mid in registry:
        e = report.get(database_id, f"{prefix}:{mid}", criterion)
        better = (best is None or
                  (e.mean < best[0] if criterion == "RMSE" else e.mean > best[0]))
        if better:
            best = (e.mean, mid)
    return best


def best_summary(report: EvaluationReport, registry) -> dict:
    """database -> criterion -> column -> (value, method id)."""
    out = {}
    learners = [lr for lr in LEARNERS if any(m.startswith(lr + ":") for m in report.methods)]
    for database_id in report.databases:
        per_crit = {}
        for crit in CRITERIA:
            cells = {"Existing Best": _best(report, database_id, "existing", registry, crit)}
            for lr in learners:
                name = lr.upper()
                cells[f"{name} Best"] = _best(report, database_id, lr, registry, crit)
                key = (database_id, boost_label(lr), crit)
                if key in report.entries:
                    cells[f"{name} Boost"] = (report.entries[key].mean, "boost")
            per_crit[crit] = cells
        out[database_id] = per_crit
    return out
