"""
Experiment orchestration: the canonical-seed method comparison, the lambda
sweep, N-scaling, triage, and the overlap-spectrum study.
"""

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import (CANONICAL_SEEDS, CI_RESAMPLES, LAMBDA_GRID, LAMBDA_TOLERANCE, N_SEEDS,
                    REGRESSION_LAMBDA_GRID, REGRESSION_MAE_TOLERANCE, TEST_FRAC, TOPK, TRIAGE_REVIEW_FRAC,
                    TRIAGE_SUBSET_SIZES, TRIAGE_SUBSETS)
from core.analysis import (SweepPoint, entropy_vs_churn, loglog_slope, select_lambda,
                           select_lambda_regression, triage_convergence)
from dataio.models import Dataset, FilterOutcome, FilterVerdict, Split
from dataio.sampling import make_canonical_split, majority_filter, majority_fraction, shared_unique_frac
from exceptions import ChurnLabError, ConfigError, InsufficientDataError, TrainingError
from methods.predictor import predict
from methods.spec import MethodKind, MethodSpec, OverlapMode
from methods.training import train_method, twin_loader_indices
from metrics.churn import (DriftMetric, argmax_labels, aggregate_drift_pairs, pairwise_churn,
                           inter_head_symkl, regression_churn, seed_accuracies, seed_pairs,
                           zero_division_seeds)
from metrics.predictions import PredictionSet
from metrics.ranking import flip_recall_curve, hit_rate, pairwise_topk_jaccard
from nn_core.checkpoint import save_checkpoint
from nn_core.optim import TrainConfig
from stats.bootstrap import CiReport, paired_bootstrap_ci
from utils.logger import get_logger
from utils.parallel import run_cells

logger = get_logger(__name__)

ROW_FIELDS = ("dataset", "N", "method", "replicate", "metric", "mean", "lo", "hi")
COLLAPSE_DROP_PP = 5.0
ERM = MethodSpec.parse("erm")


@dataclass
class ProtocolSettings:
    """Seeds, resampling and selection constants shared by every study."""

    train_seeds: Tuple[int, ...] = tuple(range(N_SEEDS))
    canonical_seeds: Tuple[int, ...] = CANONICAL_SEEDS
    test_frac: float = TEST_FRAC
    resamples: int = CI_RESAMPLES
    ci_seed: int = 0
    topk: int = TOPK
    lambda_grid: Tuple[float, ...] = LAMBDA_GRID
    regression_lambda_grid: Tuple[float, ...] = REGRESSION_LAMBDA_GRID
    tolerance: float = LAMBDA_TOLERANCE
    regression_tolerance: float = REGRESSION_MAE_TOLERANCE
    sweep_references: Tuple[str, ...] = ("erm", "bagging:K=5")
    exempt_filter: bool = False
    n_jobs: int = 1
    checkpoint_dir: Optional[str] = None
    split: Optional[Split] = None

    def __post_init__(self):
        if len(self.train_seeds) < 2:
            raise ConfigError("seeds: at least 2 train seeds are needed for pairwise churn")
        if len(set(self.train_seeds)) != len(self.train_seeds):
            raise ConfigError("seeds: train seeds must be distinct")
        if not self.canonical_seeds and self.split is None:
            raise ConfigError("canonical_seeds: at least one replicate is needed")


@dataclass
class ComparisonCell:
    """One (method, replicate) cell of the comparison."""

    method: str
    replicate: int
    predictions: PredictionSet
    stats: Dict[str, CiReport] = field(default_factory=dict)
    scalars: Dict[str, float] = field(default_factory=dict)


@dataclass
class ComparisonResult:
    """Cells, long-format rows and the filter outcome of a comparison run."""

    cells: List[ComparisonCell]
    rows: List[dict]
    filter_outcome: Optional[FilterOutcome] = None
    resolved: Dict[str, str] = field(default_factory=dict)


def train_and_predict(pool: Dataset, spec: MethodSpec, cfg: TrainConfig, seed: int, X_test: np.ndarray,
                      cell: str, checkpoint_prefix: Optional[str] = None) -> Tuple[np.ndarray, float]:
    """
    Train one method with one seed and predict the test rows.

    Returns:
        (predictions, inter-head disagreement for twins else NaN)

    Raises:
        TrainingError: Carrying the cell identity when training fails
    """
    try:
        pred = train_method(pool, spec, cfg, seed)
        values = predict(pred, X_test)
        inter = inter_head_symkl(pred, X_test) if spec.kind is MethodKind.TWIN else float("nan")
        if checkpoint_prefix:
            for i, member in enumerate(pred.members):
                save_checkpoint(f"{checkpoint_prefix}_m{i}", member)
    except Exception as e:
        logger.error("Training cell %s failed: %s", cell, str(e))
        raise TrainingError(f"Failed to train {cell}: {e}")
    return values, inter


def _safe_name(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)


class ExperimentRunner:
    """
    Runs the study designs on one dataset.

    Every method of a replicate is trained on the same canonical split and
    predicts the same id-test sequence; trained predictions are cached per
    (method, replicate) so studies sharing a cell never retrain it.
    """

    def __init__(self, dataset: Dataset, base_cfg: TrainConfig, settings: Optional[ProtocolSettings] = None):
        """
        Initialize the runner.

        Args:
            dataset: Full dataset
            base_cfg: Shared training configuration
            settings: Protocol settings
        """
        self.dataset = dataset
        self.base_cfg = base_cfg
        self.settings = settings or ProtocolSettings()
        self._splits: Dict[int, Split] = {}
        self._cache: Dict[Tuple[str, int], Tuple[PredictionSet, np.ndarray]] = {}
        self._sweeps: Dict[int, List[SweepPoint]] = {}

    # splits and training

    @property
    def replicates(self) -> List[int]:
        if self.settings.split is not None:
            return [self.settings.split.canonical_seed]
        return list(self.settings.canonical_seeds)

    def split(self, canonical_seed: int) -> Split:
        if self.settings.split is not None:
            return self.settings.split
        if canonical_seed not in self._splits:
            self._splits[canonical_seed] = make_canonical_split(self.dataset, canonical_seed,
                                                                self.settings.test_frac)
        return self._splits[canonical_seed]

    def test_targets(self, canonical_seed: int) -> np.ndarray:
        return self.dataset.targets[self.split(canonical_seed).id_test]

    def predictions(self, spec: MethodSpec, canonical_seed: int,
                    pool_rows: Optional[np.ndarray] = None, tag: str = "") -> Tuple[PredictionSet, np.ndarray]:
        """
        Train `spec` with every train seed and predict the replicate's id-test rows.

        Args:
            spec: Method with a concrete lambda
            canonical_seed: Replicate
            pool_rows: Training rows; defaults to the replicate's whole pool
            tag: Cache tag distinguishing alternative pools

        Returns:
            (PredictionSet, per-seed inter-head disagreement)
        """
        key = (f"{spec.label}{tag}", canonical_seed)
        if key in self._cache:
            return self._cache[key]
        split = self.split(canonical_seed)
        rows = split.train_pool if pool_rows is None else pool_rows
        pool = self.dataset.subset(rows, name=self.dataset.name)
        X_test = self.dataset.features[split.id_test]
        cells = []
        for seed in self.settings.train_seeds:
            cell = f"{self.dataset.name}/{spec.label}{tag}/replicate {canonical_seed}/seed {seed}"
            prefix = None
            if self.settings.checkpoint_dir:
                prefix = os.path.join(self.settings.checkpoint_dir, _safe_name(self.dataset.name),
                                      _safe_name(spec.label + tag), f"r{canonical_seed}_s{seed}")
            cells.append((pool, spec, self.base_cfg, seed, X_test, cell, prefix))
        logger.info("Training %s%s on %s replicate %d (%d seeds)", spec.label, tag, self.dataset.name,
                    canonical_seed, len(cells))
        results = run_cells(train_and_predict, cells, n_jobs=self.settings.n_jobs)
        ps = PredictionSet([self.dataset.ids[i] for i in split.id_test],
                           np.stack([r[0] for r in results]), self.settings.train_seeds, spec.label)
        inter = np.array([r[1] for r in results])
        self._cache[key] = (ps, inter)
        return ps, inter

    def _ci(self, values) -> CiReport:
        return paired_bootstrap_ci(values, resamples=self.settings.resamples, seed=self.settings.ci_seed)

    # lambda sweep and selection

    def sweep_lambda(self, canonical_seed: Optional[int] = None,
                     grid: Optional[Sequence[float]] = None) -> List[SweepPoint]:
        """
        Twin operating points over a lambda grid plus reference methods.

        Classification points carry id-accuracy, argmax churn, sym-KL and the
        heads' mutual sym-KL; regression points carry id-MAE and regression churn.
        """
        rep = self.replicates[0] if canonical_seed is None else canonical_seed
        default_grid = (self.settings.lambda_grid if self.dataset.task.is_classification
                        else self.settings.regression_lambda_grid)
        grid = tuple(default_grid if grid is None else grid)
        if not grid:
            raise ConfigError("lambda_grid: the sweep grid is empty")
        if grid == tuple(default_grid) and rep in self._sweeps:
            return self._sweeps[rep]

        labels = self.test_targets(rep)
        specs = [(MethodSpec.parse(r), None) for r in self.settings.sweep_references]
        specs += [(MethodSpec(kind=MethodKind.TWIN, lam=float(lam)), float(lam)) for lam in grid]
        points = []
        for spec, lam in specs:
            ps, inter = self.predictions(spec, rep)
            quality = self._ci(seed_accuracies(ps, labels))
            if ps.is_classification:
                pc = pairwise_churn(ps)
                churn, symkl = self._ci(pc.churn), self._ci(pc.symkl)
            else:
                churn = self._ci(regression_churn(ps, labels).per_pair)
                symkl = CiReport(float("nan"), float("nan"), float("nan"), 0, self.settings.ci_seed)
            points.append(SweepPoint(
                label=spec.label, lam=lam,
                quality=quality.mean, quality_lo=quality.lo, quality_hi=quality.hi,
                churn=churn.mean, churn_lo=churn.lo, churn_hi=churn.hi,
                symkl=symkl.mean, symkl_lo=symkl.lo, symkl_hi=symkl.hi,
                inter_head_symkl=float(np.mean(inter)) if lam is not None else float("nan"),
            ))
        if grid == tuple(default_grid):
            self._sweeps[rep] = points
        return points

    def selected_lambda(self, canonical_seed: int) -> float:
        """
        Apply the tolerance rule to the replicate's sweep.

        Falls back to the smallest grid value when no lambda meets the tolerance.
        """
        points = self.sweep_lambda(canonical_seed)
        erm_ps, _ = self.predictions(ERM, canonical_seed)
        erm_quality = float(np.mean(seed_accuracies(erm_ps, self.test_targets(canonical_seed))))
        if self.dataset.task.is_classification:
            lam = select_lambda(points, erm_quality, self.settings.tolerance)
            grid = self.settings.lambda_grid
        else:
            lam = select_lambda_regression(points, erm_quality, self.settings.regression_tolerance,
                                           self.settings.regression_lambda_grid)
            grid = self.settings.regression_lambda_grid
        if lam is None:
            lam = float(min(grid))
            logger.warning("No lambda within tolerance on %s replicate %d; using lambda=%g",
                           self.dataset.name, canonical_seed, lam)
        logger.info("Selected lambda=%g on %s replicate %d", lam, self.dataset.name, canonical_seed)
        return lam

    def resolve(self, spec: MethodSpec, canonical_seed: int) -> MethodSpec:
        if spec.kind is MethodKind.TWIN and spec.lam is None:
            return spec.with_lambda(self.selected_lambda(canonical_seed))
        return spec

    # method comparison

    def check_filter(self, canonical_seed: int) -> Optional[FilterOutcome]:
        """
        ERM-vs-majority filter on one replicate (classification only).

        Raises:
            InsufficientDataError: If the dataset fails and is not exempted
        """
        if not self.dataset.task.is_classification:
            return None
        labels = self.test_targets(canonical_seed)
        erm_ps, _ = self.predictions(ERM, canonical_seed)
        outcome = majority_filter(float(np.mean(seed_accuracies(erm_ps, labels))),
                                  majority_fraction(labels), labels.size, dataset=self.dataset.name)
        if outcome.verdict is FilterVerdict.FAIL and not self.settings.exempt_filter:
            raise InsufficientDataError(
                f"{self.dataset.name} fails the majority-class filter (gap {outcome.gap_pp:+.1f} pp, "
                f"{outcome.test_n} test rows); set exempt_filter=true to run anyway")
        if outcome.verdict is FilterVerdict.BORDERLINE:
            logger.warning("%s passes the majority-class filter only marginally (gap %+.1f pp)",
                           self.dataset.name, outcome.gap_pp)
        return outcome

    def _classification_stats(self, ps: PredictionSet, erm: PredictionSet, labels: np.ndarray,
                               inter: np.ndarray, is_twin: bool) -> Tuple[Dict[str, np.ndarray], Dict[str, float]]:
        pc, erm_pc = pairwise_churn(ps), pairwise_churn(erm)
        acc, erm_acc = seed_accuracies(ps, labels), seed_accuracies(erm, labels)
        series = {
            'id_acc': acc,
            'churn': pc.churn,
            'symkl': pc.symkl,
            'delta_churn': pc.churn - erm_pc.churn,
            'delta_symkl': pc.symkl - erm_pc.symkl,
            'delta_acc': acc - erm_acc,
        }
        predicted = argmax_labels(ps.values)
        for c in (0, 1):
            rows = labels == c
            if np.any(rows):
                series[f'churn_y{c}'] = np.array([np.mean(predicted[i, rows] != predicted[j, rows])
                                                  for i, j in seed_pairs(ps.n_seeds)])
            else:
                logger.warning("Class y=%d absent from the test set; skipping per-class churn", c)
        for metric in DriftMetric:
            try:
                series[f'drift_{metric.value}'] = aggregate_drift_pairs(ps, labels, metric)
            except InsufficientDataError as e:
                logger.warning("Skipping %s drift: %s", metric.value, str(e))
        k = min(self.settings.topk, ps.n_examples)
        series['topk_jaccard'] = pairwise_topk_jaccard(ps, k)
        series['hit_rate'] = np.array([hit_rate(ps.values[s], labels, k, ps.ids) for s in range(ps.n_seeds)])
        if is_twin:
            series['inter_head_symkl'] = inter
        scalars = {}
        for metric in (DriftMetric.PRECISION, DriftMetric.RECALL, DriftMetric.F1):
            scalars[f'drift_{metric.value}_zero_division'] = float(zero_division_seeds(ps, labels, metric).any())
        if erm_pc.mean_symkl > 0:
            scalars['symkl_rel_reduction_pct'] = 100.0 * (1.0 - pc.mean_symkl / erm_pc.mean_symkl)
        return series, scalars

    def _regression_stats(self, ps: PredictionSet, erm: PredictionSet, targets: np.ndarray,
                          inter: np.ndarray, is_twin: bool) -> Tuple[Dict[str, np.ndarray], Dict[str, float]]:
        rc, erm_rc = regression_churn(ps, targets), regression_churn(erm, targets)
        mae, erm_mae = seed_accuracies(ps, targets), seed_accuracies(erm, targets)
        series = {
            'id_mae': mae,
            'reg_churn': rc.per_pair,
            'delta_reg_churn': rc.per_pair - erm_rc.per_pair,
            'delta_mae': mae - erm_mae,
        }
        if is_twin:
            series['inter_head_mse'] = inter
        return series, {'churn_mae_ratio': rc.ratio}

    def run_comparison(self, methods: Sequence[MethodSpec]) -> ComparisonResult:
        """
        Compare methods against ERM over every replicate.

        Args:
            methods: Methods to compare; ERM is always included as the baseline

        Returns:
            ComparisonResult with per-replicate and across-replicate rows

        Raises:
            TrainingError: If a cell fails, naming the cell
        """
        specs = [ERM] + [m for m in methods if m.label != ERM.label]
        cells: List[ComparisonCell] = []
        resolved: Dict[str, str] = {}
        outcome = None
        for r, rep in enumerate(self.replicates):
            if r == 0:
                outcome = self.check_filter(rep)
            targets = self.test_targets(rep)
            erm_ps, _ = self.predictions(ERM, rep)
            for spec in specs:
                concrete = self.resolve(spec, rep)
                resolved[f"{spec.label}@{rep}"] = concrete.label
                ps, inter = self.predictions(concrete, rep)
                is_twin = concrete.kind is MethodKind.TWIN
                if ps.is_classification:
                    series, scalars = self._classification_stats(ps, erm_ps, targets, inter, is_twin)
                else:
                    series, scalars = self._regression_stats(ps, erm_ps, targets, inter, is_twin)
                cells.append(ComparisonCell(method=spec.label, replicate=rep, predictions=ps,
                                            stats={m: self._ci(v) for m, v in series.items()},
                                            scalars=scalars))
        return ComparisonResult(cells=cells, rows=self.comparison_rows(cells), filter_outcome=outcome,
                                resolved=resolved)

    def _row(self, method: str, replicate, metric: str, mean, lo="", hi="") -> dict:
        return {'dataset': self.dataset.name, 'N': self.dataset.n, 'method': method,
                'replicate': replicate, 'metric': metric, 'mean': mean, 'lo': lo, 'hi': hi}

    def comparison_rows(self, cells: Sequence[ComparisonCell]) -> List[dict]:
        """Per-replicate rows followed by across-replicate means of mean, lo and hi."""
        rows = []
        grouped: Dict[Tuple[str, str], List[Tuple[float, Optional[float], Optional[float]]]] = {}
        for cell in cells:
            for metric, ci in cell.stats.items():
                rows.append(self._row(cell.method, cell.replicate, metric, ci.mean, ci.lo, ci.hi))
                grouped.setdefault((cell.method, metric), []).append((ci.mean, ci.lo, ci.hi))
            for metric, value in cell.scalars.items():
                rows.append(self._row(cell.method, cell.replicate, metric, value))
                grouped.setdefault((cell.method, metric), []).append((value, None, None))
        for (method, metric), values in grouped.items():
            means = [v[0] for v in values]
            if values[0][1] is None:
                rows.append(self._row(method, "mean", metric, float(np.mean(means))))
            else:
                rows.append(self._row(method, "mean", metric, float(np.mean(means)),
                                      float(np.mean([v[1] for v in values])),
                                      float(np.mean([v[2] for v in values]))))
        return rows

    # further studies

    def n_scaling(self, m_grid: Sequence[int], canonical_seed: Optional[int] = None) -> Tuple[List[dict], Optional[float]]:
        """
        ERM churn on nested prefixes of the canonical pool.

        Returns:
            (rows per M, log-log slope of sym-KL on M; None for regression)

        Raises:
            InsufficientDataError: If an M exceeds the pool
        """
        rep = self.replicates[0] if canonical_seed is None else canonical_seed
        split = self.split(rep)
        m_grid = sorted(int(m) for m in m_grid)
        if not m_grid or m_grid[-1] > split.train_pool.size or m_grid[0] < 1:
            raise InsufficientDataError(f"M grid {m_grid} must lie within 1..{split.train_pool.size}")
        targets = self.test_targets(rep)
        rows, symkl_means = [], []
        for m in m_grid:
            ps, _ = self.predictions(ERM, rep, pool_rows=split.train_pool[:m], tag=f"@M={m}")
            if ps.is_classification:
                pc = pairwise_churn(ps)
                series = {'churn': pc.churn, 'symkl': pc.symkl}
                symkl_means.append(pc.mean_symkl)
            else:
                series = {'reg_churn': regression_churn(ps, targets).per_pair}
            for metric, values in series.items():
                ci = self._ci(values)
                rows.append({'M': m, 'metric': metric, 'mean': ci.mean, 'lo': ci.lo, 'hi': ci.hi})
        slope = loglog_slope(m_grid, symkl_means) if symkl_means and len(m_grid) >= 2 else None
        return rows, slope

    def triage(self, canonical_seed: Optional[int] = None, entropy_seed: int = 0,
               subset_sizes: Optional[Sequence[int]] = None, n_subsets: int = TRIAGE_SUBSETS,
               review_frac: float = TRIAGE_REVIEW_FRAC) -> Dict[str, object]:
        """
        Triage study on ERM predictions: gold flip-recall curve, convergence in
        K', and the entropy baseline.
        """
        rep = self.replicates[0] if canonical_seed is None else canonical_seed
        ps, _ = self.predictions(ERM, rep)
        pc = pairwise_churn(ps)
        sizes = [k for k in (subset_sizes or TRIAGE_SUBSET_SIZES) if k <= ps.n_seeds]
        if ps.n_seeds not in sizes:
            sizes.append(ps.n_seeds)
        return {
            'curve': flip_recall_curve(pc.per_example, pc.flip_mass, ps.ids),
            'convergence': triage_convergence(ps, sizes, n_subsets=n_subsets, review_frac=review_frac,
                                              seed=self.settings.ci_seed),
            'entropy': entropy_vs_churn(ps, entropy_seed=entropy_seed),
            'predictions': ps,
        }

    def overlap_spectrum(self, lam: float, modes: Sequence[str] = ("disjoint", "bootstrap", "shared"),
                         canonical_seed: Optional[int] = None) -> List[dict]:
        """
        Twin Delta-churn and Delta-accuracy vs ERM per loader-overlap mode.

        Rows flag a collapse when the id-accuracy drop exceeds 5 pp.
        """
        rep = self.replicates[0] if canonical_seed is None else canonical_seed
        targets = self.test_targets(rep)
        erm_ps, _ = self.predictions(ERM, rep)
        pool_size = self.split(rep).train_pool.size
        rows = []
        for mode in modes:
            spec = MethodSpec(kind=MethodKind.TWIN, lam=float(lam), overlap=OverlapMode(mode))
            ps, _ = self.predictions(spec, rep)
            overlap = float(np.mean([shared_unique_frac(*twin_loader_indices(pool_size, s, 0, spec.overlap),
                                                        pool_size)
                                     for s in self.settings.train_seeds]))
            if ps.is_classification:
                d_churn = self._ci(pairwise_churn(ps).churn - pairwise_churn(erm_ps).churn)
                d_quality = self._ci(100.0 * (seed_accuracies(ps, targets) - seed_accuracies(erm_ps, targets)))
                collapsed = -d_quality.mean > COLLAPSE_DROP_PP
            else:
                d_churn = self._ci(regression_churn(ps, targets).per_pair
                                   - regression_churn(erm_ps, targets).per_pair)
                d_quality = self._ci(seed_accuracies(ps, targets) - seed_accuracies(erm_ps, targets))
                collapsed = False
            rows.append({'mode': spec.overlap.value, 'lambda': lam, 'loader_overlap': overlap,
                         'delta_churn': d_churn.mean, 'delta_churn_lo': d_churn.lo, 'delta_churn_hi': d_churn.hi,
                         'delta_quality': d_quality.mean, 'delta_quality_lo': d_quality.lo,
                         'delta_quality_hi': d_quality.hi, 'collapsed': collapsed})
        return rows
