"""
Subcommands. Each one computes its study, then writes ``<out>/<command>.csv``,
``<out>/<command>.md`` and ``<out>/<command>.json`` plus any plot-data files.
"""

import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from bo.lambda_search import BoSettings, bo_lambda_search, bo_lambda_stage2
from bo.trajectory import bo_trajectory, trajectory_report
from cli.config import RunConfig
from core.analysis import FOOTPRINT_METHODS, footprint_table, pareto_front
from core.protocol import ROW_FIELDS, ExperimentRunner, ProtocolSettings
from dataio.loader import save_dataset
from dataio.models import Dataset
from exceptions import ConfigError, InsufficientDataError
from methods.predictor import predict
from methods.spec import MethodKind
from metrics.churn import pairwise_churn, regression_pair_churn, seed_accuracies, seed_stripes
from metrics.predictions import PredictionSet, load_predictions
from stats.bootstrap import paired_bootstrap_ci
from stats.ranks import RankTable, friedman_test, nemenyi_cd, significant_pairs
from utils.artifacts import (config_hash, list_artifacts, markdown_table, read_csv_artifact, write_csv,
                             write_json, write_markdown)
from utils.logger import get_logger
from utils.parallel import run_cells

logger = get_logger(__name__)

COMMANDS = ("synth", "churn", "compare", "sweep-lambda", "bo-lambda", "bo-loop",
            "triage", "nscale", "overlap", "footprint", "report")

# plot-data files are kept out of the regenerated report
PLOT_DATA_SUFFIXES = ("_stripes", "_flip_recall", "_pareto", "_trajectories")


@dataclass
class CommandContext:
    """Validated config plus the derived output location and hash."""

    cfg: RunConfig
    out: str
    cfg_hash: str
    written: List[str] = field(default_factory=list)

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "CommandContext":
        return cls(cfg=cfg, out=cfg.out, cfg_hash=config_hash(cfg.hashable()))

    def csv(self, name: str, rows: Sequence[Dict[str, Any]], fields: Sequence[str]) -> None:
        self.written.append(write_csv(self.out, name, rows, fields, self.cfg_hash))

    def markdown(self, name: str, title: str, sections: Sequence[Tuple[str, str]]) -> None:
        self.written.append(write_markdown(self.out, name, title, sections, self.cfg_hash))

    def json(self, name: str, payload: Dict[str, Any]) -> None:
        self.written.append(write_json(self.out, name, payload, self.cfg_hash, self.cfg.seeds))


def _runner(cfg: RunConfig, dataset: Dataset) -> ExperimentRunner:
    settings = ProtocolSettings(
        train_seeds=tuple(cfg.seeds),
        canonical_seeds=tuple(cfg.canonical_seeds),
        test_frac=cfg.test_frac,
        resamples=cfg.resamples,
        ci_seed=cfg.seed,
        topk=cfg.topk,
        lambda_grid=tuple(cfg.lambda_grid),
        regression_lambda_grid=tuple(cfg.regression_lambda_grid),
        tolerance=cfg.tolerance,
        regression_tolerance=cfg.regression_tolerance,
        exempt_filter=cfg.exempt_filter,
        n_jobs=cfg.jobs,
        checkpoint_dir=cfg.checkpoint_dir or None,
        split=cfg.load_split(dataset),
    )
    return ExperimentRunner(dataset, cfg.train_config(), settings)


def _ci_row(metric: str, values, cfg: RunConfig) -> dict:
    ci = paired_bootstrap_ci(values, resamples=cfg.resamples, seed=cfg.seed)
    return {'metric': metric, 'mean': ci.mean, 'lo': ci.lo, 'hi': ci.hi}


def _stripes_rows(ps: PredictionSet) -> Tuple[List[dict], List[str]]:
    order, matrix = seed_stripes(ps)
    ids = [ps.ids[i] for i in order]
    rows = [{'seed': seed, **dict(zip(ids, (int(v) for v in matrix[r])))} for r, seed in enumerate(ps.seeds)]
    return rows, ['seed', *ids]


def _fmt_ci(mean, lo, hi) -> str:
    if lo == "" or lo is None:
        return f"{mean:.4g}"
    return f"{mean:.4g} [{lo:.4g}, {hi:.4g}]"


# commands

def cmd_synth(ctx: CommandContext) -> Dict[str, Any]:
    """Generate the configured synthetic dataset and save it as a feature-matrix CSV."""
    cfg = ctx.cfg
    if cfg.synthetic_n <= 0:
        raise ConfigError("synthetic_n: synth needs a positive row count")
    if cfg.dataset:
        raise ConfigError("dataset: synth generates data; unset the dataset path")
    ds = cfg.load_data()
    path = save_dataset(ds, os.path.join(ctx.out, "data", f"{ds.name}.csv"))
    targets = ds.targets.astype(np.float64)
    row = {'name': ds.name, 'task': ds.task.value, 'n': ds.n, 'd': ds.d, 'seed': cfg.seed,
           'class_sep': cfg.class_sep, 'noise_sd': cfg.noise_sd,
           'target_mean': float(targets.mean()), 'target_std': float(targets.std()), 'path': path}
    fields = list(row)
    ctx.csv("synth", [row], fields)
    ctx.markdown("synth", "Synthetic dataset", [("Dataset", markdown_table([row], fields))])
    ctx.json("synth", {'dataset': row})
    return row


def cmd_churn(ctx: CommandContext) -> Dict[str, Any]:
    """Churn report of a stored prediction set: per-pair values and CIs of the means."""
    cfg = ctx.cfg
    if not cfg.predictions:
        raise ConfigError("predictions: churn needs a prediction-set file")
    ps = load_predictions(cfg.predictions)
    pairs = [(ps.seeds[i], ps.seeds[j]) for i in range(ps.n_seeds) for j in range(i + 1, ps.n_seeds)]
    if ps.is_classification:
        pc = pairwise_churn(ps)
        rows = [{'seed_a': a, 'seed_b': b, 'churn': c, 'symkl': s}
                for (a, b), c, s in zip(pairs, pc.churn, pc.symkl)]
        fields = ['seed_a', 'seed_b', 'churn', 'symkl']
        summary = [_ci_row('churn', pc.churn, cfg), _ci_row('symkl', pc.symkl, cfg)]
        stripes, stripe_fields = _stripes_rows(ps)
        ctx.csv("churn_stripes", stripes, stripe_fields)
    else:
        per_pair = regression_pair_churn(ps)
        rows = [{'seed_a': a, 'seed_b': b, 'reg_churn': c} for (a, b), c in zip(pairs, per_pair)]
        fields = ['seed_a', 'seed_b', 'reg_churn']
        summary = [_ci_row('reg_churn', per_pair, cfg)]
    ctx.csv("churn", rows, fields)
    ctx.markdown("churn", f"Churn of {os.path.basename(cfg.predictions)}", [
        ("Summary", markdown_table(summary, ['metric', 'mean', 'lo', 'hi'])),
        ("Seed pairs", markdown_table(rows, fields)),
    ])
    payload = {'predictions': cfg.predictions, 'n_seeds': ps.n_seeds, 'n_examples': ps.n_examples,
               'n_pairs': len(pairs), 'summary': summary}
    ctx.json("churn", payload)
    return payload


def _pivot(rows: Sequence[dict]) -> Tuple[List[dict], List[str]]:
    """Across-replicate rows as one line per method with 'mean [lo, hi]' cells."""
    metrics: List[str] = []
    table: Dict[str, dict] = {}
    for row in rows:
        if row['replicate'] != "mean":
            continue
        if row['metric'] not in metrics:
            metrics.append(row['metric'])
        table.setdefault(row['method'], {'method': row['method']})[row['metric']] = \
            _fmt_ci(row['mean'], row['lo'], row['hi'])
    return list(table.values()), ['method', *metrics]


def cmd_compare(ctx: CommandContext) -> Dict[str, Any]:
    """Method comparison against ERM over the canonical replicates."""
    cfg = ctx.cfg
    ds = cfg.load_data()
    runner = _runner(cfg, ds)
    result = runner.run_comparison(cfg.method_specs)
    ctx.csv("compare", result.rows, ROW_FIELDS)
    erm = next(c for c in result.cells if c.method == "erm")
    if erm.predictions.is_classification:
        stripes, stripe_fields = _stripes_rows(erm.predictions)
        ctx.csv("compare_stripes", stripes, stripe_fields)
    pivot, pivot_fields = _pivot(result.rows)
    sections = [("Across replicates", markdown_table(pivot, pivot_fields))]
    if result.filter_outcome is not None:
        sections.append(("Majority-class filter", markdown_table([result.filter_outcome.to_dict()],
                                                                 list(result.filter_outcome.to_dict()))))
    ctx.markdown("compare", f"Method comparison on {ds.name}", sections)
    payload = {
        'dataset': ds.to_dict(),
        'replicates': runner.replicates,
        'methods': [m.label for m in cfg.method_specs],
        'resolved': result.resolved,
        'filter': result.filter_outcome.to_dict() if result.filter_outcome else None,
        'summary': [r for r in result.rows if r['replicate'] == "mean"],
    }
    ctx.json("compare", payload)
    return payload


def cmd_sweep_lambda(ctx: CommandContext) -> Dict[str, Any]:
    """Twin lambda sweep with reference points, Pareto flags and the selected lambda."""
    cfg = ctx.cfg
    ds = cfg.load_data()
    runner = _runner(cfg, ds)
    rows, pareto, selected = [], [], {}
    for rep in runner.replicates:
        points = runner.sweep_lambda(rep)
        front = pareto_front(points, higher_quality_is_better=ds.task.is_classification)
        selected[str(rep)] = runner.selected_lambda(rep)
        for p, on_front in zip(points, front):
            rows.append({'replicate': rep, **p.to_dict()})
            pareto.append({'replicate': rep, 'label': p.label, 'churn': p.churn, 'quality': p.quality,
                           'on_front': on_front})
    fields = ['replicate', *points[0].to_dict()]
    ctx.csv("sweep-lambda", rows, fields)
    ctx.csv("sweep-lambda_pareto", pareto, ['replicate', 'label', 'churn', 'quality', 'on_front'])
    quality = "id-accuracy" if ds.task.is_classification else "id-MAE"
    ctx.markdown("sweep-lambda", f"Lambda sweep on {ds.name}", [
        ("Operating points", markdown_table(rows, ['replicate', 'label', 'quality', 'churn', 'symkl',
                                                   'inter_head_symkl'])),
        ("Selected lambda", markdown_table([{'replicate': r, 'lambda': v} for r, v in selected.items()],
                                           ['replicate', 'lambda'])),
        ("Quality", f"quality is {quality}"),
    ])
    payload = {'dataset': ds.name, 'selected_lambda': selected, 'tolerance': cfg.tolerance}
    ctx.json("sweep-lambda", payload)
    return payload


def cmd_bo_lambda(ctx: CommandContext) -> Dict[str, Any]:
    """GP-EI lambda search per seed on the first replicate's pool, then median and retraining."""
    cfg = ctx.cfg
    ds = cfg.load_data()
    runner = _runner(cfg, ds)
    rep = runner.replicates[0]
    split = runner.split(rep)
    pool = ds.subset(split.train_pool, name=ds.name)
    settings = BoSettings(trials=cfg.bo_trials, init_trials=cfg.bo_init_trials, folds=cfg.bo_folds,
                          delta=cfg.bo_delta, penalty=cfg.bo_penalty, bounds=tuple(cfg.bo_bounds),
                          grid_points=cfg.bo_grid_points, fold_seed=cfg.bo_fold_seed)
    tc = cfg.train_config()
    rows, stars = [], []
    for seed in cfg.bo_seeds:
        lam, trials = bo_lambda_search(pool, tc, seed, settings, n_jobs=cfg.jobs)
        stars.append(lam)
        rows.extend({'seed': seed, **t.to_row()} for t in trials)
    lam_ds, predictors = bo_lambda_stage2(pool, tc, cfg.seeds, stars, n_jobs=cfg.jobs)

    X_test = ds.features[split.id_test]
    targets = ds.targets[split.id_test]
    ps = PredictionSet([ds.ids[i] for i in split.id_test], np.stack([predict(p, X_test) for p in predictors]),
                       cfg.seeds, f"twin:lambda={lam_ds:g}")
    if ps.is_classification:
        summary = [_ci_row('id_acc', seed_accuracies(ps, targets), cfg),
                   _ci_row('churn', pairwise_churn(ps).churn, cfg)]
    else:
        summary = [_ci_row('id_mae', seed_accuracies(ps, targets), cfg),
                   _ci_row('reg_churn', regression_pair_churn(ps), cfg)]

    fields = ['seed', 'trial', 'lambda', 'val_acc', 'val_churn', 'score']
    ctx.csv("bo-lambda", rows, fields)
    ctx.markdown("bo-lambda", f"Lambda search on {ds.name}", [
        ("Per-seed optimum", markdown_table([{'seed': s, 'lambda': l} for s, l in zip(cfg.bo_seeds, stars)],
                                            ['seed', 'lambda'])),
        ("Retrained at the median", f"lambda = {lam_ds:g}\n\n" +
         markdown_table(summary, ['metric', 'mean', 'lo', 'hi'])),
        ("Trials", markdown_table(rows, fields)),
    ])
    payload = {'dataset': ds.name, 'replicate': rep, 'lambda_stars': dict(zip(map(str, cfg.bo_seeds), stars)),
               'lambda': lam_ds, 'summary': summary}
    ctx.json("bo-lambda", payload)
    return payload


def _trajectory_cell(ds, spec, k, tc, budget, init_size, init_seed):
    return bo_trajectory(ds, spec, k, tc, budget=budget, init_size=init_size, init_seed=init_seed)


def cmd_bo_loop(ctx: CommandContext) -> Dict[str, Any]:
    """Greedy BO trajectories per surrogate and their cross-trajectory stability."""
    cfg = ctx.cfg
    ds = cfg.load_data()
    if ds.task.is_classification:
        raise ConfigError("task: bo-loop needs a regression dataset")
    tc = cfg.train_config()
    y_range = float(np.max(ds.targets) - np.min(ds.targets))
    rows, steps = [], []
    for spec in cfg.trajectory_specs:
        if spec.kind is MethodKind.TWIN and spec.lam is None:
            raise ConfigError("trajectory_methods: bo-loop needs a concrete twin lambda")
        cells = [(ds, spec, k, tc, cfg.trajectory_budget, cfg.trajectory_init_size, cfg.seed)
                 for k in range(cfg.trajectories)]
        trajs = run_cells(_trajectory_cell, cells, n_jobs=cfg.jobs)
        report = trajectory_report(trajs, y_range, resamples=cfg.resamples, seed=cfg.seed)
        rows.extend(report.to_rows())
        for t in trajs:
            steps.extend(t.to_rows())
    fields = ['method', 'metric', 'mean', 'lo', 'hi']
    ctx.csv("bo-loop", rows, fields)
    ctx.csv("bo-loop_trajectories", steps, ['method', 'trajectory', 'step', 'index', 'y'])
    ctx.markdown("bo-loop", f"BO trajectory stability on {ds.name}",
                 [("Stability", markdown_table(rows, fields))])
    payload = {'dataset': ds.name, 'trajectories': cfg.trajectories, 'budget': cfg.trajectory_budget,
               'init_size': cfg.trajectory_init_size, 'y_range': y_range, 'summary': rows}
    ctx.json("bo-loop", payload)
    return payload


def cmd_triage(ctx: CommandContext) -> Dict[str, Any]:
    """Flip-recall curve, K' convergence and the entropy baseline on ERM predictions."""
    cfg = ctx.cfg
    ds = cfg.load_data()
    if not ds.task.is_classification:
        raise ConfigError("task: triage needs a classification dataset")
    runner = _runner(cfg, ds)
    study = runner.triage(subset_sizes=cfg.triage_subsets, n_subsets=cfg.triage_draws,
                          review_frac=cfg.review_frac)
    curve = study['curve']
    convergence, entropy = study['convergence'], study['entropy']
    curve_rows = [{'coverage': c, 'recall': r, 'precision': "" if i == 0 else curve.precision[i - 1]}
                  for i, (c, r) in enumerate(zip(curve.coverage, curve.recall))]
    conv_fields = ['k', 'subsets', 'review_frac', 'recall', 'recall_std']
    ent_fields = ['score', 'recall_at_0.1', 'recall_at_0.3', 'aupc', 'aupc_raw']
    ctx.csv("triage", convergence, conv_fields)
    ctx.csv("triage_entropy", entropy, ent_fields)
    ctx.csv("triage_flip_recall", curve_rows, ['coverage', 'recall', 'precision'])
    ctx.markdown("triage", f"Churn triage on {ds.name}", [
        ("Convergence in K'", markdown_table(convergence, conv_fields)),
        ("Churn score vs predictive entropy", markdown_table(entropy, ent_fields)),
    ])
    payload = {'dataset': ds.name, 'recall_at': {str(q): v for q, v in curve.recall_at.items()},
               'aupc': curve.aupc, 'convergence': convergence, 'entropy': entropy}
    ctx.json("triage", payload)
    return payload


def cmd_nscale(ctx: CommandContext) -> Dict[str, Any]:
    """ERM churn against training-pool size, with the log-log slope of sym-KL."""
    cfg = ctx.cfg
    ds = cfg.load_data()
    runner = _runner(cfg, ds)
    rows, slope = runner.n_scaling(cfg.m_grid)
    fields = ['M', 'metric', 'mean', 'lo', 'hi']
    ctx.csv("nscale", rows, fields)
    body = markdown_table(rows, fields)
    if slope is not None:
        body += f"\n\nlog-log slope of sym-KL on M: {slope:.3f}"
    ctx.markdown("nscale", f"Churn vs training size on {ds.name}", [("Scaling", body)])
    payload = {'dataset': ds.name, 'm_grid': list(cfg.m_grid), 'symkl_slope': slope, 'rows': rows}
    ctx.json("nscale", payload)
    return payload


def cmd_overlap(ctx: CommandContext) -> Dict[str, Any]:
    """Twin loader-overlap spectrum at a fixed lambda."""
    cfg = ctx.cfg
    ds = cfg.load_data()
    runner = _runner(cfg, ds)
    rows = runner.overlap_spectrum(cfg.overlap_lambda, cfg.overlap_modes)
    fields = list(rows[0]) if rows else ['mode']
    ctx.csv("overlap", rows, fields)
    ctx.markdown("overlap", f"Loader-overlap spectrum on {ds.name}",
                 [("Modes", markdown_table(rows, ['mode', 'loader_overlap', 'delta_churn', 'delta_quality',
                                                  'collapsed']))])
    payload = {'dataset': ds.name, 'lambda': cfg.overlap_lambda, 'rows': rows}
    ctx.json("overlap", payload)
    return payload


def cmd_footprint(ctx: CommandContext) -> Dict[str, Any]:
    """Static per-step compute footprint in ERM units."""
    rows = [r.to_dict() for r in footprint_table(FOOTPRINT_METHODS)]
    fields = list(rows[0])
    ctx.csv("footprint", rows, fields)
    ctx.markdown("footprint", "Compute footprint", [("Per training step and at inference",
                                                     markdown_table(rows, fields))])
    payload = {'rows': rows}
    ctx.json("footprint", payload)
    return payload


def _rank_study(out_dir: str) -> Optional[Dict[str, Any]]:
    """
    Friedman / Nemenyi over mean churn of every compare.csv under out_dir.

    Returns None unless at least two datasets share at least two methods.
    """
    churn: Dict[str, Dict[str, float]] = {}
    for root, _, files in sorted(os.walk(out_dir)):
        if "compare.csv" not in files:
            continue
        _, frame = read_csv_artifact(os.path.join(root, "compare.csv"))
        means = frame[(frame['replicate'].astype(str) == "mean") & (frame['metric'] == "churn")]
        for _, row in means.iterrows():
            churn.setdefault(str(row['dataset']), {})[str(row['method'])] = float(row['mean'])
    if len(churn) < 2:
        return None
    methods = sorted(set.intersection(*(set(m) for m in churn.values())))
    if len(methods) < 2:
        return None
    datasets = sorted(churn)
    # lower churn ranks first
    table = RankTable(values=np.array([[churn[d][m] for m in methods] for d in datasets]),
                      methods=methods, datasets=datasets)
    chi2, df, p = friedman_test(table)
    ranks = table.mean_ranks
    result = {'datasets': datasets, 'methods': methods, 'mean_ranks': dict(zip(methods, ranks.tolist())),
              'friedman_chi2': chi2, 'df': df, 'p_value': p}
    try:
        cd = nemenyi_cd(len(methods), len(datasets))
        result['nemenyi_cd'] = cd
        result['significant_pairs'] = [list(t) for t in significant_pairs(ranks, cd, methods)]
    except ConfigError as e:
        logger.warning("Skipping Nemenyi test: %s", str(e))
    return result


def cmd_report(ctx: CommandContext) -> Dict[str, Any]:
    """Regenerate Markdown tables from the stored CSV artifacts, without retraining."""
    artifacts = [a for a in list_artifacts(ctx.out)
                 if a['name'] != "report" and not a['name'].endswith(PLOT_DATA_SUFFIXES)]
    if not artifacts:
        raise InsufficientDataError(f"No CSV artifacts under {ctx.out}")
    sections, rows = [], []
    for artifact in artifacts:
        cfg_hash, frame = read_csv_artifact(artifact['path'])
        records = frame.to_dict(orient="records")
        sections.append((artifact['name'], markdown_table(records, list(frame.columns))))
        rows.append({'artifact': artifact['name'], 'rows': len(frame), 'config_hash': cfg_hash or ""})
    ranks = _rank_study(ctx.out)
    if ranks is not None:
        rank_rows = [{'method': m, 'mean_rank': r} for m, r in ranks['mean_ranks'].items()]
        body = markdown_table(rank_rows, ['method', 'mean_rank'])
        body += f"\n\nFriedman chi2 = {ranks['friedman_chi2']:.3f} (df {ranks['df']}, p = {ranks['p_value']:.3g})"
        if 'nemenyi_cd' in ranks:
            body += f"; Nemenyi CD = {ranks['nemenyi_cd']:.3f}"
        sections.append(("Mean churn ranks across datasets", body))
    fields = ['artifact', 'rows', 'config_hash']
    ctx.csv("report", rows, fields)
    ctx.markdown("report", "Churn Lab report", [("Artifacts", markdown_table(rows, fields)), *sections])
    payload = {'artifacts': rows, 'ranks': ranks}
    ctx.json("report", payload)
    return payload


HANDLERS: Dict[str, Callable[[CommandContext], Dict[str, Any]]] = {
    'synth': cmd_synth,
    'churn': cmd_churn,
    'compare': cmd_compare,
    'sweep-lambda': cmd_sweep_lambda,
    'bo-lambda': cmd_bo_lambda,
    'bo-loop': cmd_bo_loop,
    'triage': cmd_triage,
    'nscale': cmd_nscale,
    'overlap': cmd_overlap,
    'footprint': cmd_footprint,
    'report': cmd_report,
}


def run_command(name: str, cfg: RunConfig) -> int:
    """
    Run one subcommand.

    Args:
        name: Subcommand name
        cfg: Validated configuration

    Returns:
        0 on success; failures propagate as exceptions

    Raises:
        ConfigError: If the command is unknown
    """
    if name not in HANDLERS:
        raise ConfigError(f"command: unknown command '{name}' (expected one of {', '.join(COMMANDS)})")
    ctx = CommandContext.from_config(cfg)
    logger.info("Running %s (config %s) into %s", name, ctx.cfg_hash, ctx.out)
    HANDLERS[name](ctx)
    for path in ctx.written:
        logger.debug("Artifact: %s", path)
    logger.info("%s finished: %d files written", name, len(ctx.written))
    return 0
