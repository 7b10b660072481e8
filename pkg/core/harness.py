"""Multi-seed campaigns, weight sweeps and their aggregation.

Each (sweep value, seed) pair is one run with its own directory holding
``metrics.csv``, ``training_log.jsonl``, ``checkpoint.npz`` and, when
tracing, ``trace.jsonl``. ``manifest.json`` at the campaign root lists every
run with its resolved config, config hash, status and files.
"""
import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .config import NetworkConfig, TrainConfig, config_hash, dump_config
from .exceptions import ConfigError, MecError, TrainingAborted
from .metrics import read_metrics_csv, write_metrics_csv
from .trainers import TrainingLog, run_random, train

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
METRICS_NAME = 'metrics.csv'
LOG_NAME = 'training_log.jsonl'
CHECKPOINT_NAME = 'checkpoint.npz'
TRACE_NAME = 'trace.jsonl'
SUMMARY_NAME = 'summary.csv'
SWEEP_HELD_WEIGHT = 0.5

SUMMARY_METRICS = (
    'avg_dl_delay',
    'avg_ul_delay',
    'min_cum_earning',
    'mean_cum_earning',
    'max_cum_battery_pct',
    'mean_cum_battery_pct',
    'dl_reward_sum',
    'ul_reward_sum',
    'reward_sum',
    'dl_utility',
    'ul_utility',
    'objective',
    'steps_survived',
    'depleted',
)


@dataclass
class ExperimentSpec:
    algorithm: str
    seeds: list
    output_dir: str
    axis: str = 'none'
    values: list = field(default_factory=list)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    episodes: int = 10
    tail_fraction: float = 0.1
    workers: int = 1
    trace: bool = False

    @classmethod
    def from_data(cls, data, network=None, train=None):
        """Validate a plain dict (CLI flags or JSON) into a spec"""
        from .serializers import ExperimentSpecSerializer

        serializer = ExperimentSpecSerializer(data=data)
        if not serializer.is_valid():
            errors = [f"{key} {message}" for key, messages in serializer.errors.items() for message in messages]
            raise ConfigError('; '.join(errors))
        return cls(network=network or NetworkConfig(), train=train or TrainConfig(), **serializer.validated_data)


@dataclass
class RunJob:
    name: str
    algorithm: str
    seed: int
    axis: str
    value: float
    network: NetworkConfig
    train: TrainConfig
    run_dir: str
    episodes: int
    trace: bool


@dataclass
class RunOutput:
    value: float
    seed: int
    records: list


def sweep_network(network, axis, value):
    """Apply one sweep point: the swept weight takes ``value``, the other is held at 0.5"""
    if axis == 'q':
        return dataclasses.replace(network, weight_q=value, weight_h=SWEEP_HELD_WEIGHT)
    if axis == 'h':
        return dataclasses.replace(network, weight_h=value, weight_q=SWEEP_HELD_WEIGHT)
    return network


def _run_name(algorithm, axis, value, seed):
    if axis == 'none':
        return f"{algorithm}_seed{seed}"
    return f"{algorithm}_{axis}{value:g}_seed{seed}"


def plan_runs(spec):
    jobs = []
    for value in (spec.values if spec.axis != 'none' else [None]):
        network = sweep_network(spec.network, spec.axis, value)
        for seed in spec.seeds:
            name = _run_name(spec.algorithm, spec.axis, value, seed)
            jobs.append(RunJob(
                name=name,
                algorithm=spec.algorithm,
                seed=seed,
                axis=spec.axis,
                value=value,
                network=network,
                train=dataclasses.replace(spec.train, seed=seed),
                run_dir=os.path.join(spec.output_dir, name),
                episodes=spec.episodes,
                trace=spec.trace,
            ))
    return jobs


class JsonLinesWriter:
    def __init__(self, path):
        self.path = path
        self._handle = open(path, 'w', encoding='utf-8')

    def __call__(self, record):
        self._handle.write(json.dumps(record, sort_keys=True) + '\n')

    def close(self):
        self._handle.close()


def run_job(job):
    """Execute one run and return its manifest entry; failures are recorded, not raised"""
    os.makedirs(job.run_dir, exist_ok=True)
    entry = {
        'run': job.name,
        'algorithm': job.algorithm,
        'seed': job.seed,
        'axis': job.axis,
        'value': job.value,
        'config': dump_config(job.network, job.train),
        'config_hash': config_hash(job.network, job.train),
        'files': {},
        'status': 'ok',
        'reason': None,
    }
    files = entry['files']
    trace = JsonLinesWriter(os.path.join(job.run_dir, TRACE_NAME)) if job.trace else None
    if trace is not None:
        files['trace'] = os.path.join(job.name, TRACE_NAME)
    log = TrainingLog(os.path.join(job.run_dir, LOG_NAME))
    files['log'] = os.path.join(job.name, LOG_NAME)
    try:
        if job.algorithm == 'random':
            for record in run_random(job.network, job.episodes, job.seed, trace=trace):
                log.append_episode(record)
        else:
            train(job.algorithm, job.network, job.train, log=log, trace=trace,
                  checkpoint_path=os.path.join(job.run_dir, CHECKPOINT_NAME), checkpoint_dir=job.run_dir)
            files['checkpoint'] = os.path.join(job.name, CHECKPOINT_NAME)
    except TrainingAborted as exc:
        entry['status'] = 'aborted'
        entry['reason'] = str(exc)
        if exc.checkpoint_path:
            files['diagnostic_checkpoint'] = os.path.relpath(exc.checkpoint_path, os.path.dirname(job.run_dir))
        logger.error(f"Run {job.name} aborted: {exc}")
    except MecError as exc:
        entry['status'] = 'failed'
        entry['reason'] = str(exc)
        logger.error(f"Run {job.name} failed: {exc}")
    finally:
        log.close()
        if trace is not None:
            trace.close()
    write_metrics_csv(os.path.join(job.run_dir, METRICS_NAME), log.episodes)
    files['metrics'] = os.path.join(job.name, METRICS_NAME)
    entry['episodes'] = len(log.episodes)
    entry['wall_clock'] = log.wall_clock
    return entry


def run_experiment(spec):
    """Run every (sweep value, seed) of a spec and write the manifest.

    Returns the manifest dict; file paths in it are relative to
    ``spec.output_dir``.
    """
    os.makedirs(spec.output_dir, exist_ok=True)
    jobs = plan_runs(spec)
    logger.info(f"Running {len(jobs)} {spec.algorithm} runs into {spec.output_dir} with {spec.workers} workers")
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as executor:
            entries = list(executor.map(run_job, jobs))
    else:
        entries = [run_job(job) for job in jobs]

    manifest = {
        'algorithm': spec.algorithm,
        'axis': spec.axis,
        'values': list(spec.values),
        'seeds': list(spec.seeds),
        'tail_fraction': spec.tail_fraction,
        'tail_rule': 'last tail_fraction of episodes, at least one',
        'runs': entries,
    }
    path = os.path.join(spec.output_dir, MANIFEST_NAME)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
    failed = [entry['run'] for entry in entries if entry['status'] != 'ok']
    if failed:
        logger.warning(f"{len(failed)} of {len(entries)} runs did not finish: {', '.join(failed)}")
    logger.info(f"Manifest written to {path}")
    return manifest


def load_run_outputs(output_dir):
    """Read a campaign back; returns (manifest, run outputs, missing run names)"""
    with open(os.path.join(output_dir, MANIFEST_NAME), encoding='utf-8') as handle:
        manifest = json.load(handle)
    outputs, missing = [], []
    for entry in manifest['runs']:
        path = os.path.join(output_dir, entry['files'].get('metrics', ''))
        if entry['status'] != 'ok' or not os.path.isfile(path):
            missing.append(entry['run'])
            continue
        outputs.append(RunOutput(value=entry['value'], seed=entry['seed'], records=read_metrics_csv(path)))
    return manifest, outputs, missing


def tail_records(records, tail_fraction):
    if not records:
        return []
    count = max(1, int(math.ceil(tail_fraction * len(records))))
    return records[-count:]


def _metric(record, name):
    return float(getattr(record, name))


def aggregate_sweep(outputs, tail_fraction=0.1, missing=()):
    """Tail means per run, then mean and min/max band across seeds per sweep value.

    Returns a dict with ``rows`` (one per sweep value, ascending), a Spearman
    rank correlation per metric against the sweep value (None with fewer
    than two values or a constant column), the ``missing`` run names and a
    ``partial`` flag.
    """
    by_value = {}
    for output in outputs:
        tail = tail_records(output.records, tail_fraction)
        if not tail:
            missing = list(missing) + [f"value={output.value} seed={output.seed} (no episodes)"]
            continue
        means = {name: float(np.mean([_metric(r, name) for r in tail])) for name in SUMMARY_METRICS}
        by_value.setdefault(output.value, []).append(means)

    rows = []
    for value in sorted(by_value, key=lambda v: -math.inf if v is None else v):
        runs = by_value[value]
        summary = {}
        for name in SUMMARY_METRICS:
            column = [run[name] for run in runs]
            summary[name] = {'mean': float(np.mean(column)), 'min': float(np.min(column)),
                             'max': float(np.max(column))}
        rows.append({'value': value, 'runs': len(runs), 'metrics': summary})

    spearman = {}
    swept = [row for row in rows if row['value'] is not None]
    for name in SUMMARY_METRICS:
        spearman[name] = None
        if len(swept) >= 2:
            xs = [row['value'] for row in swept]
            ys = [row['metrics'][name]['mean'] for row in swept]
            if np.ptp(ys) > 0:
                spearman[name] = float(stats.spearmanr(xs, ys)[0])

    missing = list(missing)
    if missing:
        logger.warning(f"Partial aggregation: {len(missing)} runs missing ({', '.join(missing)})")
    return {'tail_fraction': tail_fraction, 'rows': rows, 'spearman': spearman,
            'missing': missing, 'partial': bool(missing)}


def summary_columns():
    columns = ['value', 'runs']
    for name in SUMMARY_METRICS:
        columns += [f"{name}_mean", f"{name}_min", f"{name}_max"]
    return columns


def write_summary_csv(path, summary):
    lines = [','.join(summary_columns())]
    for row in summary['rows']:
        cells = ['' if row['value'] is None else repr(float(row['value'])), str(row['runs'])]
        for name in SUMMARY_METRICS:
            band = row['metrics'][name]
            cells += [repr(band['mean']), repr(band['min']), repr(band['max'])]
        lines.append(','.join(cells))
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write('\n'.join(lines) + '\n')
    return path


def aggregate_campaign(output_dir, tail_fraction=None):
    """Aggregate a finished campaign directory and write ``summary.csv`` and ``summary.json``"""
    manifest, outputs, missing = load_run_outputs(output_dir)
    if tail_fraction is None:
        tail_fraction = manifest.get('tail_fraction', 0.1)
    summary = aggregate_sweep(outputs, tail_fraction, missing)
    summary['axis'] = manifest.get('axis', 'none')
    write_summary_csv(os.path.join(output_dir, SUMMARY_NAME), summary)
    with open(os.path.join(output_dir, 'summary.json'), 'w', encoding='utf-8') as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
    return summary
