"""Per-episode metrics and the metrics CSV.

Column set and order are fixed (``CSV_COLUMNS``). Floats are written with
``repr`` so every value reads back bit-exact; flags are written as 0/1.
Wall-clock time is never part of this file; it goes to the training log.
"""
import csv
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from .rewards import episode_dl_utility, episode_ul_utility, overall_objective

logger = logging.getLogger(__name__)


@dataclass
class MetricsRecord:
    episode: int
    steps_survived: int
    avg_dl_delay: float
    avg_ul_delay: float
    min_cum_earning: float
    mean_cum_earning: float
    max_cum_battery_pct: float
    mean_cum_battery_pct: float
    dl_reward_sum: float
    ul_reward_sum: float
    dl_utility: float
    ul_utility: float
    objective: float
    depleted: bool
    end_step: int

    @property
    def reward_sum(self):
        return self.dl_reward_sum + self.ul_reward_sum


CSV_COLUMNS = tuple(f.name for f in fields(MetricsRecord))
INT_COLUMNS = ('episode', 'steps_survived', 'end_step')
FLAG_COLUMNS = ('depleted',)


def metrics_from_ledger(ledger, weights, episode, end_step=0):
    """Summarise a finished episode.

    Delays are averaged over UEs and steps. ``end_step`` is the run-global
    environment step at which the episode ended.
    """
    steps = ledger.ul_steps
    if steps:
        avg_dl = float(np.mean(ledger.dl_latencies[:steps]))
        avg_ul = float(np.mean(ledger.ul_latencies))
    else:
        avg_dl = avg_ul = 0.0
    return MetricsRecord(
        episode=int(episode),
        steps_survived=int(steps),
        avg_dl_delay=avg_dl,
        avg_ul_delay=avg_ul,
        min_cum_earning=float(np.min(ledger.cum_earning)),
        mean_cum_earning=float(np.mean(ledger.cum_earning)),
        max_cum_battery_pct=float(np.max(ledger.cum_q)),
        mean_cum_battery_pct=float(np.mean(ledger.cum_q)),
        dl_reward_sum=float(sum(ledger.dl_rewards)),
        ul_reward_sum=float(sum(ledger.ul_rewards)),
        dl_utility=episode_dl_utility(ledger, weights),
        ul_utility=episode_ul_utility(ledger, weights),
        objective=overall_objective(ledger, weights),
        depleted=bool(ledger.depleted),
        end_step=int(end_step),
    )


def _format_cell(name, value):
    if name in FLAG_COLUMNS:
        return '1' if value else '0'
    if name in INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


def write_metrics_csv(path, records):
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(CSV_COLUMNS)
        for record in records:
            row = asdict(record)
            writer.writerow([_format_cell(name, row[name]) for name in CSV_COLUMNS])
    logger.info(f"Wrote {len(records)} metrics rows to {path}")
    return path


def read_metrics_csv(path):
    with open(path, newline='', encoding='utf-8') as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected metrics header {reader.fieldnames}")
        records = []
        for row in reader:
            values = {}
            for name in CSV_COLUMNS:
                if name in FLAG_COLUMNS:
                    values[name] = row[name] == '1'
                elif name in INT_COLUMNS:
                    values[name] = int(row[name])
                else:
                    values[name] = float(row[name])
            records.append(MetricsRecord(**values))
    return records
