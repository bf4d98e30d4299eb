import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from error_handler import EmptyGroup
from models import EnergyGroup, EnergyStats, MetricsLog, TrainingPoint, VehicleKind

logger = logging.getLogger(__name__)

MODE_BINS = 50
VEHICLE_COLUMNS = ['id', 'lane', 'kind', 't_entry', 't_exit', 'wait_time', 'energy']
ENERGY_COLUMNS = ['group', 'count', 'mean', 'median', 'mode', 'std_dev', 'excluded_in_system']
TRAINING_COLUMNS = ['episode', 'cumulative_reward', 'avg_wait_s', 'avg_queue_per_lane']
WAIT_COLUMNS = ['window_start', 'window_end', 'n_exited', 'mean_wait_s', 'moving_avg_wait_s']

GROUP_KIND = {
    EnergyGroup.AV_MIXED: VehicleKind.AV,
    EnergyGroup.HDV_MIXED: VehicleKind.HDV,
    EnergyGroup.HDV_ONLY: VehicleKind.HDV,
}


def histogram_mode(values: Sequence[float], bins: int = MODE_BINS) -> float:
    """Center of the most populous bin; log-spaced bins when every value is positive"""
    data = np.asarray(values, dtype=float)
    low, high = float(data.min()), float(data.max())
    if low == high:
        return low
    if low > 0:
        edges = np.geomspace(low, high, bins + 1)
        counts, _ = np.histogram(data, bins=edges)
        i = int(np.argmax(counts))
        return float(math.sqrt(edges[i] * edges[i + 1]))
    counts, edges = np.histogram(data, bins=bins, range=(low, high))
    i = int(np.argmax(counts))
    return float(0.5 * (edges[i] + edges[i + 1]))


def summarize_energy(values: Sequence[float], group: EnergyGroup, excluded_in_system: int = 0) -> EnergyStats:
    if len(values) == 0:
        raise EmptyGroup(f"No completed journeys in group {group.value}", {"group": group.value})
    data = np.asarray(values, dtype=float)
    return EnergyStats(
        group=group,
        count=len(data),
        mean=float(data.mean()),
        median=float(np.median(data)),
        mode=histogram_mode(data),
        std_dev=float(data.std(ddof=1)) if len(data) > 1 else 0.0,
        excluded_in_system=excluded_in_system,
    )


def energy_stats(log: MetricsLog, group: EnergyGroup) -> EnergyStats:
    """Statistics of per-vehicle integrated squared acceleration over completed journeys"""
    kind = GROUP_KIND[group]
    values = [v.energy for v in log.vehicles if v.kind is kind]
    return summarize_energy(values, group, log.in_system_at_end.get(kind, 0))


def groups_for(p_av: float) -> List[EnergyGroup]:
    if p_av > 0:
        return [EnergyGroup.AV_MIXED, EnergyGroup.HDV_MIXED]
    return [EnergyGroup.HDV_ONLY]


def collect_energy_stats(log: MetricsLog, groups: Iterable[EnergyGroup]) -> List[EnergyStats]:
    stats = []
    for group in groups:
        try:
            stats.append(energy_stats(log, group))
        except EmptyGroup as e:
            logger.warning(f"Skipping energy statistics: {e.message}")
    return stats


def waiting_time_stats(log: MetricsLog, window_s: float, horizon_s: Optional[float] = None,
                       moving_average_windows: int = 20) -> pd.DataFrame:
    """Mean wait of the vehicles exiting in each window plus a trailing moving average"""
    if horizon_s is None:
        horizon_s = max((v.t_exit for v in log.vehicles), default=0.0)
    n_windows = int(math.ceil(horizon_s / window_s - 1e-9)) if horizon_s > 0 else 0
    starts = window_s * np.arange(n_windows)

    exits = pd.DataFrame({
        'window': [int(v.t_exit // window_s) for v in log.vehicles],
        'wait': [max(0.0, v.wait_time) for v in log.vehicles],
    })
    grouped = exits.groupby('window')['wait'] if len(exits) else None

    frame = pd.DataFrame({
        'window_start': starts,
        'window_end': starts + window_s,
    })
    if grouped is not None:
        counts = grouped.size()
        means = grouped.mean()
        frame['n_exited'] = [int(counts.get(i, 0)) for i in range(n_windows)]
        frame['mean_wait_s'] = [float(means[i]) if i in means.index else np.nan for i in range(n_windows)]
    else:
        frame['n_exited'] = [0] * n_windows
        frame['mean_wait_s'] = [np.nan] * n_windows
    frame['moving_avg_wait_s'] = frame['mean_wait_s'].rolling(moving_average_windows, min_periods=1).mean()
    return frame[WAIT_COLUMNS]


def vehicles_frame(log: MetricsLog) -> pd.DataFrame:
    rows = [v.model_dump(mode='json') for v in log.vehicles]
    return pd.DataFrame(rows, columns=VEHICLE_COLUMNS)


def blocks_frame(log: MetricsLog, n_lanes: int) -> pd.DataFrame:
    rows = []
    for block in log.blocks:
        row: Dict[str, Any] = {'k': block.k, 't': block.t}
        row.update({f"X{i + 1}": x for i, x in enumerate(block.queues)})
        row['action'] = block.action.value
        row['reward'] = block.reward
        row.update({f"phase{i + 1}": p.value for i, p in enumerate(block.phases)})
        rows.append(row)
    columns = (['k', 't'] + [f"X{i + 1}" for i in range(n_lanes)] + ['action', 'reward']
               + [f"phase{i + 1}" for i in range(n_lanes)])
    return pd.DataFrame(rows, columns=columns)


def write_vehicles_csv(log: MetricsLog, path: Path):
    vehicles_frame(log).to_csv(path, index=False)


def write_blocks_csv(log: MetricsLog, n_lanes: int, path: Path):
    blocks_frame(log, n_lanes).to_csv(path, index=False)


def write_energy_stats_csv(stats: Sequence[EnergyStats], path: Path):
    rows = [s.model_dump(mode='json') for s in stats]
    pd.DataFrame(rows, columns=ENERGY_COLUMNS).to_csv(path, index=False)


def write_training_csv(curves: Sequence[TrainingPoint], path: Path):
    rows = [c.model_dump() for c in curves]
    pd.DataFrame(rows, columns=TRAINING_COLUMNS).to_csv(path, index=False)


def write_waiting_time_csv(frame: pd.DataFrame, path: Path):
    frame.to_csv(path, index=False)


def write_summary_json(summary: Dict[str, Any], path: Path):
    # insertion order is the published key order
    with open(path, 'w') as f:
        json.dump(summary, f, indent=2, allow_nan=False, default=str)
        f.write('\n')


def log_from_vehicles_csv(path: Path) -> MetricsLog:
    """Rebuild the per-vehicle part of a MetricsLog from vehicles.csv"""
    frame = pd.read_csv(path, float_precision="round_trip")
    records = frame.to_dict(orient='records')
    return MetricsLog.model_validate({'vehicles': records, 'spawned': len(records)})
