"""Experiment scenarios: federated/centralized runs over the phantom cohort."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ..data import ablate, partition
from ..fed import (
    FedConfig,
    FederationError,
    InProcessTransport,
    client_serve,
    orchestrator_run,
)
from ..models import NetworkSpec, build_network, evaluate, train_local_epoch

MODALITY_SETS = (
    ("tabular",),
    ("visual",),
    ("volume",),
    ("tabular", "visual"),
    ("tabular", "volume"),
)


def modalities_label(modalities):
    return "+".join(modalities)


@dataclass(frozen=True)
class Scenario:
    n_centres: int = 3
    strategy: str = "fedavg"
    modalities: tuple = ("tabular", "volume")
    fraction: float = 1.0
    mode: str = "federated"  # or "centralized"
    rounds: int = 100
    seeds: tuple = (0, 1, 2)
    server_lr: float = None  # strategy default when None

    def cell(self):
        """Grouping key; centralized cells ignore centres and strategy."""
        if self.mode == "centralized":
            return ("centralized", 0, "-", modalities_label(self.modalities), self.fraction)
        return (
            "federated",
            self.n_centres,
            self.strategy,
            modalities_label(self.modalities),
            self.fraction,
        )


@dataclass
class MetricsRow:
    mode: str
    n_centres: int
    strategy: str
    modalities: str
    fraction: float
    seed: int
    accuracy: float
    best_round: int
    wall_time: float
    error: str = None

    def cell(self):
        if self.mode == "centralized":
            return ("centralized", 0, "-", self.modalities, self.fraction)
        return ("federated", self.n_centres, self.strategy, self.modalities, self.fraction)


# FedOpt is plain server-side gradient descent on the pseudo-gradient; a unit
# step makes it coincide with FedAvg, which is the sane default.  The
# adaptive strategies normalize by sqrt(v), so they want a smaller step.
DEFAULT_SERVER_LR = {"fedavg": 1.0, "fedopt": 1.0, "fedadam": 0.1, "fedyogi": 0.1}


def spec_for(records, modalities):
    first = records[0]
    return NetworkSpec(
        modalities=tuple(modalities),
        slice_hw=tuple(first.slice2d.shape),
        volume_dhw=tuple(first.volume3d.shape),
    )


def client_seed_for(seed, centre_id):
    return 1000 * (seed + 1) + int(centre_id)


def train_centralized(train_records, val_records, spec, seed, rounds, lr=0.01):
    """Sequential training that mirrors a single federated client exactly:
    one epoch per round with a fresh Adam state, checkpointing the weights
    with the best validation accuracy (ties -> earliest round)."""
    weights = build_network(spec, init_seed=seed).get_weights()
    base_seed = client_seed_for(seed, 0)
    best = None
    for round_ in range(1, rounds + 1):
        weights, _ = train_local_epoch(
            weights, train_records, spec, base_seed ^ round_, lr=lr
        )
        if val_records:
            acc, _, _ = evaluate(weights, val_records, spec)
        else:
            acc = 0.0
        if best is None or acc > best[0]:
            best = (acc, round_, weights.copy())
    return best[2], best[1]


def _run_federated(shards, spec, scenario, seed):
    transport = InProcessTransport()
    threads = []
    for shard in shards:
        endpoint = transport.connect(shard.centre_id)
        t = threading.Thread(
            target=client_serve,
            args=(shard, spec, endpoint, client_seed_for(seed, shard.centre_id)),
            daemon=True,
        )
        t.start()
        threads.append(t)
    server_lr = (
        scenario.server_lr
        if scenario.server_lr is not None
        else DEFAULT_SERVER_LR[scenario.strategy]
    )
    config = FedConfig(
        training_centres=[s.centre_id for s in shards],
        strategy=scenario.strategy,
        rounds=scenario.rounds,
        server_lr=server_lr,
        timeout_secs=600.0,
    )
    weights, history = orchestrator_run(
        config, spec, transport, init_seed=seed
    )
    for t in threads:
        t.join(timeout=30)
    best_round = max(history, key=lambda r: (r.val_accuracy, -r.round)).round
    return weights, best_round


def run_scenario(scenario: Scenario, records, holdout_patients, partition_seed=0):
    """One MetricsRow per seed; failures become rows, not crashes."""
    spec = spec_for(records, scenario.modalities)
    rows = []
    for seed in scenario.seeds:
        t0 = time.monotonic()
        try:
            n_centres = scenario.n_centres if scenario.mode == "federated" else 1
            shards, test = partition(
                records, n_centres, holdout_patients=holdout_patients, seed=partition_seed
            )
            if scenario.fraction < 1.0:
                shards = [
                    ablate(s, scenario.fraction, seed=[partition_seed, s.centre_id])
                    for s in shards
                ]
            if scenario.mode == "federated":
                weights, best_round = _run_federated(shards, spec, scenario, seed)
            else:
                train_records = [r for s in shards for r in s.train]
                val_records = [r for s in shards for r in s.validation]
                weights, best_round = train_centralized(
                    train_records, val_records, spec, seed, scenario.rounds
                )
            accuracy, _, _ = evaluate(weights, test, spec)
            rows.append(
                MetricsRow(
                    mode=scenario.mode,
                    n_centres=scenario.n_centres if scenario.mode == "federated" else 0,
                    strategy=scenario.strategy if scenario.mode == "federated" else "-",
                    modalities=modalities_label(scenario.modalities),
                    fraction=scenario.fraction,
                    seed=seed,
                    accuracy=accuracy,
                    best_round=best_round,
                    wall_time=time.monotonic() - t0,
                )
            )
        except (FederationError, ValueError) as exc:
            rows.append(
                MetricsRow(
                    mode=scenario.mode,
                    n_centres=scenario.n_centres if scenario.mode == "federated" else 0,
                    strategy=scenario.strategy if scenario.mode == "federated" else "-",
                    modalities=modalities_label(scenario.modalities),
                    fraction=scenario.fraction,
                    seed=seed,
                    accuracy=float("nan"),
                    best_round=0,
                    wall_time=time.monotonic() - t0,
                    error=str(exc),
                )
            )
    return rows


def format_cell(accuracies):
    """Mean (population std) of percentages, two decimals: "98.17 (0.24")."""
    vals = np.asarray(accuracies, dtype=np.float64) * 100.0
    return f"{vals.mean():.2f} ({vals.std():.2f})"


def summarize(rows):
    """Cell -> formatted "mean (std)" accuracy over the cell's seeds.

    Cells are (mode, centres, strategy, modalities, fraction); failed rows
    (NaN accuracy) are excluded, a cell of only failures formats as "failed".
    """
    cells = {}
    for row in rows:
        cells.setdefault(row.cell(), []).append(row.accuracy)
    out = {}
    for cell, accs in sorted(cells.items(), key=lambda kv: tuple(map(str, kv[0]))):
        good = [a for a in accs if np.isfinite(a)]
        out[cell] = format_cell(good) if good else "failed"
    return out


def summary_table(rows):
    """Plain-text table: mean (std) plus the best single seed per cell."""
    cells = {}
    for row in rows:
        cells.setdefault(row.cell(), []).append(row.accuracy)
    lines = [
        f"{'mode':<12} {'centres':>7} {'strategy':<9} {'modalities':<16} "
        f"{'fraction':>8}  {'accuracy':<14} best"
    ]
    for cell_key, accs in sorted(cells.items(), key=lambda kv: tuple(map(str, kv[0]))):
        mode, centres, strategy, modalities, fraction = cell_key
        good = [a for a in accs if np.isfinite(a)]
        cell = format_cell(good) if good else "failed"
        best = f"{max(good) * 100.0:.2f}" if good else "-"
        lines.append(
            f"{mode:<12} {centres:>7} {strategy:<9} {modalities:<16} "
            f"{fraction:>8.2f}  {cell:<14} {best}"
        )
    return "\n".join(lines) + "\n"
