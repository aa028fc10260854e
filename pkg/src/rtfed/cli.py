"""Command-line interface: dataset generation, runs, grids, ablation, t-SNE.

Every report-producing command writes delimited data (CSV/text/JSON) and a
rendered PNG figure next to it.  The default output directory comes from
--out-dir or the RTFED_OUT_DIR environment variable.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from .data import (
    DESK_PROFILE,
    FULL_PROFILE,
    build_synthetic_dataset,
    partition,
    read_dataset,
    write_dataset,
)
from .data.rtfd import build_manifest
from .harness.scenarios import (
    MODALITY_SETS,
    Scenario,
    modalities_label,
    run_scenario,
    spec_for,
    summary_table,
)
from .models import load_weights, save_weights

PROFILES = {"desk": DESK_PROFILE, "full": FULL_PROFILE}

STRATEGY_CHOICES = ("fedavg", "fedopt", "fedadam", "fedyogi")
MODALITY_CHOICES = tuple(modalities_label(m) for m in MODALITY_SETS)


def parse_modalities(text):
    mods = tuple(text.split("+"))
    if modalities_label(mods) not in MODALITY_CHOICES:
        raise click.BadParameter(f"unknown modality set {text!r}; pick from {MODALITY_CHOICES}")
    return mods


def parse_seeds(text):
    return tuple(int(s) for s in text.split(",") if s != "")


def load_records(data_path, dims="data"):
    records, manifest = read_dataset(data_path)
    holdout = (
        sum(1 for v in manifest.values() if v.get("role") == "test")
        if manifest
        else 0
    )
    if dims != "data":
        records = resize_records(records, PROFILES[dims])
    return records, holdout


def resize_records(records, profile):
    """Resample slice/volume tensors to a named profile's dims."""
    from .data.features import linear_resize

    hw = tuple(profile["slice_hw"])
    dhw = tuple(profile["volume_dhw"])
    for r in records:
        if r.slice2d.shape != hw:
            r.slice2d = linear_resize(r.slice2d, hw).astype(np.float32)
        if r.volume3d.shape != dhw:
            r.volume3d = linear_resize(r.volume3d, dhw).astype(np.float32)
    return records


def out_dir_option(fn):
    return click.option(
        "--out-dir",
        envvar="RTFED_OUT_DIR",
        default=".",
        show_default=True,
        type=click.Path(file_okay=False, path_type=Path),
        help="Output directory (env: RTFED_OUT_DIR).",
    )(fn)


@click.group()
def main():
    """Federated multimodal training over radiotherapy structure data."""


@main.command("gen-data")
@click.option("--patients", type=int, default=None, help="Cohort size (profile default).")
@click.option("--profile", type=click.Choice(sorted(PROFILES)), default="desk", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--centres", type=int, default=3, show_default=True, help="Centres recorded in the manifest.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def gen_data(patients, profile, seed, centres, out):
    """Generate a synthetic phantom cohort and write an RTFD dataset."""
    prof = PROFILES[profile]
    n_patients = patients if patients is not None else prof["n_patients"]
    records = build_synthetic_dataset(
        n_patients,
        base_seed=seed,
        slice_hw=prof["slice_hw"],
        volume_dhw=prof["volume_dhw"],
        grid=prof["grid"],
        holdout_patients=prof["holdout_patients"],
    )
    shards, test = partition(
        records, centres, holdout_patients=prof["holdout_patients"], seed=seed
    )
    manifest = build_manifest(shards, test)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(out, records, manifest=manifest)
    click.echo(
        f"wrote {len(records)} records from {n_patients} patients to {out} "
        f"({prof['slice_hw']} slices, {prof['volume_dhw']} volumes, "
        f"{len(test)} hold-out records)"
    )


def _emit_reports(rows, out_dir, config, figure_fn=None, figure_name=None):
    from .harness import report

    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = report.write_metrics_csv(rows, out_dir / "metrics.csv")
    summary_path = report.write_summary(rows, out_dir / "summary.txt")
    manifest_path = report.write_run_manifest(out_dir / "run_manifest.json", config, rows)
    click.echo(summary_table(rows))
    produced = [csv_path, summary_path, manifest_path]
    if figure_fn is not None:
        fig = figure_fn(out_dir / figure_name, rows)
        if fig is not None:
            produced.append(fig)
    for p in produced:
        click.echo(f"wrote {p}")


@main.command()
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--centres", type=int, default=3, show_default=True)
@click.option("--strategy", type=click.Choice(STRATEGY_CHOICES), default="fedavg", show_default=True)
@click.option("--modalities", default="tabular+volume", show_default=True)
@click.option("--fraction", type=float, default=1.0, show_default=True)
@click.option("--rounds", type=int, default=100, show_default=True)
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--mode", type=click.Choice(["federated", "centralized"]), default="federated", show_default=True)
@click.option("--dims", type=click.Choice(["data", "desk", "full"]), default="data", show_default=True, help="Resample inputs to a named profile's dims.")
@click.option("--save-weights", "save_weights_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Save the best seed-0 weights (.npz).")
@out_dir_option
def run(data, centres, strategy, modalities, fraction, rounds, seeds, mode, dims, save_weights_path, out_dir):
    """Run one scenario across its seeds and write metrics + summary."""
    records, holdout = load_records(data, dims)
    scenario = Scenario(
        n_centres=centres,
        strategy=strategy,
        modalities=parse_modalities(modalities),
        fraction=fraction,
        mode=mode,
        rounds=rounds,
        seeds=parse_seeds(seeds),
    )
    rows = run_scenario(scenario, records, holdout)
    config = {
        "command": "run",
        "data": str(data),
        "centres": centres,
        "strategy": strategy,
        "modalities": modalities,
        "fraction": fraction,
        "rounds": rounds,
        "seeds": list(scenario.seeds),
        "mode": mode,
        "dims": dims,
        "holdout_patients": holdout,
    }
    _emit_reports(rows, out_dir, config)
    if save_weights_path is not None:
        weights = _train_for_weights(scenario, records, holdout)
        save_weights(weights, save_weights_path)
        click.echo(f"wrote {save_weights_path}")


def _train_for_weights(scenario, records, holdout):
    """Best-checkpoint weights for the scenario's first seed."""
    from .harness.scenarios import _run_federated, train_centralized

    seed = scenario.seeds[0]
    spec = spec_for(records, scenario.modalities)
    n = scenario.n_centres if scenario.mode == "federated" else 1
    shards, _ = partition(records, n, holdout_patients=holdout, seed=0)
    if scenario.mode == "federated":
        weights, _ = _run_federated(shards, spec, scenario, seed)
    else:
        weights, _ = train_centralized(
            [r for s in shards for r in s.train],
            [r for s in shards for r in s.validation],
            spec,
            seed,
            scenario.rounds,
        )
    return weights


def _run_scenarios(scenarios, records, holdout, parallel):
    """Scenarios sequentially, or over a thread pool; row order is stable
    either way because seeding is entirely per-scenario."""
    if parallel <= 1:
        results = [run_scenario(sc, records, holdout) for sc in scenarios]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=parallel) as pool:
            results = list(
                pool.map(lambda sc: run_scenario(sc, records, holdout), scenarios)
            )
    return [row for rows in results for row in rows]


@main.command()
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--rounds", type=int, default=100, show_default=True)
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--centres-list", default="3,5,7", show_default=True)
@click.option("--strategies", default=",".join(STRATEGY_CHOICES), show_default=True)
@click.option("--parallel", type=int, default=1, show_default=True, help="Scenarios run concurrently when > 1.")
@out_dir_option
def grid(data, rounds, seeds, centres_list, strategies, parallel, out_dir):
    """The full experiment matrix: centres x strategies x modality sets,
    plus the centralized comparison arm for every modality set."""
    from .harness import report

    records, holdout = load_records(data)
    seed_tuple = parse_seeds(seeds)
    scenarios = []
    for mods in MODALITY_SETS:
        for centres in parse_seeds(centres_list):
            for strategy in strategies.split(","):
                scenarios.append(
                    Scenario(
                        n_centres=centres,
                        strategy=strategy,
                        modalities=mods,
                        rounds=rounds,
                        seeds=seed_tuple,
                    )
                )
        scenarios.append(
            Scenario(mode="centralized", modalities=mods, rounds=rounds, seeds=seed_tuple)
        )
    rows = _run_scenarios(scenarios, records, holdout, parallel)
    config = {
        "command": "grid",
        "data": str(data),
        "rounds": rounds,
        "seeds": list(seed_tuple),
        "centres": centres_list,
        "strategies": strategies,
        "holdout_patients": holdout,
    }
    _emit_reports(rows, out_dir, config, figure_fn=report.fig_grid, figure_name="grid.png")


@main.command()
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--rounds", type=int, default=100, show_default=True)
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--centres-list", default="3,5,7", show_default=True)
@click.option("--strategies", default=",".join(STRATEGY_CHOICES), show_default=True)
@click.option("--modalities", default="tabular+volume", show_default=True)
@click.option("--fractions", default="1.0,0.5,0.25", show_default=True)
@click.option("--parallel", type=int, default=1, show_default=True, help="Scenarios run concurrently when > 1.")
@out_dir_option
def ablation(data, rounds, seeds, centres_list, strategies, modalities, fractions, parallel, out_dir):
    """Per-class subsampling study: fractions x centres x strategies."""
    from .harness import report

    records, holdout = load_records(data)
    seed_tuple = parse_seeds(seeds)
    mods = parse_modalities(modalities)
    scenarios = []
    for fraction in (float(f) for f in fractions.split(",")):
        for centres in parse_seeds(centres_list):
            for strategy in strategies.split(","):
                scenarios.append(
                    Scenario(
                        n_centres=centres,
                        strategy=strategy,
                        modalities=mods,
                        fraction=fraction,
                        rounds=rounds,
                        seeds=seed_tuple,
                    )
                )
        scenarios.append(
            Scenario(
                mode="centralized",
                modalities=mods,
                fraction=fraction,
                rounds=rounds,
                seeds=seed_tuple,
            )
        )
    rows = _run_scenarios(scenarios, records, holdout, parallel)
    config = {
        "command": "ablation",
        "data": str(data),
        "rounds": rounds,
        "seeds": list(seed_tuple),
        "centres": centres_list,
        "strategies": strategies,
        "modalities": modalities,
        "fractions": fractions,
        "holdout_patients": holdout,
    }
    _emit_reports(
        rows, out_dir, config, figure_fn=report.fig_ablation, figure_name="ablation.png"
    )


@main.command()
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--weights", "weights_path", type=click.Path(exists=True, path_type=Path), default=None, help="Trained weights (.npz); trains fresh when omitted.")
@click.option("--modalities", default="tabular+volume", show_default=True)
@click.option("--tap", type=click.Choice(["all", "tabular_out", "conv_out", "fusion_hidden"]), default="all", show_default=True)
@click.option("--perplexity", type=float, default=30.0, show_default=True)
@click.option("--iters", type=int, default=1000, show_default=True)
@click.option("--train-rounds", type=int, default=20, show_default=True, help="Rounds used when training fresh weights.")
@click.option("--seed", type=int, default=0, show_default=True)
@out_dir_option
def tsne(data, weights_path, modalities, tap, perplexity, iters, train_rounds, seed, out_dir):
    """Embed hold-out layer activations and write point CSVs + scatter PNGs."""
    from .harness import report
    from .harness.tsne import analyze_layers

    records, holdout = load_records(data)
    mods = parse_modalities(modalities)
    spec = spec_for(records, mods)
    _, test = partition(records, 1, holdout_patients=holdout, seed=0)
    if not test:
        raise click.ClickException("dataset has no hold-out records to embed")

    if weights_path is not None:
        weights = load_weights(weights_path)
    else:
        scenario = Scenario(
            n_centres=3, modalities=mods, rounds=train_rounds, seeds=(seed,)
        )
        weights = _train_for_weights(scenario, records, holdout)

    taps = None if tap == "all" else (tap,)
    embeddings = analyze_layers(
        weights, test, spec, perplexity=perplexity, iters=iters, seed=seed, taps=taps
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (emb, labels) in embeddings.items():
        csv_path = report.write_points_csv(out_dir / f"tsne_{name}.csv", emb, labels)
        fig_path = report.fig_tsne(
            out_dir / f"tsne_{name}.png", emb, labels, f"t-SNE of {name} activations"
        )
        click.echo(f"wrote {csv_path}")
        click.echo(f"wrote {fig_path}")
    manifest = {
        "command": "tsne",
        "data": str(data),
        "modalities": modalities,
        "tap": tap,
        "perplexity": perplexity,
        "iters": iters,
        "seed": seed,
        "points": len(test),
    }
    (out_dir / "tsne_manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


if __name__ == "__main__":
    main()
