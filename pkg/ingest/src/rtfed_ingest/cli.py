"""CLI: convert a CT series + RT-STRUCT into an RTFD dataset file."""

from __future__ import annotations

import logging
from pathlib import Path

import click

from . import export_rtfd, ingest_study
from .namemap import NameMap


def parse_dims(text):
    parts = tuple(int(v) for v in text.split(","))
    if len(parts) != 3:
        raise click.BadParameter(f"expected D,H,W, got {text!r}")
    return parts


@click.command()
@click.option("--ct", "ct_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True, help="Directory holding the CT series.")
@click.option("--rtstruct", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True, help="RT-STRUCT file referencing the series.")
@click.option("--map", "map_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, help="JSON name map ([pattern, class] pairs); built-in default when omitted.")
@click.option("--dims", default="32,64,64", show_default=True, help="Volume output dims D,H,W; slices use H,W.")
@click.option("--patient-id", default=None, help="Patient id recorded in the output (CT directory name by default).")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("-v", "--verbose", is_flag=True)
def main(ct_dir, rtstruct, map_file, dims, patient_id, out, verbose):
    """Rasterize matched ROIs onto the CT grid and export RTFD records."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    d, h, w = parse_dims(dims)
    name_map = NameMap.from_file(map_file) if map_file else NameMap()
    records = ingest_study(
        ct_dir, rtstruct, name_map, ((h, w), (d, h, w)), patient_id=patient_id
    )
    if not records:
        raise click.ClickException("no ROI produced a record; nothing to write")
    manifest = {r.patient_id: {"centre": None, "role": "train"} for r in records}
    export_rtfd(records, out, manifest=manifest)
    click.echo(f"wrote {len(records)} records to {out}")


if __name__ == "__main__":
    main()
