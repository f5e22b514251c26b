"""Command-line entry point: ``bckey classify|region|compare|simulate``.

Exit codes: 0 success, 1 computation error, 2 input error.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import osrb_sim
from .bc_model import SourceBcModel, classify
from .info_core import Channel, ResourceLimitError
from .region import (
    boundary_from_csv,
    boundary_to_csv,
    bsc_aux,
    compare_boundaries,
    label_boundary,
    sweep_bsc,
    sweep_general,
)
from .scenarios import load_json, model_from_spec

log = logging.getLogger("bckey")


class InputError(click.ClickException):
    exit_code = 2


def _read_json(path: str):
    try:
        return load_json(path)
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON ({exc})") from None


def _alpha_grid(spec) -> list[float]:
    if spec is None:
        return list(np.linspace(0.0, 0.5, 101))
    if isinstance(spec, dict):
        return list(np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"])))
    return [float(a) for a in spec]


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """Key-leakage-storage regions and binning simulations for broadcast-channel key agreement."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING)


@main.command("classify")
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.option("--grid", "grid_resolution", default=8, show_default=True)
@click.option("--samples", "random_samples", default=2000, show_default=True)
@click.option("--seed", default=0, show_default=True)
def cmd_classify(model_file: str, grid_resolution: int, random_samples: int, seed: int):
    """Classify the broadcast channel of MODEL_FILE."""
    data = _read_json(model_file)
    try:
        model = SourceBcModel.from_json(data)
    except ValueError as exc:
        raise InputError(f"{model_file}: {exc}") from None
    report = classify(model, grid_resolution, random_samples, seed)
    click.echo(_dump(report.to_json()))


def _region_job(scenario: dict, alphas: list[float], base: Path, seed: int):
    name = scenario.get("name")
    if not name:
        raise InputError("every scenario needs a 'name'")
    try:
        model = model_from_spec(scenario, base)
    except (ValueError, OSError, KeyError) as exc:
        raise InputError(f"scenario {name}: {exc}") from None
    sweep = scenario.get("sweep", "bsc")
    if sweep == "bsc":
        boundary = sweep_bsc(model, alphas, name=name)
    elif isinstance(sweep, dict) and "general" in sweep:
        g = sweep["general"]
        boundary = sweep_general(
            model,
            int(g["u_size"]),
            int(g.get("grid_resolution", 20)),
            int(g.get("random_samples", 0)),
            int(g.get("seed", seed)),
            name=name,
        )
    else:
        raise InputError(f"scenario {name}: unknown sweep {sweep!r}")
    report = classify(model, seed=seed)
    label_boundary(boundary, report)
    summary = {
        "name": name,
        "points": len(boundary.points),
        "applicable_theorem": report.applicable_theorem.value,
        "tight": boundary.tight,
        "labels": boundary.labels,
    }
    return name, boundary_to_csv(boundary), summary


@main.command("region")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, help="Seed for general sweeps.")
@click.option("--threads", default=1, show_default=True)
def cmd_region(config_path: str, out_dir: str, seed: int, threads: int):
    """Write one boundary CSV per scenario plus a summary.json of tightness labels."""
    config = _read_json(config_path)
    if not isinstance(config, dict) or not isinstance(config.get("scenarios"), list):
        raise InputError("region config needs a 'scenarios' list")
    try:
        alphas = _alpha_grid(config.get("alphas"))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad alpha grid: {exc}") from None
    base = Path(config_path).parent
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            results = list(
                pool.map(lambda s: _region_job(s, alphas, base, seed), config["scenarios"])
            )
    except (ValueError, ResourceLimitError) as exc:
        raise click.ClickException(str(exc)) from None
    for name, text, _ in results:
        path = out / f"{name}.csv"
        path.write_text(text)
        click.echo(str(path))
    (out / "summary.json").write_text(_dump([r[2] for r in results]) + "\n")


@main.command("compare")
@click.argument("csv_a", type=click.Path(dir_okay=False))
@click.argument("csv_b", type=click.Path(dir_okay=False))
def cmd_compare(csv_a: str, csv_b: str):
    """Key-rate deficit and leakage excess of CSV_B relative to CSV_A."""
    try:
        a = boundary_from_csv(Path(csv_a).read_text(), name=csv_a)
        b = boundary_from_csv(Path(csv_b).read_text(), name=csv_b)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(str(exc)) from None
    try:
        cmp = compare_boundaries(a, b)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    click.echo(_dump(cmp.to_json()))


def _aux_from_config(config: dict) -> Channel:
    if "aux_rows" in config:
        return Channel(np.asarray(config["aux_rows"], dtype=np.float64))
    return bsc_aux(float(config.get("alpha", 0.1)))


def _simulate_run(model, aux, rates, n, seed, scheme, mode, trials):
    code = osrb_sim.build_binning(n, aux.output_size, rates, seed)
    if mode == "exact":
        if scheme == "gs":
            return osrb_sim.evaluate_exact(code, model, aux)
        return osrb_sim.evaluate_exact_cs(code, model, aux)
    return osrb_sim.evaluate_monte_carlo(code, model, aux, trials, seed, scheme=scheme)


@main.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=None, type=int, help="Run only this seed.")
@click.option("--threads", default=1, show_default=True)
def cmd_simulate(config_path: str, out_dir: str, seed: int | None, threads: int):
    """Build and evaluate binning codes for every (scheme, n, seed) in the config."""
    config = _read_json(config_path)
    if not isinstance(config, dict):
        raise InputError("simulate config must be a JSON object")
    try:
        model = model_from_spec(config["model"], Path(config_path).parent)
        aux = _aux_from_config(config)
        epsilon = float(config.get("epsilon", 0.05))
        ns = [int(n) for n in config.get("n", [4])]
        seeds = [seed] if seed is not None else [int(s) for s in config.get("seeds", [0])]
        mode = config.get("mode", "exact")
        trials = int(config.get("trials", 10_000))
        schemes = config.get("schemes", ["gs"])
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise InputError(f"bad simulate config: {exc}") from None
    if mode not in ("exact", "monte_carlo") or not set(schemes) <= {"gs", "cs"}:
        raise InputError("mode must be exact|monte_carlo and schemes a subset of gs, cs")

    jobs = [(scheme, n, s) for scheme in schemes for n in ns for s in seeds]
    rates = None
    rate_error = None
    try:
        rates = osrb_sim.choose_rates(model, aux, epsilon)
    except osrb_sim.EpsilonTooLargeError as exc:
        rate_error = str(exc)

    def run(job):
        scheme, n, s = job
        if rate_error is not None:
            return None, rate_error
        try:
            return _simulate_run(model, aux, rates, n, s, scheme, mode, trials), None
        except (ResourceLimitError, ValueError) as exc:
            return None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, jobs))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    lines = []
    for (scheme, n, s), (report, err) in zip(jobs, results):
        entry = {"scheme": scheme, "n": n, "seed": s, "mode": mode}
        if report is None:
            entry["status"] = "error"
            entry["error"] = err
            log.warning("run %s n=%d seed=%d failed: %s", scheme, n, s, err)
        else:
            entry["status"] = "ok"
            entry["report"] = report.to_json()
            lines.append(json.dumps(report.to_json(), sort_keys=True))
            click.echo(lines[-1])
        runs.append(entry)
    (out / "reports.jsonl").write_text("".join(line + "\n" for line in lines))
    manifest = {
        "config": config,
        "rates": None if rates is None else rates._asdict(),
        "runs": runs,
    }
    (out / "manifest.json").write_text(_dump(manifest) + "\n")
    if any(r["status"] == "error" for r in runs):
        raise click.ClickException("some runs failed; see manifest.json")


if __name__ == "__main__":
    main()
