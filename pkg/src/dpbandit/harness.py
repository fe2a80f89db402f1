"""Experiment commands: regret curves per (policy, eps) and eps sweeps."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .bounds import lower_bound_rate
from .config import ExperimentConfig, content_hash
from .environment import MonteCarloResult, format_float, monte_carlo

__all__ = ["cmd_run", "cmd_sweep", "run_results", "sweep_rows", "eps_tag", "read_csv"]


def eps_tag(eps: float) -> str:
    return repr(float(eps))


def run_results(config: ExperimentConfig, workers: int | None = None) -> list[MonteCarloResult]:
    results = []
    for pk in config.policies:
        for eps in config.eps:
            results.append(monte_carlo(
                pk, config.instance, config.horizon, eps, config.n_seeds, config.base_seed,
                config.schedule, config.checkpoints, workers,
            ))
    return results


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _manifest(config: ExperimentConfig, files: list[Path], command: str) -> str:
    return json.dumps({
        "command": command,
        "config": config.to_dict(),
        "seeds": config.seeds,
        "hash": content_hash(config),
        "files": [p.name for p in files],
    }, indent=2, sort_keys=True) + "\n"


def cmd_run(config: ExperimentConfig, out: str | Path | None = None,
            workers: int | None = None) -> list[Path]:
    """One ``t, mean_regret, std_regret`` CSV per (policy, eps), plus ``manifest.json``."""
    out = Path(out or config.out or ".")
    files = []
    for res in run_results(config, workers):
        name = f"{res.policy}_eps{eps_tag(res.eps)}.csv"
        files.append(_write(out / name, res.to_csv()))
    files.append(_write(out / "manifest.json", _manifest(config, files, "run")))
    return files


def sweep_rows(config: ExperimentConfig, policy, workers: int | None = None) -> list[dict]:
    rows = []
    log_t = math.log(config.horizon)
    for eps in config.eps:
        res = monte_carlo(policy, config.instance, config.horizon, eps, config.n_seeds,
                          config.base_seed, config.schedule, config.checkpoints, workers)
        rate = lower_bound_rate(config.means, eps, config.alpha).lower_rate
        rows.append({
            "eps": eps,
            "final_mean_regret": res.final_mean,
            "final_std_regret": res.final_std,
            "lower_bound": rate * log_t,
        })
    return rows


def cmd_sweep(config: ExperimentConfig, out: str | Path | None = None,
              workers: int | None = None) -> list[Path]:
    """Final regret versus eps, one CSV per policy, with the ``rate * log T`` lower bound."""
    out = Path(out or config.out or ".")
    files = []
    for pk in config.policies:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "final_mean_regret", "final_std_regret", "lower_bound"])
        for row in sweep_rows(config, pk, workers):
            w.writerow([format_float(row[k]) for k in
                        ("eps", "final_mean_regret", "final_std_regret", "lower_bound")])
        files.append(_write(out / f"sweep_{pk.label}.csv", buf.getvalue()))
    files.append(_write(out / "manifest.json", _manifest(config, files, "sweep")))
    return files


def read_csv(path) -> tuple[list[str], list[list[float]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(v) for v in r] for r in rows[1:]]
