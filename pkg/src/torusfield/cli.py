"""Config-driven command line front end.

Usage: ``torusfield --config run.json [--seed N] [--threads N] [--verbose]``.

The JSON config selects one command (eval, gram, extract, audit, simulate,
krige, report-sinh-discrepancy), names a kernel, and lists input/output
paths.  Every run writes a manifest next to its outputs containing the full
config, the library version and the resolved seed; passing a manifest back
as ``--config`` reproduces the run byte for byte.

Exit codes: 0 success, 1 an audit reported a violation, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import strictjson as sj
from .fields import (
    krige,
    load_field_csv,
    save_field_csv,
    save_predictions_csv,
    save_samples_csv,
    simulate,
)
from .geometry import Invariants3, load_sites_csv
from .kernels import (
    MaternSpectralKernel,
    SinhSeriesKernel,
    kernel_from_config,
    sinh_discrepancy_report,
)
from .nonstat import XiKernel, xi_from_config, xi_pd_audit
from .spectral import extract, write_table_csv
from .validation import cnd_audit, gram_matrix, matern_condition_audit, pd_audit

log = logging.getLogger("torusfield")

COMMANDS = (
    "eval",
    "gram",
    "extract",
    "audit",
    "simulate",
    "krige",
    "report-sinh-discrepancy",
)


@dataclass
class NumericOptions:
    """Tolerances and orders with defaults; strict keys."""

    tol: float = 1e-8
    quad_order: int = 64
    k_max: tuple[int, int] = (4, 4)
    h_grid: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0, 4.0])
    n_sites: int = 40
    n_trials: int = 20
    n_samples: int = 100
    jitter: float | None = None
    noise: float = 0.0
    box_halfwidth: float = 5.0

    @classmethod
    def from_config(cls, cfg, path: str) -> "NumericOptions":
        cfg = dict(sj.require_mapping(cfg, path)) if cfg is not None else {}
        out = cls(
            tol=float(sj.take(cfg, "tol", path, default=cls.tol)),
            quad_order=int(sj.take(cfg, "quad_order", path, default=cls.quad_order)),
            k_max=tuple(sj.take(cfg, "k_max", path, default=list(cls.k_max))),
            h_grid=list(sj.take(cfg, "h_grid", path, default=cls().h_grid)),
            n_sites=int(sj.take(cfg, "n_sites", path, default=cls.n_sites)),
            n_trials=int(sj.take(cfg, "n_trials", path, default=cls.n_trials)),
            n_samples=int(sj.take(cfg, "n_samples", path, default=cls.n_samples)),
            jitter=sj.take(cfg, "jitter", path, default=None),
            noise=float(sj.take(cfg, "noise", path, default=cls.noise)),
            box_halfwidth=float(
                sj.take(cfg, "box_halfwidth", path, default=cls.box_halfwidth)
            ),
        )
        sj.finish(cfg, path)
        return out


@dataclass
class RunConfig:
    command: str
    kernel_cfg: dict
    io: dict
    seed: int
    numeric: NumericOptions
    raw: dict

    workers: int = 1

    @classmethod
    def from_mapping(cls, cfg) -> "RunConfig":
        raw = json.loads(json.dumps(cfg))  # deep copy for the manifest echo
        cfg = dict(sj.require_mapping(cfg, ""))
        command = sj.take(cfg, "command", "")
        if command not in COMMANDS:
            raise sj.ConfigError("command", f"unknown command {command!r}")
        kernel_cfg = sj.require_mapping(sj.take(cfg, "kernel", ""), "kernel")
        io_cfg = dict(sj.require_mapping(sj.take(cfg, "io", "", default={}), "io"))
        seed = int(sj.take(cfg, "seed", "", default=0))
        numeric = NumericOptions.from_config(
            sj.take(cfg, "numeric", "", default=None), "numeric"
        )
        sj.finish(cfg, "")
        raw["seed"] = seed  # canonical echo so manifests are rerun-stable
        return cls(command, dict(kernel_cfg), io_cfg, seed, numeric, raw)


def _take_path(io: dict, key: str, must_exist: bool = False) -> Path:
    value = sj.take(io, key, "io")
    p = Path(str(value))
    if must_exist and not p.is_file():
        raise sj.ConfigError(f"io.{key}", f"input file not found: {p}")
    return p


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _AtomicOutputs:
    """Collects output texts and writes them (plus the manifest) atomically."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.pending: dict[Path, str] = {}

    def add(self, path: Path, text: str) -> None:
        self.pending[Path(path)] = text

    def flush(self, primary_output: Path) -> None:
        manifest = {
            "config": self.config.raw,
            "library_version": __version__,
            "seed": self.config.seed,
        }
        manifest_path = primary_output.with_suffix(primary_output.suffix + ".manifest.json")
        self.add(manifest_path, json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        for path, text in self.pending.items():
            _atomic_write_text(path, text)


def _build_kernel(cfg: dict, validate: bool = True):
    family = cfg.get("family")
    if family == "xi":
        return xi_from_config(cfg)
    return kernel_from_config(cfg, validate=validate)


def _require_isotropic(kernel, command: str):
    if isinstance(kernel, XiKernel):
        raise sj.ConfigError("kernel", f"command {command!r} needs an isotropic family")
    return kernel


def _csv_text(header: list[str], rows: list[list]) -> str:
    import io as _io

    buf = _io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _capture_file(writer_fn) -> str:
    """Run a path-writing function against a temp file and return the text."""
    fd, tmp = tempfile.mkstemp(suffix=".csv")
    os.close(fd)
    try:
        writer_fn(tmp)
        with open(tmp) as fh:
            return fh.read()
    finally:
        os.unlink(tmp)


def _matrix_csv_text(matrix: np.ndarray) -> str:
    lines = [",".join(repr(float(v)) for v in row) for row in matrix]
    return "\n".join(lines) + "\n"


def _run_eval(config: RunConfig, outputs: _AtomicOutputs) -> int:
    kernel = _require_isotropic(_build_kernel(config.kernel_cfg), "eval")
    points_path = _take_path(config.io, "points", must_exist=True)
    out_path = _take_path(config.io, "output")
    sj.finish(config.io, "io")
    rows = []
    with open(points_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["s", "r", "h"]:
            raise sj.ConfigError("io.points", f"expected header s,r,h, got {header}")
        for row in reader:
            if not row:
                continue
            s, r, h = (float(v) for v in row[:3])
            block = kernel.eval(Invariants3(s, r, h))
            p = kernel.p
            rows.append(
                [repr(s), repr(r), repr(h)]
                + [repr(float(block[i, j])) for i in range(p) for j in range(i, p)]
            )
    p = kernel.p
    header = ["s", "r", "h"] + [f"K_{i}_{j}" for i in range(p) for j in range(i, p)]
    outputs.add(out_path, _csv_text(header, rows))
    outputs.flush(out_path)
    return 0


def _run_gram(config: RunConfig, outputs: _AtomicOutputs) -> int:
    kernel = _build_kernel(config.kernel_cfg)
    sites_path = _take_path(config.io, "sites", must_exist=True)
    out_path = _take_path(config.io, "output")
    sj.finish(config.io, "io")
    sites = load_sites_csv(sites_path)
    gram = gram_matrix(kernel, sites)
    outputs.add(out_path, _matrix_csv_text(gram))
    outputs.flush(out_path)
    return 0


def _run_extract(config: RunConfig, outputs: _AtomicOutputs) -> int:
    kernel = _require_isotropic(_build_kernel(config.kernel_cfg), "extract")
    out_path = _take_path(config.io, "output")
    sj.finish(config.io, "io")
    table = extract(
        kernel,
        config.numeric.k_max,
        np.asarray(config.numeric.h_grid, dtype=float),
        quad_order=config.numeric.quad_order,
    )
    outputs.add(out_path, _capture_file(lambda tmp: write_table_csv(table, tmp)))
    outputs.flush(out_path)
    return 0


def _run_audit(config: RunConfig, outputs: _AtomicOutputs) -> int:
    # Defer definiteness validation to the audit stages themselves so that
    # invalid parameters produce a failing report (exit 1), not a parse error.
    kernel = _build_kernel(config.kernel_cfg, validate=False)
    out_path = _take_path(config.io, "output")
    sj.finish(config.io, "io")
    num = config.numeric
    stages = []
    all_passed = True
    if isinstance(kernel, XiKernel):
        report = xi_pd_audit(
            kernel,
            n_sites=min(num.n_sites, 25),
            n_trials=num.n_trials,
            seed=config.seed,
            tol=num.tol,
        )
        stages.append(
            {
                "name": "xi_pd_audit",
                "passed": report["passed"],
                "coefficients_flagged": report["coefficients_flagged"],
                "gram_audit": report["gram_audit"].to_dict(),
            }
        )
        all_passed = report["passed"]
    else:
        report = pd_audit(
            kernel,
            n_sites=num.n_sites,
            n_trials=num.n_trials,
            seed=config.seed,
            tol=num.tol,
            box_halfwidth=num.box_halfwidth,
            workers=config.workers,
        )
        stages.append({"name": "pd_audit", **report.to_dict()})
        all_passed = report.passed
        if isinstance(kernel, MaternSpectralKernel):
            cond = matern_condition_audit(kernel, tol=num.tol)
            stages.append({"name": "matern_condition_audit", **cond.to_dict()})
            all_passed = all_passed and cond.passed
        if isinstance(kernel, SinhSeriesKernel):
            cond = cnd_audit(
                kernel.gamma,
                n_sites=min(num.n_sites, 25),
                n_trials=min(num.n_trials, 10),
                seed=config.seed,
                tol=num.tol,
                orientation="gamma_cnd",
                d2=kernel.d2,
                d=kernel.d,
            )
            stages.append({"name": "cnd_audit(gamma_cnd)", **cond.to_dict()})
            all_passed = all_passed and cond.passed
    payload = {"passed": all_passed, "stages": stages}
    outputs.add(out_path, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    outputs.flush(out_path)
    _print_audit_table(stages)
    if not all_passed:
        failing = [s["name"] for s in stages if not s["passed"]]
        log.warning("audit failed at stage(s): %s", ", ".join(failing))
        return 1
    return 0


def _print_audit_table(stages: list[dict]) -> None:
    width = max(len(s["name"]) for s in stages)
    print(f"{'stage':<{width}}  {'min eig ratio':>14}  result")
    for s in stages:
        ratio = s.get("min_eig_ratio")
        if ratio is None:
            ratio = s.get("gram_audit", {}).get("min_eig_ratio", float("nan"))
        verdict = "pass" if s["passed"] else "FAIL"
        print(f"{s['name']:<{width}}  {ratio:>14.3e}  {verdict}")


def _run_simulate(config: RunConfig, outputs: _AtomicOutputs) -> int:
    kernel = _build_kernel(config.kernel_cfg)
    sites_path = _take_path(config.io, "sites", must_exist=True)
    out_path = _take_path(config.io, "output")
    sj.finish(config.io, "io")
    sites = load_sites_csv(sites_path)
    samples = simulate(
        kernel,
        sites,
        n_samples=config.numeric.n_samples,
        seed=config.seed,
        jitter=config.numeric.jitter,
    )
    outputs.add(out_path, _capture_file(lambda tmp: save_samples_csv(samples, tmp)))
    outputs.flush(out_path)
    return 0


def _run_krige(config: RunConfig, outputs: _AtomicOutputs) -> int:
    kernel = _build_kernel(config.kernel_cfg)
    obs_path = _take_path(config.io, "obs", must_exist=True)
    query_path = _take_path(config.io, "query", must_exist=True)
    out_path = _take_path(config.io, "output")
    sj.finish(config.io, "io")
    obs_sites, obs_values = load_field_csv(obs_path)
    query_sites = load_sites_csv(query_path)
    predictions, variances = krige(
        kernel, obs_sites, obs_values, config.numeric.noise, query_sites
    )
    outputs.add(
        out_path,
        _capture_file(
            lambda tmp: save_predictions_csv(query_sites, predictions, variances, tmp)
        ),
    )
    outputs.flush(out_path)
    return 0


def _run_sinh_report(config: RunConfig, outputs: _AtomicOutputs) -> int:
    kernel = _build_kernel(config.kernel_cfg)
    if not isinstance(kernel, SinhSeriesKernel):
        raise sj.ConfigError("kernel", "this report needs a sinh_series kernel")
    out_path = _take_path(config.io, "output")
    sj.finish(config.io, "io")
    report = sinh_discrepancy_report(kernel)
    header = ["s", "r", "h", "i", "j", "series", "closed_form", "abs_diff"]
    rows = [
        [
            repr(row["s"]),
            repr(row["r"]),
            repr(row["h"]),
            str(row["i"]),
            str(row["j"]),
            repr(row["series"]),
            repr(row["closed_form"]),
            repr(row["abs_diff"]),
        ]
        for row in report["rows"]
    ]
    outputs.add(out_path, _csv_text(header, rows))
    summary_path = out_path.with_suffix(out_path.suffix + ".summary.json")
    summary = {k: report[k] for k in ("max_abs_diff", "mean_abs_diff", "series_tail_bound", "k_max")}
    outputs.add(summary_path, json.dumps(summary, sort_keys=True, indent=2) + "\n")
    outputs.flush(out_path)
    return 0


_RUNNERS = {
    "eval": _run_eval,
    "gram": _run_gram,
    "extract": _run_extract,
    "audit": _run_audit,
    "simulate": _run_simulate,
    "krige": _run_krige,
    "report-sinh-discrepancy": _run_sinh_report,
}


def run(config: RunConfig) -> int:
    """Execute a parsed run configuration; returns the process exit code."""
    outputs = _AtomicOutputs(config)
    return _RUNNERS[config.command](config, outputs)


def load_config(path, seed_override: int | None = None) -> RunConfig:
    """Load a config or a previously written manifest."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise sj.ConfigError("", f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    data = sj.require_mapping(data, "")
    if "config" in data and "library_version" in data:
        seed = data.get("seed")
        data = data["config"]
        if seed_override is None and seed is not None:
            data = dict(data)
            data["seed"] = seed
    config = RunConfig.from_mapping(data)
    if seed_override is not None:
        config.seed = seed_override
        config.raw = dict(config.raw)
        config.raw["seed"] = seed_override
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="torusfield",
        description="Matrix-valued covariance kernels on sphere x sphere x R^d",
    )
    parser.add_argument("--config", required=True, help="JSON run configuration or manifest")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker thread cap")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config, seed_override=args.seed)
        config.workers = max(1, args.threads)
        return run(config)
    except sj.ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except FileNotFoundError as exc:
        log.error("missing input: %s", exc)
        return 2
    except ValueError as exc:
        log.error("input error: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
