"""Command-line interface.

Subcommands::

    poetpfa simulate  Monte Carlo experiments (presets table1, table2, kauto,
                      krobust, power)
    poetpfa fdp       FDP curve for a user-supplied data matrix
    poetpfa adjust    dependence-adjusted statistics and p-values
    poetpfa replay    re-run a command from its manifest and compare outputs

Every run writes ``manifest.json`` next to its outputs.  Exit codes: 0 on
success, 1 on a runtime failure, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import ParameterError, PoetPfaError
from .output import sha256_file, write_csv, write_json
from .pfa import (
    METHODS,
    adjusted_fdp_curve,
    adjusted_statistics,
    fdp_curve,
    fit_pfa,
    pvalues,
)
from .poet import RULES, PoetConfig, poet_covariance, to_correlation
from .sim import (
    ExperimentResult,
    SimulationConfig,
    default_workers,
    power_config,
    run_fdp_experiment,
    run_k_sweep,
    run_power_experiment,
    two_sample_statistics,
)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
MANIFEST = "manifest.json"
PRESETS = ("table1", "table2", "kauto", "krobust", "power")
DEFAULT_THRESHOLDS = "1e-4:1e-1:20log"

log = logging.getLogger("poetpfa")


class UsageError(Exception):
    """Bad flag value or combination (exit code 2)."""


class DataError(PoetPfaError, ValueError):
    """Input file could not be used (exit code 1)."""


# ---------------------------------------------------------------------------
# argument types


def parse_k(text: str):
    if text == "auto":
        return "auto"
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer or 'auto', got {text!r}") from None
    if k < 0:
        raise argparse.ArgumentTypeError("k must be >= 0")
    return k


def parse_thresholds(text: str) -> np.ndarray:
    """Comma-separated thresholds; an item ``lo:hi:N`` expands to N linearly
    spaced values and ``lo:hi:Nlog`` to N log-spaced ones."""
    values: list[float] = []
    for item in (s.strip() for s in text.split(",")):
        if not item:
            continue
        if ":" in item:
            parts = item.split(":")
            if len(parts) != 3:
                raise UsageError(f"bad threshold range {item!r}; expected lo:hi:N or lo:hi:Nlog")
            spacing = parts[2]
            logspaced = spacing.endswith("log")
            try:
                lo, hi = float(parts[0]), float(parts[1])
                num = int(spacing[:-3] if logspaced else spacing)
            except ValueError:
                raise UsageError(f"bad threshold range {item!r}") from None
            if num < 1:
                raise UsageError(f"threshold range {item!r} needs at least one point")
            if logspaced and not (lo > 0 and hi > 0):
                raise UsageError(f"log-spaced range {item!r} needs positive end points")
            values.extend(np.geomspace(lo, hi, num) if logspaced else np.linspace(lo, hi, num))
        else:
            try:
                values.append(float(item))
            except ValueError:
                raise UsageError(f"bad threshold {item!r}") from None
    ts = np.unique(np.asarray(values, dtype=float))
    if ts.size == 0:
        raise UsageError("no thresholds given")
    bad = ts[~((ts > 0) & (ts < 1))]
    if bad.size:
        raise UsageError(f"thresholds must lie in (0, 1), got {bad[0]:g}")
    return ts


def parse_int_list(text: str) -> list[int]:
    """``3,5,7`` or ``3-10``."""
    try:
        if "-" in text and "," not in text:
            lo, hi = (int(s) for s in text.split("-"))
            out = list(range(lo, hi + 1))
        else:
            out = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list like 3,4,5 or a range like 3-10, got {text!r}") from None
    if not out or min(out) < 0:
        raise argparse.ArgumentTypeError("need at least one non-negative integer")
    return out


def parse_signal(text: str) -> tuple[float, float]:
    try:
        parts = [float(s) for s in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'value' or 'lo,hi', got {text!r}") from None
    if len(parts) == 1:
        return parts[0], parts[0]
    if len(parts) == 2:
        return parts[0], parts[1]
    raise argparse.ArgumentTypeError(f"expected 'value' or 'lo,hi', got {text!r}")


def absolute_path(text: str) -> str:
    return str(Path(text).expanduser().resolve())


# ---------------------------------------------------------------------------
# input files


def read_matrix(path: str) -> tuple[list[str], np.ndarray]:
    """Numeric CSV with a header row of variable names; rows are samples.
    Row numbers in error messages count the header as row 1."""
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file, expected a header row")
        names = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not any(cell.strip() for cell in row):
                continue
            if len(row) != len(names):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields but the header has {len(names)}")
            vals = []
            for col, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {col} ({names[col - 1]!r}): {cell.strip()!r} is not a number"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {col} ({names[col - 1]!r}): non-finite value")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return names, np.array(rows, dtype=float)


def read_groups(path: str, n: int) -> list[str]:
    """One label per sample row; an extra first line is taken as a header."""
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            labels = [row[0].strip() if row else "" for row in csv.reader(fh)]
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    while labels and labels[-1] == "":
        labels.pop()
    if len(labels) == n + 1:
        labels = labels[1:]
    if len(labels) != n:
        raise DataError(f"{path}: {len(labels)} labels for {n} data rows")
    if "" in labels:
        raise DataError(f"{path}: empty label at row {labels.index('') + 1}")
    if len(set(labels)) != 2:
        raise DataError(f"{path}: expected exactly two distinct labels, found {len(set(labels))}")
    return labels


# ---------------------------------------------------------------------------
# manifests


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def canonical_argv(args: argparse.Namespace) -> list[str]:
    """Rebuild the command line from the parsed (and resolved) namespace, so
    a manifest does not depend on how the original flags were spelled."""
    out = [args.command]
    for action in args.parser._actions:
        dest = action.dest
        if dest in ("help", "out_dir") or not action.option_strings:
            continue
        value = getattr(args, dest, None)
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                out.append(flag)
        elif value is not None:
            out += [flag, _flag_text(value)]
    return out


def _flag_text(value) -> str:
    if isinstance(value, (tuple, list)):
        return ",".join(_flag_text(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_manifest(out_dir: Path, args, outputs: list[Path], config: dict, results: dict, started: str, inputs=None):
    manifest = {
        "command": args.command,
        "argv": canonical_argv(args),
        "config": config,
        "results": results,
        "artifact_version": __version__,
        "seed": config.get("seed"),
        "inputs": inputs or {},
        "outputs": {p.name: sha256_file(p) for p in outputs},
        "timestamps": {"started": started, "finished": _now()},
    }
    write_json(out_dir / MANIFEST, manifest)
    return manifest


# ---------------------------------------------------------------------------
# simulate


def _simulation_config(args) -> tuple[SimulationConfig, dict]:
    preset = args.preset
    model = args.model or ("approximate" if preset in ("krobust", "power") else "strict")
    n = args.n if args.n is not None else (50 if preset in ("table1", "krobust") else 100)
    k = args.k if args.k is not None else ("auto" if preset == "kauto" else 3)
    if preset == "kauto" and k != "auto":
        raise UsageError("preset kauto estimates k; drop --k or pass --k auto")
    if args.ks is not None and preset != "krobust":
        raise UsageError("--ks only applies to --preset krobust")
    # record the resolved values so the manifest does not rely on preset defaults
    args.model, args.n, args.k = model, n, k
    base = dict(
        p=args.p,
        n=n,
        k=k,
        sigma_u_kind=model,
        rounds=args.rounds,
        seed=args.seed,
        method=args.method,
        C=args.c,
        rule=args.rule,
        epsilon_k=args.epsilon_k,
        sigma1=args.sigma1,
        workers=args.workers,
    )
    for key, value in (("p1", args.p1), ("signal", args.signal), ("sigma_u_scale", args.sigma_u_scale)):
        if value is not None:
            base[key] = value
    extra = {}
    try:
        if preset == "power":
            extra["t_adj"] = args.t if args.t is not None else 0.001
            cfg = power_config(**base)
        else:
            if args.t is not None:
                base["t"] = args.t
            cfg = SimulationConfig(**base)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    if preset == "krobust":
        extra["ks"] = args.ks if args.ks is not None else list(range(3, 11))
    return cfg, extra


def cmd_simulate(args) -> int:
    started = _now()
    cfg, extra = _simulation_config(args)
    out = Path(args.out_dir)
    outputs: list[Path] = []
    preset = args.preset

    if preset == "power":
        res = run_power_experiment(cfg, extra["t_adj"])
        summary = res.to_dict()
        rows = []
        for rec in res.records:
            null_s, alt_s = rec["null_sorted"], rec["alt_sorted"]
            v = int(np.searchsorted(null_s, res.t_fixed, side="right"))
            s = int(np.searchsorted(alt_s, res.t_fixed, side="right"))
            r_adj = rec["R_adj"]
            rows.append(
                [
                    rec["round"],
                    r_adj,
                    rec["V_adj"],
                    0.0 if r_adj == 0 else rec["V_adj"] / r_adj,
                    (alt_s.size - rec["S_adj"]) / (cfg.p - r_adj) if cfg.p > r_adj else 0.0,
                    v + s,
                    v,
                    0.0 if v + s == 0 else v / (v + s),
                    (alt_s.size - s) / (cfg.p - v - s) if cfg.p > v + s else 0.0,
                    rec["k_used"],
                ]
            )
        header = ["round", "R_adj", "V_adj", "fdp_adj", "fnr_adj", "R_fixed", "V_fixed", "fdp_fixed", "fnr_fixed", "k_used"]
        outputs.append(write_csv(out / "rounds.csv", header, rows))
        if args.figures:
            from . import plotting

            outputs.append(
                plotting.power_bars(
                    [res.fdr_adj, res.fdr_fixed], [res.fnr_adj, res.fnr_fixed], ["adjusted", "fixed"], out / "power.png"
                )
            )
        results = {k: summary[k] for k in ("fdr_adj", "fnr_adj", "fdr_fixed", "fnr_fixed", "t_fixed", "matched")}
        ok = res.rounds_ok
    elif preset == "krobust":
        res = run_k_sweep(cfg, extra["ks"])
        summary = res.to_dict()
        header = ["round", "fdp_true", "R", "k_used"] + [f"DE_{k}" for k in res.ks]
        rows = [[rec[h] for h in header] for rec in res.records]
        outputs.append(write_csv(out / "rounds.csv", header, rows))
        if args.figures:
            from . import plotting

            outputs.append(plotting.k_sweep_boxplot(res.ks, [res.direct_errors(k) for k in res.ks], out / "k_sweep.png"))
        results = {"median_abs_DE_percent": summary["median_abs_DE_percent"]}
        ok = len(res.records)
    else:
        res = run_fdp_experiment(cfg)
        summary = res.to_dict()
        header = list(ExperimentResult.CSV_COLUMNS)
        rows = [[rec[h] for h in header] for rec in res.records]
        outputs.append(write_csv(out / "rounds.csv", header, rows))
        if args.figures:
            from . import plotting

            outputs.append(
                plotting.experiment_scatter(
                    res.column("fdp_true"), res.column("fdp_A"), res.column("fdp_poet"), out / "fdp_scatter.png"
                )
            )
        results = summary["aggregates"]
        ok = len(res.records)

    summary["preset"] = preset
    outputs.insert(0, write_json(out / "result.json", summary))
    write_manifest(out, args, outputs, {**cfg.to_dict(), **extra, "preset": preset}, results, started)
    print(f"wrote {', '.join(p.name for p in outputs)} and {MANIFEST} to {out}")
    if ok == 0:
        print("poetpfa: every simulation round failed", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# ---------------------------------------------------------------------------
# fdp / adjust


class Analysis:
    """Test statistics, covariance estimate and factor fit for user data."""

    def __init__(self, args):
        self.names, x = read_matrix(args.data)
        self.inputs = {"data": {"path": args.data, "sha256": sha256_file(args.data)}}
        if args.groups:
            labels = read_groups(args.groups, x.shape[0])
            self.inputs["groups"] = {"path": args.groups, "sha256": sha256_file(args.groups)}
            order = list(dict.fromkeys(labels))
            mask = np.array([lab == order[0] for lab in labels])
            gx, gy = x[mask], x[~mask]
            if gx.shape[0] < 2 or gy.shape[0] < 2:
                raise DataError(f"each group needs at least 2 rows, got {gx.shape[0]} and {gy.shape[0]}")
            z_raw = two_sample_statistics(gx, gy)
            n, m = gx.shape[0], gy.shape[0]
            self.scale = math.sqrt(n * m / (n + m))
            # covariance from within-group deviations
            cov_data = np.vstack([gx - gx.mean(axis=0), gy - gy.mean(axis=0)])
            self.design = {"kind": "two_sample", "groups": order, "sizes": [n, m]}
        else:
            if x.shape[0] < 2:
                raise DataError(f"need at least 2 data rows, got {x.shape[0]}")
            z_raw = math.sqrt(x.shape[0]) * x.mean(axis=0)
            self.scale = math.sqrt(x.shape[0])
            cov_data = x
            self.design = {"kind": "one_sample", "sizes": [x.shape[0]]}
        self.thresholds = parse_thresholds(args.t)
        cfg = PoetConfig(k=args.k, C=args.c, rule=args.rule, epsilon_k=args.epsilon_k)
        self.poet = poet_covariance(cov_data, cfg)
        # loadings always come from the correlation-scaled estimate
        corr, sd = to_correlation(self.poet.sigma_poet)
        z = z_raw if args.no_standardize else z_raw / sd
        self.fit = fit_pfa(z, corr, self.poet.k_used, args.method, standardize=False)
        self.z = self.fit.z
        self.p = pvalues(self.z)

    def results(self) -> dict:
        return {
            "k_hat": self.poet.k_used,
            "k_path": list(self.poet.k_path),
            "statistic_scale": self.scale,
            "design": self.design,
            "n_variables": len(self.names),
            "C_used": self.poet.c_used,
            "residual_pd": self.poet.pd_ok,
            "W_hat": self.fit.realization.w.tolist(),
            "W_method": self.fit.realization.method,
        }


def _ranking_rows(names, order, *cols):
    return [[rank, names[i], *(c[i] for c in cols)] for rank, i in enumerate(order, start=1)]


def cmd_fdp(args) -> int:
    started = _now()
    an = Analysis(args)
    out = Path(args.out_dir)
    report = fdp_curve(an.z, an.fit.factors, an.fit.realization, an.thresholds)
    cols = report.columns()
    header = ["t", "R", "V_hat", "fdp_hat", "fdp_hat_capped"]
    outputs = [write_csv(out / "fdp_report.csv", header, zip(*(cols[h] for h in header)))]
    if args.rank:
        order = np.argsort(-np.abs(an.z), kind="stable")[: args.rank]
        outputs.append(
            write_csv(out / "ranking.csv", ["rank", "variable", "z", "p_value"], _ranking_rows(an.names, order, an.z, an.p))
        )
    if args.figures:
        from . import plotting

        outputs.append(plotting.fdp_vs_discoveries(report.R, report.fdp_hat, report.V_hat, out / "fdp_curve.png"))
    write_manifest(out, args, outputs, _analysis_config(args), an.results(), started, an.inputs)
    print(f"k_hat={an.poet.k_used}; wrote {', '.join(p.name for p in outputs)} and {MANIFEST} to {out}")
    return EXIT_OK


def cmd_adjust(args) -> int:
    started = _now()
    an = Analysis(args)
    out = Path(args.out_dir)
    fr, w = an.fit.factors, an.fit.realization
    z_adj = adjusted_statistics(fr, w, an.z)
    p_adj = pvalues(z_adj)
    plain = fdp_curve(an.z, fr, w, an.thresholds)
    adj = adjusted_fdp_curve(z_adj, fr, w, an.thresholds)
    header = [
        "t",
        "R",
        "V_hat",
        "fdp_hat",
        "fdp_hat_capped",
        "R_adj",
        "V_hat_adj",
        "fdp_hat_adj",
        "fdp_hat_capped_adj",
    ]
    rows = zip(
        plain.t, plain.R, plain.V_hat, plain.fdp_hat, plain.fdp_hat_capped, adj.R, adj.V_hat, adj.fdp_hat, adj.fdp_hat_capped
    )
    outputs = [
        write_csv(out / "adjusted_report.csv", header, rows),
        write_csv(
            out / "adjusted_statistics.csv",
            ["variable", "z", "p_value", "z_adj", "p_value_adj"],
            zip(an.names, an.z, an.p, z_adj, p_adj),
        ),
    ]
    if args.rank:
        order = np.argsort(-np.abs(z_adj), kind="stable")[: args.rank]
        outputs.append(
            write_csv(
                out / "ranking.csv",
                ["rank", "variable", "z_adj", "p_value_adj", "z", "p_value"],
                _ranking_rows(an.names, order, z_adj, p_adj, an.z, an.p),
            )
        )
    if args.figures:
        from . import plotting

        outputs.append(plotting.adjusted_vs_unadjusted(plain.R, plain.fdp_hat, adj.R, adj.fdp_hat, out / "adjusted_curve.png"))
    write_manifest(out, args, outputs, _analysis_config(args), an.results(), started, an.inputs)
    print(f"k_hat={an.poet.k_used}; wrote {', '.join(p.name for p in outputs)} and {MANIFEST} to {out}")
    return EXIT_OK


def _analysis_config(args) -> dict:
    return {
        "data": args.data,
        "groups": args.groups,
        "t": args.t,
        "k": args.k,
        "method": args.method,
        "C": args.c,
        "rule": args.rule,
        "epsilon_k": args.epsilon_k,
        "standardize": not args.no_standardize,
        "rank": args.rank,
        "seed": None,
    }


# ---------------------------------------------------------------------------
# replay


def cmd_replay(args) -> int:
    import json

    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
        argv = list(manifest["argv"])
        expected = dict(manifest["outputs"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: not a readable manifest ({exc})") from exc
    for role, info in manifest.get("inputs", {}).items():
        if not Path(info["path"]).exists():
            raise DataError(f"input {role} {info['path']} is missing")
        if sha256_file(info["path"]) != info["sha256"]:
            raise DataError(f"input {role} {info['path']} changed since the original run")
    out = Path(args.out_dir) if args.out_dir else Path(tempfile.mkdtemp(prefix="poetpfa-replay-"))
    code = main(argv + ["--out-dir", str(out)])
    if code != EXIT_OK:
        print(f"poetpfa: replayed command exited with {code}", file=sys.stderr)
        return EXIT_FAILURE
    mismatched = 0
    for name, digest in sorted(expected.items()):
        target = out / name
        same = target.exists() and sha256_file(target) == digest
        mismatched += not same
        print(f"{'identical' if same else 'DIFFERS  '}  {name}")
    print(f"replayed into {out}")
    return EXIT_OK if mismatched == 0 else EXIT_FAILURE


# ---------------------------------------------------------------------------
# parser


def _add_common_model_flags(sp, *, k_default):
    sp.add_argument("--k", type=parse_k, default=k_default, help="number of factors, or 'auto'")
    sp.add_argument("--epsilon-k", type=float, default=0.1, help="eigenvalue cut-off factor for --k auto (default 0.1)")
    sp.add_argument("--c", type=float, default=0.5, help="threshold constant C (default 0.5)")
    sp.add_argument("--rule", choices=RULES, default="soft", help="thresholding rule (default soft)")
    sp.add_argument("--method", choices=METHODS, default="ls", help="realised-factor estimator (default ls)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poetpfa",
        description="False discovery proportion estimation for dependent tests with unknown covariance.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("--preset", choices=PRESETS, default="table2")
    sim.add_argument("--model", choices=["strict", "approximate"], default=None)
    sim.add_argument("--n", type=int, default=None, help="sample size (preset default)")
    sim.add_argument("--p", type=int, default=1000, help="number of hypotheses (default 1000)")
    sim.add_argument("--p1", type=int, default=None, help="number of false nulls (default 50; 200 for power)")
    sim.add_argument("--signal", type=parse_signal, default=None, help="nonzero mean 'v' or range 'lo,hi'")
    sim.add_argument("--sigma-u-scale", type=float, default=None)
    sim.add_argument("--sigma1", choices=["rank_one", "diagonal"], default="rank_one")
    sim.add_argument("--rounds", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--t", type=float, default=None, help="p-value threshold (0.01; 0.001 for power)")
    sim.add_argument("--ks", type=parse_int_list, default=None, help="K values for krobust (default 3-10)")
    _add_common_model_flags(sim, k_default=None)
    sim.add_argument("--workers", type=int, default=None, help="worker processes (default $POETPFA_WORKERS or 1)")
    sim.add_argument("--out-dir", default=".", help="output directory")
    sim.add_argument("--figures", action="store_true", help="also render PNG figures")
    sim.set_defaults(handler=cmd_simulate, parser=sim)

    for name, handler, help_text in (
        ("fdp", cmd_fdp, "estimate FDP over a threshold grid from a data CSV"),
        ("adjust", cmd_adjust, "dependence-adjusted statistics and p-values"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--data", required=True, type=absolute_path, help="CSV, header row, one sample per row")
        sp.add_argument("--groups", type=absolute_path, default=None, help="CSV with one group label per data row")
        sp.add_argument("--t", default=DEFAULT_THRESHOLDS, help=f"thresholds, e.g. 0.01,0.05 or {DEFAULT_THRESHOLDS}")
        _add_common_model_flags(sp, k_default="auto")
        sp.add_argument("--rank", type=int, default=None, help="write the top-m variables to ranking.csv")
        sp.add_argument("--no-standardize", action="store_true", help="input is already on unit-variance scale")
        sp.add_argument("--out-dir", default=".", help="output directory")
        sp.add_argument("--figures", action="store_true", help="also render PNG figures")
        sp.set_defaults(handler=handler, parser=sp)

    rp = sub.add_parser("replay", help="re-run a command from its manifest and compare outputs")
    rp.add_argument("--manifest", required=True)
    rp.add_argument("--out-dir", default=None, help="where to write the replay (default: a new temp directory)")
    rp.set_defaults(handler=cmd_replay, parser=rp)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", "unset") is None:
        args.workers = default_workers()
    try:
        if getattr(args, "rank", None) is not None and args.rank < 1:
            raise UsageError("--rank must be >= 1")
        return args.handler(args)
    except UsageError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PoetPfaError, OSError) as exc:
        print(f"{parser.prog} {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
