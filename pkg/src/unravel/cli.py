"""Command-line front end.

Every command reads an optional JSON config (``--config``); command-line flags
override its top-level keys. Outputs go to ``--out DIR`` together with a
``manifest.json`` listing the resolved config and output checksums.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import DataTable, InsufficientData, fss_collapse, index_label, parse_index, read_table_csv
from .channels import ChannelKind, rotation_to_json
from .sampling import UNRAVELINGS

log = logging.getLogger("unravel")

SCHEMA_VERSION = 1
LN2 = math.log(2)


class ConfigError(ValueError):
    pass


# -- config schemas: key -> (type, default) ---------------------------------------------

COMMON = {
    "seed": (int, 0),
    "trajectories": (int, 1),
    "workers": (int, 1),
    "out": (str, None),
    "log_bits": (bool, False),
}

SCHEMAS = {
    "pc2": {"kinds": (list, [k.value for k in ChannelKind]), "q": (int, 2)},
    "optimize-spin": {"kind": (str, "depolarizing"), "q": (int, 2), "n_starts": (int, 16), "n_params": (int, None)},
    "ruc": {
        "L": (list, [8]),
        "p": (list, [0.1]),
        "unraveling": (str, "conventional"),
        "layers": (int, None),
        "boundary": (str, "periodic"),
        "channel_kind": (str, "dephasing"),
        "renyi_indices": (list, ["1/2", "1", "2", "inf"]),
    },
    "mfim": {
        "engine": (str, "mps"),
        "L": (int, 16),
        "gamma": (list, [0.3]),
        "dt": (float, 0.05),
        "total_time": (float, 5.0),
        "unraveling": (str, "spin_optimized"),
        "chi_max": (list, [64]),
        "cutoff": (float, 0.0),
        "renyi_indices": (list, ["1"]),
    },
    "collapse": {"inputs": (list, []), "n_boot": (int, 200), "grid": (int, 200), "indices": (list, None)},
}


def _coerce(key, typ, value):
    if value is None:
        return None
    if typ is list:
        return list(value) if isinstance(value, (list, tuple)) else [value]
    if typ is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"key {key!r}: expected a boolean, got {value!r}")
    if typ is int and isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"key {key!r}: expected an integer, got {value!r}")
    try:
        return typ(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"key {key!r}: cannot interpret {value!r} as {typ.__name__}") from exc


def resolve_config(command, file_cfg: dict, overrides: dict) -> dict:
    schema = {**COMMON, **SCHEMAS[command]}
    unknown = sorted(set(file_cfg) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {unknown}")
    cfg = {k: default for k, (_, default) in schema.items()}
    cfg.update(file_cfg)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    for k, (typ, _) in schema.items():
        cfg[k] = _coerce(k, typ, cfg[k])
    if cfg["trajectories"] < 1:
        raise ConfigError("trajectories must be positive")
    if cfg["workers"] < 1:
        raise ConfigError("workers must be positive")
    return cfg


def load_config_file(path):
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return obj


# -- output helpers ------------------------------------------------------------------------


def _atomic_write(path: Path, data: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


class Output:
    """Collects output files and writes them plus a manifest."""

    def __init__(self, out_dir, command, cfg):
        self.dir = Path(out_dir) if out_dir else None
        self.command = command
        self.cfg = cfg
        self.files = {}
        self.t0 = time.perf_counter()

    def add(self, name, text):
        self.files[name] = text
        if self.dir is not None:
            _atomic_write(self.dir / name, text)

    def finish(self):
        if self.dir is None:
            return
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.cfg,
            "code_version": __version__,
            "wall_time_s": time.perf_counter() - self.t0,
            "outputs": {n: hashlib.sha256(t.encode()).hexdigest() for n, t in sorted(self.files.items())},
        }
        _atomic_write(self.dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# -- parallel dispatch -----------------------------------------------------------------------


def _run_stride(args):
    fn, jobs = args
    return [fn(*j) for j in jobs]


def run_jobs(fn, jobs, n_workers=1):
    """Run ``fn(*job)`` for every job; worker w takes jobs w, w + n, w + 2n, ...

    The results come back in job order, so the output never depends on n_workers.
    """
    jobs = list(jobs)
    if n_workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    n = min(n_workers, len(jobs))
    chunks = [jobs[w::n] for w in range(n)]
    with ProcessPoolExecutor(n) as pool:
        parts = list(pool.map(_run_stride, [(fn, c) for c in chunks]))
    out = [None] * len(jobs)
    for w, part in enumerate(parts):
        out[w::n] = part
    return out


# -- commands ---------------------------------------------------------------------------------


def _kind(name) -> ChannelKind:
    try:
        return ChannelKind(name)
    except ValueError:
        raise ConfigError(f"unknown channel kind {name!r}; choose from {[k.value for k in ChannelKind]}") from None


def cmd_pc2(cfg, out: Output):
    from .spin_model import table_s1

    kinds = [_kind(k) for k in cfg["kinds"]]
    rows = [(k, b, f"{v:.4f}") for k, b, v in table_s1(kinds, cfg["q"])]
    text = _csv_text(["schema_version", "kind", "basis", "pc2"], [(SCHEMA_VERSION, *r) for r in rows])
    out.add("pc2.csv", text)
    sys.stdout.write(_csv_text(["kind", "basis", "pc2"], rows))
    return rows


def cmd_optimize_spin(cfg, out: Output):
    from .spin_model import optimize_basis_spin

    res = optimize_basis_spin(
        _kind(cfg["kind"]), q=cfg["q"], n_params=cfg["n_params"], n_starts=cfg["n_starts"], seed=cfg["seed"], n_workers=cfg["workers"]
    )
    out.add(f"{res.kind.value}_rotation.json", rotation_to_json(res.kind, res.rotation) + "\n")
    summary = {
        "schema_version": SCHEMA_VERSION,
        "kind": res.kind.value,
        "pc2": res.pc2,
        "params": res.params.tolist(),
        "objective_evals": res.objective_evals,
        "start_values": res.start_values,
        "stalled": res.stalled,
    }
    out.add("optimize_spin.json", json.dumps(summary, indent=2) + "\n")
    print(f"{res.kind.value}: p_c^(2) = {res.pc2:.4f} ({res.objective_evals} objective evaluations)")
    if res.stalled:
        print("warning: best value reached by a single start (optimizer stall)", file=sys.stderr)
    return res


def _ruc_job(L, p, cfg_items, seed, stream):
    from .statevector import RucConfig, run_ruc_trajectory

    c = dict(cfg_items)
    config = RucConfig(L=L, p=p, **c)
    try:
        return run_ruc_trajectory(config, seed, stream)
    except Exception as exc:
        raise RuntimeError(f"trajectory {stream} (L={L}, p={p}) failed: {exc}") from exc


def cmd_ruc(cfg, out: Output):
    from .statevector import RucConfig

    if cfg["unraveling"] not in UNRAVELINGS:
        raise ConfigError(f"unraveling must be one of {UNRAVELINGS}")
    _kind(cfg["channel_kind"])
    indices = [parse_index(n) for n in cfg["renyi_indices"]]
    Ls = [int(v) for v in cfg["L"]]
    ps = [float(v) for v in cfg["p"]]
    opts = dict(
        layers=cfg["layers"], unraveling=cfg["unraveling"], boundary=cfg["boundary"],
        channel_kind=cfg["channel_kind"], renyi_indices=tuple(indices),
    )
    for L in Ls:
        if L % 4:
            raise ConfigError(f"L={L}: I_3 needs L divisible by 4")
        for p in ps:
            try:
                RucConfig(L=L, p=p, **opts)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
    items = tuple(sorted(opts.items()))
    ntraj = cfg["trajectories"]
    jobs, keys = [], []
    for a, L in enumerate(Ls):
        for b, p in enumerate(ps):
            for k in range(ntraj):
                # one RNG stream per (L, p, trajectory) cell
                jobs.append((L, p, items, cfg["seed"], (a * len(ps) + b) * ntraj + k))
                keys.append((L, p, k))
    records = run_jobs(_ruc_job, jobs, cfg["workers"])
    scale = 1 / LN2 if cfg["log_bits"] else 1.0
    labels = [index_label(n) for n in indices]
    header = ["schema_version", "L", "p", "unraveling", "trajectory", "seed", "stream"]
    header += [f"S_half_{lab}" for lab in labels] + [f"I3_{lab}" for lab in labels]
    rows = []
    samples = {}
    for (L, p, k), rec in zip(keys, records):
        rows.append(
            [SCHEMA_VERSION, L, _fmt(p), cfg["unraveling"], k, rec.seed, rec.stream]
            + [_fmt(rec.entropies[n] * scale) for n in indices]
            + [_fmt(rec.i3[n] * scale) for n in indices]
        )
        for n in indices:
            samples.setdefault((L, p, n), []).append(rec.i3[n] * scale)
    out.add("trajectories.csv", _csv_text(header, rows))
    table = DataTable.from_samples(samples) if ntraj >= 2 else None
    if table is not None:
        srows = [
            [SCHEMA_VERSION, int(table.L[r]), _fmt(float(table.rate[r])), index_label(table.index[r]),
             _fmt(float(table.mean[r])), _fmt(float(table.std_error[r])), int(table.n[r])]
            for r in range(len(table))
        ]
        out.add("summary.csv", _csv_text(["schema_version", "L", "p", "index", "mean", "std_error", "n"], srows))
    print(f"ran {len(records)} trajectories")
    return records, table


def _mfim_job(engine, L, gamma, dt, total_time, unraveling, chi_max, cutoff, indices, seed, stream):
    from .mps import MFIMConfig, TruncationPolicy, run_mfim_mps_trajectory
    from .statevector import run_mfim_trajectory_exact

    config = MFIMConfig(L=L, gamma=gamma, dt=dt, total_time=total_time)
    try:
        if engine == "dense":
            rec = run_mfim_trajectory_exact(config, seed, stream, unraveling, indices)
            series = {n: np.asarray(v) for n, v in rec.extra["series"].items()}
            disc = np.zeros(config.n_steps)
        else:
            run = run_mfim_mps_trajectory(config, TruncationPolicy(chi_max, cutoff), seed, stream, unraveling, indices)
            series, disc = run.entropies, run.discarded
    except Exception as exc:
        raise RuntimeError(f"trajectory {stream} (gamma={gamma}, chi={chi_max}) failed: {exc}") from exc
    return series, disc


def cmd_mfim(cfg, out: Output):
    from .mps import entropy_column, saturation_metric

    engine = cfg["engine"]
    if engine not in ("dense", "mps"):
        raise ConfigError("engine must be 'dense' or 'mps'")
    if engine == "dense" and cfg["L"] > 24:
        raise ConfigError(f"dense engine supports L <= 24, got L={cfg['L']}; use engine 'mps'")
    if cfg["unraveling"] not in UNRAVELINGS:
        raise ConfigError(f"unraveling must be one of {UNRAVELINGS}")
    for g in cfg["gamma"]:
        if 2 * float(g) * cfg["dt"] > 1 or float(g) < 0:
            raise ConfigError(f"gamma={g} gives a dephasing probability outside [0, 1]")
    indices = tuple(parse_index(n) for n in cfg["renyi_indices"])
    chis = [int(c) for c in cfg["chi_max"]] if engine == "mps" else [0]
    ntraj = cfg["trajectories"]
    scale = 1 / LN2 if cfg["log_bits"] else 1.0
    jobs, keys = [], []
    for gi, g in enumerate(cfg["gamma"]):
        for chi in chis:
            for k in range(ntraj):
                # the stream depends on (gamma, trajectory) only: chi sweeps share outcome randomness
                jobs.append((engine, cfg["L"], float(g), cfg["dt"], cfg["total_time"], cfg["unraveling"], chi,
                             cfg["cutoff"], indices, cfg["seed"], gi * ntraj + k))
                keys.append((float(g), chi, k))
    results = run_jobs(_mfim_job, jobs, cfg["workers"])
    cols = [entropy_column(n) for n in indices]
    summary_rows = []
    by_cell = {}
    for (g, chi, k), (series, disc) in zip(keys, results):
        by_cell.setdefault((g, chi), []).append((k, series, disc))
    for (g, chi), runs in by_cell.items():
        rows = []
        for k, series, disc in runs:
            for step in range(len(disc)):
                rows.append(
                    [SCHEMA_VERSION, k, cfg["seed"], step + 1, _fmt(float((step + 1) * cfg["dt"])), chi]
                    + [_fmt(float(series[n][step] * scale)) for n in indices]
                    + [_fmt(float(disc[step]))]
                )
        name = f"series_gamma{g:g}_chi{chi}.csv" if engine == "mps" else f"series_gamma{g:g}_dense.csv"
        out.add(name, _csv_text(["schema_version", "run_id", "seed", "step", "time", "chi_max"] + cols + ["discarded_weight"], rows))
        first = indices[0]
        late = np.array([np.mean(s[first][len(s[first]) // 2:]) for _, s, _ in runs]) * scale
        mean_series = np.mean([s[first] for _, s, _ in runs], axis=0)
        se = float(late.std(ddof=1) / np.sqrt(len(late))) if len(late) > 1 else float("nan")
        summary_rows.append([SCHEMA_VERSION, _fmt(g), chi, _fmt(float(late.mean())), _fmt(se), len(late),
                             _fmt(saturation_metric(mean_series))])
    out.add("summary.csv", _csv_text(
        ["schema_version", "gamma", "chi_max", "late_entropy_mean", "std_error", "n", "saturation"], summary_rows))
    print(f"ran {len(results)} trajectories")
    return summary_rows


def cmd_collapse(cfg, out: Output):
    if not cfg["inputs"]:
        raise ConfigError("collapse needs at least one input CSV (inputs)")
    tables = []
    for path in cfg["inputs"]:
        try:
            tables.append(read_table_csv(path))
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    table = DataTable(
        np.concatenate([t.L for t in tables]), np.concatenate([t.rate for t in tables]),
        np.concatenate([t.index for t in tables]), np.concatenate([t.mean for t in tables]),
        np.concatenate([t.std_error for t in tables]), np.concatenate([t.n for t in tables]),
    )
    indices = table.indices() if cfg["indices"] is None else [parse_index(n) for n in cfg["indices"]]
    results = {}
    for n in indices:
        try:
            res = fss_collapse(table.select(n), grid=cfg["grid"], n_boot=cfg["n_boot"], seed=cfg["seed"])
        except InsufficientData as exc:
            raise ConfigError(f"index {index_label(n)}: {exc}") from exc
        results[index_label(n)] = res.to_dict()
    doc = {"schema_version": SCHEMA_VERSION, "results": results}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    out.add("collapse.json", text)
    sys.stdout.write(text)
    return results


COMMANDS = {
    "pc2": cmd_pc2,
    "optimize-spin": cmd_optimize_spin,
    "ruc": cmd_ruc,
    "mfim": cmd_mfim,
    "collapse": cmd_collapse,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="unravel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trajectories", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--log-bits", dest="log_bits", action="store_true", default=None,
                        help="report entropies in log-2 units")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                        help="override a config key, value parsed as JSON")
        if name == "pc2":
            sp.add_argument("--kinds", nargs="+")
        if name == "optimize-spin":
            sp.add_argument("--kind")
            sp.add_argument("--n-starts", dest="n_starts", type=int)
        if name in ("ruc", "mfim"):
            sp.add_argument("--L", nargs="+", type=int)
            sp.add_argument("--unraveling")
        if name == "ruc":
            sp.add_argument("--p", nargs="+", type=float)
            sp.add_argument("--layers", type=int)
        if name == "mfim":
            sp.add_argument("--engine")
            sp.add_argument("--gamma", nargs="+", type=float)
            sp.add_argument("--chi-max", dest="chi_max", nargs="+", type=int)
            sp.add_argument("--total-time", dest="total_time", type=float)
            sp.add_argument("--dt", type=float)
        if name == "collapse":
            sp.add_argument("inputs", nargs="*")
            sp.add_argument("--n-boot", dest="n_boot", type=int)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    command = args.command
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "set")}
    if command == "mfim" and overrides.get("L") is not None:
        if len(overrides["L"]) != 1:
            print("config error: mfim takes a single L", file=sys.stderr)
            return 2
        overrides["L"] = overrides["L"][0]
    if command == "collapse" and not overrides.get("inputs"):
        overrides.pop("inputs", None)
    try:
        file_cfg = load_config_file(args.config)
        for item in args.set:
            key, _, raw = item.partition("=")
            try:
                file_cfg[key] = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"--set {key}: invalid JSON value {raw!r}") from exc
        cfg = resolve_config(command, file_cfg, overrides)
        out = Output(cfg["out"], command, cfg)
        COMMANDS[command](cfg, out)
        out.finish()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
