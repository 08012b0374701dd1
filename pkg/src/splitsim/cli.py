"""Command-line entry point: enumerate, solve, workload, experiment, report."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .config_space import enumerate_space
from .controller import InfeasibleRequest, Policy, run_policy, write_decisions_csv
from .cost_model import DEFAULT_BATCH, evaluate_trial
from .metrics import (
    ExperimentReport,
    ObservationPool,
    long_rows,
    needed_configs,
    read_report_json,
    replay_policy,
    summarize,
    write_long_csv,
    write_report_json,
    write_summary_csv,
)
from .nsga3 import NsgaParams, SearchResult, grid_search, run_nsga3
from .pareto import ParetoFront, read_front_csv, write_front_csv
from .profiles import Profile, ProfileError, load_profile
from .rng import substream
from .workload import WorkloadSpec, generate_workload, read_workload_csv, write_workload_csv

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_INFEASIBLE = 3

TRIALS_SCHEMA = "splitsim-trials/1"
SPACE_SCHEMA = "splitsim-space/1"
MANIFEST_SCHEMA = "splitsim-manifest/1"

# Noise sub-stream blocks: offline trials and online experiment runs never share draws.
NOISE_SOLVE = 0
NOISE_EXPERIMENT = 1

EPILOG = """\
exit codes:
  0  success
  2  bad input (unreadable or malformed profile, CSV or argument)
  3  infeasible request (no feasible configuration, or a baseline the model cannot run)
"""


class BadInput(Exception):
    pass


# ---------------------------------------------------------------------------
# Library entry points shared by the subcommands and the test suite


def solve(profile: Profile, sampler: str = "nsga3", budget: float = 0.20, seed: int = 0,
          workers: int = 1) -> SearchResult:
    mp, dp = profile.model, profile.device

    def evaluator(c, trial_index):
        return evaluate_trial(c, mp, dp, DEFAULT_BATCH, substream(seed, "noise", NOISE_SOLVE, trial_index)).objectives

    if sampler == "nsga3":
        return run_nsga3(profile.space, evaluator, NsgaParams(budget=budget, seed=seed), workers=workers)
    if sampler == "grid":
        return grid_search(profile.space, evaluator, budget, seed=seed, workers=workers)
    raise ValueError(f"unknown sampler {sampler!r}")


def build_pool(profile: Profile, front: ParetoFront, seed: int,
               policies: Sequence[Policy | str] = tuple(Policy)) -> ObservationPool:
    usable = [p for p in policies if _baseline_ok(p, front, profile)]
    return ObservationPool.build(needed_configs(front, profile.model, usable), profile.model, profile.device, seed)


def _baseline_ok(policy: Policy | str, front: ParetoFront, profile: Profile) -> bool:
    try:
        needed_configs(front, profile.model, [policy])
    except InfeasibleRequest:
        return False
    return True


def run_experiment(profile: Profile, front: ParetoFront, workload, policies: Sequence[Policy | str],
                   mode: str = "simulate", seed: int = 0, pool: ObservationPool | None = None) -> ExperimentReport:
    """Serve ``workload`` under each policy, either on the emulator or by trace replay."""
    mp, dp = profile.model, profile.device
    records = {}
    for p in map(Policy.parse, policies):
        if mode == "simulate":
            rng = substream(seed, "noise", NOISE_EXPERIMENT, list(Policy).index(p))
            records[p.value] = run_policy(p, workload, front, mp, dp, rng)
        elif mode == "replay":
            if pool is None:
                raise ValueError("replay mode needs an observation pool")
            records[p.value] = replay_policy(p, pool, front, workload, mp, dp, seed)
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return summarize(records, workload, mp.model_id)


# ---------------------------------------------------------------------------
# Output helpers


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class _Run:
    command: str
    out: Path
    params: dict
    inputs: dict
    outputs: list

    def write_manifest(self) -> Path:
        doc = {
            "schema": MANIFEST_SCHEMA,
            "version": __version__,
            "subcommand": self.command,
            "params": self.params,
            "inputs": {k: {"path": v, "sha256": _sha256(Path(v)) if Path(v).is_file() else None}
                       for k, v in sorted(self.inputs.items())},
            "outputs": {name: _sha256(self.out / name) for name in sorted(self.outputs)},
        }
        path = self.out / f"manifest-{self.command}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _profile_input(ref: str) -> dict:
    p = Path(ref)
    return {"profile": str(p)} if p.is_file() else {}


def _load(ref: str) -> Profile:
    try:
        return load_profile(ref)
    except (OSError, ProfileError, ValueError) as exc:
        raise BadInput(f"cannot load profile {ref!r}: {exc}") from exc


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_trials_csv(result: SearchResult, path: Path) -> None:
    on_front = set(result.front.configs)
    with open(path, "w", newline="") as fh:
        fh.write(f"# {TRIALS_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "model_id", "cpu_freq_ghz", "tpu_mode", "use_gpu", "split_layer",
                    "latency_ms", "energy_j", "accuracy", "on_front"])
        for t in result.trials:
            c, o = t.config, t.objectives
            w.writerow([t.index, c.model_id, f"{c.cpu_freq_ghz:g}", c.tpu_mode.label, int(c.use_gpu),
                        c.split_layer, repr(o.latency_ms), repr(o.energy_j), repr(o.accuracy), int(c in on_front)])


# ---------------------------------------------------------------------------
# Subcommands


def cmd_enumerate(args) -> int:
    profile = _load(args.profile)
    s = profile.space
    feasible = enumerate_space(s)
    print(f"{profile.model_id}: raw {s.raw_size}, feasible {len(feasible)}")
    if args.out:
        out = _out_dir(args.out)
        with open(out / "space.csv", "w", newline="") as fh:
            fh.write(f"# {SPACE_SCHEMA}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "model_id", "cpu_freq_ghz", "tpu_mode", "use_gpu", "split_layer", "decision"])
            for i, c in enumerate(feasible):
                w.writerow([i, c.model_id, f"{c.cpu_freq_ghz:g}", c.tpu_mode.label, int(c.use_gpu),
                            c.split_layer, c.decision_class(s.n_layers).value])
        _Run("enumerate", out, {"profile": args.profile, "raw": s.raw_size, "feasible": len(feasible)},
             _profile_input(args.profile), ["space.csv"]).write_manifest()
    return EXIT_OK


def cmd_solve(args) -> int:
    profile = _load(args.profile)
    out = _out_dir(args.out)
    try:
        result = solve(profile, args.sampler, args.budget, args.seed, args.workers)
    except ValueError as exc:
        if not enumerate_space(profile.space):
            raise InfeasibleRequest(str(exc)) from exc
        raise BadInput(str(exc)) from exc
    write_trials_csv(result, out / "trials.csv")
    write_front_csv(result.front, out / "front.csv")
    build_pool(profile, result.front, args.seed).write_csv(out / "pool.csv")
    print(f"{profile.model_id}: {len(result.trials)} trials, front of {len(result.front)}")
    _Run("solve", out, {"profile": args.profile, "sampler": args.sampler, "budget": args.budget, "seed": args.seed},
         _profile_input(args.profile), ["trials.csv", "front.csv", "pool.csv"]).write_manifest()
    return EXIT_OK


def cmd_workload(args) -> int:
    profile = _load(args.profile)
    bounds = profile.model.qos_bounds_ms
    lo = args.min_ms if args.min_ms is not None else (bounds[0] if bounds else None)
    hi = args.max_ms if args.max_ms is not None else (bounds[1] if bounds else None)
    if lo is None or hi is None:
        raise BadInput("the profile has no [workload] bounds; pass --min-ms and --max-ms")
    try:
        spec = WorkloadSpec(args.n, lo, hi, args.shape, args.seed, args.inferences, profile.model_id)
    except ValueError as exc:
        raise BadInput(str(exc)) from exc
    out = _out_dir(args.out)
    requests = generate_workload(spec)
    write_workload_csv(requests, out / "workload.csv")
    print(f"{profile.model_id}: {len(requests)} requests, qos {lo:g}..{hi:g} ms")
    _Run("workload", out, {"profile": args.profile, "n": args.n, "seed": args.seed, "shape": args.shape,
                           "min_ms": lo, "max_ms": hi, "inferences": args.inferences},
         _profile_input(args.profile), ["workload.csv"]).write_manifest()
    return EXIT_OK


def cmd_experiment(args) -> int:
    profile = _load(args.profile)
    try:
        front = read_front_csv(args.front)
        workload = read_workload_csv(args.workload, profile.model_id)
        policies = [Policy.parse(p) for p in args.policies.split(",") if p]
    except (OSError, ValueError, KeyError) as exc:
        raise BadInput(str(exc)) from exc
    if not policies:
        raise BadInput("no policies selected")
    foreign = {c.model_id for c in front.configs} - {profile.model_id}
    if foreign:
        raise BadInput(f"front was solved for {sorted(foreign)}, profile is {profile.model_id!r}")
    inputs = {"front": args.front, "workload": args.workload, **_profile_input(args.profile)}
    pool = None
    if args.mode == "replay":
        pool_path = Path(args.pool) if args.pool else Path(args.front).with_name("pool.csv")
        try:
            pool = ObservationPool.read_csv(pool_path, profile.model_id)
        except (OSError, ValueError, KeyError) as exc:
            raise BadInput(f"cannot read observation pool: {exc}") from exc
        inputs["pool"] = str(pool_path)
    try:
        report = run_experiment(profile, front, workload, policies, args.mode, args.seed, pool)
    except KeyError as exc:
        raise BadInput(str(exc.args[0])) from exc

    out = _out_dir(args.out)
    write_decisions_csv([r for recs in report.records.values() for r in recs], out / "decisions.csv")
    write_report_json(report, out / "report.json")
    write_summary_csv(report, out / "summary.csv")
    write_long_csv(long_rows(report), out / "plot.csv")
    _print_report(report.to_dict())
    _Run("experiment", out, {"profile": args.profile, "mode": args.mode, "seed": args.seed,
                             "policies": [p.value for p in policies]},
         inputs, ["decisions.csv", "report.json", "summary.csv", "plot.csv"]).write_manifest()
    return EXIT_OK


def _print_report(doc: dict) -> None:
    print(f"model {doc.get('model_id', '?')}")
    print(f"{'policy':<10} {'n':>6} {'viol%':>6} {'lat med ms':>11} {'E med J':>8} {'acc med':>8}  edge/split/cloud")
    for name, p in doc["policies"].items():
        st = p["stats"]
        d = p["decisions"]
        print(f"{name:<10} {p['n_requests']:>6} {100 * p['violation_rate']:>6.1f} {st['latency_ms']['median']:>11.1f} "
              f"{st['energy_j']['median']:>8.2f} {st['accuracy']['median']:>8.4f}  "
              f"{d.get('edge', 0)}/{d.get('split', 0)}/{d.get('cloud', 0)}")
    for name, saving in doc.get("energy_saving_vs_cloud", {}).items():
        print(f"mean energy saving vs cloud, {name}: {100 * saving:.1f}%")


def cmd_report(args) -> int:
    rows = []
    for path in args.reports:
        try:
            doc = read_report_json(path)
        except (OSError, ValueError) as exc:
            raise BadInput(f"{path}: {exc}") from exc
        _print_report(doc)
        model = doc.get("model_id", "")
        for name, p in doc["policies"].items():
            label = f"{model}:{name}" if model else name
            rows.append((label, "violation_rate", p["violation_rate"]))
            for metric, st in p["stats"].items():
                for key in ("min", "q1", "median", "q3", "max", "mean"):
                    rows.append((label, f"{metric}.{key}", st[key]))
    if args.out:
        out = _out_dir(args.out)
        write_long_csv(rows, out / "report-plot.csv")
        _Run("report", out, {"reports": list(args.reports)}, {f"report{i}": p for i, p in enumerate(args.reports)},
             ["report-plot.csv"]).write_manifest()
    return EXIT_OK


# ---------------------------------------------------------------------------


def _budget(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value <= 0 or (value > 1 and value != int(value)):
        raise argparse.ArgumentTypeError("budget is a fraction in (0, 1] or an integer trial count")
    return value


def _workers(text: str) -> int:
    value = int(text)
    if value == 0:
        return os.cpu_count() or 1
    if value < 0:
        raise argparse.ArgumentTypeError("workers must be >= 0 (0 means one per CPU)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splitsim", description=__doc__, epilog=EPILOG,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=EPILOG,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--profile", required=True, help="bundled profile name or path to a .profile file")
        return p

    p = add("enumerate", "count and list the feasible configurations")
    p.add_argument("--out", help="directory for space.csv")
    p.set_defaults(func=cmd_enumerate)

    p = add("solve", "search the space and write trials, front and replay pool")
    p.add_argument("--sampler", choices=("nsga3", "grid"), default="nsga3")
    p.add_argument("--budget", type=_budget, default=0.20,
                   help="fraction of the feasible space, or an absolute trial count (default 0.20)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_workers, default=1, help="parallel evaluations; 0 = one per CPU")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = add("workload", "generate a request stream")
    p.add_argument("--n", type=int, default=50, help="number of requests (default 50)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", type=float, default=1.0, help="Weibull shape (default 1)")
    p.add_argument("--min-ms", type=float, help="override the profile's lower QoS bound")
    p.add_argument("--max-ms", type=float, help="override the profile's upper QoS bound")
    p.add_argument("--inferences", type=int, default=1000, help="inferences per request (default 1000)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_workload)

    p = add("experiment", "serve a workload under one or more policies")
    p.add_argument("--front", required=True, help="front CSV from solve")
    p.add_argument("--workload", required=True, help="workload CSV")
    p.add_argument("--policies", default=",".join(x.value for x in Policy),
                   help="comma-separated subset of: " + ", ".join(x.value for x in Policy))
    p.add_argument("--mode", choices=("simulate", "replay"), default="simulate")
    p.add_argument("--pool", help="observation pool CSV for replay (default: pool.csv beside the front)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="summarize report.json files", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", help="directory for report-plot.csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BadInput as exc:
        print(f"splitsim: error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except InfeasibleRequest as exc:
        print(f"splitsim: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
