"""Command-line driver: ``rnl {norm, entropy, channel-norm, verify, qkd}``.

Exit codes: 0 success, 1 failed checks or certificates, 2 usage or input
errors.  Input files that do not exist locally are looked up among the
bundled fixtures, so ``rnl norm --op id2.json --profile Q:2`` works anywhere.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .channels import (
    LinearConstraint,
    cb_entropy,
    min_output_entropy,
    restricted_cb_entropy,
    trivial_constraint,
)
from .entropy import (
    ClassicalQuantumState,
    WeightFunction,
    cond_renyi_up,
    cq_conditional_entropy,
    f_weighted_entropy,
    von_neumann_conditional,
)
from .harness import CHECK_NAMES, SuiteConfig, run_suite
from .operators import KrausChannel, LabeledOperator, hermitian_part
from .qkd import (
    CertificateError,
    InfeasibleStatisticsError,
    ProtocolRound,
    SizeError,
    asymptotic_rates,
    load_schedule,
    probe_hyperplane,
    simulate_protocol,
    solve_key_rate,
    supporting_hyperplane,
)
from .schatten import IndexProfile, OptimizerConfig, UnsupportedProfileError, norm_multi_index

FORMATS = ("table", "json", "csv")


class UsageError(Exception):
    """Bad input: reported on stderr with exit code 2."""


class CheckFailure(Exception):
    """A computed certificate or check failed: exit code 1."""


# ---------------------------------------------------------------- input


def fixture_path(name: str) -> Path | None:
    p = resources.files("rnl") / "fixtures" / name
    return Path(str(p)) if p.is_file() else None


def resolve(path: str) -> Path:
    p = Path(path)
    if p.is_file():
        return p
    bundled = fixture_path(p.name)
    if bundled is not None:
        return bundled
    raise UsageError(f"{path}: no such file (and no bundled fixture of that name)")


def read_json(path: str):
    p = resolve(path)
    text = p.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON ({exc.msg})") from None


def _typed(path: str, build, what: str):
    obj = read_json(path)
    try:
        return build(obj)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{path}: not a valid {what} file (missing or malformed field {exc})") from None
    except ValueError as exc:
        raise UsageError(f"{path}: invalid {what}: {exc}") from None


def load_operator(path: str) -> LabeledOperator:
    return _typed(path, LabeledOperator.from_json, "operator")


def load_channel(path: str) -> KrausChannel:
    return _typed(path, KrausChannel.from_json, "channel")


def load_constraint(path: str) -> LinearConstraint:
    return _typed(path, LinearConstraint.from_json, "constraint")


def load_cq_state(path: str) -> ClassicalQuantumState:
    return _typed(path, ClassicalQuantumState.from_json, "cq-state")


def load_schedule_file(path: str):
    return _typed(path, load_schedule, "schedule")


def load_round(path: str) -> ProtocolRound:
    return _typed(path, ProtocolRound.from_json, "round")


def _density_matrix(op: LabeledOperator, path: str) -> LabeledOperator:
    m = op.entries
    if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-8:
        raise UsageError(f"{path}: state is not Hermitian")
    if np.linalg.eigvalsh(hermitian_part(m))[0] < -1e-8:
        raise UsageError(f"{path}: state is not positive semidefinite")
    if abs(np.trace(m).real - 1) > 1e-8:
        raise UsageError(f"{path}: state does not have unit trace")
    return op


def _cfg(args) -> OptimizerConfig:
    base = OptimizerConfig(seed=args.seed)
    if getattr(args, "cfg", None):
        text = args.cfg
        obj = read_json(text) if not text.lstrip().startswith("{") else _inline_json(text)
        allowed = {"restarts", "max_iters", "rel_tol", "fd_step", "tied"}
        bad = set(obj) - allowed
        if bad:
            raise UsageError(f"--cfg: unknown optimizer fields {sorted(bad)}")
        base = OptimizerConfig(**{**asdict(base), **obj})
    return base


def _inline_json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--cfg:{exc.lineno}:{exc.colno}: malformed JSON ({exc.msg})") from None


# ---------------------------------------------------------------- output


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v + 0.0  # no negative zero
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _short(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v) + 0.0:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _cell(v) -> str:
    v = _clean(v)
    if isinstance(v, str):
        return v
    if isinstance(v, float):
        return repr(v)
    return json.dumps(v)


class Report:
    """Rows shown in every format plus extras that only the JSON form carries."""

    def __init__(self, command: str, config: dict):
        self.command = command
        self.config = config
        self.rows: list[tuple[str, object]] = []
        self.extra: dict = {}

    def add(self, key: str, value) -> None:
        self.rows.append((key, value))

    def render(self, fmt: str) -> str:
        if fmt == "json":
            body = {"command": self.command, "config": _clean(self.config),
                    "result": _clean(dict(self.rows)), **_clean(self.extra)}
            return json.dumps(body, indent=2, sort_keys=True) + "\n"
        if fmt == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["section", "key", "value"])
            for k, v in sorted(self.config.items()):
                w.writerow(["config", k, _cell(v)])
            for k, v in self.rows:
                w.writerow(["result", k, _cell(v)])
            return buf.getvalue()
        lines = [f"# rnl {self.command}"]
        lines.append("# config: " + " ".join(f"{k}={json.dumps(_clean(v))}" for k, v in sorted(self.config.items())))
        width = max((len(k) for k, _ in self.rows), default=0)
        for k, v in self.rows:
            lines.append(f"{k.ljust(width)}  {_short(v)}")
        return "\n".join(lines) + "\n"


def _trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(hermitian_part(a - b)))))


def _op_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


# ---------------------------------------------------------------- commands


def cmd_norm(args) -> int:
    op = load_operator(args.op)
    cfg = _cfg(args)
    try:
        prof = IndexProfile.parse(args.profile)
        res = norm_multi_index(op, prof, cfg)
    except UnsupportedProfileError as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        raise UsageError(f"--profile: {exc}") from None
    rep = Report("norm", {"op": args.op, "profile": str(prof), "seed": cfg.seed, "restarts": cfg.restarts,
                          "max_iters": cfg.max_iters, "rel_tol": cfg.rel_tol})
    rep.add("value", res.value)
    rep.add("log_value", res.log_value)
    rep.add("bound", res.bound)
    rep.add("converged", res.converged)
    # distance of each weight state from maximally mixed
    dists = [_trace_distance(s, np.eye(s.shape[0]) / s.shape[0]) for s in res.witness]
    rep.add("witness_trace_distances", dists)
    rep.extra["witness"] = [_op_json(s) for s in res.witness]
    _emit(args, rep)
    return 0


def cmd_entropy(args) -> int:
    cfg = _cfg(args)
    obj = read_json(args.state)
    is_cq = isinstance(obj, dict) and "outcomes" in obj
    conf = {"state": args.state, "kind": args.kind, "alpha": args.alpha, "seed": cfg.seed,
            "condition": args.condition, "f": args.f}
    rep = Report("entropy", conf)
    if args.kind == "f-weighted":
        if not is_cq:
            raise UsageError(f"{args.state}: f-weighted entropy needs a cq-state file (with 'outcomes')")
        st = load_cq_state(args.state)
        f = None
        if args.f:
            table = read_json(args.f)
            missing = set(map(str, st.symbols)) - set(map(str, table))
            if missing:
                raise UsageError(f"{args.f}: weights missing for outcomes {sorted(missing)}")
            f = WeightFunction({x: table[str(x)] for x in st.symbols})
        _alpha_ok(args.alpha)
        rep.add("value", f_weighted_entropy(st, f, args.alpha, cfg))
        rep.add("unit", "bits")
    elif args.kind == "vn":
        if is_cq:
            rep.add("value", cq_conditional_entropy(load_cq_state(args.state)))
        else:
            op = _density_matrix(load_operator(args.state), args.state)
            cond = _condition(args, op)
            rep.add("value", von_neumann_conditional(op, cond))
        rep.add("unit", "bits")
    else:
        if is_cq:
            raise UsageError(f"{args.state}: cond-renyi expects an operator file")
        _alpha_ok(args.alpha)
        op = _density_matrix(load_operator(args.state), args.state)
        cond = _condition(args, op)
        res = cond_renyi_up(op, args.alpha, cfg, condition=cond)
        rep.add("value", res.value)
        rep.add("unit", "bits")
        rep.add("converged", res.converged)
        rep.add("norm_path", res.norm_path)
        rep.add("sigma_path", res.sigma_path)
        rep.extra["sigma"] = _op_json(res.sigma)
    _emit(args, rep)
    return 0


def _alpha_ok(alpha: float) -> None:
    if not alpha > 1:
        raise UsageError("--alpha must exceed 1")


def _condition(args, op: LabeledOperator) -> list[str]:
    if args.condition:
        cond = [c.strip() for c in args.condition.split(",") if c.strip()]
        bad = [c for c in cond if c not in op.labels]
        if bad:
            raise UsageError(f"--condition: unknown labels {bad} (state has {op.labels})")
        if op.labels[: len(cond)] != cond:
            raise UsageError(f"--condition: conditioning labels must lead the factor order {op.labels}")
        return cond
    return op.labels[:1]


def cmd_channel_norm(args) -> int:
    cfg = _cfg(args)
    phi = load_channel(args.channel)
    _alpha_ok(args.alpha)
    cond = [c.strip() for c in args.condition.split(",")] if args.condition else None
    if cond and any(c not in phi.out_labels for c in cond):
        raise UsageError(f"--condition: labels must be outputs of the channel {phi.out_labels}")
    conf = {"channel": args.channel, "kind": args.kind, "alpha": args.alpha, "seed": cfg.seed,
            "restarts": cfg.restarts, "constraint": args.constraint, "condition": args.condition}
    if args.kind == "plain":
        res = min_output_entropy(phi, args.alpha, cfg, cond)
    elif args.kind == "cb":
        res = cb_entropy(phi, args.alpha, cfg, cond)
    else:
        r = load_constraint(args.constraint) if args.constraint else trivial_constraint(phi.d_in, phi.in_labels[0])
        if r.n_map.d_in != phi.d_in:
            raise UsageError(f"{args.constraint}: constraint input dimension {r.n_map.d_in} != channel input {phi.d_in}")
        res = restricted_cb_entropy(phi, args.alpha, r, cfg, cond)
    rep = Report("channel-norm", conf)
    rep.add("entropy", res.log_value)
    rep.add("unit", "bits")
    rep.add("log_norm", res.log_norm)
    rep.add("norm", res.norm)
    rep.add("converged", res.converged)
    if res.witness_state is not None:
        rep.extra["witness_input"] = _op_json(res.witness_state.entries)
    _emit(args, rep)
    return 0


def cmd_verify(args) -> int:
    checks = tuple(c.strip() for c in args.checks.split(",")) if args.checks else None
    if checks:
        bad = sorted(set(checks) - set(CHECK_NAMES))
        if bad:
            raise UsageError(f"--checks: unknown checks {bad}; choose from {', '.join(CHECK_NAMES)}")
    try:
        alphas = tuple(float(a) for a in args.alphas.split(","))
        cfg = SuiteConfig(seed=args.seed, trials=args.trials, alphas=alphas, checks=checks, jobs=args.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
    report = run_suite(cfg, progress)
    text = report.to_json(timings=args.timings)
    if args.out != "-":
        Path(args.out).write_text(text + "\n")
    rep = Report("verify", {**report.config, "out": args.out})
    for c in report.checks:
        rep.add(f"{c.name}.trials", len(c.records))
        rep.add(f"{c.name}.violations", c.violations)
        rep.add(f"{c.name}.inconclusive", c.inconclusive)
        rep.add(f"{c.name}.worst_slack", c.worst_slack)
    rep.add("pass", report.passed)
    if args.out == "-":
        sys.stdout.write(text + "\n")
    else:
        _emit(args, rep)
    return 0 if report.passed else 1


def cmd_qkd_rate(args) -> int:
    cfg = _cfg(args)
    sched, ec_file = load_schedule_file(args.schedule)
    ec = args.ec_error if args.ec_error is not None else ec_file
    try:
        br = asymptotic_rates(sched, ec, cfg)
    except InfeasibleStatisticsError as exc:
        raise CheckFailure(str(exc)) from None
    rep = Report("qkd rate", {"schedule": args.schedule, "ec_error": br.ec_error, "seed": cfg.seed})
    for i, (e, h) in enumerate(zip(sched, br.per_round)):
        rep.add(f"round{i}.{e.round.name}.weight", e.weight)
        for k, v in sorted(e.round.params.items()):
            rep.add(f"round{i}.{e.round.name}.{k}", v)
        rep.add(f"round{i}.{e.round.name}.h", h)
    for k in ("r_ad", "r_na", "ec_cost", "sk_adaptive", "sk_static"):
        rep.add(k, getattr(br, k))
    rep.add("improvement", br.improvement)
    if args.format == "table":
        # three-decimal summary next to the full-precision rows
        rep.add("summary", f"sk_adaptive≈{br.sk_adaptive:.3f} sk_static≈{br.sk_static:.3f} "
                           f"improvement≈{100 * br.improvement:.0f}%")
    _emit(args, rep)
    return 0


def cmd_qkd_hyperplane(args) -> int:
    cfg = _cfg(args)
    rnd = load_round(args.round)
    try:
        f = supporting_hyperplane(rnd, cfg=cfg, step=args.step, probes=0)
    except (ValueError, InfeasibleStatisticsError) as exc:
        raise CheckFailure(str(exc)) from None
    q0 = rnd.statistics()
    h0 = solve_key_rate(rnd, q0, cfg, rho_start=rnd.honest_input.entries, restarts=0).value
    tangency = float(sum(f(x) * q for x, q in zip(rnd.symbols, q0)))
    worst = probe_hyperplane(rnd, f, args.probes, args.seed, cfg) if args.probes else -math.inf
    rep = Report("qkd hyperplane", {"round": args.round, "step": args.step, "probes": args.probes,
                                    "probe_tol": args.probe_tol, "seed": args.seed})
    for x in rnd.symbols:
        rep.add(f"f[{x}]", f(x))
    rep.add("h_honest", h0)
    rep.add("expected_f", tangency)
    rep.add("worst_probe_excess", worst)
    ok = worst <= args.probe_tol
    rep.add("certified", ok)
    _emit(args, rep)
    if not ok:
        print(f"certificate failure: hyperplane exceeds h by {worst:.3g} on a probe", file=sys.stderr)
        return 1
    return 0


def cmd_qkd_simulate(args) -> int:
    cfg = _cfg(args)
    sched, _ = load_schedule_file(args.schedule)
    if args.n < 1:
        raise UsageError("--n must be positive")
    if not 0 < args.eps < 1:
        raise UsageError("--eps must lie in (0, 1)")
    try:
        sim = simulate_protocol(sched, args.n, args.seed, args.eps, args.samples, args.penalty_sign, cfg,
                                exact=args.exact, key_length=args.key_length)
    except SizeError as exc:
        raise UsageError(str(exc)) from None
    except CertificateError as exc:
        raise CheckFailure(str(exc)) from None
    conf = {"schedule": args.schedule, "n": args.n, "eps": args.eps, "seed": args.seed, "samples": args.samples,
            "penalty_sign": args.penalty_sign, "exact": args.exact, "key_length": args.key_length}
    rep = Report("qkd simulate", conf)
    rep.add("alpha", sim.alpha)
    rep.add("delta", sim.delta)
    rep.add("key_length", sim.key_lengths[0])
    rep.add("empirical_rate", sim.empirical_rate)
    rep.add("mean_rate", sim.expected_rate_estimate)
    if sim.security is not None:
        s = sim.security
        rep.add("epsilon", s.epsilon)
        rep.add("epsilon_bound", s.bound)
        rep.add("bound_alpha", s.bound_alpha)
        rep.add("seeds", s.seeds)
        rep.add("exact_seed_average", s.exact_seed_average)
    rep.extra["xs"] = [str(x) for x in sim.xs]
    _emit(args, rep)
    return 0


def _emit(args, rep: Report) -> None:
    sys.stdout.write(rep.render(args.format))


# ---------------------------------------------------------------- parser


def _default_seed() -> int:
    raw = os.environ.get("RNL_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"RNL_SEED must be an integer, got {raw!r}") from None


def build_parser(seed: int) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=FORMATS, default="table",
                        help="output format (json/csv keep full precision; default: table)")
    common.add_argument("--seed", type=int, default=seed,
                        help="random seed for optimizer restarts and sampling (default: $RNL_SEED or 0)")
    opt = argparse.ArgumentParser(add_help=False)
    opt.add_argument("--cfg", help="optimizer settings as a JSON file or inline object, "
                                   "fields restarts, max_iters, rel_tol, fd_step, tied")

    ap = argparse.ArgumentParser(prog="rnl", description="Operator-valued Schatten norms, Rényi conditional "
                                 "entropies, channel norms and adaptive QKD key rates.")
    ap.add_argument("--version", action="version", version=f"rnl {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="{norm,entropy,channel-norm,verify,qkd}")

    p = sub.add_parser("norm", parents=[common, opt], help="multi-index Schatten norm of an operator")
    p.add_argument("--op", required=True, help="operator JSON file")
    p.add_argument("--profile", required=True, help='index profile such as "Q:1,T:2" (use inf for ∞)')
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("entropy", parents=[common, opt], help="conditional entropies of a state")
    p.add_argument("--state", required=True, help="operator JSON file, or cq-state JSON for f-weighted")
    p.add_argument("--kind", choices=("cond-renyi", "vn", "f-weighted"), default="cond-renyi",
                   help="which entropy (default: cond-renyi)")
    p.add_argument("--alpha", type=float, default=2.0, help="Rényi order > 1 (default: 2)")
    p.add_argument("--f", help="JSON object mapping outcomes to weights (f-weighted only)")
    p.add_argument("--condition", help="comma-separated conditioning labels (default: first factor)")
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("channel-norm", parents=[common, opt], help="minimum-output and cb entropies of a channel")
    p.add_argument("--channel", required=True, help="channel JSON file")
    p.add_argument("--alpha", type=float, default=2.0, help="Rényi order > 1 (default: 2)")
    p.add_argument("--kind", choices=("plain", "cb", "restricted"), default="cb", help="default: cb")
    p.add_argument("--constraint", help="constraint JSON file (restricted only; default: no constraint)")
    p.add_argument("--condition", help="comma-separated output labels conditioned on (default: all but the last)")
    p.set_defaults(func=cmd_channel_norm)

    p = sub.add_parser("verify", parents=[common], help="randomized verification suite")
    p.add_argument("--trials", type=int, default=50, help="trials per check (default: 50)")
    p.add_argument("--alphas", default="1.5,2,3", help="comma-separated orders (default: 1.5,2,3)")
    p.add_argument("--out", default="report.json", help="report path, or - for stdout (default: report.json)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers, -1 for all cores (default: 1)")
    p.add_argument("--checks", help=f"comma-separated subset of: {', '.join(CHECK_NAMES)}")
    p.add_argument("--timings", action="store_true", help="include runtimes (makes reports non-reproducible)")
    p.add_argument("--quiet", action="store_true", help="no progress lines on stderr")
    p.set_defaults(func=cmd_verify)

    q = sub.add_parser("qkd", help="adaptive QKD key rates").add_subparsers(dest="qkd_command", required=True)
    p = q.add_parser("rate", parents=[common], help="adaptive versus static asymptotic rates")
    p.add_argument("--schedule", required=True, help="schedule JSON file")
    p.add_argument("--ec-error", type=float, help="error rate charged for error correction "
                                                  "(default: from the schedule, else the mean error rate)")
    p.set_defaults(func=cmd_qkd_rate)

    p = q.add_parser("hyperplane", parents=[common], help="supporting hyperplane of the key rate")
    p.add_argument("--round", required=True, help='round JSON file: a full round or shorthand such as {"bb84": {"p": 0.1}}')
    p.add_argument("--step", type=float, default=1e-3, help="relative finite-difference step (default: 1e-3)")
    p.add_argument("--probes", type=int, default=20, help="random feasible probes (default: 20)")
    p.add_argument("--probe-tol", type=float, default=5e-3, help="allowed excess on probes (default: 5e-3)")
    p.set_defaults(func=cmd_qkd_hyperplane)

    p = q.add_parser("simulate", parents=[common], help="sample a run and its key length")
    p.add_argument("--schedule", required=True, help="schedule JSON file")
    p.add_argument("--n", type=int, required=True, help="number of rounds")
    p.add_argument("--eps", type=float, default=1e-6, help="security parameter (default: 1e-6)")
    p.add_argument("--samples", type=int, default=1, help="independent runs averaged in mean_rate (default: 1)")
    p.add_argument("--penalty-sign", choices=("conservative", "verbatim"), default="conservative",
                   help="sign of the log(1/eps) term in the key-length penalty (default: conservative)")
    p.add_argument("--exact", action="store_true", help="also compute exact trace-distance security (n <= 8)")
    p.add_argument("--key-length", type=int, help="fixed key length for the exact path instead of g_n")
    p.set_defaults(func=cmd_qkd_simulate)
    return ap


def main(argv=None) -> int:
    try:
        parser = build_parser(_default_seed())
    except UsageError as exc:
        print(f"rnl: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        with np.errstate(all="ignore"):
            return args.func(args)
    except UsageError as exc:
        print(f"rnl: error: {exc}", file=sys.stderr)
        return 2
    except CheckFailure as exc:
        print(f"rnl: check failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
