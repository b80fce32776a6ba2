"""Command-line experiment runner.

Subcommands::

    nonlinritz run     --config cfg.json [--out-dir D] [--seed N] [--max-epochs N]
    nonlinritz certify --config cfg.json [--out-dir D] ...
    nonlinritz grid    --config cfg.json [--out-dir D] ...
    nonlinritz check   --config cfg.json ...

``run`` executes the alternating minimisation and writes ``trace.csv`` and
``summary.json``; ``certify`` evaluates the certificate suite against those
artifacts (the config hash must match) and writes ``report.json``;
``grid`` writes a brute-force minimiser oracle to ``oracle.json``;
``check`` runs the internal invariant battery on the configured problem.

Exit codes: 0 success, 1 certificate/invariant failure, 2 configuration
error, 3 numerical failure.  ``NONLINRITZ_THREADS`` caps BLAS/OpenMP
parallelism.  All numeric output uses 17 significant digits, so every
value round-trips exactly to the double that produced it.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import certify as cert
from .assembly import assemble, check_consistency, check_lambda_max_bound
from .config import ExperimentConfig, parse_config
from .errors import ConfigError, NonlinRitzError, NumericalError
from .optimizer import (
    LipschitzAdaptive,
    reduced_energy,
    reduced_gradient,
    run,
)
from .updates import prox_optimality_residual, prox_step
from .variational import integrate

TRACE_COLUMNS = (
    "iter",
    "K",
    "K_reduced",
    "grad_map_norm",
    "gradW_norm",
    "gamma",
    "step_norm",
    "decrease_lhs",
    "decrease_rhs",
    "delta_star",
    "stop_reason",
)


# ---------------------------------------------------------------------------
# deterministic formatting
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _fmt_opt(x) -> str:
    return "" if x is None else _fmt(x)


def _dumps(obj, indent=0) -> str:
    """JSON text with floats at 17 significant digits."""
    pad = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if math.isnan(obj):
            return '"nan"'
        if math.isinf(obj):
            return '"inf"' if obj > 0 else '"-inf"'
        return _fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = [_dumps(v, indent + 1) for v in obj]
        if not items:
            return "[]"
        inner = ",\n".join("  " * (indent + 1) + s for s in items)
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(obj, dict):
        items = [
            "  " * (indent + 1) + json.dumps(str(k)) + ": " + _dumps(v, indent + 1)
            for k, v in obj.items()
        ]
        if not items:
            return "{}"
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (np.floating,)):
        return _dumps(float(obj), indent)
    if isinstance(obj, (np.integer,)):
        return str(int(obj))
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def render_trace(record) -> str:
    """The exact byte content of trace.csv for a run record."""
    lines = [",".join(TRACE_COLUMNS)]
    last = len(record.iterates) - 1
    for it in record.iterates:
        cells = [
            str(it.k),
            _fmt(it.K),
            _fmt(it.K_reduced),
            _fmt_opt(it.grad_map_norm),
            _fmt_opt(it.grad_w_post_norm),
            _fmt_opt(it.gamma),
            _fmt_opt(it.step_norm),
            _fmt_opt(it.decrease_achieved),
            _fmt_opt(it.decrease_guaranteed),
            _fmt_opt(it.delta_star),
            record.termination if it.k == last else "",
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# shared execution helpers
# ---------------------------------------------------------------------------


def build_oracle(cfg: ExperimentConfig):
    spec = cfg.oracle_spec
    if spec is None:
        return None
    if spec["kind"] == "points":
        return cert.AnalyticPointsOracle(
            points=np.array(spec["points"], dtype=float), K_star=float(spec["K_star"])
        )
    if spec["kind"] == "sphere":
        return cert.AnalyticSphereOracle(
            center=np.array(spec["center"], dtype=float),
            radius=float(spec["radius"]),
            K_star=float(spec["K_star"]),
        )
    frozen_w = cfg.w0 if cfg.raw["linear_rule"]["kind"] == "frozen" else None
    return cert.minimiser_grid_oracle(
        cfg.problem, cfg.rule, cfg.family, float(spec["resolution"]), frozen_w=frozen_w
    )


def execute(cfg: ExperimentConfig, oracle=None):
    """Deterministic run of the configured experiment."""
    if oracle is None:
        oracle = build_oracle(cfg)
    dfn = None
    if oracle is not None:
        dfn = lambda xi: cert.delta_star(cfg.geometry, oracle, xi)[0]  # noqa: E731
    record = run(
        cfg.problem,
        cfg.rule,
        cfg.family,
        cfg.linear_rule,
        cfg.geometry,
        cfg.schedule,
        cfg.stopping,
        cfg.xi0,
        w0=cfg.w0,
        gradient_mode=cfg.gradient_mode,
        fd_step=cfg.fd_step,
        omega_min=cfg.omega_min,
        delta_star_fn=dfn,
    )
    return record, oracle


def _quasi_level(cfg: ExperimentConfig, record):
    """Certified quasi-stationarity level at the stopped iterate, if available."""
    if record.termination != "xi_stabilised" or record.n_steps == 0:
        return None
    L = cfg.certify_spec.get("L", record.hoelder_L)
    nu = cfg.certify_spec.get("nu", record.hoelder_nu)
    if L is None:
        return None
    last = record.iterates[-2]
    xi_stop = record.iterates[-1].xi
    if record.frozen:
        res = 0.0
    else:
        system = assemble(cfg.problem, cfg.rule, cfg.family, xi_stop)
        _, w_fin = reduced_energy(cfg.problem, cfg.rule, cfg.family, xi_stop)
        res = float(np.linalg.norm(system.matrix @ w_fin - system.load))
    c = math.hypot(last.grad_map_norm, res)
    return cert.quasi_stationarity_level(float(L), float(nu), last.gamma, record.mu, c)


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_run(cfg: ExperimentConfig, out_dir: str) -> int:
    record, _ = execute(cfg)
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "trace.csv"), render_trace(record))
    summary = {
        "best_energy": record.final_K,
        "iterations": record.n_steps,
        "termination": record.termination,
        "quasi_stationarity_level": _quasi_level(cfg, record),
        "config_hash": cfg.config_hash,
    }
    _write(os.path.join(out_dir, "summary.json"), _dumps(summary) + "\n")
    print(f"wrote {out_dir}/trace.csv and {out_dir}/summary.json")
    print(
        f"best energy {_fmt(record.final_K)} after {record.n_steps} step(s); "
        f"terminated by {record.termination}"
    )
    return 0


def cmd_grid(cfg: ExperimentConfig, out_dir: str) -> int:
    if cfg.oracle_spec is None or cfg.oracle_spec["kind"] != "grid":
        raise ConfigError("the grid subcommand needs an oracle of kind 'grid'")
    oracle = build_oracle(cfg)
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        "kind": "grid",
        "K_star": oracle.K_star,
        "resolution": oracle.resolution,
        "slack": oracle.slack,
        "n_points": int(oracle.points.shape[0]),
        "minimisers": oracle.minimisers,
        "config_hash": cfg.config_hash,
    }
    _write(os.path.join(out_dir, "oracle.json"), _dumps(payload) + "\n")
    print(
        f"wrote {out_dir}/oracle.json: K* = {_fmt(oracle.K_star)}, "
        f"{oracle.minimisers.shape[0]} minimiser(s) within slack {_fmt(oracle.slack)}"
    )
    return 0


def _parse_trace(text: str):
    lines = text.splitlines()
    if not lines or tuple(lines[0].split(",")) != TRACE_COLUMNS:
        raise ConfigError("trace.csv: unexpected header")
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(TRACE_COLUMNS):
            raise ConfigError("trace.csv: wrong number of columns")
        row = {"iter": int(cells[0]), "stop_reason": cells[-1]}
        for key, cell in zip(TRACE_COLUMNS[1:-1], cells[1:-1]):
            row[key] = float(cell) if cell else None
        rows.append(row)
    return rows


def _trace_artifact_entries(rows, monotone_asserted: bool):
    """Certificates evaluated directly on the written artifact numbers."""
    entries = []
    finite = all(
        v is None or math.isfinite(v)
        for row in rows
        for k, v in row.items()
        if k not in ("iter", "stop_reason")
    )
    entries.append(
        cert.CertificateEntry(
            "trace-finite", f"{len(rows)} rows", 0.0, 0.0, 0.0,
            "pass" if finite else "fail",
            "all recorded values are finite" if finite else "non-finite value in trace",
        )
    )
    worst = None
    n_checked = 0
    for row in rows:
        if row["decrease_lhs"] is None:
            continue
        n_checked += 1
        e = cert.CertificateEntry(
            "linear-decrease (trace)",
            f"step {row['iter']}",
            row["decrease_rhs"],
            row["decrease_lhs"],
            row["decrease_lhs"] - row["decrease_rhs"],
            "pass" if row["decrease_rhs"] <= row["decrease_lhs"] + 1e-9 else "fail",
        )
        if worst is None or e.margin < worst.margin:
            worst = e
    if worst is not None:
        worst.note = f"checked {n_checked} recorded updates"
        entries.append(worst)
    if monotone_asserted and len(rows) > 1:
        worst = None
        for a, b in zip(rows[:-1], rows[1:]):
            tol = 1e-10 * (1.0 + abs(a["K"]))
            e = cert.CertificateEntry(
                "energy-monotone (trace)",
                f"step {a['iter']}",
                b["K"],
                a["K"],
                a["K"] - b["K"],
                "pass" if b["K"] <= a["K"] + tol else "fail",
            )
            if worst is None or e.margin < worst.margin:
                worst = e
        worst.note = f"checked {len(rows) - 1} recorded steps"
        entries.append(worst)
    return entries


def cmd_certify(cfg: ExperimentConfig, out_dir: str) -> int:
    trace_path = os.path.join(out_dir, "trace.csv")
    summary_path = os.path.join(out_dir, "summary.json")
    for p in (trace_path, summary_path):
        if not os.path.exists(p):
            raise ConfigError(f"missing run artifact {p}; run the 'run' subcommand first")
    with open(summary_path, "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    if summary.get("config_hash") != cfg.config_hash:
        raise ConfigError(
            "config hash mismatch between the supplied config and summary.json; "
            "refusing to certify artifacts produced by a different configuration"
        )
    with open(trace_path, "r", encoding="utf-8", newline="") as fh:
        trace_text = fh.read()

    adaptive = isinstance(cfg.schedule, LipschitzAdaptive)
    report = cert.CertificateReport()
    report.extend(_trace_artifact_entries(_parse_trace(trace_text), adaptive))

    # deterministic re-run for the state-dependent certificates
    record, oracle = execute(cfg)
    regenerated = render_trace(record)
    report.extend(
        cert.CertificateEntry(
            "trace-consistency",
            f"{len(record.iterates)} rows",
            0.0,
            0.0,
            0.0,
            "pass" if regenerated == trace_text else "fail",
            "recomputed trace is byte-identical"
            if regenerated == trace_text
            else "trace.csv differs from the deterministic recomputation",
        )
    )

    report.extend(cert.lambda_max_certificate(record, cfg.constants))
    if cfg.omega_min is not None:
        report.extend(cert.spd_certificate(record, cfg.omega_min))
    report.extend(cert.decrease_certificate(record))
    if adaptive:
        report.extend(cert.energy_monotonicity_certificate(record))
    else:
        report.extend(
            cert._skipped(
                "energy-monotone",
                "constant step size: the descent step condition is not verified",
            )
        )

    spec = cfg.certify_spec
    K_lower = spec.get("K_star_lower", cfg.K_star)
    if K_lower is None and oracle is not None:
        K_lower = oracle.K_star
    if K_lower is not None:
        report.extend(cert.local_rate_certificate(record, float(K_lower)))
    else:
        report.extend(
            cert._skipped("local-rate", "no lower energy bound (K_star) available")
        )

    if all(k in spec for k in ("L", "nu", "eps_target")):
        report.extend(
            cert.surrogate_certificate(
                record, cfg.problem, cfg.rule, cfg.family,
                float(spec["L"]), float(spec["nu"]), float(spec["eps_target"]),
            )
        )

    if oracle is not None:
        report.extend(
            cert.global_rate_certificate(record, cfg.geometry, oracle, rho=cfg.rho)
        )
        if "L_bar" in spec:
            report.extend(
                cert.global_step_certificate(
                    record, cfg.geometry, oracle, float(spec["L_bar"]), rho=cfg.rho
                )
            )
            zeta = spec.get("zeta")
            if zeta is None and adaptive:
                zeta = cfg.schedule.zeta
            if zeta is not None and cfg.raw["problem"]["kind"] == "l2":
                result = cert.cea_certificate(
                    record, cfg.problem, cfg.rule, cfg.family,
                    cfg.problem.target, oracle,
                    float(spec["L_bar"]), float(zeta), cfg.geometry,
                    best_in_V=spec.get("best_in_V"),
                )
                report.extend(result.entry)

    os.makedirs(out_dir, exist_ok=True)
    payload = {"config_hash": cfg.config_hash}
    payload.update(report.to_dict())
    _write(os.path.join(out_dir, "report.json"), _dumps(payload) + "\n")

    tags = {"pass": "PASS", "fail": "FAIL", "skipped": "SKIP"}
    for e in report.entries:
        line = f"[{tags[e.status]}] {e.name} @ {e.anchor}"
        if e.status != "skipped":
            line += f": lhs={_fmt(e.lhs)} rhs={_fmt(e.rhs)} margin={_fmt(e.margin)}"
        if e.note:
            line += f"  ({e.note})"
        print(line)
    n_fail = len(report.failures)
    print(
        f"certified {len(report.entries)} entries: "
        f"{sum(1 for e in report.entries if e.status == 'pass')} passed, "
        f"{n_fail} failed, "
        f"{sum(1 for e in report.entries if e.status == 'skipped')} skipped"
    )
    return 0 if report.passed else 1


def cmd_check(cfg: ExperimentConfig, out_dir: str) -> int:
    """Internal invariant battery on the configured problem and family."""
    rng = np.random.default_rng(cfg.seed)
    results = []

    def note(name, ok, detail):
        results.append((name, bool(ok), detail))

    total = integrate(lambda x: np.ones(np.shape(x)), cfg.rule)
    span = cfg.rule.boundaries[-1] - cfg.rule.boundaries[0]
    note("quadrature-weights", abs(total - span) <= 1e-12 * span,
         f"sum of weights {_fmt(total)} vs span {_fmt(span)}")

    sys_checks, spd_ok, sym_ok, lam_ok = 0, True, True, True
    worst_lam = math.inf
    for _ in range(5):
        xi = cfg.family.domain.sample(rng)
        system = assemble(cfg.problem, cfg.rule, cfg.family, xi)
        sys_checks += 1
        sym_ok &= bool(
            np.max(np.abs(system.matrix - system.matrix.T))
            <= 1e-12 * (1.0 + np.max(np.abs(system.matrix)))
        )
        spd_ok &= system.lambda_min >= -1e-10 and system.omega >= -1e-10
        lam, bound = check_lambda_max_bound(system, cfg.constants)
        lam_ok &= lam <= bound + 1e-9
        worst_lam = min(worst_lam, bound - lam)
    note("assembly-symmetry", sym_ok, f"{sys_checks} sampled parameter points")
    note("assembly-psd", spd_ok, f"{sys_checks} sampled parameter points")
    note("lambda-max-bound", lam_ok, f"worst margin {_fmt(worst_lam)}")

    proj_ok = True
    for _ in range(50):
        raw = cfg.family.domain.lower + (
            cfg.family.domain.upper - cfg.family.domain.lower
        ) * rng.uniform(-0.5, 1.5, cfg.family.domain.dim)
        proj_ok &= cfg.family.domain.contains(cfg.family.domain.project(raw))
    note("projection-feasibility", proj_ok, "50 random points")

    prox_ok, worst_res = True, 0.0
    for _ in range(20):
        xi = cfg.family.domain.sample(rng)
        g = rng.standard_normal(cfg.family.domain.dim)
        gamma = 10.0 ** rng.uniform(-3, 0)
        xp = prox_step(cfg.geometry, cfg.family.domain, xi, g, gamma)
        res = prox_optimality_residual(cfg.geometry, cfg.family.domain, xi, g, gamma, xp)
        worst_res = max(worst_res, res)
        prox_ok &= res <= 1e-6 * (1.0 + float(np.linalg.norm(g)))
    note("prox-optimality", prox_ok, f"worst residual {_fmt(worst_res)}")

    system0 = assemble(cfg.problem, cfg.rule, cfg.family, cfg.xi0)
    rep = check_consistency(system0)
    note(
        "consistency-at-start",
        rep.load_kernel_residual <= 1e-8 and rep.realisation_gap <= 1e-8,
        f"kernel dim {rep.kernel_dim}, load residual {_fmt(rep.load_kernel_residual)}, "
        f"realisation gap {_fmt(rep.realisation_gap)}",
    )

    grad_ok, worst_rel = True, 0.0
    span = float(np.min(cfg.family.domain.upper - cfg.family.domain.lower))
    interior = cfg.family.domain.shrink(min(1e-3 * span, 0.25 * span))
    for _ in range(3):
        xi = interior.sample(rng)
        g = reduced_gradient(cfg.problem, cfg.rule, cfg.family, xi, mode=cfg.gradient_mode)
        h = 1e-5
        fd = np.zeros_like(g)
        for i in range(xi.size):
            e_i = np.zeros_like(xi)
            e_i[i] = h
            kp, _ = reduced_energy(cfg.problem, cfg.rule, cfg.family, xi + e_i)
            km, _ = reduced_energy(cfg.problem, cfg.rule, cfg.family, xi - e_i)
            fd[i] = (kp - km) / (2.0 * h)
        rel = float(np.linalg.norm(g - fd) / (1.0 + np.linalg.norm(fd)))
        worst_rel = max(worst_rel, rel)
        grad_ok &= rel <= 1e-4
    note("reduced-gradient-fd", grad_ok, f"worst relative error {_fmt(worst_rel)}")

    ok_all = all(ok for _, ok, _ in results)
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    print(("all checks passed" if ok_all else "invariant failures detected"))
    return 0 if ok_all else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _apply_thread_cap():
    val = os.environ.get("NONLINRITZ_THREADS")
    if not val:
        return
    try:
        n = int(val)
    except ValueError:
        raise ConfigError(f"NONLINRITZ_THREADS must be an integer, got {val!r}")
    if n < 1:
        raise ConfigError(f"NONLINRITZ_THREADS must be positive, got {n}")
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=n)
    except ImportError:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ[var] = str(n)


def _build_parser():
    p = argparse.ArgumentParser(
        prog="nonlinritz",
        description="Alternating minimisation over nonlinear approximation "
        "spaces, with numerical convergence certificates.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "run": "execute a configured run; write trace.csv and summary.json",
        "certify": "evaluate the certificate suite against run artifacts",
        "grid": "write a brute-force minimiser oracle to oracle.json",
        "check": "run the internal invariant battery",
    }
    for name, h in helps.items():
        sp = sub.add_parser(name, help=h)
        sp.add_argument("--config", required=True, help="path to the JSON config")
        sp.add_argument("--out-dir", default=None, help="artifact directory")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument(
            "--max-epochs", type=int, default=None, help="override stopping.max_epochs"
        )
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _apply_thread_cap()
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {args.config!r}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(
                f"{args.config}: invalid JSON at line {e.lineno}, column {e.colno}: "
                f"{e.msg}"
            ) from e
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: top level must be a JSON object")
        if args.seed is not None:
            data["seed"] = args.seed
        if args.max_epochs is not None:
            if not isinstance(data.get("stopping"), dict):
                data["stopping"] = {}
            data["stopping"]["max_epochs"] = args.max_epochs
        cfg = parse_config(data)
        out_dir = args.out_dir or cfg.out_dir or "."
        dispatch = {
            "run": cmd_run,
            "certify": cmd_certify,
            "grid": cmd_grid,
            "check": cmd_check,
        }
        return dispatch[args.command](cfg, out_dir)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except NonlinRitzError as e:  # pragma: no cover - safety net
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
