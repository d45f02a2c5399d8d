"""Command-line front end.

Exit codes: 0 success, 1 bad input, 2 infeasible scenario, 3 oracle refused.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from .ee_fixed import optimize_fixed
from .ee_joint import optimize_joint
from .joint import joint_kkt_residual, psi_from_leader
from .model import Allocation, InfeasibleError, PowerModel, Scenario, UserChannel, build_allocation, validate
from .oracle import MAX_POWER_ORACLE_USERS, OracleRefused, grid_joint_oracle, grid_power_oracle, random_scenario, sweep
from .waterfill import allocate, kkt_residual, sum_rate_closed_form

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_REFUSED = 0, 1, 2, 3

SCENARIO_KEYS = ("users", "bandwidth_budget", "power_budget", "amp_efficiency", "circuit_power")
USER_KEYS = ("gain", "min_rate", "bandwidth")

ORACLE_RTOL = 1e-3
KKT_TOL = 1e-9
JOINT_KKT_TOL = 1e-8


class InputError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would read as "infeasible"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _reject_constant(name):
    raise InputError(f"non-finite number {name} is not allowed")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"{where}: expected a number, got {value!r}")
    return float(value)


def parse_scenario(text: str, mode: str) -> Scenario:
    """Strict parse of a scenario document; raises :class:`InputError`."""
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed scenario document: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError("scenario document must be an object")
    for key in doc:
        if key not in SCENARIO_KEYS:
            raise InputError(f"unknown field {key!r}")
    for key in SCENARIO_KEYS:
        if key not in doc:
            raise InputError(f"missing field {key!r}")
    if not isinstance(doc["users"], list) or not doc["users"]:
        raise InputError("users: expected a non-empty array")

    users = []
    for k, u in enumerate(doc["users"]):
        if not isinstance(u, dict):
            raise InputError(f"users[{k}]: expected an object")
        for key in u:
            if key not in USER_KEYS:
                raise InputError(f"users[{k}]: unknown field {key!r}")
        if "gain" not in u:
            raise InputError(f"users[{k}]: missing field 'gain'")
        bw = u.get("bandwidth")
        users.append(
            UserChannel(
                _number(u["gain"], f"users[{k}].gain"),
                _number(u.get("min_rate", 0.0), f"users[{k}].min_rate"),
                None if bw is None else _number(bw, f"users[{k}].bandwidth"),
            )
        )
    s = Scenario(
        tuple(users),
        _number(doc["bandwidth_budget"], "bandwidth_budget"),
        _number(doc["power_budget"], "power_budget"),
        PowerModel(_number(doc["amp_efficiency"], "amp_efficiency"), _number(doc["circuit_power"], "circuit_power")),
    )
    problems = validate(s, mode)
    if problems:
        raise InputError("; ".join(problems))
    return s


def scenario_document(s: Scenario) -> dict:
    users = []
    for u in s.users:
        d = {"gain": u.gain, "min_rate": u.min_rate}
        if u.fixed_bandwidth is not None:
            d["bandwidth"] = u.fixed_bandwidth
        users.append(d)
    return {
        "users": users,
        "bandwidth_budget": s.bandwidth_budget,
        "power_budget": s.power_budget,
        "amp_efficiency": s.power_model.amp_efficiency,
        "circuit_power": s.power_model.circuit_power,
    }


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    out = f"{x:.12g}"
    return "0" if out == "-0" else out


def _round(obj):
    # floats to 12 significant digits; non-finite values become strings
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(_fmt(x)) if math.isfinite(x) else _fmt(x)
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    return [_round(v) for v in obj]


def dump_report(report: dict) -> str:
    return json.dumps(_round(report), indent=2) + "\n"


def _alloc_fields(alloc: Allocation) -> dict:
    return {
        "users": [{"bandwidth": u.bandwidth, "power": u.power, "rate": u.rate} for u in alloc.per_user],
        "total_bandwidth": alloc.total_bandwidth,
        "total_power": alloc.total_power,
        "sum_rate": alloc.sum_rate,
        "energy_efficiency": alloc.energy_efficiency,
    }


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def report_fixed(s: Scenario, digest: str) -> dict:
    res = optimize_fixed(s)
    _, diag = allocate(s, res.p_opt)
    alloc = res.allocation
    return {
        "scenario_sha256": digest,
        "mode": "fixed",
        "p_opt": res.p_opt,
        "boundary_case": res.boundary_case,
        **_alloc_fields(alloc),
        "residuals": {
            "kkt": kkt_residual(s, alloc, diag),
            "power_budget": _rel(alloc.total_power, res.p_opt),
            "closed_form_sum_rate": _rel(sum_rate_closed_form(s, diag), alloc.sum_rate),
        },
    }


def report_joint(s: Scenario, digest: str) -> dict:
    res = optimize_joint(s)
    sol = res.solution
    alloc = sol.allocation
    lead = sol.leader_index
    w1, p1 = alloc.bandwidths[lead], alloc.powers[lead]
    psi_check = _rel(psi_from_leader(w1, p1, s.users[lead].gain), sol.psi) if w1 > 0 else 0.0
    return {
        "scenario_sha256": digest,
        "mode": "joint",
        "p_opt": res.p_opt,
        "boundary_case": res.boundary_case,
        **_alloc_fields(alloc),
        "psi": sol.psi,
        "leader_index": lead,
        "omegas": list(sol.omegas),
        "residuals": {
            "kkt": joint_kkt_residual(s, alloc),
            "bandwidth_budget": _rel(alloc.total_bandwidth, s.bandwidth_budget),
            "power_budget": _rel(alloc.total_power, res.p_opt),
            "psi_consistency": psi_check,
            "sum_rate_consistency": _rel(sol.max_sum_rate, alloc.sum_rate),
        },
    }


def sweep_csv(s: Scenario, mode: str, n: int) -> str:
    curve = sweep(s, mode, n)
    lines = ["P,sum_rate,ee,indicator"]
    lines += [",".join(_fmt(v) for v in row) for row in curve.samples]
    return "\n".join(lines) + "\n"


def _load_injection(path: str, K: int) -> tuple[np.ndarray, Optional[np.ndarray]]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.loads(fh.read(), parse_constant=_reject_constant)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read injection file: {exc}") from None
    if not isinstance(doc, dict) or "powers" not in doc:
        raise InputError("injection file needs a 'powers' array")
    for key in doc:
        if key not in ("powers", "bandwidths"):
            raise InputError(f"injection file: unknown field {key!r}")

    def vec(name):
        v = doc[name]
        if not isinstance(v, list) or len(v) != K:
            raise InputError(f"injection {name}: expected {K} numbers")
        return np.array([_number(x, f"injection {name}") for x in v])

    return vec("powers"), (vec("bandwidths") if "bandwidths" in doc else None)


def verify_lines(s: Scenario, mode: str, steps: int, inject: Optional[str] = None) -> tuple[list[str], bool]:
    """Run the oracle and residual checks; returns printable lines and overall pass."""
    K = s.n_users
    checks: list[tuple[str, bool, str]] = []

    if mode == "fixed":
        if K > MAX_POWER_ORACLE_USERS:
            raise OracleRefused(f"fixed-mode verification handles at most {MAX_POWER_ORACLE_USERS} users, got {K}")
        res = optimize_fixed(s)
        P = res.p_opt
        alloc, diag = allocate(s, P)
        if inject:
            powers, _ = _load_injection(inject, K)
            alloc = build_allocation(s.bandwidths, powers, s.gains, s.power_model)
        grid = grid_power_oracle(s, P, steps)
        floor = grid.rate * (1 - ORACLE_RTOL)
        checks.append(("oracle_dominance", alloc.sum_rate >= floor, f"margin={_fmt(alloc.sum_rate - floor)}"))
        kkt = kkt_residual(s, alloc, diag)
        checks.append(("kkt_residual", kkt <= KKT_TOL, f"value={_fmt(kkt)} tol={_fmt(KKT_TOL)}"))
    else:
        if K != 2:
            raise OracleRefused(f"joint-mode verification handles exactly 2 users, got {K}")
        res = optimize_joint(s)
        P, W = res.p_opt, s.bandwidth_budget
        alloc = res.solution.allocation
        if inject:
            powers, bws = _load_injection(inject, K)
            alloc = build_allocation(alloc.bandwidths if bws is None else bws, powers, s.gains, s.power_model)
        grid = grid_joint_oracle(s, W, P, steps)
        floor = grid.rate * (1 - ORACLE_RTOL) if grid.best is not None else -math.inf
        checks.append(("oracle_dominance", alloc.sum_rate >= floor, f"margin={_fmt(alloc.sum_rate - floor)}"))
        kkt = joint_kkt_residual(s, alloc)
        checks.append(("kkt_residual", kkt <= JOINT_KKT_TOL, f"value={_fmt(kkt)} tol={_fmt(JOINT_KKT_TOL)}"))
        bw = _rel(alloc.total_bandwidth, W)
        checks.append(("bandwidth_budget", bw <= 1e-10, f"value={_fmt(bw)}"))

    pw = _rel(alloc.total_power, P)
    checks.append(("power_budget", pw <= 1e-10, f"value={_fmt(pw)}"))
    lines = [f"{'PASS' if ok else 'FAIL'} {name} {detail}" for name, ok, detail in checks]
    return lines, all(ok for _, ok, _ in checks)


def _read_scenario(path: str, mode: str) -> tuple[Scenario, str]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read scenario: {exc}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise InputError("scenario is not valid UTF-8") from None
    return parse_scenario(text, mode), hashlib.sha256(raw).hexdigest()


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eealloc", description="Energy-efficient power and bandwidth allocation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in ("solve-fixed", "solve-joint"):
        p = sub.add_parser(name, help=f"optimize total power ({name.split('-')[1]} bandwidths)")
        p.add_argument("--scenario", required=True)
        p.add_argument("--out")

    p = sub.add_parser("sweep", help="sample sum rate and EE over [P0, P_M] as CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--mode", choices=("fixed", "joint"), required=True)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--out")

    p = sub.add_parser("verify", help="check the solver against a brute-force oracle")
    p.add_argument("--scenario", required=True)
    p.add_argument("--mode", choices=("fixed", "joint"), required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--debug-inject", metavar="PATH", help="replace the allocation with powers/bandwidths from a file")

    p = sub.add_parser("gen", help="write a seeded random scenario")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--users", type=int, default=3, help="number of users K")
    p.add_argument("--mode", choices=("fixed", "joint"), default="joint")
    p.add_argument("--out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            if args.users < 1:
                raise InputError("--users must be at least 1")
            s = random_scenario(args.seed, args.users, args.mode)
            _emit(json.dumps(scenario_document(s), indent=2) + "\n", args.out)
            return EXIT_OK

        mode = {"solve-fixed": "fixed", "solve-joint": "joint"}.get(args.command) or args.mode
        s, digest = _read_scenario(args.scenario, mode)
        if args.command == "solve-fixed":
            _emit(dump_report(report_fixed(s, digest)), args.out)
        elif args.command == "solve-joint":
            _emit(dump_report(report_joint(s, digest)), args.out)
        elif args.command == "sweep":
            if args.samples < 1:
                raise InputError("--samples must be positive")
            _emit(sweep_csv(s, mode, args.samples), args.out)
        else:
            if args.steps < 10:
                raise InputError("--steps must be at least 10")
            lines, ok = verify_lines(s, mode, args.steps, args.debug_inject)
            print(f"scenario_sha256 {digest}")
            print("\n".join(lines))
            print("PASS" if ok else "FAIL")
            return EXIT_OK if ok else EXIT_INPUT
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OracleRefused as exc:
        print(f"oracle refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
