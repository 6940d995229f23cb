"""Command-line front end.

Subcommands: ``normal-form``, ``verify``, ``constants``, ``ising-demo``.
Exit codes: 0 ok, 2 validation, 3 contraction violation, 4 capacity,
5 acceptance failure. Errors are printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, serialization
from .conjugation import ContractionError
from .dense_verify import (
    all_up,
    config_hash,
    curve_csv,
    densify,
    effective_dynamics_error,
    expectation_trace,
    geometric_times,
    heisenberg_drift,
    neel,
    operator_norm,
    random_state,
)
from .models import Lattice, ising
from .normal_form import (
    NormalFormParams,
    ResearchModeRequired,
    StepError,
    bound_checks_csv,
    compute_eps0,
    run,
    theory_constants,
)
from .pauli_algebra import CapacityError, ExtensiveOperator, NumberOperator, TruncationPolicy, add, kappa_norm, pauli

EXIT_OK, EXIT_VALIDATION, EXIT_CONTRACTION, EXIT_CAPACITY, EXIT_ACCEPTANCE = 0, 2, 3, 4, 5
OUTPUT_ENV = "PRETHERMAL_OUTPUT_DIR"

OPERATOR_FILES = ("dressed_N.jsonl", "dressed_Z.jsonl", "Z_final.jsonl", "P_final.jsonl")
REQUIRED_FOR_VERIFY = OPERATOR_FILES + ("ledger.json", "config.json")


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    model: str = "ising"
    L: int = 6
    d: int = 1
    kappa: float = 1.0
    eps: str | float = "eps0/3"
    n_star_override: int | None = None
    support_cap: int = 8
    coeff_floor: float = 1e-14
    series_tol: float = 1e-13
    max_order: int = 60
    C_LR: float = 1.0
    number_file: str | None = None
    perturbation_file: str | None = None
    time_grid: dict = dataclasses.field(default_factory=lambda: {"kind": "geometric", "t0": 0.1, "t_max": 100.0})
    initial_states: list = dataclasses.field(default_factory=lambda: ["all-up", "neel", "random"])
    output_dir: str = "prethermal-out"
    seed: int = 0

    def validate(self) -> None:
        if self.model not in ("ising", "custom"):
            raise ConfigError(f"model must be 'ising' or 'custom', got {self.model!r}")
        if self.model == "custom" and not (self.number_file and self.perturbation_file):
            raise ConfigError("custom model needs number_file and perturbation_file")
        if int(self.L) < 1 or int(self.d) < 1:
            raise ConfigError("L and d must be positive integers")
        if not self.kappa > 0:
            raise ConfigError("kappa must be positive")
        if self.n_star_override is not None and int(self.n_star_override) < 0:
            raise ConfigError("n_star_override must be >= 0")
        if not isinstance(self.time_grid, dict) or "kind" not in self.time_grid:
            raise ConfigError("time_grid must be an object with a 'kind'")
        times(self)  # raises on an empty or malformed grid
        for s in self.initial_states:
            if s not in ("all-up", "neel", "random"):
                raise ConfigError(f"unknown initial state {s!r}")
        self.policy()

    def policy(self) -> TruncationPolicy:
        try:
            return TruncationPolicy(int(self.support_cap), float(self.coeff_floor), float(self.series_tol), int(self.max_order))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def resolved(self) -> dict:
        """Config with defaults filled; the output directory is left out so outputs stay comparable."""
        out = dataclasses.asdict(self)
        out.pop("output_dir")
        return out


def times(cfg: RunConfig) -> list[float]:
    g = cfg.time_grid
    kind = g.get("kind")
    if kind == "geometric":
        return geometric_times(float(g["t0"]), float(g["t_max"]))
    if kind == "linear":
        n = int(g.get("n", 0))
        if n < 1:
            raise ConfigError("time grid is empty")
        return list(np.linspace(float(g.get("t_min", 0.0)), float(g["t_max"]), n))
    if kind == "list":
        values = [float(t) for t in g.get("values", [])]
        if not values:
            raise ConfigError("time grid is empty")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ConfigError("time grid must be strictly increasing")
        return values
    raise ConfigError(f"unknown time grid kind {kind!r}")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def build_config(args: argparse.Namespace) -> RunConfig:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    data = _load_config(getattr(args, "config", None))
    unknown = set(data) - fields
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in fields:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if os.environ.get(OUTPUT_ENV):
        data["output_dir"] = os.environ[OUTPUT_ENV]
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# model assembly


def read_number_file(path: str) -> NumberOperator:
    try:
        data = json.loads(Path(path).read_text())
        return NumberOperator({tuple(rec["site"]): tuple(rec["diag"]) for rec in data})
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read number operator {path}: {exc}") from None


def assemble(cfg: RunConfig):
    """(sites, NumberOperator, P) for the configured model."""
    if cfg.model == "ising":
        lattice = Lattice.chain(cfg.L) if cfg.d == 1 else Lattice(_box_sites(cfg.L, cfg.d))
        model = ising(lattice)
        return list(lattice.sites), model.number, model.P
    number = read_number_file(cfg.number_file)
    P = serialization.read_operator(cfg.perturbation_file)
    sites = sorted(set(number.sites) | set(P.sites()))
    missing = [s for s in P.sites() if s not in number.entries]
    if missing:
        raise ConfigError(f"perturbation acts on sites without a number operator entry: {missing[:3]}")
    return sites, number, P


def _box_sites(L: int, d: int) -> tuple:
    return tuple(itertools.product(range(L), repeat=d))


def resolve_eps(cfg: RunConfig, eps0: float) -> float:
    eps = cfg.eps
    if isinstance(eps, str):
        text = eps.replace(" ", "")
        if text.startswith("eps0/"):
            return eps0 / float(text[5:])
        if text.startswith("eps0*"):
            return eps0 * float(text[5:])
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"cannot parse eps {eps!r}; use a number or 'eps0/K'") from None
    return float(eps)


def build_params(cfg: RunConfig, P: ExtensiveOperator) -> tuple[NormalFormParams, float]:
    normP = kappa_norm(P, cfg.kappa)
    if normP == 0:
        raise ConfigError("perturbation is zero")
    eps = resolve_eps(cfg, compute_eps0(normP))
    params = NormalFormParams.build(
        cfg.kappa, eps, normP, n_star=cfg.n_star_override, policy=cfg.policy(), C_LR=cfg.C_LR
    )
    return params, normP


# ---------------------------------------------------------------------------
# commands


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not JSON serialisable: {type(x)}")


def cmd_normal_form(cfg: RunConfig, quiet: bool = False) -> int:
    sites, number, P = assemble(cfg)
    params, normP = build_params(cfg, P)
    result = run(number, P, params, n_sites=len(sites), normP_kappa=normP)
    out = Path(cfg.output_dir)
    (out / "generators").mkdir(parents=True, exist_ok=True)
    for name, op in zip(OPERATOR_FILES, (result.dressed_N, result.dressed_Z, result.Z_final, result.P_final)):
        serialization.write_operator(out / name, op)
    for i, g in enumerate(result.generators):
        serialization.write_operator(out / "generators" / f"generator_{i:03d}.jsonl", g)
    (out / "bound_checks.csv").write_text(bound_checks_csv(result.bound_checks))
    _write_json(out / "ledger.json", result.ledger.to_dict())
    _write_json(out / "constants.json", result.constants.as_dict())
    resolved = cfg.resolved()
    resolved.update(
        version=__version__,
        resolved_eps=params.eps,
        eps0=params.eps0,
        n_star=params.n_star,
        delta=params.delta,
        research_mode=params.research_mode,
        norm_P_kappa=normP,
        n_sites=len(sites),
        bound_checks_pass=result.bounds_pass,
        dress_checks=result.dress_checks,
    )
    _write_json(out / "config.json", resolved)
    if not quiet:
        print(json.dumps({"status": "ok", "output_dir": str(out), "n_star": params.n_star,
                          "bound_checks_pass": result.bounds_pass}, default=_json_default))
    return EXIT_OK


def _status(passed: bool | None) -> str:
    return "not-evaluated" if passed is None else ("pass" if passed else "fail")


def cmd_verify(cfg: RunConfig, operators_dir: str, full: bool = False, quiet: bool = False) -> int:
    from .acceptance import ALL, roundoff
    from .dense_verify import hermitian_defect, spectrum_integerness

    src = Path(operators_dir)
    missing = [f for f in REQUIRED_FOR_VERIFY if not (src / f).is_file()]
    if missing:
        raise ConfigError(f"missing artifacts in {src}: {', '.join(missing)} (required: {', '.join(REQUIRED_FOR_VERIFY)})")
    meta = json.loads((src / "config.json").read_text())
    run_cfg = RunConfig(**{k: v for k, v in meta.items() if k in {f.name for f in dataclasses.fields(RunConfig)}})
    run_cfg.validate()
    if run_cfg.d != 1:
        raise CapacityError("dense verification supports one-dimensional chains only")
    sites, number, P = assemble(run_cfg)
    ops = {name[:-6]: serialization.read_operator(src / name) for name in OPERATOR_FILES}
    ledger = json.loads((src / "ledger.json").read_text())
    ledger_op = float(ledger["total_op_bound"])
    consts = json.loads((src / "constants.json").read_text()) if (src / "constants.json").is_file() else None
    eps, eps0, kappa = float(meta["resolved_eps"]), float(meta["eps0"]), float(meta["kappa"])
    research = bool(meta.get("research_mode"))
    n = len(sites)
    if consts is None:
        consts = theory_constants(kappa, float(meta["norm_P_kappa"]), eps=eps, eps0=eps0).as_dict()

    N_op = number.to_operator()
    Nd = densify(N_op, sites).entries
    H = densify(add(N_op, eps * P), sites).entries
    dN = densify(ops["dressed_N"], sites).entries
    dZ = densify(ops["dressed_Z"], sites).entries
    tgrid = times(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = cfg.resolved()
    base["operators"] = meta

    def write_curve(kind: str, t, values, bounds):
        name = f"{kind}_{config_hash({**base, 'curve': kind})}.csv"
        (out / name).write_text(curve_csv(t, values, bounds))
        return name

    checks: dict[str, dict] = {}
    files = []
    r = roundoff(operator_norm(Nd))

    herm = hermitian_defect(dN) <= 1e-10 and hermitian_defect(dZ) <= 1e-10
    gap = spectrum_integerness(dN) if herm else math.inf
    closeness = operator_norm(dN - Nd) / n
    closeness_bound = consts["C1"] * eps * kappa_norm(N_op, kappa)
    comm = operator_norm(dN @ dZ - dZ @ dN)
    checks["5"] = {
        "integer_gap": gap, "integer_allowed": ledger_op + r, "hermitian": herm,
        "closeness": closeness, "closeness_bound": closeness_bound,
        "commutator": comm, "commutator_allowed": 2 * ledger_op + r,
        "passed": herm and gap <= ledger_op + r and closeness <= closeness_bound + (ledger_op + r) / n
        and comm <= 2 * ledger_op + r,
    }

    decay = eps * math.exp(-eps0 / eps)
    nN = kappa_norm(N_op, 0.75 * kappa)
    bound_N = None if research else (lambda t: consts["C2"] * nN * abs(t) * decay)
    bound_Z = None if research else (lambda t: consts["C3"] * abs(t) * eps * decay)
    if herm:
        cN = heisenberg_drift(dN, H, tgrid, bound=bound_N)
        cZ = heisenberg_drift(dZ, H, tgrid, bound=bound_Z)
        cB = heisenberg_drift(Nd, H, tgrid)
        files += [write_curve("drift_dressed_N", cN.times, cN.values, cN.bound_values),
                  write_curve("drift_dressed_Z", cZ.times, cZ.values, cZ.bound_values),
                  write_curve("drift_bare_N", cB.times, cB.values, cB.bound_values)]
        slack = 2 * ledger_op / n + r / n
        checks["6"] = {"passed": None if research else (cN.within_bound(slack) and cZ.within_bound(slack))}
        checks["7"] = {"dominance": all(d <= b + r / n for d, b in zip(cN.values, cB.values)), "passed": None}

        c = sites[(n - 1) // 2]
        O = densify(pauli({c: "Z"}), sites).entries
        window = math.exp(eps0 / (2 * eps))
        c4 = consts["C4"] * eps
        ce = effective_dynamics_error(O, H, dN + dZ, tgrid, bound=lambda t: c4 if t <= window else None)
        files.append(write_curve("effective_dynamics_Z_center", ce.times, ce.values, ce.bound_values))
        checks["8"] = {"theory_window": window, "within_C4": ce.within_bound(), "passed": None}

        for label in cfg.initial_states:
            psi = {"all-up": all_up, "neel": neel}.get(label)
            psi = psi(n) if psi else random_state(n, cfg.seed)
            t, v = expectation_trace(psi, Nd, H, tgrid)
            files.append(write_curve(f"expectation_N_{label}", t, v, [None] * len(t)))
    else:
        for k in ("6", "7", "8"):
            checks[k] = {"passed": False, "reason": "dressed operators are not Hermitian"}

    rows = (src / "bound_checks.csv").read_text().splitlines()[1:] if (src / "bound_checks.csv").is_file() else []
    bc_pass = all(float(x[1]) <= float(x[2]) and float(x[3]) <= float(x[4]) and float(x[5]) <= float(x[6])
                  for x in (row.split(",") for row in rows))
    checks["4"] = {"bound_checks_pass": bc_pass, "passed": None if research else bc_pass}

    round_trip = True
    for name in OPERATOR_FILES:
        text = (src / name).read_text()
        round_trip &= serialization.dumps(serialization.loads(text)) == text
    checks["9"] = {"round_trip": round_trip, "passed": round_trip}
    for k in ("1", "2", "3"):
        checks[k] = {"passed": None}

    if full:
        for fn in ALL:
            res = fn()
            key = str(res.number)
            prior = checks.get(key, {})
            checks[key] = {**prior, "acceptance_suite": res.passed, "passed": res.passed and prior.get("passed") is not False}

    summary = {
        "criteria": {k: {**v, "status": _status(v["passed"])} for k, v in sorted(checks.items(), key=lambda kv: int(kv[0]))},
        "files": sorted(files),
        "research_mode": research,
    }
    _write_json(out / "summary.json", summary)
    failed = [k for k, v in summary["criteria"].items() if v["status"] == "fail"]
    if not quiet:
        for k, v in summary["criteria"].items():
            print(f"criterion {k}: {v['status']}")
    return EXIT_ACCEPTANCE if failed else EXIT_OK


def cmd_constants(kappa: float, normP: float, C_LR: float = 1.0) -> int:
    c = theory_constants(kappa, normP, C_LR=C_LR)
    if c.Q >= 0.5:
        raise ConfigError(f"Q = {c.Q} is not below 1/2")
    print(json.dumps(c.as_dict(), indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON RunConfig file; flags override its fields")
    p.add_argument("--model", choices=["ising", "custom"])
    p.add_argument("--L", type=int, help="number of sites per lattice direction")
    p.add_argument("--d", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--eps", help="a number, or eps0/K")
    p.add_argument("--n-star", dest="n_star_override", type=int, help="override n_star (research mode)")
    p.add_argument("--support-cap", type=int)
    p.add_argument("--coeff-floor", type=float)
    p.add_argument("--series-tol", type=float)
    p.add_argument("--max-order", type=int)
    p.add_argument("--C-LR", dest="C_LR", type=float)
    p.add_argument("--number-file")
    p.add_argument("--perturbation-file")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--quiet", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prethermal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normal-form", help="run the normal form and write operators and reports")
    _add_run_flags(p)

    p = sub.add_parser("verify", help="dense checks on a normal-form output directory")
    _add_run_flags(p)
    p.add_argument("operators_dir")
    p.add_argument("--time-grid", dest="time_grid", type=json.loads, help='JSON, e.g. {"kind":"geometric","t0":0.1,"t_max":100}')
    p.add_argument("--full", action="store_true", help="also run the complete acceptance suite")

    p = sub.add_parser("constants", help="print the closed-form constants as JSON")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--norm-P", dest="normP", type=float, required=True)
    p.add_argument("--C-LR", dest="C_LR", type=float, default=1.0)

    p = sub.add_parser("ising-demo", help="normal-form then verify with the shipped defaults")
    _add_run_flags(p)
    return parser


def _error(code: int, kind: str, message: str, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code, **extra}, default=_json_default), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    quiet = getattr(args, "quiet", False)
    try:
        if args.command == "constants":
            return cmd_constants(args.kappa, args.normP, args.C_LR)
        cfg = build_config(args)
        if args.command == "normal-form":
            return cmd_normal_form(cfg, quiet)
        if args.command == "verify":
            return cmd_verify(cfg, args.operators_dir, args.full, quiet)
        ops_dir = Path(cfg.output_dir) / "operators"
        cmd_normal_form(dataclasses.replace(cfg, output_dir=str(ops_dir)), quiet)
        return cmd_verify(dataclasses.replace(cfg, output_dir=str(Path(cfg.output_dir) / "verify")), str(ops_dir), quiet=quiet)
    except StepError as exc:
        if isinstance(exc.cause, ContractionError):
            return _error(EXIT_CONTRACTION, "contraction-violation", str(exc), step=exc.n, ratio=exc.cause.ratio)
        return _error(EXIT_VALIDATION, "step-failure", str(exc), step=exc.n)
    except ContractionError as exc:
        return _error(EXIT_CONTRACTION, "contraction-violation", str(exc), ratio=exc.ratio)
    except CapacityError as exc:
        return _error(EXIT_CAPACITY, "capacity", str(exc))
    except ResearchModeRequired as exc:
        return _error(EXIT_VALIDATION, "research-mode-required", str(exc))
    except serialization.OperatorFormatError as exc:
        return _error(EXIT_VALIDATION, "operator-format", str(exc))
    except (ConfigError, ValueError) as exc:
        return _error(EXIT_VALIDATION, "validation", str(exc))


if __name__ == "__main__":
    sys.exit(main())
