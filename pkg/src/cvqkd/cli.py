"""Command-line driver: key-rate scans, simulation runs, and self-validation.

Configuration comes from an optional flat key=value file plus flags (flags
win).  Scan and simulate modes emit CSV with a commented metadata block; the
validate mode runs the oracle suites and reports one line per check.

Exit codes: 0 success, 2 configuration error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time

import numpy as np

from cvqkd import __version__
from cvqkd.channel import (
    ChannelModel,
    ProtocolParams,
    detection_probs,
    detection_probs_quad,
    mean_test_value,
    q_minus,
)
from cvqkd.finitesize import SecurityBudget, azuma_delta1, chernoff_delta2
from cvqkd.keyrate import OptimizerSettings, optimize_protocol, scan_eta
from cvqkd.mcsim import SimConfig, empirical_key_run
from cvqkd.opbound import (
    AcceptanceSpec,
    DualCoefficients,
    bound_B,
    oracle_sigma_sup_M,
    parity_moments,
    parity_moments_quad,
)
from cvqkd.testfn import (
    FockDiagonal,
    TestFunction,
    compute_extrema,
    expectation_lambda_fock,
    moment_constant,
)

_FLOAT_KEYS = {"xi", "eps_sec", "r", "mu", "x_th", "p_sig", "p_test", "p_trash",
               "kappa", "gamma"}
_INT_KEYS = {"m", "seed", "threads", "num_seeds", "protocol_restarts",
             "protocol_maxiter", "dual_restarts", "dual_maxiter"}
_BOOL_KEYS = {"asymptotic", "warm_start"}
_STR_KEYS = {"mode", "eta", "eta_range", "N", "out"}
_ALL_KEYS = _FLOAT_KEYS | _INT_KEYS | _BOOL_KEYS | _STR_KEYS


class ConfigError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _parse_config_file(path: str) -> dict:
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, value = (part.strip() for part in line.split("=", 1))
                if key not in _ALL_KEYS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                out[key] = value
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return out


def _coerce(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    try:
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _INT_KEYS:
            return int(float(value))
        if key in _BOOL_KEYS:
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cvqkd",
        description="Key-rate scans, protocol simulation, and self-validation.",
    )
    p.add_argument("--mode", choices=["scan", "simulate", "validate"])
    p.add_argument("--eta", help="comma-separated transmissivity values")
    p.add_argument("--eta-range", dest="eta_range", help="range as start:stop:step")
    p.add_argument("--xi", type=float, help="excess noise relative to vacuum")
    p.add_argument("--N", dest="N", help="number of rounds (or 'asymptotic')")
    p.add_argument("--asymptotic", action="store_const", const=True,
                   help="asymptotic rates (overrides --N)")
    p.add_argument("--eps-sec", dest="eps_sec", type=float, help="security parameter")
    p.add_argument("--m", type=int, help="test-function polynomial order")
    p.add_argument("--r", type=float, help="test-function decay rate")
    p.add_argument("--seed", type=int, help="base RNG seed")
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--threads", type=int, help="scan-point parallelism")
    return p


_DEFAULTS = {
    "mode": "scan",
    "eta": None,
    "eta_range": None,
    "xi": 0.0,
    "N": None,
    "asymptotic": False,
    "eps_sec": 2.0**-50,
    "m": 1,
    "r": 0.412019,
    "seed": 1234,
    "out": None,
    "threads": 1,
    "num_seeds": 10,
    "warm_start": True,
    "protocol_restarts": 8,
    "protocol_maxiter": 400,
    "dual_restarts": 5,
    "dual_maxiter": 300,
}


def _effective_config(args: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS)
    if args.config:
        for key, value in _parse_config_file(args.config).items():
            cfg[key] = _coerce(key, value)
    for key in vars(args):
        if key == "config":
            continue
        value = getattr(args, key)
        if value is not None:
            cfg[key] = _coerce(key, value) if isinstance(value, str) else value
    return cfg


def _parse_etas(cfg: dict) -> list[float]:
    if cfg.get("eta_range"):
        try:
            start, stop, step = (float(v) for v in cfg["eta_range"].split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad --eta-range: {cfg['eta_range']!r}") from exc
        if step <= 0 or stop < start:
            raise ConfigError(f"bad --eta-range: {cfg['eta_range']!r}")
        count = int(round((stop - start) / step))
        etas = [start + i * step for i in range(count + 1) if start + i * step <= stop + 1e-12]
    elif cfg.get("eta"):
        try:
            etas = [float(v) for v in str(cfg["eta"]).split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad --eta: {cfg['eta']!r}") from exc
    else:
        raise ConfigError("one of --eta or --eta-range is required")
    for eta in etas:
        if not 0.0 < eta <= 1.0:
            raise ConfigError(f"transmissivity out of range: {eta}")
    return etas


def _parse_rounds(cfg: dict) -> int | None:
    if cfg.get("asymptotic"):
        return None
    raw = cfg.get("N")
    if raw is None:
        raise ConfigError("either --N or --asymptotic is required")
    if isinstance(raw, str) and raw.strip().lower() == "asymptotic":
        return None
    try:
        n = int(float(raw))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad --N: {raw!r}") from exc
    if n <= 0:
        raise ConfigError(f"round count must be positive, got {n}")
    return n


def _settings(cfg: dict) -> OptimizerSettings:
    return OptimizerSettings(
        protocol_restarts=cfg["protocol_restarts"],
        protocol_maxiter=cfg["protocol_maxiter"],
        dual_restarts=cfg["dual_restarts"],
        dual_maxiter=cfg["dual_maxiter"],
        seed=cfg["seed"],
    )


def _metadata_lines(cfg: dict, mode: str, wall_time: float | None) -> list[str]:
    shown = {k: v for k, v in sorted(cfg.items()) if v is not None}
    pairs = " ".join(f"{k}={_fmt(v)}" for k, v in shown.items())
    lines = [f"# cvqkd {mode} v{__version__}", f"# config: {pairs}"]
    if wall_time is not None:
        lines.append(f"# wall_time_s: {wall_time:.3f}")
    return lines


def _write_output(cfg: dict, lines: list[str]) -> None:
    text = "\n".join(lines) + "\n"
    if cfg.get("out"):
        with open(cfg["out"], "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_scan(cfg: dict) -> int:
    etas = _parse_etas(cfg)
    n_rounds = _parse_rounds(cfg)
    tf = TestFunction.create(cfg["m"], cfg["r"])
    budget = SecurityBudget.default(cfg["eps_sec"])
    start = time.perf_counter()
    points = scan_eta(
        etas,
        cfg["xi"],
        tf,
        n_rounds,
        budget,
        settings=_settings(cfg),
        threads=cfg["threads"],
        warm_start=cfg["warm_start"],
    )
    wall = time.perf_counter() - start
    lines = _metadata_lines(cfg, "scan", wall)
    lines.append("eta,xi,N,gain,mu,x_th,p_sig,p_test,kappa,gamma,e_bit,n_suc_frac")
    for pt in points:
        n_col = "inf" if pt.n_rounds is None else str(pt.n_rounds)
        row = [
            _fmt(pt.eta), _fmt(pt.xi), n_col, _fmt(pt.gain),
            _fmt(pt.params.mu), _fmt(pt.params.x_th),
            _fmt(pt.params.p_sig), _fmt(pt.params.p_test),
            _fmt(pt.duals.kappa), _fmt(pt.duals.gamma),
            _fmt(pt.e_bit), _fmt(pt.n_suc_frac),
        ]
        lines.append(",".join(row))
    _write_output(cfg, lines)
    return 0


def _simulate_params(
    cfg: dict, ch: ChannelModel, tf: TestFunction, n_rounds: int,
    budget: SecurityBudget,
) -> tuple[ProtocolParams, DualCoefficients]:
    explicit = all(cfg.get(k) is not None for k in ("mu", "x_th", "p_sig", "p_test"))
    if explicit:
        p_trash = cfg.get("p_trash")
        if p_trash is None:
            p_trash = 1.0 - cfg["p_sig"] - cfg["p_test"]
        pp = ProtocolParams.for_channel(
            ch, cfg["mu"], cfg["p_sig"], cfg["p_test"], p_trash, cfg["x_th"]
        )
        duals = DualCoefficients(cfg.get("kappa") or 0.0, cfg.get("gamma") or 0.0)
        return pp, duals
    point = optimize_protocol(ch, tf, n_rounds, budget, settings=_settings(cfg))
    return point.params, point.duals


def _run_simulate(cfg: dict) -> int:
    etas = _parse_etas(cfg)
    if len(etas) != 1:
        raise ConfigError("simulate mode takes exactly one transmissivity")
    n_rounds = _parse_rounds(cfg)
    if n_rounds is None:
        raise ConfigError("simulate mode needs a finite --N")
    tf = TestFunction.create(cfg["m"], cfg["r"])
    budget = SecurityBudget.default(cfg["eps_sec"])
    ch = ChannelModel(eta=etas[0], xi=cfg["xi"])
    try:
        pp, duals = _simulate_params(cfg, ch, tf, n_rounds, budget)
    except ValueError as exc:
        raise ConfigError(f"infeasible protocol parameters: {exc}") from exc
    # no wall time here: repeated runs with one seed must be byte-identical
    lines = _metadata_lines(cfg, "simulate", None)
    lines.append("seed,key_length,gain")
    for i in range(cfg["num_seeds"]):
        seed = cfg["seed"] + i
        sim = SimConfig(seed=seed, n_rounds=n_rounds, ch=ch, pp=pp, tf=tf)
        key_length, gain = empirical_key_run(sim, budget, duals)
        lines.append(f"{seed},{key_length},{_fmt(gain)}")
    _write_output(cfg, lines)
    return 0


def _validation_checks(seed: int):
    rng = np.random.default_rng(seed)

    def check_extrema():
        lo, hi = compute_extrema(1, 0.412019)
        return abs(lo - (-0.993162)) < 1e-4 and abs(hi - 2.82404) < 1e-4

    def check_moment_signs():
        for m in (1, 3, 5, 7, 9):
            for n in range(m + 1, 41):
                if (-1) ** m * moment_constant(n, m) <= 0.0:
                    return False
            for n in range(1, m + 1):
                if abs(moment_constant(n, m)) > 1e-9:
                    return False
        return True

    def check_fidelity_bound():
        tfs = [TestFunction.create(m, 0.5) for m in (1, 3, 5)]
        for _ in range(200):
            raw = rng.random(rng.integers(1, 41))
            rho = FockDiagonal(tuple(raw / raw.sum()))
            for tf in tfs:
                if expectation_lambda_fock(tf, rho) > rho.probabilities[0] + 1e-12:
                    return False
        return True

    def check_saturation():
        for m in (1, 3, 5):
            tf = TestFunction.create(m, 0.7)
            raw = rng.random(m + 1)
            rho = FockDiagonal(tuple(raw / raw.sum()))
            if abs(expectation_lambda_fock(tf, rho) - rho.probabilities[0]) > 1e-12:
                return False
        return True

    def check_parity_quad():
        for x_th in (0.3, 0.9, 1.6):
            for beta in (0.2, 0.8, 1.5):
                spec = AcceptanceSpec(x_th=x_th, beta=beta)
                a, b = parity_moments(spec), parity_moments_quad(spec)
                for name in ("c_ev", "c_od", "d_ev", "d_od"):
                    x, y = getattr(a, name), getattr(b, name)
                    if abs(x - y) > 1e-10 * max(abs(x), 1e-8):
                        return False
        return True

    def check_channel_quad():
        tf = TestFunction.create(1, 0.412019)
        for eta in (0.3, 0.8):
            for xi in (0.0, 0.02):
                ch = ChannelModel(eta=eta, xi=xi)
                pp = ProtocolParams.for_channel(ch, 0.4, 0.8, 0.1, 0.1, 0.7)
                exact = detection_probs(ch, pp)
                quad = detection_probs_quad(ch, pp)
                for x, y in zip(exact, quad):
                    if abs(x - y) > 1e-9 * max(abs(x), 1e-10):
                        return False
                from cvqkd.channel import expected_test_sum, expected_test_sum_quad

                a = expected_test_sum(ch, pp, tf, 1e6)
                b = expected_test_sum_quad(ch, pp, tf, 1e6)
                if abs(a - b) > 1e-9 * abs(a):
                    return False
        return True

    def check_operator_inequality():
        for _ in range(25):
            spec = AcceptanceSpec(
                x_th=rng.uniform(0.1, 2.0), beta=rng.uniform(0.0, 2.0)
            )
            duals = DualCoefficients(rng.uniform(0, 10), rng.uniform(0, 10))
            top = oracle_sigma_sup_M(spec, duals, n_max=40)
            if top > bound_B(parity_moments(spec), duals) + 1e-6:
                return False
        return True

    def check_chernoff():
        from math import comb, log

        for q in (0.1, 0.3, 0.7):
            for eps in (1e-1, 1e-3, 1e-9):
                for n in range(0, 16):
                    delta = chernoff_delta2(eps, n, q)
                    # in the saturated branch the ceiling delta = (1-q)n makes
                    # the threshold exactly n in exact arithmetic
                    saturated = n > 0 and log(eps) <= n * log(q)
                    thr = float(n) if saturated else q * n + delta
                    tail = sum(
                        comb(n, k) * q**k * (1 - q) ** (n - k)
                        for k in range(n + 1)
                        if k > thr
                    )
                    if tail > eps:
                        return False
        return True

    def check_composition():
        budget = SecurityBudget.default(2.0**-50)
        return abs(budget.composition() - budget.eps_sec) <= 1e-15 * budget.eps_sec

    def check_azuma():
        if azuma_delta1(1.0, 100, -1.0, 1.0) != 0.0:
            return False
        one = azuma_delta1(0.3, 1000, -1.0, 1.0)
        four = azuma_delta1(0.3, 4000, -1.0, 1.0)
        return abs(four - 2.0 * one) < 1e-9 * four

    return [
        ("test-function extrema vs reference", check_extrema),
        ("moment-constant sign and vanishing", check_moment_signs),
        ("fidelity lower bound on random states", check_fidelity_bound),
        ("saturation for low photon support", check_saturation),
        ("parity moments vs quadrature", check_parity_quad),
        ("channel closed forms vs quadrature", check_channel_quad),
        ("operator inequality vs Fock oracle", check_operator_inequality),
        ("Chernoff coverage, exhaustive small n", check_chernoff),
        ("security-budget composition identity", check_composition),
        ("martingale deviation edge cases", check_azuma),
    ]


def _run_validate(cfg: dict) -> int:
    failures = 0
    for name, check in _validation_checks(cfg["seed"]):
        try:
            ok = check()
        except Exception as exc:  # a crash is a failure, not an abort
            print(f"FAIL {name} (error: {exc})")
            failures += 1
            continue
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        failures += 0 if ok else 1
    if failures:
        print(f"{failures} validation check(s) failed")
        return 3
    print("all validation checks passed")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        cfg = _effective_config(args)
        mode = cfg["mode"]
        if mode == "scan":
            return _run_scan(cfg)
        if mode == "simulate":
            return _run_simulate(cfg)
        if mode == "validate":
            return _run_validate(cfg)
        raise ConfigError(f"unknown mode: {mode}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
