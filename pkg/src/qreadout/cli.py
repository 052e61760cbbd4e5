"""Command-line harness: seeded experiments with CSV/JSON outputs.

Commands: trajectory, ensemble, figure1, bayes-verify, reset-demo.
Exit codes: 0 success, 1 configuration error, 2 numerical-invariant
violation.  Outputs are deterministic for a fixed seed (the metadata JSON
additionally records the volatile wall time).
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (efficiency_curve, purity_curve, snr_dispersive_analytic,
                       snr_longitudinal_analytic, summarize_ensemble)
from .bayes import bayes_update
from .config import OPTIMAL_PHI, ReadoutConfig, Scheme
from .effective import (QubitState, run_effective_trajectory, trace_distance)
from .errors import ConfigError, InvariantViolation
from .fullsme import run_trajectory_full
from .jointstate import (JointPureState, propagate_joint,
                         qubit_reduced_from_joint, reset, reset_joint_state)
from .kernels import BACKEND
from .records import HomodyneRecord

_CONFIG_KEYS = {f.name for f in fields(ReadoutConfig)}
_EXTRA_KEYS = {"n_traj", "engine", "measure_time", "second_time", "record"}


def _parse_scalar(key: str, value):
    if key == "scheme":
        return Scheme(str(value).lower())
    if key in ("seed", "n_max", "n_traj"):
        return int(value)
    if key in ("engine", "record"):
        return str(value)
    return float(value)


def load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    raw: dict = {}
    if p.suffix.lower() == ".json":
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("JSON config must be an object")
    else:
        parser = configparser.ConfigParser()
        text = p.read_text()
        if not text.lstrip().startswith("["):
            text = "[run]\n" + text
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"bad config {path}: {exc}") from exc
        for section in parser.sections():
            raw.update(parser.items(section))
    out = {}
    for key, value in raw.items():
        key = key.strip().lower()
        if key not in _CONFIG_KEYS | _EXTRA_KEYS:
            raise ConfigError(f"unknown config key: {key}")
        try:
            out[key] = _parse_scalar(key, value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return out


def resolve_config(args) -> tuple[ReadoutConfig, dict]:
    """Merge defaults < config file < command-line overrides."""
    settings: dict = {}
    if args.config:
        settings.update(load_config_file(args.config))
    for key in ("seed", "dt", "scheme", "threads"):
        val = getattr(args, key, None)
        if val is not None and key != "threads":
            settings[key] = _parse_scalar(key, val)
    for key in _EXTRA_KEYS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            settings[key] = val
    extras = {k: settings.pop(k) for k in list(settings) if k in _EXTRA_KEYS}
    if "phi_lo" not in settings:
        scheme = Scheme(settings.get("scheme", Scheme.LONGITUDINAL))
        settings["phi_lo"] = OPTIMAL_PHI[scheme]
    try:
        cfg = ReadoutConfig(**settings)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, extras


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]):
    rows = len(columns[0])
    for col in columns:
        if len(col) != rows:
            raise ValueError("ragged CSV columns")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(rows):
            fh.write(",".join(_fmt(col[i]) for col in columns) + "\n")


def _check_finite(path: Path, columns):
    for col in columns:
        if not np.all(np.isfinite(col)):
            raise InvariantViolation(f"non-finite value in output {path}")


def write_metadata(out_dir: Path, command: str, cfg: ReadoutConfig,
                   extras: dict, outputs: list[str], wall_time: float,
                   threads: int, results: dict | None = None):
    cfg_echo = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    cfg_echo["scheme"] = cfg.scheme.value
    meta = {
        "command": command,
        "config": cfg_echo,
        "extras": {k: v for k, v in sorted(extras.items())},
        "seed": cfg.seed,
        "threads": threads,
        "backend": BACKEND,
        "versions": {
            "qreadout": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "outputs": outputs,
        "results": results or {},
        "wall_time_s": wall_time,
    }
    path = out_dir / "run_metadata.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_trajectory(cfg: ReadoutConfig, extras: dict, out: Path,
                   threads: int) -> tuple[list[str], dict]:
    engine = extras.get("engine", "effective")
    if engine not in ("effective", "full"):
        raise ConfigError(f"engine must be effective|full, got {engine!r}")
    # one row per integration step: state at the left endpoint, the current
    # and noise samples of that step
    t = cfg.t_grid()[:-1]
    if engine == "effective":
        run = run_effective_trajectory(cfg)
        ee = run.path[:-1, 0]
        eg = run.path[:-1, 1] + 1j * run.path[:-1, 2]
        purity = ee**2 + (1 - ee) ** 2 + 2 * np.abs(eg) ** 2
        header = ["t", "rho_ee", "re_rho_eg", "im_rho_eg", "purity",
                  "current", "xi"]
        cols = [t, ee, eg.real, eg.imag, purity,
                run.record.current, run.record.xi]
    else:
        run = run_trajectory_full(cfg)
        sz = 2.0 * run.qubit_ee[:-1] - 1.0
        purity = run.qubit_ee[:-1] ** 2 + (1 - run.qubit_ee[:-1]) ** 2 \
            + 2 * np.abs(run.qubit_eg[:-1]) ** 2
        header = ["t", "sigma_z", "re_a", "im_a", "purity", "current", "xi"]
        cols = [t, sz, run.a_exp[:-1].real, run.a_exp[:-1].imag, purity,
                run.record.current, run.record.xi]
    _check_finite(out / "trajectory.csv", cols)
    write_csv(out / "trajectory.csv", header, cols)
    run.record.to_csv(out / "record.csv")
    return ["trajectory.csv", "record.csv"], {"engine": engine}


def cmd_ensemble(cfg: ReadoutConfig, extras: dict, out: Path,
                 threads: int) -> tuple[list[str], dict]:
    n_traj = int(extras.get("n_traj", 1000))
    if n_traj < 2:
        raise ConfigError("ensemble needs n_traj >= 2")
    summary = summarize_ensemble(cfg, n_traj, threads=threads)
    ee = summary.mean_state[:, 0]
    eg_re = summary.mean_state[:, 1]
    eg_im = summary.mean_state[:, 2]
    cols = [summary.t_grid, ee, eg_re, eg_im,
            summary.se[:, 0], summary.se[:, 1], summary.se[:, 2],
            np.nan_to_num(summary.eta, nan=0.0), summary.d_curve]
    header = ["t", "mean_rho_ee", "mean_re_rho_eg", "mean_im_rho_eg",
              "se_rho_ee", "se_re_rho_eg", "se_im_rho_eg", "eta", "d_factor"]
    _check_finite(out / "ensemble.csv", cols)
    write_csv(out / "ensemble.csv", header, cols)
    write_csv(out / "q_samples.csv", ["q_e", "q_g"],
              [summary.q_e, summary.q_g])
    return (["ensemble.csv", "q_samples.csv"],
            {"n_traj": n_traj, "snr_empirical": summary.snr_empirical})


def cmd_figure1(cfg: ReadoutConfig, extras: dict, out: Path,
                threads: int) -> tuple[list[str], dict]:
    k = cfg.kappa
    t = np.linspace(0.01 / k, 10.0 / k, 1000)
    tau = np.linspace(0.01 / k, 10.0 / k, 1000)
    long_cfg = cfg.with_updates(scheme=Scheme.LONGITUDINAL,
                                phi_lo=OPTIMAL_PHI[Scheme.LONGITUDINAL])
    disp = {chi: cfg.with_updates(scheme=Scheme.DISPERSIVE, chi=chi * k,
                                  phi_lo=OPTIMAL_PHI[Scheme.DISPERSIVE])
            for chi in (0.5, 0.8)}

    eta_cols = [t * k, efficiency_curve(long_cfg, t),
                efficiency_curve(disp[0.5], t), efficiency_curve(disp[0.8], t)]
    write_csv(out / "eta.csv",
              ["kappa_t", "eta_longitudinal", "eta_dispersive_chi_0p5",
               "eta_dispersive_chi_0p8"], eta_cols)

    d_cols = [t * k, purity_curve(long_cfg, t),
              purity_curve(disp[0.5], t), purity_curve(disp[0.8], t)]
    write_csv(out / "d_curve.csv",
              ["kappa_t", "d_longitudinal", "d_dispersive_chi_0p5",
               "d_dispersive_chi_0p8"], d_cols)

    snr_l = snr_longitudinal_analytic(long_cfg, tau)
    snr_d = snr_dispersive_analytic(disp[0.5], tau)
    write_csv(out / "snr.csv",
              ["kappa_tau", "snr_longitudinal", "snr_dispersive_chi_0p5"],
              [tau * k, snr_l, snr_d])
    write_csv(out / "snr_scaled.csv",
              ["kappa_tau", "snr_longitudinal_per_sqrt_tau",
               "snr_dispersive_chi_0p5_per_sqrt_tau"],
              [tau * k, snr_l / np.sqrt(tau), snr_d / np.sqrt(tau)])

    for path, cols in (("eta.csv", eta_cols), ("d_curve.csv", d_cols)):
        _check_finite(out / path, cols)
    return (["eta.csv", "d_curve.csv", "snr.csv", "snr_scaled.csv"], {})


def cmd_bayes_verify(cfg: ReadoutConfig, extras: dict, out: Path,
                     threads: int) -> tuple[list[str], dict]:
    if cfg.gamma1 != 0.0 or cfg.gamma2 != 0.0:
        raise ConfigError("bayes-verify requires gamma1 = gamma2 = 0")
    outputs = []
    if "record" in extras:
        record = HomodyneRecord.from_csv(extras["record"], cfg.phi_lo)
    else:
        run = run_effective_trajectory(cfg)
        record = run.record
        record.to_csv(out / "record.csv")
        outputs.append("record.csv")
    qte = run_effective_trajectory(cfg, noise=record).final_state()
    bay = bayes_update(QubitState.plus(), record, cfg)
    dist = trace_distance(qte, bay)
    result = {
        "trace_distance": dist,
        "duration": record.duration,
        "qte_state": {"rho_ee": qte.rho_ee,
                      "re_rho_eg": qte.rho_eg.real,
                      "im_rho_eg": qte.rho_eg.imag},
        "bayes_state": {"rho_ee": bay.rho_ee,
                        "re_rho_eg": bay.rho_eg.real,
                        "im_rho_eg": bay.rho_eg.imag},
    }
    (out / "bayes_verify.json").write_text(
        json.dumps(result, indent=2, sort_keys=True) + "\n")
    outputs.append("bayes_verify.json")
    return outputs, {"trace_distance": dist}


def cmd_reset_demo(cfg: ReadoutConfig, extras: dict, out: Path,
                   threads: int) -> tuple[list[str], dict]:
    if cfg.scheme is not Scheme.LONGITUDINAL:
        raise ConfigError("reset-demo runs on the longitudinal scheme")
    t1 = float(extras.get("measure_time", 2.0))
    t2 = float(extras.get("second_time", t1))
    rows = []  # (t, purity, rho_ee, segment)

    def track_segment(psi, cfg_seg, n_steps, t_offset, segment):
        q0 = qubit_reduced_from_joint(psi)
        run = run_effective_trajectory(cfg_seg, rho0=q0, n_steps=n_steps)
        rows.append((t_offset, q0.purity, q0.rho_ee, segment))
        for k in range(n_steps):
            psi = propagate_joint(psi, run.record.slice(k, k + 1), cfg_seg)
            q = qubit_reduced_from_joint(psi)
            rows.append((t_offset + (k + 1) * cfg_seg.dt, q.purity,
                         q.rho_ee, segment))
        return psi

    n1 = int(round(t1 / cfg.dt))
    psi = track_segment(JointPureState.initial(), cfg, n1, 0.0, 1)
    pre_purity = rows[-1][1]
    qubit, residual = reset(psi, cfg)
    psi2 = reset_joint_state(psi)
    n2 = int(round(t2 / cfg.dt))
    cfg2 = cfg.with_updates(seed=cfg.seed + 1)
    track_segment(psi2, cfg2, n2, t1, 2)

    arr = np.array(rows)
    _check_finite(out / "purity.csv", [arr])
    write_csv(out / "purity.csv", ["t", "purity", "rho_ee", "segment"],
              [arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]])
    return (["purity.csv"],
            {"pre_reset_purity": pre_purity,
             "post_reset_purity": qubit.purity,
             "residual_cavity_occupation": residual})


_COMMANDS = {
    "trajectory": cmd_trajectory,
    "ensemble": cmd_ensemble,
    "figure1": cmd_figure1,
    "bayes-verify": cmd_bayes_verify,
    "reset-demo": cmd_reset_demo,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qreadout",
        description="Continuous weak-measurement qubit-readout simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI or JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int,
                       default=os.cpu_count() or 1)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--scheme",
                       choices=[s.value for s in Scheme], default=None)
        if name == "trajectory":
            p.add_argument("--engine", choices=["effective", "full"],
                           default=None)
        if name == "ensemble":
            p.add_argument("--n-traj", type=int, dest="n_traj", default=None)
        if name == "bayes-verify":
            p.add_argument("--record", help="existing record CSV to verify",
                           default=None)
        if name == "reset-demo":
            p.add_argument("--measure-time", type=float, dest="measure_time",
                           default=None)
            p.add_argument("--second-time", type=float, dest="second_time",
                           default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    start = time.time()
    try:
        cfg, extras = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        outputs, results = _COMMANDS[args.command](
            cfg, extras, out, max(1, args.threads))
        write_metadata(out, args.command, cfg, extras, outputs,
                       time.time() - start, args.threads, results)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except InvariantViolation as exc:
        print(f"numerical invariant violated: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
