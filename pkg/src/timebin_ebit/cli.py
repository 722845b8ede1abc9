"""``timebin-ebit`` command line: state, simulate, reconstruct, wigner, verify.

Exit codes: 0 success, 1 validation error (including failed verification
checks), 2 numerical non-convergence, 3 I/O or file-format error.
"""
from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import checks
from .ebit import (SPEED_OF_LIGHT, arm_loss_amplitudes, heralded_state, make_ebit,
                   phi_from_delays)
from .homodyne import run_scan
from .io import (ConfigError, FileFormatError, PipelineConfig, config_digest, load_config,
                 parse_pair, parse_range, read_density,
                 read_samples, sha256_file, write_density, write_ket, write_report,
                 write_samples)
from .pattern import KernelSelfTestError, kernel_self_test
from .tomography import ml_reconstruct, pattern_reconstruct, reconstruction_report
from .wigner import SECTIONS, AnalyticSource, export_section

EXIT_OK, EXIT_VALIDATION, EXIT_NONCONVERGENCE, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("timebin_ebit.cli")


class NonConvergence(RuntimeError):
    pass


# field -> (flag, dest)
OVERRIDES = [
    ("experiment.efficiency", "--eta", "eta"),
    ("experiment.phi", "--phi", "phi"),
    ("experiment.arm_transmission", "--arm-transmission", "arm_transmission"),
    ("scan.n_samples", "--samples", "samples"),
    ("scan.bins", "--bins", "bins"),
    ("scan.seed", "--seed", "seed"),
    ("reconstruction.n_max", "--n-max", "n_max"),
    ("reconstruction.method", "--method", "method"),
    ("output.dir", "--output-dir", "output_dir"),
]


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


_NEGATIVE_VALUE = re.compile(r"^-(\d|\.\d|pi)")


def _join_negative_values(argv: list[str]) -> list[str]:
    """Let option values start with a minus sign: ``--fixed -0.1,-0.1``."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and _NEGATIVE_VALUE.match(argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat 'section.key = value' config file")
    p.add_argument("--eta", help="overall efficiency (experiment.efficiency)")
    p.add_argument("--phi", help="ebit phase in rad, e.g. 'pi/2'; 'auto' derives it from the delays")
    p.add_argument("--arm-transmission", help="long-arm amplitude transmission t in [0, 1]")
    p.add_argument("--bell", choices=("plus", "minus"),
                   help="Bell state: sets phi to 0 or pi and arm transmission to 1")
    p.add_argument("--samples", help="total number of heralded events")
    p.add_argument("--bins", help="number of phase settings over [0, pi]")
    p.add_argument("--seed", help="64-bit RNG seed")
    p.add_argument("--n-max", help="photon-number cutoff per mode")
    p.add_argument("--method", help="reconstruction method: ml or pattern")
    p.add_argument("--output-dir", help="output directory (overrides $TIMEBIN_EBIT_OUTPUT_DIR)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="timebin-ebit",
                     description="Single-photon time-bin ebit simulation and tomography.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("state", help="write the ground-truth ket and density matrix")
    _add_common(p)

    p = sub.add_parser("simulate", help="generate a homodyne sample file")
    _add_common(p)
    p.add_argument("-o", "--out", help="sample file (default <output-dir>/samples.csv)")

    p = sub.add_parser("reconstruct", help="reconstruct the density matrix from samples")
    _add_common(p)
    p.add_argument("samples_file", nargs="?", help="sample file (default <output-dir>/samples.csv)")

    p = sub.add_parser("wigner", help="export Wigner-function sections")
    _add_common(p)
    p.add_argument("--source", default="analytic",
                   help="'analytic' or a density-matrix file")
    p.add_argument("--section", default="x1y1", choices=SECTIONS)
    p.add_argument("--fixed", help="the two held quadratures, e.g. '-0.1,-0.1'")
    p.add_argument("--axis", default="-3:3:121", help="axis range lo:hi:count")
    p.add_argument("--sweep-phi", help="analytic phase sweep lo:hi:count, e.g. '0:pi:25'")
    p.add_argument("-o", "--out", help="output CSV (single section only)")

    p = sub.add_parser("verify", help="run the invariant and closed-loop checks")
    _add_common(p)
    p.add_argument("--checks", help="comma-separated name prefixes to run (default: all)")
    p.add_argument("--list", action="store_true", help="list check names and exit")
    return parser


def config_from_args(args, environ=None) -> PipelineConfig:
    overrides = {}
    for key, flag, dest in OVERRIDES:
        val = getattr(args, dest, None)
        if val is not None:
            overrides[key] = (val, flag)
    if getattr(args, "bell", None):
        for key in ("experiment.phi", "experiment.arm_transmission"):
            if key in overrides:
                raise ConfigError(f"--bell conflicts with {overrides[key][1]}")
        overrides["experiment.phi"] = ("0" if args.bell == "plus" else "pi", "--bell")
        overrides["experiment.arm_transmission"] = ("1", "--bell")
    return load_config(args.config, overrides, environ)


def _out_dir(cfg: PipelineConfig) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


def _provenance(cfg: PipelineConfig, inputs=()) -> list[str]:
    lines = [f"config_sha256={config_digest(cfg)}"]
    for p in inputs:
        lines.append(f"input_sha256={sha256_file(p)} input={Path(p).name}")
    return lines


def cmd_state(cfg: PipelineConfig, args) -> int:
    e = cfg.experiment
    if cfg.phi is None:
        phi = phi_from_delays(e)
        delay = e.pulse_separation_Tp - 0.5 * e.interferometer_delay_T
        periods = delay * SPEED_OF_LIGHT / e.pump_wavelength
        print(f"phi derivation: Omega_p = 2 pi c / lambda_p = {e.pump_angular_frequency:.6e} rad/s")
        print(f"  T_p - T/2 = {e.pulse_separation_Tp:.6e} - {0.5 * e.interferometer_delay_T:.6e}"
              f" = {delay:.6e} s ({periods:.6f} pump periods)")
        print(f"  phi = Omega_p (T_p - T/2) mod 2 pi = {phi:.12f} rad")
    else:
        phi = cfg.phi
        print(f"phi set directly: {phi:.12f} rad")
    alpha, beta = arm_loss_amplitudes(e.arm_transmission_t)
    print(f"alpha={alpha:.6f} beta={beta:.6f} eta={e.efficiency_eta:.6f}")
    trunc = cfg.truncation
    ket = make_ebit(alpha, beta, phi, trunc)
    rho = heralded_state(ket, e.efficiency_eta)
    out = _out_dir(cfg)
    prov = _provenance(cfg) + [f"phi={phi!r}"]
    write_ket(ket, out / "state_ket.txt", prov)
    write_density(rho, out / "state_density.txt", prov)
    print(f"rho_00,00={rho.element(0, 0, 0, 0).real:.6f} "
          f"rho_10,10={rho.element(1, 0, 1, 0).real:.6f} "
          f"rho_01,01={rho.element(0, 1, 0, 1).real:.6f} "
          f"rho_10,01={rho.element(1, 0, 0, 1):.6f}")
    print(f"wrote {out / 'state_ket.txt'} and {out / 'state_density.txt'}")
    return EXIT_OK


def cmd_simulate(cfg: PipelineConfig, args) -> int:
    scan = cfg.scan()
    path = Path(args.out) if args.out else _out_dir(cfg) / "samples.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    data = run_scan(scan)
    write_samples(data, path, {"config_sha256": config_digest(cfg)})
    print(f"wrote {len(data)} events ({scan.per_bin} per phase setting, "
          f"{len(scan.phase_grid)} settings) to {path}")
    return EXIT_OK


def cmd_reconstruct(cfg: PipelineConfig, args) -> int:
    path = Path(args.samples_file) if args.samples_file else cfg.output_dir / "samples.csv"
    data = read_samples(path)
    meta = data.meta
    # ground truth from the file's own metadata when present
    try:
        eta = float(meta["eta"])
        alpha, beta = float(meta["alpha"]), float(meta["beta"])
        phi = float(meta["state_phase"])
    except (KeyError, ValueError):
        eta = cfg.experiment.efficiency_eta
        alpha, beta = arm_loss_amplitudes(cfg.experiment.arm_transmission_t)
        phi = cfg.state_phase()
    trunc = cfg.truncation
    truth = heralded_state(make_ebit(alpha, beta, phi, trunc), eta)
    rc = cfg.reconstruction
    extra = {"method": rc.method, "n_samples": len(data)}
    converged = True
    if rc.method == "pattern_function":
        worst = kernel_self_test(trunc.n_max, rc.quadrature_grid)
        print(f"pattern-function orthogonality self-test: worst error {worst:.3e} (tol 1e-06) PASS")
        rho = pattern_reconstruct(data, rc)
        tag = "pattern"
    else:
        res = ml_reconstruct(data, rc)
        rho = res.rho
        converged = res.converged
        extra.update(iterations=res.iterations, converged=res.converged,
                     log_likelihood=repr(res.log_likelihood))
        tag = "ml"
    out = _out_dir(cfg)
    prov = _provenance(cfg, [path])
    write_density(rho, out / f"density_{tag}.txt", prov)
    report = reconstruction_report(rho, truth)
    extra.update({k.replace("=", "_"): v for k, v in
                  (line.split(" ", 1)[0].split("=", 1) for line in prov)})
    write_report(report.to_text(extra), out / f"report_{tag}.txt")
    print(report.to_text(extra), end="")
    print(f"wrote {out / f'density_{tag}.txt'} and {out / f'report_{tag}.txt'}")
    if not converged:
        raise NonConvergence(f"maximum-likelihood iteration did not converge in "
                             f"{rc.max_iterations} iterations")
    return EXIT_OK


def cmd_wigner(cfg: PipelineConfig, args) -> int:
    axis = parse_range(args.axis)
    fixed = parse_pair(args.fixed) if args.fixed else None
    eta = cfg.experiment.efficiency_eta
    alpha, beta = arm_loss_amplitudes(cfg.experiment.arm_transmission_t)
    out = _out_dir(cfg)
    if args.sweep_phi:
        if args.source != "analytic":
            raise ConfigError("--sweep-phi needs --source analytic")
        lo, hi, count = parse_range(args.sweep_phi)
        prov = _provenance(cfg)
        for i, phi in enumerate(np.linspace(lo, hi, count)):
            grid = export_section(AnalyticSource(float(phi), eta, alpha, beta), args.section,
                                  axis, fixed_values=fixed)
            grid.to_csv(out / f"wigner_{args.section}_sweep{i:03d}.csv", prov)
        print(f"wrote {count} sections of {args.section} for phi in [{lo:.6g}, {hi:.6g}] to {out}")
        return EXIT_OK
    truth = AnalyticSource(cfg.state_phase(), eta, alpha, beta)
    if args.source == "analytic":
        source, prov = truth, _provenance(cfg)
    else:
        source = read_density(args.source)
        prov = _provenance(cfg, [args.source])
    grid = export_section(source, args.section, axis, fixed_values=fixed, phi=truth.phi)
    if args.source != "analytic":
        ref = export_section(truth, args.section, axis, fixed_values=fixed, phi=truth.phi)
        diff = grid.max_abs_difference(ref)
        prov.append(f"max_abs_difference_vs_analytic={diff!r}")
        print(f"max abs difference vs analytic (phi={truth.phi:.6g}, eta={eta:.6g}): {diff:.6f}")
    path = Path(args.out) if args.out else out / f"wigner_{args.section}.csv"
    grid.to_csv(path, prov)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(cfg: PipelineConfig, args) -> int:
    if args.list:
        print("\n".join(checks.CHECKS))
        return EXIT_OK
    names = checks.select_checks(args.checks.split(",") if args.checks else None)
    out = _out_dir(cfg)
    print(checks.TABLE_HEADER)
    results = checks.run_checks(cfg, names, progress=lambda r: print(r.row(), flush=True))
    failed = sum(not r.passed for r in results)
    table = "\n".join([checks.TABLE_HEADER] + [r.row() for r in results]) + "\n"
    (out / "verify_report.tsv").write_text(table)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


COMMANDS = {"state": cmd_state, "simulate": cmd_simulate, "reconstruct": cmd_reconstruct,
            "wigner": cmd_wigner, "verify": cmd_verify}


def main(argv: Optional[list[str]] = None, environ=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_join_negative_values(argv))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(args, environ)
        return COMMANDS[args.command](cfg, args)
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NonConvergence, KernelSelfTestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
