"""Text file formats and the flat pipeline config.

All numbers are written with 17 significant digits so files round-trip
exactly, and identical inputs give byte-identical files.
"""
from __future__ import annotations

import ast
import hashlib
import math
import operator
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .ebit import ExperimentParams
from .fock import DensityMatrix, FockTruncation, TwoModeKet
from .homodyne import DEFAULT_BINS, QuadratureData, ScanConfig, default_phase_grid
from .tomography import ReconstructionConfig

OUTPUT_DIR_ENV = "TIMEBIN_EBIT_OUTPUT_DIR"
SAMPLE_HEADER = "chi_rad,x1,x2,x_vac"


class ConfigError(ValueError):
    """Invalid config; the message names the field and, when known, the line."""


class FileFormatError(ValueError):
    """Malformed data file; the message names the offending line."""


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(v: float) -> str:
    return "%.17g" % v


# -- phase expressions ------------------------------------------------------

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.USub: operator.neg, ast.UAdd: operator.pos}


def parse_number(text: str) -> float:
    """Arithmetic on numbers and ``pi``: ``"pi/2"``, ``"-0.1"``, ``"3*pi/4"``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"cannot parse number {text!r}")

    try:
        return ev(ast.parse(text.strip(), mode="eval"))
    except SyntaxError:
        raise ValueError(f"cannot parse number {text!r}") from None


def parse_range(text: str) -> tuple[float, float, int]:
    """``"lo:hi:count"`` with ``pi`` allowed in the bounds."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"expected lo:hi:count, got {text!r}")
    count = int(parts[2])
    if count < 1:
        raise ValueError("range count must be positive")
    return parse_number(parts[0]), parse_number(parts[1]), count


def parse_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated values, got {text!r}")
    return parse_number(parts[0]), parse_number(parts[1])


# -- kets and density matrices ---------------------------------------------

def write_ket(ket: TwoModeKet, path, comments=()) -> None:
    t = ket.truncation
    with open(path, "w") as fh:
        fh.write(f"n_max={t.n_max} layout=row-major kind=ket\n")
        for c in comments:
            fh.write(f"# {c}\n")
        for i, a in enumerate(ket.amplitudes):
            k, l = t.pair(i)
            fh.write(f"{k},{l},{_fmt(a.real)},{_fmt(a.imag)}\n")


def _read_header(line: str, path) -> int:
    fields = dict(tok.partition("=")[::2] for tok in line.split())
    if "n_max" not in fields or fields.get("layout") != "row-major":
        raise FileFormatError(f"{path}:1: expected 'n_max=<k> layout=row-major' header")
    try:
        return int(fields["n_max"])
    except ValueError:
        raise FileFormatError(f"{path}:1: bad n_max {fields['n_max']!r}") from None


def read_ket(path) -> TwoModeKet:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FileFormatError(f"{path}: empty file")
    trunc = FockTruncation(_read_header(lines[0], path))
    amp = np.zeros(trunc.dim, complex)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split(",")
        try:
            k, l = int(parts[0]), int(parts[1])
            amp[trunc.index(k, l)] = float(parts[2]) + 1j * float(parts[3])
            if len(parts) != 4:
                raise ValueError
        except (ValueError, IndexError):
            raise FileFormatError(f"{path}:{lineno}: malformed ket line {line!r}") from None
    return TwoModeKet(amp, trunc)


def write_density(rho: DensityMatrix, path, comments=()) -> None:
    t = rho.truncation
    r4 = rho.as_tensor()
    d = t.mode_dim
    with open(path, "w") as fh:
        fh.write(f"n_max={t.n_max} layout=row-major\n")
        for c in comments:
            fh.write(f"# {c}\n")
        for k in range(d):
            for l in range(d):
                for m in range(d):
                    for n in range(d):
                        v = r4[k, l, m, n]
                        fh.write(f"{k},{l},{m},{n},{_fmt(v.real)},{_fmt(v.imag)}\n")


def read_density(path, physical: Optional[bool] = None) -> DensityMatrix:
    """Read a density file; ``physical=None`` accepts unconstrained estimates
    (non-unit trace, negative eigenvalues) when the strict checks fail."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FileFormatError(f"{path}: empty file")
    trunc = FockTruncation(_read_header(lines[0], path))
    d = trunc.mode_dim
    r4 = np.zeros((d, d, d, d), complex)
    seen = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split(",")
        try:
            if len(parts) != 6:
                raise ValueError
            k, l, m, n = (int(p) for p in parts[:4])
            r4[k, l, m, n] = float(parts[4]) + 1j * float(parts[5])
        except (ValueError, IndexError):
            raise FileFormatError(f"{path}:{lineno}: malformed element line {line!r}") from None
        seen += 1
    if seen != trunc.dim ** 2:
        raise FileFormatError(
            f"{path}: expected {trunc.dim ** 2} elements, found {seen} (file truncated?)")
    m = r4.reshape(trunc.dim, trunc.dim)
    if physical is None:
        try:
            return DensityMatrix(m, trunc)
        except ValueError:
            return DensityMatrix(m, trunc, physical=False)
    return DensityMatrix(m, trunc, physical)


# -- sample files ----------------------------------------------------------

def write_samples(data: QuadratureData, path, extra_meta: Optional[dict] = None) -> None:
    meta = dict(data.meta)
    meta.update(extra_meta or {})
    header = " ".join(f"{k}={v}" for k, v in meta.items())
    rows = np.column_stack([data.chi, data.x1, data.x2, data.x_vac])
    with open(path, "w") as fh:
        fh.write(f"# {header}\n{SAMPLE_HEADER}\n")
        np.savetxt(fh, rows, fmt="%.17g", delimiter=",")


def _scan_for_bad_line(lines, path, first_lineno):
    for offset, line in enumerate(lines):
        parts = line.split(",")
        ok = len(parts) == 4
        if ok:
            try:
                vals = [float(p) for p in parts]
                ok = all(math.isfinite(v) for v in vals[:3])
            except ValueError:
                ok = False
        if not ok:
            raise FileFormatError(
                f"{path}:{first_lineno + offset}: malformed sample record {line!r}")


def read_samples(path) -> QuadratureData:
    text = Path(path).read_text()
    lines = text.splitlines()
    meta = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        for tok in lines[i][1:].split():
            k, _, v = tok.partition("=")
            meta[k] = v
        i += 1
    if i >= len(lines) or lines[i].strip() != SAMPLE_HEADER:
        raise FileFormatError(f"{path}:{i + 1}: expected header {SAMPLE_HEADER!r}")
    body = lines[i + 1:]
    first = i + 2
    if body and not text.endswith("\n"):
        raise FileFormatError(
            f"{path}:{first + len(body) - 1}: last record is not newline-terminated "
            f"(file truncated?): {body[-1]!r}")
    try:
        arr = np.loadtxt(body, delimiter=",", ndmin=2) if body else np.empty((0, 4))
        if arr.shape[1] != 4 or not np.isfinite(arr[:, :3]).all():
            raise ValueError
    except ValueError:
        _scan_for_bad_line(body, path, first)
        raise FileFormatError(f"{path}: malformed sample records") from None
    expected = meta.get("n_samples")
    if expected is not None and int(expected) != len(arr):
        raise FileFormatError(
            f"{path}:{first + len(arr) - 1}: file ends after {len(arr)} records, "
            f"header promises n_samples={expected} (file truncated?)")
    return QuadratureData(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], meta)


def write_report(text: str, path) -> None:
    Path(path).write_text(text)


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


# -- pipeline config ---------------------------------------------------------

@dataclass
class PipelineConfig:
    experiment: ExperimentParams = field(default_factory=ExperimentParams)
    phi: Optional[float] = None
    n_samples: int = 10**6
    bins: int = DEFAULT_BINS
    seed: int = 20050101
    include_vacuum_bin: bool = True
    reconstruction: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    output_dir: Path = Path("output")

    @property
    def truncation(self) -> FockTruncation:
        return self.reconstruction.truncation

    def state_phase(self) -> float:
        from .ebit import phi_from_delays
        return phi_from_delays(self.experiment) if self.phi is None else self.phi

    def scan(self) -> ScanConfig:
        from .ebit import arm_loss_amplitudes
        alpha, beta = arm_loss_amplitudes(self.experiment.arm_transmission_t)
        return ScanConfig(n_samples=self.n_samples, phase_grid=tuple(default_phase_grid(self.bins)),
                          eta=self.experiment.efficiency_eta, alpha=alpha, beta=beta,
                          seed=self.seed, include_vacuum_bin=self.include_vacuum_bin,
                          state_phase=self.state_phase())


def _as_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _as_phi(text):
    return None if text.strip().lower() in ("auto", "delays", "none") else parse_number(text)


def _as_optional_float(text):
    return None if text.strip().lower() in ("none", "") else parse_number(text)


# field name -> (owner, attribute, parser)
CONFIG_FIELDS = {
    "experiment.pump_wavelength": ("experiment", "pump_wavelength", parse_number),
    "experiment.pulse_separation": ("experiment", "pulse_separation_Tp", parse_number),
    "experiment.interferometer_delay": ("experiment", "interferometer_delay_T", parse_number),
    "experiment.arm_transmission": ("experiment", "arm_transmission_t", parse_number),
    "experiment.efficiency": ("experiment", "efficiency_eta", parse_number),
    "experiment.idler_bandwidth": ("experiment", "idler_bandwidth_sigma", _as_optional_float),
    "experiment.phi": ("pipeline", "phi", _as_phi),
    "scan.n_samples": ("pipeline", "n_samples", int),
    "scan.bins": ("pipeline", "bins", int),
    "scan.seed": ("pipeline", "seed", int),
    "scan.include_vacuum_bin": ("pipeline", "include_vacuum_bin", _as_bool),
    "reconstruction.n_max": ("reconstruction", "n_max", int),
    "reconstruction.method": ("reconstruction", "method", str),
    "reconstruction.max_iterations": ("reconstruction", "max_iterations", int),
    "reconstruction.convergence_tol": ("reconstruction", "convergence_tol", parse_number),
    "reconstruction.quadrature_grid": ("reconstruction", "quadrature_grid", parse_range),
    "reconstruction.povm": ("reconstruction", "povm", str),
    "output.dir": ("pipeline", "output_dir", Path),
}

METHOD_ALIASES = {"ml": "max_likelihood", "pattern": "pattern_function"}


def build_config(values: dict, origins: Optional[dict] = None) -> PipelineConfig:
    """Assemble and fully validate a config from ``{"section.key": text}``.

    ``origins`` maps a field to where it came from (``"file:line"``, ``"--flag"``)
    for diagnostics.
    """
    origins = origins or {}
    parsed = {"experiment": {}, "pipeline": {}, "reconstruction": {}}
    for key, text in values.items():
        where = origins.get(key, key)
        if key not in CONFIG_FIELDS:
            raise ConfigError(f"{where}: unknown config field {key!r}")
        owner, attr, parser = CONFIG_FIELDS[key]
        try:
            val = parser(text) if isinstance(text, str) else text
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: invalid value for {key}: {exc}") from None
        if key == "reconstruction.method":
            val = METHOD_ALIASES.get(val, val)
        parsed[owner][attr] = (val, key, where)

    def make(cls, base, items):
        kwargs = {attr: v for attr, (v, _, _) in items.items()}
        try:
            return replace(base, **kwargs) if base is not None else cls(**kwargs)
        except ValueError as exc:
            # name the field the constructor complained about
            for attr, (_, key, where) in items.items():
                if attr in str(exc) or key.split(".")[1] in str(exc):
                    raise ConfigError(f"{where}: {key}: {exc}") from None
            raise ConfigError(str(exc)) from None

    experiment = make(ExperimentParams, None, parsed["experiment"])
    reconstruction = make(ReconstructionConfig, None, parsed["reconstruction"])
    cfg = PipelineConfig(experiment=experiment, reconstruction=reconstruction)
    for attr, (v, key, where) in parsed["pipeline"].items():
        setattr(cfg, attr, v)
    try:
        cfg.scan()
    except ValueError as exc:
        hint = next((f"{where}: {key}: " for _, (v, key, where) in parsed["pipeline"].items()
                     if key.startswith("scan.")), "")
        raise ConfigError(f"{hint}{exc}") from None
    return cfg


def read_config_file(path) -> tuple[dict, dict]:
    """Parse ``section.key = value`` lines; ``#`` starts a comment."""
    values, origins = {}, {}
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or "." not in key or not val.strip():
            raise ConfigError(f"{path}:{lineno}: expected 'section.key = value', got {raw!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate field {key!r}")
        values[key] = val.strip()
        origins[key] = f"{path}:{lineno}"
    return values, origins


def load_config(path=None, overrides: Optional[dict] = None,
                environ: Optional[dict] = None) -> PipelineConfig:
    """Defaults < config file < ``$TIMEBIN_EBIT_OUTPUT_DIR`` < overrides."""
    values, origins = ({}, {}) if path is None else read_config_file(path)
    env = os.environ if environ is None else environ
    if env.get(OUTPUT_DIR_ENV):
        values["output.dir"] = env[OUTPUT_DIR_ENV]
        origins["output.dir"] = f"${OUTPUT_DIR_ENV}"
    for key, (val, flag) in (overrides or {}).items():
        values[key] = val
        origins[key] = flag
    return build_config(values, origins)


def _short(v: float) -> str:
    return repr(float(v))


def format_config(cfg: PipelineConfig) -> str:
    """Config as ``section.key = value`` text (readable by :func:`read_config_file`)."""
    e = cfg.experiment
    r = cfg.reconstruction
    lo, hi, n = r.quadrature_grid
    lines = [
        f"experiment.pump_wavelength = {_short(e.pump_wavelength)}",
        f"experiment.pulse_separation = {_short(e.pulse_separation_Tp)}",
        f"experiment.interferometer_delay = {_short(e.interferometer_delay_T)}",
        f"experiment.arm_transmission = {_short(e.arm_transmission_t)}",
        f"experiment.efficiency = {_short(e.efficiency_eta)}",
        f"experiment.idler_bandwidth = {'none' if e.idler_bandwidth_sigma is None else _short(e.idler_bandwidth_sigma)}",
        f"experiment.phi = {'auto' if cfg.phi is None else _short(cfg.phi)}",
        f"scan.n_samples = {cfg.n_samples}",
        f"scan.bins = {cfg.bins}",
        f"scan.seed = {cfg.seed}",
        f"scan.include_vacuum_bin = {str(cfg.include_vacuum_bin).lower()}",
        f"reconstruction.n_max = {r.n_max}",
        f"reconstruction.method = {r.method}",
        f"reconstruction.max_iterations = {r.max_iterations}",
        f"reconstruction.convergence_tol = {_short(r.convergence_tol)}",
        f"reconstruction.quadrature_grid = {_short(lo)}:{_short(hi)}:{int(n)}",
        f"reconstruction.povm = {r.povm}",
        f"output.dir = {cfg.output_dir}",
    ]
    return "\n".join(lines) + "\n"


def config_digest(cfg: PipelineConfig) -> str:
    return hashlib.sha256(format_config(cfg).encode()).hexdigest()
