"""Configuration files and run output.

Config files are INI style with sections ``[params]``, ``[domain]``,
``[solver]``, ``[initial]`` and ``[forcing]``; keys are the field names
of the corresponding dataclasses and ``#`` starts a comment. Example::

    [solver]
    t_end = 2.0
    scheme = rusanov

    [initial]
    type = gaussian
    amplitude = 0.01
    center = -2.0
    width = 0.5

Outputs go to a fixed layout: ``manifest.txt``, ``snapshots/t_<idx>.csv``,
``traces.csv`` and ``diagnostics/*.csv``; numbers are written with 17
significant digits.
"""

from __future__ import annotations

import configparser
import csv
import datetime as _dt
import hashlib
import os
import re
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import MissingKey, ParseError, UnknownKey
from .model import DomainLayout, FieldState, InitialSpec, PhysicalParams, ValidationReport, validate_params
from .solver import Forcing, SimulationResult, SolverConfig

SECTIONS = ("params", "domain", "solver", "initial", "forcing")
DOMAIN_KEYS = ("L_ext", "n_minus", "n_pl", "n_pr", "left_bc")
SOLVER_KEYS = (
    "cfl", "t_end", "scheme", "ode_stepper", "picard", "picard_max_iter", "picard_tol",
    "record_every", "dt", "snapshot_every", "h_min", "c1_min",
)
INITIAL_KEYS = ("type", "amplitude", "center", "width", "path", "q_i0", "P_ch0")
FORCING_KEYS = ("type", "amplitude", "omega")
REQUIRED = {"solver": ("t_end",), "initial": ("type",)}
INT_KEYS = {"n_minus", "n_pl", "n_pr", "picard_max_iter", "record_every", "snapshot_every"}
BOOL_KEYS = {"constant_pressure"}
STR_KEYS = {"left_bc", "scheme", "ode_stepper", "type", "path", "picard", "dt"}


def _known_keys(section: str) -> tuple[str, ...]:
    return {
        "params": PhysicalParams.field_names(),
        "domain": DOMAIN_KEYS,
        "solver": SOLVER_KEYS,
        "initial": INITIAL_KEYS,
        "forcing": FORCING_KEYS,
    }[section]


@dataclass(frozen=True)
class ConfigBundle:
    params: PhysicalParams
    layout: DomainLayout
    solver: SolverConfig
    initial: InitialSpec
    path: str | None = None

    def validate(self) -> ValidationReport:
        return validate_params(self.params)

    def build_initial(self):
        return self.initial.build(self.layout)


def _locate(lines: list[str], section: str, key: str | None = None) -> int | None:
    """1-based line of a section header or of a key inside it."""
    cur = None
    for i, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        m = re.fullmatch(r"\[(.+)\]", line)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return i
            continue
        if key is not None and cur == section and re.match(rf"{re.escape(key)}\s*[=:]", line):
            return i
    return None


def _convert(section: str, key: str, value: str, line: int | None):
    if key in BOOL_KEYS:
        v = value.lower()
        if v not in ("on", "off", "true", "false", "yes", "no"):
            raise ParseError(f"[{section}] {key}: expected on or off, got {value!r}", line)
        return v in ("on", "true", "yes")
    if key in INT_KEYS:
        try:
            return int(value)
        except ValueError:
            raise ParseError(f"[{section}] {key}: expected an integer, got {value!r}", line) from None
    if key == "dt":
        if value.lower() in ("", "none", "auto"):
            return None
    elif key in STR_KEYS:
        return value
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"[{section}] {key}: expected a number, got {value!r}", line) from None


def parse_config_text(text: str, path: str | os.PathLike | None = None) -> ConfigBundle:
    """Parse config text; relative ``initial.path`` entries resolve against ``path``'s directory."""
    lines = text.splitlines()
    cp = configparser.ConfigParser(
        comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None, strict=True
    )
    cp.optionxform = str  # keys are case sensitive
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.MissingSectionHeaderError as e:
        raise ParseError("content before the first [section]", e.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ParseError(str(e).split(":", 1)[-1].strip(), getattr(e, "lineno", None)) from None
    except configparser.ParsingError as e:
        line = e.errors[0][0] if getattr(e, "errors", None) else None
        raise ParseError("malformed line", line) from None

    raw: dict[str, dict] = {s: {} for s in SECTIONS}
    for section in cp.sections():
        if section not in SECTIONS:
            raise UnknownKey(f"unknown section [{section}]", _locate(lines, section))
        known = _known_keys(section)
        for key, value in cp.items(section):
            line = _locate(lines, section, key)
            if key not in known:
                raise UnknownKey(f"unknown key {key!r} in [{section}]", line)
            raw[section][key] = _convert(section, key, value.strip(), line)
    for section, keys in REQUIRED.items():
        for key in keys:
            if key not in raw[section]:
                raise MissingKey(f"missing key {key!r} in [{section}]", _locate(lines, section))

    def build(label, fn):
        try:
            return fn()
        except (TypeError, ValueError) as e:
            raise ParseError(f"[{label}] {e}", _locate(lines, label)) from None

    params = build("params", lambda: PhysicalParams(**raw["params"]))
    dom = dict(raw["domain"])
    left_bc = dom.pop("left_bc", "wall")
    layout = build("domain", lambda: DomainLayout(params, **dom))

    fz = dict(raw["forcing"])
    ftype = fz.pop("type", "none")
    if ftype not in ("none", "sine"):
        raise ParseError(f"[forcing] type must be none or sine, got {ftype!r}", _locate(lines, "forcing", "type"))
    forcing = Forcing(**fz) if ftype == "sine" else Forcing(0.0, fz.get("omega", 1.0))

    sv = dict(raw["solver"])
    pic = str(sv.pop("picard", "off")).lower()
    if pic not in ("on", "off", "true", "false", "yes", "no"):
        raise ParseError(f"[solver] picard must be on or off, got {pic!r}", _locate(lines, "solver", "picard"))
    sv["picard"] = pic in ("on", "true", "yes")
    solver = build("solver", lambda: SolverConfig(left_bc=left_bc, forcing=forcing, **sv))

    ini = dict(raw["initial"])
    ini["kind"] = ini.pop("type")
    if ini.get("path") and path is not None and not os.path.isabs(ini["path"]):
        ini["path"] = str(Path(path).parent / ini["path"])
    initial = build("initial", lambda: InitialSpec(**ini))
    return ConfigBundle(params, layout, solver, initial, None if path is None else str(path))


def parse_config(path: str | os.PathLike) -> ConfigBundle:
    """Read and parse a config file.

    Raises:
        ParseError: malformed file or value (with line number).
        UnknownKey: key or section not recognised.
        MissingKey: a required key is absent.
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror}") from None
    return parse_config_text(text, path)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "on" if v else "off"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "none"
    return str(v)


def serialize_config(bundle: ConfigBundle) -> str:
    """Canonical text form with every key present; parses back to identical values."""
    p, lay, s, ini = bundle.params, bundle.layout, bundle.solver, bundle.initial
    out = ["[params]"]
    out += [f"{f.name} = {_fmt(getattr(p, f.name))}" for f in fields(p)]
    out += ["", "[domain]"]
    out += [f"{k} = {_fmt(getattr(lay, k) if k != 'left_bc' else s.left_bc)}" for k in DOMAIN_KEYS]
    out += ["", "[solver]"]
    out += [f"{k} = {_fmt(getattr(s, k))}" for k in SOLVER_KEYS]
    out += ["", "[initial]", f"type = {ini.kind}"]
    out += [f"{k} = {_fmt(getattr(ini, k))}" for k in INITIAL_KEYS[1:] if k != "path" or ini.path]
    f = s.forcing
    out += ["", "[forcing]", f"type = {'sine' if f.amplitude != 0 else 'none'}"]
    out += [f"amplitude = {_fmt(f.amplitude)}", f"omega = {_fmt(f.omega)}", ""]
    return "\n".join(out)


# output ----------------------------------------------------------------------

def _g17(v) -> str:
    return f"{float(v):.17g}"


def write_csv(path, columns: dict) -> None:
    """Write equal-length columns; floats get 17 significant digits."""
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns differ in length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([_g17(c[i]) if np.issubdtype(c.dtype, np.number) else str(c[i]) for c in cols])


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        names = next(rd)
        rows = list(rd)
    out = {}
    for j, name in enumerate(names):
        col = [r[j] for r in rows]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def write_snapshot(path, u: FieldState) -> None:
    write_csv(path, {"x": u.layout.x, "zeta": u.zeta, "q": u.q, "domain_tag": u.layout.tags})


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    config_path: str | None
    config_sha256: str | None
    version: str
    timestamp: str
    files: list

    def text(self) -> str:
        lines = [
            f"config: {self.config_path or '-'}",
            f"config_sha256: {self.config_sha256 or '-'}",
            f"version: {self.version}",
            f"timestamp: {self.timestamp}",
            "files:",
        ]
        lines += [f"  {f}" for f in self.files]
        return "\n".join(lines) + "\n"


def write_manifest(out_dir, config_path, files) -> RunManifest:
    from . import __version__

    out_dir = Path(out_dir)
    sha = _sha256(config_path) if config_path and Path(config_path).exists() else None
    man = RunManifest(
        str(config_path) if config_path else None,
        sha,
        __version__,
        _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        sorted(files),
    )
    (out_dir / "manifest.txt").write_text(man.text())
    return man


def write_result(out_dir, result: SimulationResult, config_path=None, extra: dict | None = None) -> RunManifest:
    """Write snapshots, traces, diagnostic series and the manifest of one run.

    ``extra`` maps file names under diagnostics/ to column dicts.
    """
    from .diagnostics import chamber_identity, energy_monitor

    out = Path(out_dir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    (out / "diagnostics").mkdir(parents=True, exist_ok=True)
    files = []
    for i, snap in enumerate(result.snapshots):
        name = f"snapshots/t_{i:05d}.csv"
        write_snapshot(out / name, snap)
        files.append(name)
    result.traces.to_csv(out / "traces.csv")
    files.append("traces.csv")
    write_csv(out / "diagnostics/series.csv", result.series)
    files.append("diagnostics/series.csv")
    em = energy_monitor(result, result.params)
    write_csv(out / "diagnostics/energy.csv", {k: em[k] for k in ("t", "energy", "work_in", "ratio")})
    write_csv(out / "diagnostics/symmetrizer_energy.csv", {"t": em["snapshot_t"], "E_S": em["E_S"]})
    files += ["diagnostics/energy.csv", "diagnostics/symmetrizer_energy.csv"]
    if len(result.traces) == len(result.series["t"]):
        ci = chamber_identity(result, result.params)
        write_csv(out / "diagnostics/chamber_identity.csv", {"t": ci["t"], "residual": ci["residual"]})
        files.append("diagnostics/chamber_identity.csv")
    for name, cols in (extra or {}).items():
        write_csv(out / "diagnostics" / name, cols)
        files.append(f"diagnostics/{name}")
    return write_manifest(out, config_path, files)
