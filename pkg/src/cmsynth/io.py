"""File formats: T-matrix containers, scene configuration and CSV tables.

Container layout (all lines UTF-8 text up to the payload)::

    cmsynth-container
    format_version: 1
    <key>: <JSON value>
    ...
    end_header
    <payload>

The payload is either raw little-endian complex128 values in row-major order
(``encoding: "binary"``) or one ``re im`` line per value written with
``float.hex`` (``encoding: "text"``).  Both round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import re
import tempfile
from pathlib import Path

import numpy as np
import yaml

from cmsynth import __version__
from cmsynth.basis import CONVENTION, BasisSpec, TMatrix, basis_size
from cmsynth.mie import SphereSpec
from cmsynth.rotation import EulerAngles
from cmsynth.synthesis import Scene, StructureInstance

MAGIC = "cmsynth-container"
FORMAT_VERSION = 1
TEXT_LIMIT = 64  # default to the text payload up to this N


class FormatError(ValueError):
    pass


def atomic_write(path, data):
    """Write bytes to ``path`` via a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode(header, array, encoding):
    arr = np.ascontiguousarray(array, dtype="<c16")
    head = dict(header)
    head["shape"] = list(arr.shape)
    head["encoding"] = encoding
    lines = [MAGIC, f"format_version: {FORMAT_VERSION}"]
    lines += [f"{key}: {json.dumps(head[key], sort_keys=True)}" for key in sorted(head)]
    lines.append("end_header")
    text = ("\n".join(lines) + "\n").encode()
    if encoding == "binary":
        return text + arr.tobytes()
    if encoding != "text":
        raise ValueError(f"unknown payload encoding {encoding!r}")
    body = "".join(f"{float(z.real).hex()} {float(z.imag).hex()}\n" for z in arr.ravel())
    return text + body.encode()


def write_container(path, header, array, encoding=None):
    arr = np.asarray(array)
    if encoding is None:
        encoding = "text" if max(arr.shape) <= TEXT_LIMIT else "binary"
    atomic_write(path, _encode(header, arr, encoding))


def read_container(path):
    """Return ``(header, array)`` from a container file."""
    raw = Path(path).read_bytes()
    end = raw.find(b"\nend_header\n")
    if not raw.startswith(MAGIC.encode() + b"\n") or end < 0:
        raise FormatError(f"{path}: not a cmsynth container (missing magic line or end_header)")
    header = {}
    for lineno, line in enumerate(raw[:end].decode().splitlines()[1:], start=2):
        key, sep, value = line.partition(":")
        if not sep:
            raise FormatError(f"{path}:{lineno}: malformed header line {line!r}")
        try:
            header[key.strip()] = json.loads(value)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: bad value for {key.strip()!r}: {exc}") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format_version {version!r} (this reader knows {FORMAT_VERSION})")
    shape = tuple(header.get("shape", ()))
    count = math.prod(shape)
    payload = raw[end + len(b"\nend_header\n"):]
    enc = header.get("encoding")
    if enc == "binary":
        if len(payload) != 16 * count:
            raise FormatError(f"{path}: payload holds {len(payload)} bytes, expected {16 * count} "
                              f"for shape {shape} (truncated or corrupt file)")
        arr = np.frombuffer(payload, dtype="<c16").astype(complex).reshape(shape)
    elif enc == "text":
        rows = payload.decode().split()
        if len(rows) != 2 * count:
            raise FormatError(f"{path}: text payload holds {len(rows) // 2} values, expected {count} "
                              f"(truncated or corrupt file)")
        vals = np.array([float.fromhex(v) for v in rows]).reshape(-1, 2)
        arr = (vals[:, 0] + 1j * vals[:, 1]).reshape(shape)
    else:
        raise FormatError(f"{path}: unknown payload encoding {enc!r}")
    return header, arr


def save_tmatrix(tmatrix, path, encoding=None, **extra):
    """Write a T-matrix; diagonal matrices keep the diagonal layout."""
    header = {
        "kind": "tmatrix",
        "convention": tmatrix.basis.convention,
        "k": float(tmatrix.k),
        "lmax": tmatrix.basis.lmax,
        "n": tmatrix.basis.size,
        "layout": "diagonal" if tmatrix.is_diagonal else "dense-row-major",
        "tool_version": __version__,
    }
    for key, value in tmatrix.meta.items():
        if key == "path":
            continue
        if isinstance(value, (str, int, float, bool)) or value is None:
            header.setdefault(f"meta.{key}", value)
    header.update(extra)
    write_container(path, header, tmatrix.data, encoding)


def load_tmatrix(path):
    """Read a T-matrix file, enforcing convention and size consistency."""
    header, arr = read_container(path)
    if header.get("kind") != "tmatrix":
        raise FormatError(f"{path}: container holds {header.get('kind')!r}, not a tmatrix")
    conv = header.get("convention")
    if conv != CONVENTION:
        raise FormatError(f"{path}: convention mismatch: file uses {conv!r}, this build uses {CONVENTION!r}")
    lmax, n = header.get("lmax"), header.get("n")
    if not isinstance(lmax, int) or lmax < 1 or n != basis_size(lmax):
        raise FormatError(f"{path}: inconsistent size: lmax={lmax!r} needs N={basis_size(lmax) if isinstance(lmax, int) else '?'}, header says n={n!r}")
    layout = header.get("layout")
    want = (n,) if layout == "diagonal" else (n, n)
    if layout not in ("diagonal", "dense-row-major") or arr.shape != want:
        raise FormatError(f"{path}: layout {layout!r} with payload shape {arr.shape} does not match N={n}")
    meta = {key[5:]: value for key, value in header.items() if key.startswith("meta.")}
    meta["path"] = str(path)
    return TMatrix(arr, float(header["k"]), BasisSpec(lmax), meta)


def save_operator(op, path, encoding=None):
    """Dump a translation operator in the container format."""
    header = {
        "kind": op.kind,
        "convention": op.basis_out.convention,
        "lmax": op.basis_out.lmax,
        "lmax_in": op.basis_in.lmax,
        "displacement_kd": [float(v) for v in op.displacement],
        "layout": "dense-row-major",
        "tool_version": __version__,
    }
    write_container(path, header, op.matrix, encoding)


# scene configuration ------------------------------------------------------

class ConfigError(ValueError):
    pass


class _Map(dict):
    lines: dict
    line: int


class _Seq(list):
    lines: list
    line: int


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 reads "2.0e8" as a string; accept exponents without a sign
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


def _construct_map(loader, node):
    out = _Map()
    out.line = node.start_mark.line + 1
    out.lines = {}
    for knode, vnode in node.value:
        key = loader.construct_object(knode, deep=True)
        out[key] = loader.construct_object(vnode, deep=True)
        out.lines[key] = vnode.start_mark.line + 1
    return out


def _construct_seq(loader, node):
    out = _Seq(loader.construct_object(v, deep=True) for v in node.value)
    out.line = node.start_mark.line + 1
    out.lines = [v.start_mark.line + 1 for v in node.value]
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_seq)


class _Ctx:
    def __init__(self, path):
        self.path = path

    def fail(self, line, field, msg):
        raise ConfigError(f"{self.path}:{line}: {field}: {msg}")

    def get(self, mapping, key, field, kind, required=True, default=None):
        if key not in mapping:
            if required:
                self.fail(getattr(mapping, "line", 0), field, f"missing required field '{key}'")
            return default
        value = mapping[key]
        line = mapping.lines.get(key, 0) if isinstance(mapping, _Map) else 0
        name = f"{field}.{key}" if field else key
        if kind == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                self.fail(line, name, f"expected a number, got {value!r}")
            return float(value)
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                self.fail(line, name, f"expected an integer, got {value!r}")
            return value
        if kind == "vec3":
            if not isinstance(value, list) or len(value) != 3 or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                self.fail(line, name, f"expected a list of 3 numbers, got {value!r}")
            return tuple(float(v) for v in value)
        if kind == "str":
            if not isinstance(value, str):
                self.fail(line, name, f"expected a string, got {value!r}")
            return value
        if kind == "map":
            if not isinstance(value, dict):
                self.fail(line, name, "expected a mapping")
            return value
        if kind == "list":
            if not isinstance(value, list):
                self.fail(line, name, "expected a list")
            return value
        raise AssertionError(kind)


_TOP_KEYS = {"frequency_hz", "sweep", "padding", "structure_padding", "n_modes", "structures", "outputs"}
_STRUCT_KEYS = {"name", "role", "position_m", "euler_deg", "sphere", "tmatrix_file", "enclosing_radius_m"}


class SceneConfig:
    """Parsed configuration: a scene plus run settings."""

    def __init__(self, path, structures, frequency, sweep, padding, structure_padding, n_modes, outputs):
        self.path = path
        self.structures = structures
        self.frequency = frequency
        self.sweep = sweep
        self.padding = padding
        self.structure_padding = structure_padding
        self.n_modes = n_modes
        self.outputs = outputs

    def scene(self, frequency=None, padding=None):
        from cmsynth.modes import wavenumber

        f = frequency if frequency is not None else self.frequency
        if f is None:
            f = self.sweep[0] if self.sweep else None
        if f is None:
            raise ConfigError(f"{self.path}: no frequency_hz or sweep given")
        pad = self.padding if padding is None else padding
        return Scene(tuple(self.structures), wavenumber(f), pad, self.structure_padding)


def _sphere(ctx, node, field):
    layers = ctx.get(node, "layers", field, "list")
    out = []
    for i, layer in enumerate(layers):
        name = f"{field}.layers[{i}]"
        if not isinstance(layer, dict):
            ctx.fail(layers.lines[i], name, "expected a mapping with radius_m and material")
        radius = ctx.get(layer, "radius_m", name, "number")
        material = layer.get("material")
        if isinstance(material, bool) or not isinstance(material, (str, int, float)):
            ctx.fail(layer.line, f"{name}.material", f"expected 'pec' or a permittivity, got {material!r}")
        out.append((radius, material))
    try:
        return SphereSpec(tuple(out))
    except ValueError as exc:
        ctx.fail(node.line, field, str(exc))


def load_scene_config(path):
    """Parse a YAML scene file.

    Errors name the file, line and field that failed.
    """
    path = Path(path)
    ctx = _Ctx(path)
    try:
        doc = yaml.load(path.read_text(), Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 0
        raise ConfigError(f"{path}:{line}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}:1: top level must be a mapping")
    for key in doc:
        if key not in _TOP_KEYS:
            ctx.fail(doc.lines[key], key, f"unknown field (allowed: {', '.join(sorted(_TOP_KEYS))})")
    freq = ctx.get(doc, "frequency_hz", "", "number", required=False)
    if freq is not None and freq <= 0:
        ctx.fail(doc.lines["frequency_hz"], "frequency_hz", "must be positive")
    sweep = None
    if "sweep" in doc:
        sw = ctx.get(doc, "sweep", "", "map")
        start = ctx.get(sw, "start_hz", "sweep", "number")
        stop = ctx.get(sw, "stop_hz", "sweep", "number")
        points = ctx.get(sw, "points", "sweep", "int")
        if not 0 < start <= stop or points < 1:
            ctx.fail(sw.line, "sweep", "need 0 < start_hz <= stop_hz and points >= 1")
        sweep = (start, stop, points)
    if freq is None and sweep is None:
        ctx.fail(1, "frequency_hz", "give frequency_hz or a sweep")
    padding = ctx.get(doc, "padding", "", "int", required=False)
    if padding is not None and padding < 0:
        ctx.fail(doc.lines["padding"], "padding", "must be non-negative")
    spad = ctx.get(doc, "structure_padding", "", "int", required=False, default=0)
    n_modes = ctx.get(doc, "n_modes", "", "int", required=False)
    outputs = ctx.get(doc, "outputs", "", "map", required=False, default={})
    items = ctx.get(doc, "structures", "", "list")
    if not items:
        ctx.fail(doc.lines["structures"], "structures", "need at least one structure")
    structures = []
    for i, item in enumerate(items):
        field = f"structures[{i}]"
        if not isinstance(item, dict):
            ctx.fail(items.lines[i], field, "expected a mapping")
        for key in item:
            if key not in _STRUCT_KEYS:
                ctx.fail(item.lines[key], f"{field}.{key}",
                         f"unknown field (allowed: {', '.join(sorted(_STRUCT_KEYS))})")
        name = ctx.get(item, "name", field, "str", required=False, default=f"structure {i}")
        role = ctx.get(item, "role", field, "str", required=False, default="key")
        if role not in ("key", "background"):
            ctx.fail(item.lines["role"], f"{field}.role", f"must be 'key' or 'background', got {role!r}")
        pos = ctx.get(item, "position_m", field, "vec3", required=False, default=(0.0, 0.0, 0.0))
        euler = ctx.get(item, "euler_deg", field, "vec3", required=False, default=(0.0, 0.0, 0.0))
        radius = ctx.get(item, "enclosing_radius_m", field, "number", required=False)
        has_sphere, has_file = "sphere" in item, "tmatrix_file" in item
        if has_sphere == has_file:
            ctx.fail(item.line, field, "give exactly one of 'sphere' or 'tmatrix_file'")
        if has_sphere:
            source = _sphere(ctx, ctx.get(item, "sphere", field, "map"), f"{field}.sphere")
        else:
            rel = ctx.get(item, "tmatrix_file", field, "str")
            source = str((path.parent / rel).resolve())
            if not os.path.exists(source):
                ctx.fail(item.lines["tmatrix_file"], f"{field}.tmatrix_file", f"file not found: {source}")
        try:
            structures.append(StructureInstance(source, pos, EulerAngles.from_degrees(*euler),
                                                radius, role, name))
        except (ValueError, FormatError) as exc:
            ctx.fail(item.line, field, str(exc))
    cfg = SceneConfig(path, structures, freq, sweep, padding, spad, n_modes, dict(outputs))
    try:
        Scene(tuple(structures), 1.0, padding, spad)
    except ValueError as exc:
        ctx.fail(items.line, "structures", str(exc))
    return cfg


# tables -------------------------------------------------------------------

TRACE_COLUMNS = ("frequency_hz", "track_id", "re_t", "im_t", "abs_t", "abs_s")
PATTERN_COLUMNS = ("theta_deg", "phi_deg", "re_e_theta", "im_e_theta", "re_e_phi", "im_e_phi", "power_db")


def _num(x):
    return repr(float(x))


def _table(meta, columns, rows):
    buf = _io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}: {meta[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue().encode()


def trace_table(rows, meta):
    """CSV bytes for ``(frequency, track_id, t)`` rows."""
    body = sorted(rows, key=lambda r: (r[0], r[1]))
    out = [(_num(f), str(int(tid)), _num(t.real), _num(t.imag), _num(abs(t)), _num(abs(1 + 2 * t)))
           for f, tid, t in body]
    return _table(meta, TRACE_COLUMNS, out)


def pattern_table(pattern, meta):
    """CSV bytes for a far-field pattern."""
    db = pattern.normalized_db()
    out = [(_num(np.degrees(t)), _num(np.degrees(p)), _num(et.real), _num(et.imag), _num(ep.real),
            _num(ep.imag), _num(d))
           for t, p, et, ep, d in zip(pattern.theta, pattern.phi, pattern.e_theta, pattern.e_phi, db)]
    return _table(meta, PATTERN_COLUMNS, out)


def read_table(path):
    """One-pass reader: ``(meta, header, rows)`` with rows as strings."""
    meta, rows, header = {}, [], None
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(": ")
                meta[key] = value
            elif header is None:
                header = next(csv.reader([line]))
            else:
                rows.append(next(csv.reader([line])))
    return meta, header, rows
