"""Result persistence: controller files, manifests, CSV interchange.

Controller files are plain text: '#'-prefixed header lines carrying the
system hash, master seed and achieved error, followed by one row of
amplitudes per control, 17 significant digits.  CSVs carry '#'-prefixed
provenance lines (seed, system hash) before a mandatory header row; numeric
cells are written with 17 significant digits so values parse back exactly.
"""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np

from .synthesis import Controller
from .system import ControlSystem, PulseSequence

__all__ = [
    "DataError",
    "system_hash",
    "save_controller",
    "load_controller",
    "controller_filename",
    "write_manifest",
    "write_csv",
    "read_csv",
]

_FMT = "%.17g"


class DataError(ValueError):
    """Corrupt or inconsistent result file."""


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return _FMT % x
    return str(x)


def system_hash(system: ControlSystem) -> str:
    """Hash of the system definition (dims, grid, matrices), 12 hex digits."""
    h = hashlib.sha256()
    h.update(f"N={system.dim};M={system.n_controls};"
             f"kappa={system.kappa};delta={system.delta!r};".encode())
    h.update(np.ascontiguousarray(system.h0).tobytes())
    for hm in system.interactions:
        h.update(np.ascontiguousarray(hm).tobytes())
    return h.hexdigest()[:12]


def controller_filename(index: int) -> str:
    return f"controller_{index:03d}.txt"


def save_controller(path, controller: Controller, system: ControlSystem) -> None:
    path = Path(path)
    f = controller.pulse.amplitudes
    lines = [
        f"# system_hash: {system_hash(system)}",
        f"# seed: {controller.seed}",
        f"# restart: {controller.restart_index}",
        f"# error: {_FMT % controller.error}",
        f"# iterations: {controller.iterations}",
        f"# converged: {int(controller.converged)}",
        f"# grad_inf_norm: {_FMT % controller.grad_inf_norm}",
        f"# controls: {f.shape[0]}",
        f"# steps: {f.shape[1]}",
    ]
    for m in range(f.shape[0]):
        lines.append(" ".join(_FMT % x for x in f[m]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_controller(path, system: ControlSystem | None = None) -> Controller:
    """Read a controller file; validates the system hash when a system is given."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read controller file {path}: {exc}") from exc
    header = {}
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, _, val = body.partition(":")
                header[key.strip()] = val.strip()
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise DataError(f"{path}: bad amplitude row: {exc}") from exc
    required = {"system_hash", "seed", "restart", "error", "controls", "steps"}
    missing = required - set(header)
    if missing:
        raise DataError(f"{path}: missing header field(s) {sorted(missing)}")
    n_controls, n_steps = int(header["controls"]), int(header["steps"])
    if len(rows) != n_controls or any(len(r) != n_steps for r in rows):
        raise DataError(
            f"{path}: amplitude table is not {n_controls} x {n_steps}"
        )
    if system is not None and header["system_hash"] != system_hash(system):
        raise DataError(
            f"{path}: system hash {header['system_hash']} does not match the "
            f"configured system ({system_hash(system)})"
        )
    return Controller(
        pulse=PulseSequence(np.array(rows)),
        error=float(header["error"]),
        restart_index=int(header["restart"]),
        seed=int(header["seed"]),
        iterations=int(header.get("iterations", 0)),
        converged=bool(int(header.get("converged", 0))),
        grad_inf_norm=float(header.get("grad_inf_norm", np.nan)),
        error_trace=(),
    )


def write_csv(path, header: list, rows: list, provenance: dict | None = None) -> None:
    """Write a CSV with '#'-prefixed provenance lines, a header row, and rows.

    Floats are formatted with 17 significant digits (lossless round trip).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for key, val in (provenance or {}).items():
            fh.write(f"# {key}={val}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def read_csv(path, required_columns: list | None = None):
    """Read a CSV written by `write_csv`; returns (header, rows, provenance).

    Raises
    ------
    DataError
        On a missing file, missing header, or missing required columns.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    provenance = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            stripped = line[1:].strip()
            if "=" in stripped:
                key, _, val = stripped.partition("=")
                provenance[key.strip()] = val.strip()
            continue
        if line.strip():
            body.append(line)
    if not body:
        raise DataError(f"{path}: no header row")
    reader = csv.reader(body)
    header = next(reader)
    rows = [dict(zip(header, row)) for row in reader]
    if required_columns:
        missing = [c for c in required_columns if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
    return header, rows, provenance


def write_manifest(path, entries: list, provenance: dict | None = None) -> None:
    """Manifest of written controller files: index, file, restart, error, flags."""
    header = ["index", "file", "restart", "error", "iterations", "converged"]
    rows = [
        [e["index"], e["file"], e["restart"], e["error"], e["iterations"],
         e["converged"]]
        for e in entries
    ]
    write_csv(path, header, rows, provenance=provenance)
