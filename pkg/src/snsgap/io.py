"""Binary snapshots and CSV formats."""

from __future__ import annotations

import csv
import io as _io
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy

from .fourier import VorticityField

MAGIC = b"VORT"
FORMAT_VERSION = 1
PACKAGE_VERSION = "0.1.0"


# -- snapshots ---------------------------------------------------------------------


def snapshot_bytes(w: VorticityField) -> bytes:
    c = w.coeffs
    head = MAGIC + struct.pack("<II", FORMAT_VERSION, w.cutoff)
    pairs = np.empty(c.shape + (2,), dtype="<f8")
    pairs[..., 0] = c.real
    pairs[..., 1] = c.imag
    return head + pairs.tobytes(order="C")


def snapshot_from_bytes(data: bytes) -> VorticityField:
    if data[:4] != MAGIC:
        raise ValueError("not a vorticity snapshot (bad magic)")
    version, N = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    expected = 12 + (2 * N + 1) * (N + 1) * 16
    if len(data) != expected:
        raise ValueError(f"snapshot length {len(data)} does not match cutoff {N}")
    pairs = np.frombuffer(data[12:], dtype="<f8").reshape(2 * N + 1, N + 1, 2)
    return VorticityField(pairs[..., 0] + 1j * pairs[..., 1])


def write_snapshot(path: str | Path, w: VorticityField) -> None:
    Path(path).write_bytes(snapshot_bytes(w))


def read_snapshot(path: str | Path) -> VorticityField:
    return snapshot_from_bytes(Path(path).read_bytes())


# -- CSV -----------------------------------------------------------------------------


def provenance_line(config_hash: str = "-", seed: int | str = "-") -> str:
    return (
        f"# config_hash={config_hash} seed={seed} snsgap={PACKAGE_VERSION} "
        f"numpy={np.__version__} scipy={scipy.__version__}"
    )


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence], provenance: str | None = None) -> str:
    buf = _io.StringIO()
    if provenance is not None:
        buf.write(provenance + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, header, rows, provenance: str | None = None) -> None:
    Path(path).write_text(csv_text(header, rows, provenance), encoding="utf-8")


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def write_spectrum_csv(path, w: VorticityField, provenance: str | None = None) -> None:
    N = w.cutoff
    rows = []
    for i in range(2 * N + 1):
        for j in range(N + 1):
            k1 = i - N
            if (k1, j) == (0, 0) or (j == 0 and k1 < 0):
                continue
            c = w.coeffs[i, j]
            rows.append((k1, j, float(c.real), float(c.imag)))
    write_csv(path, ("k1", "k2", "re", "im"), rows, provenance)


def read_spectrum_csv(path, cutoff: int) -> VorticityField:
    header, rows = read_csv(path)
    if header != ["k1", "k2", "re", "im"]:
        raise ValueError(f"unexpected spectrum header {header}")
    modes = {(int(r[0]), int(r[1])): complex(float(r[2]), float(r[3])) for r in rows}
    return VorticityField.from_modes(cutoff, modes)


# -- kernels and transport instances ------------------------------------------------------


def _numeric_rows(path) -> list[list[float]]:
    out = []
    for ln in Path(path).read_text(encoding="utf-8").splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        out.append([float(v) for v in ln.split(",")])
    return out


def read_kernel_csv(path):
    """``n``, then ``n`` rows of the transition matrix, then ``n`` rows of the metric."""
    from .contraction import FiniteKernel
    from .transport import GroundMetric

    rows = _numeric_rows(path)
    if not rows or len(rows[0]) != 1:
        raise ValueError("kernel file must start with the state count")
    n = int(rows[0][0])
    if len(rows) != 1 + 2 * n or any(len(r) != n for r in rows[1:]):
        raise ValueError(f"kernel file needs {2 * n} rows of {n} values after the count")
    P = np.array(rows[1 : 1 + n])
    D = np.array(rows[1 + n :])
    return FiniteKernel(P, GroundMetric(D))


def write_kernel_csv(path, kernel, provenance: str | None = None) -> None:
    lines = [] if provenance is None else [provenance]
    lines.append(str(kernel.n))
    lines += [",".join(repr(float(v)) for v in row) for row in kernel.P]
    lines += [",".join(repr(float(v)) for v in row) for row in kernel.D]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_transport_instance(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``weights1`` row, ``weights2`` row, then the ``m x n`` cost rows."""
    rows = _numeric_rows(path)
    a, b = np.array(rows[0]), np.array(rows[1])
    C = np.array(rows[2:])
    if C.shape != (len(a), len(b)):
        raise ValueError(f"cost shape {C.shape} does not match weights ({len(a)}, {len(b)})")
    return a, b, C


def write_transport_instance(path, a, b, C, provenance: str | None = None) -> None:
    lines = [] if provenance is None else [provenance]
    for row in [a, b, *C]:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_transport_results(path, results, provenance: str | None = None) -> None:
    """``results``: iterable of ``(value, bound_direction, iterations)``."""
    write_csv(path, ("value", "bound_direction", "iterations"), results, provenance)
