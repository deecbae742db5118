"""Output writers: diagnostics CSV, VTK legacy snapshots and the run manifest."""

from __future__ import annotations

import csv
import os
import tempfile
from pathlib import Path

import numpy as np

from .surface_mesh import SurfaceMesh, write_mesh_text


def write_vtk(surf: SurfaceMesh, path, point_data: dict | None = None) -> None:
    """VTK legacy ASCII POLYDATA: line cells for curves, triangle cells for surfaces."""
    pts = surf.vertices
    if surf.dim == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    cell_kind = "LINES" if surf.dim == 2 else "POLYGONS"
    nv = surf.simplices.shape[1]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\nmembrane snapshot\nASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {len(pts)} double\n")
        np.savetxt(fh, pts, fmt="%.17g")
        fh.write(f"{cell_kind} {surf.n_simplices} {surf.n_simplices * (nv + 1)}\n")
        np.savetxt(fh, np.column_stack([np.full(surf.n_simplices, nv), surf.simplices]), fmt="%d")
        if point_data:
            fh.write(f"POINT_DATA {len(pts)}\n")
            for name, values in point_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                np.savetxt(fh, np.asarray(values, dtype=float).reshape(-1), fmt="%.17g")


def read_vtk_points(path) -> tuple[np.ndarray, dict]:
    """Read back the points and scalar point-data arrays of a file written by ``write_vtk``."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    i = next(k for k, ln in enumerate(tokens) if ln.startswith("POINTS"))
    n = int(tokens[i].split()[1])
    pts = np.array([[float(x) for x in ln.split()] for ln in tokens[i + 1:i + 1 + n]])
    data = {}
    for k, ln in enumerate(tokens):
        if ln.startswith("SCALARS"):
            name = ln.split()[1]
            data[name] = np.array([float(x) for x in tokens[k + 2:k + 2 + n]])
    return pts, data


def write_snapshot(state, out_dir, tag: str) -> list[Path]:
    """VTK file with C, M and |κ| plus the plain-text mesh for one state."""
    out_dir = Path(out_dir)
    vtk = out_dir / f"snapshot_{tag}.vtk"
    mesh = out_dir / f"mesh_{tag}.txt"
    write_vtk(state.surf, vtk, {"C": state.C, "M": state.M, "kappa_norm": np.linalg.norm(state.kappa, axis=1)})
    write_mesh_text(state.surf, mesh)
    return [vtk, mesh]


class DiagnosticsWriter:
    """Append-only CSV of per-step diagnostics with a fixed header."""

    def __init__(self, path, columns):
        self.path = Path(path)
        self.columns = tuple(columns)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(self.columns)

    def write(self, record: dict) -> None:
        self._writer.writerow([repr(float(record[c])) if isinstance(record[c], float) else record[c]
                               for c in self.columns])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: cols[:, i] for i, name in enumerate(header)}


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory followed by a rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
