import csv
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from app.core.exceptions import LengthMismatch
from app.schemas.multiplier import GridSpec, StateField


def fmt(value) -> str:
    """17 significant digits, scientific notation."""
    return f"{float(value):.16e}"


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return fmt(value)


def write_table_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise LengthMismatch(f"row has {len(row)} cells, header has {len(header)}")
            writer.writerow([_cell(v) for v in row])
    return path


def write_field_csv(path: Path, u: StateField) -> Path:
    """One row per grid node: x [y] re im."""
    coords = [axis.ravel() for axis in u.grid.nodes()]
    values = u.values.ravel()
    header = ["x", "y"][: u.grid.dim] + ["re", "im"]
    rows = (tuple(c[i] for c in coords) + (values[i].real, values[i].imag) for i in range(values.size))
    return write_table_csv(path, header, rows)


def read_field_csv(path: Path, time: float = 0.0) -> StateField:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(cell) for cell in row] for row in reader])
    dim = len(header) - 2
    n = round(data.shape[0] ** (1.0 / dim))
    grid = GridSpec(dim=dim, n=n, L=-data[0, 0])
    values = (data[:, dim] + 1j * data[:, dim + 1]).reshape(grid.shape)
    return StateField(grid=grid, values=values, time=time)


def gaussian(grid: GridSpec, width: float = 1.0, *, center: float = 0.0, wavenumber: float = 0.0) -> np.ndarray:
    """exp(-|x - center|^2 / width^2) on the grid nodes, times prod cos(wavenumber x_i) for a wave packet."""
    nodes = grid.nodes()
    envelope = np.exp(-sum((axis - center) ** 2 for axis in nodes) / width**2)
    if wavenumber:
        envelope = envelope * np.prod([np.cos(wavenumber * axis) for axis in nodes], axis=0)
    return envelope


def relative_l2(u: np.ndarray, reference: np.ndarray) -> float:
    scale = np.linalg.norm(reference)
    return float(np.linalg.norm(u - reference) / scale) if scale > 0 else float(np.linalg.norm(u))
