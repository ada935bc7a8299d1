"""Legacy ASCII VTK output of the active cells with per-cell data."""
import numpy as np

VTK_QUAD = 9


def write_vtk(path, cx, cell_data, title="hpstokes"):
    """Write the cells of complex ``cx`` as an unstructured grid of quads.

    Points are listed in order of first appearance, cell by cell, so that the
    file only depends on the cell order.  ``cell_data`` maps names to arrays
    with one entry per cell; integer arrays are written as ``int``.
    """
    index = {}
    points = []
    conn = []
    for vids, xy in zip(cx.vertex_ids, cx.xy):
        row = []
        for v, x in zip(vids, xy):
            v = int(v)
            if v not in index:
                index[v] = len(points)
                points.append(x)
            row.append(index[v])
        conn.append(row)
    n = len(conn)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(points)} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in (map(float, p) for p in points)]
    lines.append(f"CELLS {n} {5 * n}")
    lines += ["4 " + " ".join(map(str, row)) for row in conn]
    lines.append(f"CELL_TYPES {n}")
    lines += [str(VTK_QUAD)] * n
    if cell_data:
        lines.append(f"CELL_DATA {n}")
        for name, values in cell_data.items():
            values = np.asarray(values)
            if values.shape != (n,):
                raise ValueError(f"cell data {name!r} has shape {values.shape}, expected ({n},)")
            if np.issubdtype(values.dtype, np.integer) or values.dtype == bool:
                lines += [f"SCALARS {name} int 1", "LOOKUP_TABLE default"]
                lines += [str(int(v)) for v in values]
            else:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [repr(float(v)) for v in values]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_cell_data(path):
    """Parse the CELL_DATA section written by :func:`write_vtk` into arrays."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    data = {}
    i = 0
    n = 0
    while i < len(tokens):
        line = tokens[i]
        if line.startswith("CELL_DATA"):
            n = int(line.split()[1])
        elif line.startswith("SCALARS"):
            _, name, kind, _ = line.split()
            raw = tokens[i + 2:i + 2 + n]
            conv = int if kind == "int" else float
            data[name] = np.array([conv(v) for v in raw])
            i += 1 + n
        i += 1
    return data
