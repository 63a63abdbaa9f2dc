"""File formats shared by the CLI and the experiment harness.

Matrices travel as headerless row-major CSV with 17 significant decimal
digits per entry, which round-trips IEEE double exactly. Model parameters
travel as JSON with the transition matrix either inline (list of rows) or
as a path to a matrix CSV relative to the JSON file.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .model import ModelParams

SCHEMA_VERSION = 1


def format_float(x: float) -> str:
    """Decimal text with 17 significant digits (exact float64 round trip)."""
    return f"{float(x):.17g}"


def write_text_atomic(path, text: str) -> None:
    """Write via a temp file in the same directory plus rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def matrix_to_csv(m: np.ndarray) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return "\n".join(",".join(format_float(v) for v in row) for row in m) + "\n"


def save_matrix(path, m: np.ndarray) -> None:
    write_text_atomic(path, matrix_to_csv(m))


def load_matrix(path) -> np.ndarray:
    """Read a headerless CSV matrix; dimensions are inferred from the file."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows in matrix file")
    return np.array(rows, dtype=float)


def save_params(path, params: ModelParams, a_path: str | None = None) -> None:
    """Serialize ModelParams as JSON.

    If ``a_path`` is given, the transition matrix is stored as that path
    (relative to the JSON file) and the caller is responsible for writing
    the matrix CSV there; otherwise rows are stored inline.
    """
    doc = {
        "schema_version": SCHEMA_VERSION,
        "p": params.p,
        "A": a_path if a_path is not None else params.A.tolist(),
        "sigma_eta_sq": params.sigma_eta_sq,
        "sigma_eps_sq": params.sigma_eps_sq,
    }
    write_text_atomic(path, json.dumps(doc, indent=2) + "\n")


def load_params(path) -> ModelParams:
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("p", "A", "sigma_eta_sq", "sigma_eps_sq"):
        if key not in doc:
            raise ValueError(f"{path}: missing field {key!r}")
    a_field = doc["A"]
    if isinstance(a_field, str):
        a = load_matrix(path.parent / a_field)
    else:
        a = np.array(a_field, dtype=float)
    if a.shape != (doc["p"], doc["p"]):
        raise ValueError(f"{path}: A has shape {a.shape}, expected p={doc['p']}")
    return ModelParams(a, float(doc["sigma_eta_sq"]), float(doc["sigma_eps_sq"]))
