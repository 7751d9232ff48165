"""CSV dataset schema.

One header row, then one row per observation. Outcome columns come first:
``y`` for scalar outcomes, ``y_t1..y_tT`` for panels. Covariate columns are
``x1..xd`` for binary and ordered models, ``x_a{s}_{k}`` (alternative ``s``)
for multinomial models and ``x_t{t}_{k}`` (period ``t``) for panels. Floats
are written with ``repr`` so they read back bit-for-bit.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from indexclr.errors import InvalidDataError
from indexclr.models import Dataset, SignModel


def column_names(model: SignModel) -> tuple[list[str], list[str]]:
    """``(outcome columns, covariate columns)`` expected for ``model``."""
    kind, p = model.kind, model.params
    if kind in ("binary", "ordered"):
        return ["y"], [f"x{k}" for k in range(1, model.n_covariates + 1)]
    if kind == "multinomial":
        return ["y"], [f"x_a{s}_{k}" for s in range(1, p["K"] + 1) for k in range(1, p["q"] + 1)]
    if kind in ("panel_binary", "panel_ordered"):
        T, q = p["T"], p["q"]
        return [f"y_t{t}" for t in range(1, T + 1)], [f"x_t{t}_{k}" for t in range(1, T + 1) for k in range(1, q + 1)]
    raise InvalidDataError(f"no CSV schema for model kind {kind!r}")


def dataset_to_csv(data: Dataset, model: SignModel) -> str:
    ycols, xcols = column_names(model)
    model.check_dataset(data)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ycols + xcols)
    Y = data.Y.reshape(data.n, -1)
    for y, x in zip(Y, data.X):
        w.writerow([str(int(v)) for v in y] + [repr(float(v)) for v in x])
    return buf.getvalue()


def write_dataset(data: Dataset, model: SignModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dataset_to_csv(data, model))


def dataset_from_csv(text: str, model: SignModel, source="<csv>") -> Dataset:
    """Parse ``text`` against the schema of ``model``.

    Errors name the offending line (1-based, header is line 1) and column.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InvalidDataError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    ycols, xcols = column_names(model)
    expected = ycols + xcols
    if header != expected:
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        detail = []
        if missing:
            detail.append(f"missing {missing}")
        if extra:
            detail.append(f"unexpected {extra}")
        if not detail:
            detail.append("columns out of order")
        raise InvalidDataError(f"{source}: header does not match the {model.kind} schema {expected}: " + "; ".join(detail))
    body = rows[1:]
    if not body:
        raise InvalidDataError(f"{source}: no data rows")
    values = np.empty((len(body), len(expected)))
    for i, row in enumerate(body):
        if len(row) != len(expected):
            raise InvalidDataError(f"{source}: line {i + 2} has {len(row)} fields, expected {len(expected)}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise InvalidDataError(f"{source}: line {i + 2}, column {expected[j]!r}: not a number: {cell!r}") from None
            if not np.isfinite(values[i, j]):
                raise InvalidDataError(f"{source}: line {i + 2}, column {expected[j]!r}: non-finite value")
    ny = len(ycols)
    Y = values[:, 0] if ny == 1 else values[:, :ny]
    data = Dataset(values[:, ny:], Y)
    try:
        model.check_dataset(data)
    except InvalidDataError as exc:
        raise InvalidDataError(f"{source}: {exc}") from None
    return data


def read_dataset(path, model: SignModel) -> Dataset:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidDataError(f"cannot read dataset {path}: {exc.strerror}") from None
    return dataset_from_csv(text, model, source=str(path))
