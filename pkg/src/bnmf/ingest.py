"""Reading, writing, preprocessing, and synthesizing masked matrices.

CSV conventions: comma-separated numeric cells, a configurable missing
token ("NA" by default, empty cells count too), no header unless asked.
An optional companion mask file of 0/1 cells can override which entries
count as observed.

Preprocessing recipes mirror two dataset preparations plus a pass-through:

* ``gdsc``: entries are log-scale drug response values; exponentiate, cap
  at ``cap_value``, and round to the nearest integer.
* ``meth``: entries are unit-interval methylation levels; multiply by
  ``scale_factor`` and round to the nearest integer.
* ``raw``: leave values untouched.

Rounding is half-away-from-zero on nonnegative input, i.e. floor(x + 0.5).
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from .matrices import FactorPair, ObservedMatrix
from .streams import SYNTH_STREAM, make_rng


class RecipeKind(enum.Enum):
    GDSC_IC50 = "gdsc"
    GENE_BODY_METH = "meth"
    RAW = "raw"

    @classmethod
    def from_name(cls, name: str) -> "RecipeKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(r.value for r in cls)
            raise ValueError(
                f"unknown recipe {name!r}; expected one of: {valid}"
            ) from None


@dataclass(frozen=True)
class DatasetRecipe:
    """A preprocessing recipe and its constants."""

    kind: RecipeKind
    cap_value: float = 100.0
    scale_factor: float = 20.0

    def __post_init__(self):
        for name in ("cap_value", "scale_factor"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be positive and finite, got {value}")
            object.__setattr__(self, name, value)


class DataFormatError(ValueError):
    """Malformed input file: ragged rows, unparseable or out-of-domain cells."""


def _read_rows(path, header: bool) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if header and rows:
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(
                f"{path}: row {i + 1} has {len(row)} fields, expected {width}"
            )
    return rows


def load_csv(
    path,
    missing_token: str = "NA",
    header: bool = False,
    mask_path=None,
) -> ObservedMatrix:
    """Read a masked matrix from a delimited file.

    Cells equal to ``missing_token`` (or empty) are masked out.  Observed
    cells must parse as finite nonnegative numbers.  If ``mask_path`` names
    a 0/1 file of the same shape it overrides the observation mask; a cell
    it marks observed must still hold a parseable value.
    """
    rows = _read_rows(path, header)
    n_rows, n_cols = len(rows), len(rows[0])
    values = np.zeros((n_rows, n_cols))
    parsed = np.zeros((n_rows, n_cols), dtype=bool)
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            token = cell.strip()
            if token == missing_token or token == "":
                continue
            try:
                value = float(token)
            except ValueError:
                raise DataFormatError(
                    f"{path}: unparseable value {token!r} at row {i + 1}, column {j + 1}"
                ) from None
            if not math.isfinite(value):
                raise DataFormatError(
                    f"{path}: non-finite value at row {i + 1}, column {j + 1}"
                )
            if value < 0.0:
                raise DataFormatError(
                    f"{path}: negative value {value} at row {i + 1}, column {j + 1}"
                )
            values[i, j] = value
            parsed[i, j] = True
    if mask_path is None:
        return ObservedMatrix(values, parsed)
    mask = _load_mask(mask_path, (n_rows, n_cols))
    uncovered = mask & ~parsed
    if uncovered.any():
        i, j = np.argwhere(uncovered)[0]
        raise DataFormatError(
            f"{mask_path}: cell ({i + 1}, {j + 1}) marked observed but "
            f"{path} has no value there"
        )
    return ObservedMatrix(values, mask)


def _load_mask(path, shape: tuple[int, int]) -> np.ndarray:
    rows = _read_rows(path, header=False)
    if (len(rows), len(rows[0])) != shape:
        raise DataFormatError(
            f"{path}: mask shape {(len(rows), len(rows[0]))} does not match data shape {shape}"
        )
    mask = np.zeros(shape, dtype=bool)
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            token = cell.strip()
            if token == "1":
                mask[i, j] = True
            elif token != "0":
                raise DataFormatError(
                    f"{path}: mask cells must be 0 or 1, got {token!r} "
                    f"at row {i + 1}, column {j + 1}"
                )
    return mask


def write_csv(data: ObservedMatrix, path, missing_token: str = "NA") -> None:
    """Write a masked matrix; masked-out cells become the missing token.

    Observed values are written with full repr precision, so a write/load
    round trip reproduces the mask and the observed values exactly.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for i in range(data.shape[0]):
            writer.writerow(
                [
                    repr(float(data.values[i, j])) if data.mask[i, j] else missing_token
                    for j in range(data.shape[1])
                ]
            )


def preprocess(data: ObservedMatrix, recipe: DatasetRecipe) -> ObservedMatrix:
    """Apply a recipe's transform to the observed entries.

    The mask is unchanged; masked-out cells are zeroed in the result.  The
    gdsc exponentiation never overflows into an error: values past the cap
    saturate at ``cap_value``.
    """
    if recipe.kind is RecipeKind.RAW:
        return data
    if recipe.kind is RecipeKind.GDSC_IC50:
        with np.errstate(over="ignore"):
            out = np.exp(data.values)
        out = np.minimum(out, recipe.cap_value)
    else:
        out = data.values * recipe.scale_factor
    out = np.floor(out + 0.5)
    out[~data.mask] = 0.0
    return ObservedMatrix(out, data.mask)


def synth_gee(
    m_rows: int,
    n_cols: int,
    k: int,
    lam: float = 0.1,
    noise_var: float = 1.0,
    observed_fraction: float = 1.0,
    seed: int = 0,
) -> tuple[ObservedMatrix, FactorPair, float]:
    """Draw a synthetic benchmark matrix from exponential factors.

    W and Z entries are i.i.d. exponential with rate ``lam``; the data is
    their product plus Gaussian noise of variance ``noise_var``, clamped at
    zero.  A uniform subset of exactly ``floor(fraction * m * n)`` cells is
    observed.  The standard-normal noise field is drawn even at
    ``noise_var = 0`` so the factors and mask match across noise levels at
    the same seed.

    Returns the data, the generating factors, and the true noise variance.
    """
    if m_rows < 1 or n_cols < 1 or k < 1:
        raise ValueError("matrix dimensions and k must be at least 1")
    lam = float(lam)
    noise_var = float(noise_var)
    observed_fraction = float(observed_fraction)
    if not math.isfinite(lam) or lam <= 0.0:
        raise ValueError(f"lam must be positive and finite, got {lam}")
    if not math.isfinite(noise_var) or noise_var < 0.0:
        raise ValueError(f"noise_var must be nonnegative, got {noise_var}")
    if not 0.0 < observed_fraction <= 1.0:
        raise ValueError(
            f"observed_fraction must lie in (0, 1], got {observed_fraction}"
        )
    total = m_rows * n_cols
    n_observed = int(observed_fraction * total)
    if n_observed < 1:
        raise ValueError("observed_fraction leaves no observed entries")
    rng = make_rng(seed, SYNTH_STREAM)
    W = rng.standard_exponential((m_rows, k)) / lam
    Z = rng.standard_exponential((k, n_cols)) / lam
    values = W @ Z + math.sqrt(noise_var) * rng.standard_normal((m_rows, n_cols))
    values = np.maximum(values, 0.0)
    flat = np.zeros(total, dtype=bool)
    flat[rng.choice(total, size=n_observed, replace=False)] = True
    mask = flat.reshape(m_rows, n_cols)
    return ObservedMatrix(values, mask), FactorPair(W, Z), noise_var
