"""Tabular data model: ingestion, standardization and the monomial feature map.

A :class:`Dataset` holds predictors ``x``, target ``y`` and protected
attributes ``z`` as float arrays.  Categorical columns are one-hot encoded
with the reference level dropped, so ``z`` is always numeric.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, DegenerateColumnError, ParseError, SchemaError, ShapeError

ROLES = ("predictor", "target", "protected")
KINDS = ("binary", "categorical", "continuous")
MISSING = {"", "na", "nan", "null", "none", "?"}


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str
    kind: str = "continuous"
    reference: str | None = None
    positive: str | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown type {self.kind!r}")


@dataclass(frozen=True)
class EncodedVariable:
    """One source column and the encoded columns it expanded into."""

    name: str
    kind: str
    columns: tuple[int, ...]
    levels: tuple[str, ...] = ()


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    x_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()
    y_name: str = "y"
    x_vars: tuple[EncodedVariable, ...] = ()
    z_vars: tuple[EncodedVariable, ...] = ()
    y_kind: str = "continuous"
    y_levels: tuple[str, ...] = ()
    dropped_rows: int = 0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape[0] != y.shape[0] or z.shape[0] != y.shape[0]:
            raise ShapeError(
                f"row counts differ: x {x.shape[0]}, y {y.shape[0]}, z {z.shape[0]}"
            )
        if y.shape[0] < 2:
            raise DataError(f"need at least 2 rows, got {y.shape[0]}")
        for name, arr in (("x", x), ("y", y), ("z", z)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
        for arr in (x, y, z):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        if not self.x_names:
            object.__setattr__(self, "x_names", tuple(f"x{j + 1}" for j in range(x.shape[1])))
        if not self.z_names:
            object.__setattr__(self, "z_names", tuple(f"z{j + 1}" for j in range(z.shape[1])))
        if not self.x_vars:
            object.__setattr__(self, "x_vars", _guess_vars(x, self.x_names))
        if not self.z_vars:
            object.__setattr__(self, "z_vars", _guess_vars(z, self.z_names))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p_x(self) -> int:
        return self.x.shape[1]

    @property
    def r(self) -> int:
        return self.z.shape[1]

    @property
    def column_roles(self) -> dict[str, str]:
        roles = {v.name: "predictor" for v in self.x_vars}
        roles[self.y_name] = "target"
        roles.update({v.name: "protected" for v in self.z_vars})
        return roles

    @property
    def z_kind(self) -> str:
        """'binary', 'categorical' or 'continuous' summary of the protected block."""
        kinds = {v.kind for v in self.z_vars}
        if "continuous" in kinds:
            return "continuous"
        if kinds == {"binary"} and len(self.z_vars) == 1:
            return "binary"
        return "categorical"

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, x=self.x[idx], y=self.y[idx], z=self.z[idx], dropped_rows=0,
                       metadata=dict(self.metadata))

    def protected_labels(self) -> np.ndarray:
        """Integer group code per row for discrete protected attributes.

        Several discrete protected variables are crossed into one code.
        """
        if self.z_kind == "continuous":
            raise DataError("protected attributes are continuous; no group labels")
        _, codes = np.unique(self.z, axis=0, return_inverse=True)
        return codes.ravel()


def _guess_vars(a: np.ndarray, names: Sequence[str]) -> tuple[EncodedVariable, ...]:
    out = []
    for j in range(a.shape[1]):
        values = np.unique(a[:, j])
        kind = "binary" if values.size == 2 else "continuous"
        out.append(EncodedVariable(names[j], kind, (j,), tuple(str(v) for v in values) if kind == "binary" else ()))
    return tuple(out)


def dataset_from_arrays(x, y, z, *, z_kinds=None, x_kinds=None, **kwargs) -> Dataset:
    """Build a Dataset from in-memory arrays.

    ``z_kinds``/``x_kinds`` override the automatic binary/continuous
    detection per column.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    ds = Dataset(x, y, z, **kwargs)
    if z_kinds is not None:
        z_vars = tuple(EncodedVariable(ds.z_names[j], k, (j,)) for j, k in enumerate(z_kinds))
        ds = replace(ds, z_vars=z_vars)
    if x_kinds is not None:
        x_vars = tuple(EncodedVariable(ds.x_names[j], k, (j,)) for j, k in enumerate(x_kinds))
        ds = replace(ds, x_vars=x_vars)
    return ds


# --------------------------------------------------------------------------
# schema + CSV ingestion


def parse_schema(raw: dict) -> list[ColumnSpec]:
    """Accept ``{"columns": {...}}`` or a flat mapping of column -> role spec.

    A role spec is either a dict with ``role``/``type`` keys (plus optional
    ``reference`` and ``positive``) or a string ``"role"`` / ``"role:type"``.
    """
    cols = raw.get("columns", raw)
    specs = []
    for name, val in cols.items():
        if isinstance(val, str):
            role, _, kind = val.partition(":")
            specs.append(ColumnSpec(name, role.strip(), kind.strip() or "continuous"))
        elif isinstance(val, dict):
            specs.append(ColumnSpec(
                name,
                val.get("role", ""),
                val.get("type", val.get("kind", "continuous")),
                None if val.get("reference") is None else str(val["reference"]),
                None if val.get("positive") is None else str(val["positive"]),
            ))
        else:
            raise SchemaError(f"column {name!r}: cannot parse role spec {val!r}")
    roles = [s.role for s in specs]
    if roles.count("target") != 1:
        raise SchemaError("schema must name exactly one target column")
    if "predictor" not in roles:
        raise SchemaError("schema must name at least one predictor column")
    if "protected" not in roles:
        raise SchemaError("schema must name at least one protected column")
    return specs


def load_schema(path) -> list[ColumnSpec]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        import tomli

        raw = tomli.loads(text)
    else:
        raw = json.loads(text)
    if "schema" in raw and isinstance(raw["schema"], dict):
        raw = raw["schema"]
    return parse_schema(raw)


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING


def load_csv(path, schema, delimiter: str | None = None) -> Dataset:
    """Read a headed CSV file into a Dataset.

    ``schema`` is a list of ColumnSpec, a raw mapping, or a path to a schema
    file.  Rows with any missing value in a schema column are dropped and
    counted in ``Dataset.dropped_rows``.  The delimiter defaults to ``;``
    when the header line has more semicolons than commas.
    """
    if isinstance(schema, (str, Path)):
        specs = load_schema(schema)
    elif isinstance(schema, dict):
        specs = parse_schema(schema)
    else:
        specs = list(schema)

    with open(path, newline="", encoding="utf-8") as fh:
        if delimiter is None:
            first = fh.readline()
            fh.seek(0)
            delimiter = ";" if first.count(";") > first.count(",") else ","
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if any(cell.strip() for cell in row)]

    index = {}
    for s in specs:
        if s.name not in header:
            raise SchemaError(f"column {s.name!r} named in schema is missing from {path}")
        index[s.name] = header.index(s.name)

    kept, dropped = [], 0
    for i, row in enumerate(rows):
        if len(row) < len(header):
            row = row + [""] * (len(header) - len(row))
        cells = {s.name: row[index[s.name]].strip() for s in specs}
        if any(_is_missing(c) for c in cells.values()):
            dropped += 1
            continue
        kept.append((i, cells))
    if len(kept) < 2:
        raise DataError(f"need at least 2 complete rows, got {len(kept)}")

    line_of = [i for i, _ in kept]
    x_blocks, z_blocks = [], []
    x_names, z_names, x_vars, z_vars = [], [], [], []
    y = None
    y_kind, y_levels = "continuous", ()
    y_name = ""

    for s in specs:
        cells = [c[s.name] for _, c in kept]
        if s.role == "target":
            y_name = s.name
            if s.kind == "continuous":
                y = _parse_numeric(cells, s.name, line_of)
            else:
                y, y_levels = _encode_binary_target(cells, s)
                y_kind = "binary"
            continue
        block, names, var = _encode_feature(cells, s, line_of)
        if s.role == "predictor":
            var = replace(var, columns=tuple(c + len(x_names) for c in var.columns))
            x_blocks.append(block)
            x_names.extend(names)
            x_vars.append(var)
        else:
            var = replace(var, columns=tuple(c + len(z_names) for c in var.columns))
            z_blocks.append(block)
            z_names.extend(names)
            z_vars.append(var)

    return Dataset(
        np.hstack(x_blocks), y, np.hstack(z_blocks),
        x_names=tuple(x_names), z_names=tuple(z_names), y_name=y_name,
        x_vars=tuple(x_vars), z_vars=tuple(z_vars),
        y_kind=y_kind, y_levels=y_levels, dropped_rows=dropped,
        metadata={"source": str(path)},
    )


def _parse_numeric(cells, name, line_of) -> np.ndarray:
    out = np.empty(len(cells))
    for k, c in enumerate(cells):
        try:
            out[k] = float(c)
        except ValueError:
            raise ParseError(
                f"column {name!r}: non-numeric value {c!r} in data row {line_of[k]}",
                row=line_of[k], column=name,
            ) from None
        if not math.isfinite(out[k]):
            raise ParseError(f"column {name!r}: non-finite value in data row {line_of[k]}",
                             row=line_of[k], column=name)
    return out


def _sorted_levels(cells) -> list[str]:
    levels = sorted(set(cells))
    try:
        return sorted(levels, key=float)
    except ValueError:
        return levels


def _encode_binary_target(cells, spec: ColumnSpec):
    levels = _sorted_levels(cells)
    if len(levels) != 2:
        raise DataError(f"binary target {spec.name!r} has {len(levels)} distinct values")
    positive = spec.positive if spec.positive is not None else levels[1]
    if positive not in levels:
        raise SchemaError(f"positive label {positive!r} not present in {spec.name!r}")
    y = np.array([1.0 if c == positive else -1.0 for c in cells])
    negative = levels[0] if levels[1] == positive else levels[1]
    return y, (negative, positive)


def _encode_feature(cells, spec: ColumnSpec, line_of):
    if spec.kind == "continuous":
        col = _parse_numeric(cells, spec.name, line_of)
        return col[:, None], [spec.name], EncodedVariable(spec.name, "continuous", (0,))
    levels = _sorted_levels(cells)
    if spec.kind == "binary":
        if len(levels) != 2:
            raise DataError(f"binary column {spec.name!r} has {len(levels)} distinct values")
        try:
            col = np.array([float(c) for c in cells])
        except ValueError:
            col = np.array([float(c == levels[1]) for c in cells])
        return col[:, None], [spec.name], EncodedVariable(spec.name, "binary", (0,), tuple(levels))
    # categorical: one-hot minus reference
    ref = spec.reference if spec.reference is not None else levels[0]
    if ref not in levels:
        raise SchemaError(f"reference level {ref!r} not present in {spec.name!r}")
    if len(levels) < 2:
        raise DataError(f"categorical column {spec.name!r} has a single level")
    others = [lv for lv in levels if lv != ref]
    block = np.array([[float(c == lv) for lv in others] for c in cells])
    names = [f"{spec.name}={lv}" for lv in others]
    var = EncodedVariable(spec.name, "categorical", tuple(range(len(others))), (ref, *others))
    return block, names, var


# --------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class StandardizationParams:
    x_mean: np.ndarray
    x_scale: np.ndarray
    z_mean: np.ndarray
    z_scale: np.ndarray
    alpha: float

    def apply(self, ds: Dataset) -> Dataset:
        """Standardize another dataset (e.g. a test fold) with these parameters."""
        return replace(ds, x=(ds.x - self.x_mean) / self.x_scale,
                       z=(ds.z - self.z_mean) / self.z_scale,
                       metadata={**ds.metadata, "standardized": True})

    def invert(self, ds: Dataset) -> Dataset:
        return replace(ds, x=ds.x * self.x_scale + self.x_mean,
                       z=ds.z * self.z_scale + self.z_mean,
                       metadata={**ds.metadata, "standardized": False})

    def to_dict(self) -> dict:
        return {"x_mean": self.x_mean.tolist(), "x_scale": self.x_scale.tolist(),
                "z_mean": self.z_mean.tolist(), "z_scale": self.z_scale.tolist(),
                "alpha": self.alpha}


def _column_stats(a: np.ndarray, vars_, names):
    mean = np.zeros(a.shape[1])
    scale = np.ones(a.shape[1])
    for var in vars_:
        if var.kind != "continuous":
            continue
        for j in var.columns:
            mu = a[:, j].mean()
            sd = np.sqrt(np.mean((a[:, j] - mu) ** 2))
            if sd == 0.0 or sd < 1e-14 * max(1.0, abs(mu)):
                raise DegenerateColumnError(names[j])
            mean[j], scale[j] = mu, sd
    return mean, scale


def standardize(ds: Dataset) -> tuple[Dataset, StandardizationParams]:
    """Center and scale continuous predictor and protected columns.

    Binary and indicator columns are left as they are.  ``alpha`` is the
    plug-in bound ``max(1, max |entry|)`` over the standardized x and z.
    """
    xm, xs = _column_stats(ds.x, ds.x_vars, ds.x_names)
    zm, zs = _column_stats(ds.z, ds.z_vars, ds.z_names)
    params = StandardizationParams(xm, xs, zm, zs, 1.0)
    out = params.apply(ds)
    alpha = max(1.0, float(np.max(np.abs(out.x), initial=0.0)), float(np.max(np.abs(out.z), initial=0.0)))
    params = replace(params, alpha=alpha)
    out = replace(out, metadata={**out.metadata, "alpha": alpha,
                                 "z_standardized": any(v.kind == "continuous" for v in ds.z_vars)})
    return out, params


# --------------------------------------------------------------------------
# feature map


@dataclass(frozen=True)
class FeatureMapSpec:
    """Monomials over the concatenated entries ``(x_1..x_nx, z_1..z_nz)``.

    Each monomial is a sorted tuple of entry indices; repeated indices raise
    the power, ``()`` is the constant.  Monomials are kept in graded
    lexicographic order.
    """

    monomials: tuple[tuple[int, ...], ...]
    n_x: int
    n_z: int = 0

    def __post_init__(self):
        mons = tuple(tuple(sorted(int(i) for i in m)) for m in self.monomials)
        width = self.n_x + self.n_z
        for m in mons:
            if any(i < 0 or i >= width for i in m):
                raise ShapeError(f"monomial {m} refers to entries outside 0..{width - 1}")
        if len(set(mons)) != len(mons):
            raise ValueError("duplicate monomials")
        if not mons or max(len(m) for m in mons) < 1:
            raise ValueError("feature map needs at least one non-constant monomial")
        object.__setattr__(self, "monomials", tuple(sorted(mons, key=lambda m: (len(m), m))))

    @property
    def p(self) -> int:
        return len(self.monomials)

    @property
    def rho(self) -> int:
        return max(len(m) for m in self.monomials)

    @property
    def uses_z(self) -> bool:
        return any(i >= self.n_x for m in self.monomials for i in m)

    @property
    def has_constant(self) -> bool:
        return () in self.monomials

    def names(self, x_names=None, z_names=None) -> list[str]:
        x_names = list(x_names or [f"x{j + 1}" for j in range(self.n_x)])
        z_names = list(z_names or [f"z{j + 1}" for j in range(self.n_z)])
        entry = x_names + z_names
        out = []
        for m in self.monomials:
            if not m:
                out.append("1")
                continue
            parts = []
            for i, grp in itertools.groupby(m):
                k = len(list(grp))
                parts.append(entry[i] if k == 1 else f"{entry[i]}^{k}")
            out.append("*".join(parts))
        return out

    def to_dict(self) -> dict:
        return {"monomials": [list(m) for m in self.monomials], "n_x": self.n_x, "n_z": self.n_z}

    @classmethod
    def from_dict(cls, d) -> "FeatureMapSpec":
        return cls(tuple(tuple(m) for m in d["monomials"]), d["n_x"], d.get("n_z", 0))


def affine_map(n_x: int, n_z: int = 0, constant: bool = True) -> FeatureMapSpec:
    """``[1, x_1, ..., x_nx]``; no protected-attribute monomials."""
    mons = ([()] if constant else []) + [(j,) for j in range(n_x)]
    return FeatureMapSpec(tuple(mons), n_x, n_z)


def polynomial_map(n_x: int, n_z: int = 0, degree: int = 2, *, include_z: bool = False,
                   constant: bool = True) -> FeatureMapSpec:
    width = n_x + (n_z if include_z else 0)
    mons = [()] if constant else []
    for k in range(1, degree + 1):
        mons.extend(itertools.combinations_with_replacement(range(width), k))
    return FeatureMapSpec(tuple(mons), n_x, n_z)


def _entries(spec: FeatureMapSpec, x, z) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :] if spec.n_x else x.reshape(-1, 0)
    if z is None or spec.n_z == 0:
        # maps without Z entries ignore any protected attributes passed in
        z = np.zeros((x.shape[0], 0))
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[None, :]
    if x.shape[1] != spec.n_x:
        raise ShapeError(f"x has {x.shape[1]} entries, feature map expects {spec.n_x}")
    if spec.n_z:
        if z.shape[1] != spec.n_z:
            raise ShapeError(f"z has {z.shape[1]} entries, feature map expects {spec.n_z}")
    if z.shape[0] != x.shape[0]:
        raise ShapeError("x and z row counts differ")
    return np.hstack([x, z]) if z.shape[1] else x


def feature_matrix(spec: FeatureMapSpec, x, z=None) -> np.ndarray:
    """Evaluate the feature map row-wise: returns the n x p matrix Omega."""
    w = _entries(spec, x, z)
    out = np.empty((w.shape[0], spec.p))
    for j, m in enumerate(spec.monomials):
        col = np.ones(w.shape[0])
        for i in m:
            col = col * w[:, i]
        out[:, j] = col
    return out


def eval_feature_map(spec: FeatureMapSpec, x, z=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError("eval_feature_map takes a single observation; use feature_matrix")
    if z is not None:
        z = np.asarray(z, dtype=float)
        if z.ndim != 1:
            raise ShapeError("z must be a vector")
    return feature_matrix(spec, x[None, :], None if z is None else z[None, :])[0]


# --------------------------------------------------------------------------
# decision rule


@dataclass(frozen=True)
class DecisionRule:
    """Linear rule ``delta(x, z) = b @ omega(x, z)`` with ``b`` of shape d x p."""

    b: np.ndarray
    feature_map: FeatureMapSpec
    lam: float | None = None

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if b.shape[1] != self.feature_map.p:
            raise ShapeError(f"b has {b.shape[1]} columns, feature map has p={self.feature_map.p}")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.b.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.b))

    def evaluate(self, x, z=None) -> np.ndarray:
        return self.b @ eval_feature_map(self.feature_map, x, z)

    def scores(self, x, z=None) -> np.ndarray:
        """Rule outputs for many rows; 1-D when d == 1."""
        out = feature_matrix(self.feature_map, x, z) @ self.b.T
        return out[:, 0] if self.d == 1 else out

    def to_dict(self) -> dict:
        return {"b": self.b.tolist(), "feature_map": self.feature_map.to_dict(), "lambda": self.lam}

    @classmethod
    def from_dict(cls, d) -> "DecisionRule":
        return cls(np.array(d["b"], dtype=float), FeatureMapSpec.from_dict(d["feature_map"]), d.get("lambda"))
