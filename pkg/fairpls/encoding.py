"""
Encoding and centering of datasets into the numeric matrices every fitting routine consumes.

An :class:`EncodingSpec` assigns one :class:`ColumnRule` to every column of a
:class:`~.Dataset`. :func:`encode_center` expands categorical columns, centers (and
optionally scales) the result and records a :class:`CenteringStats` so the exact same
transform can be replayed on held-out rows with :func:`apply_centering`.
"""
import enum
import logging
import warnings

from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .dataset import ColumnKind, Dataset
from .utils import (
    CenteringError, ConfigurationError, DataWarning, DegenerateInputError,
    DimensionMismatchError, ParseError, as_2d)

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

# Relative tolerance used to decide that a plain array is column-centered
CENTERING_TOLERANCE = 1e-8


class RuleKind(enum.Enum):
    passthrough = "passthrough"
    one_hot = "one-hot"
    binary_map = "binary-map"


class Normalization(enum.Enum):
    none = "none"
    zero_mean_unit_variance = "zero-mean-unit-variance"


@dataclass(frozen=True)
class ColumnRule:
    """
    How a single column becomes numeric columns.

    Attributes
    ----------
    kind : :class:`RuleKind`
        The rule type.
    drop_first : bool
        For ``one-hot`` rules, whether the first level (in sorted order) is omitted.
    mapping : dict
        For ``binary-map`` rules, the map from level label to ``0`` or ``1``. Keys are
        compared as strings.
    """

    kind: RuleKind
    drop_first: bool = True
    mapping: Optional[Mapping[str, int]] = None

    def __post_init__(self):
        if self.kind == RuleKind.binary_map:
            if not self.mapping:
                raise ConfigurationError("A binary-map rule needs a non-empty mapping")
            bad = {k: v for k, v in self.mapping.items() if v not in (0, 1)}
            if bad:
                raise ConfigurationError(f"binary-map values must be 0 or 1, got {bad}")
            object.__setattr__(self, "mapping", {str(k): int(v) for k, v in self.mapping.items()})

    @classmethod
    def passthrough(cls) -> "ColumnRule":
        return cls(RuleKind.passthrough)

    @classmethod
    def one_hot(cls, drop_first: bool = True) -> "ColumnRule":
        return cls(RuleKind.one_hot, drop_first=drop_first)

    @classmethod
    def binary_map(cls, mapping: Mapping[Any, int]) -> "ColumnRule":
        return cls(RuleKind.binary_map, mapping=mapping)

    def to_dict(self) -> Union[str, Dict[str, Any]]:
        if self.kind == RuleKind.passthrough:
            return self.kind.value
        if self.kind == RuleKind.one_hot:
            return {"rule": self.kind.value, "drop_first": self.drop_first}
        return {"rule": self.kind.value, "mapping": dict(self.mapping)}

    @classmethod
    def from_dict(cls, state: Union[str, Mapping[str, Any]]) -> "ColumnRule":
        if isinstance(state, str):
            state = {"rule": state}
        try:
            kind = RuleKind(state["rule"])
        except (KeyError, ValueError) as err:
            raise ConfigurationError(f"Unknown column rule {state!r}") from err
        if kind == RuleKind.one_hot:
            return cls.one_hot(state.get("drop_first", True))
        if kind == RuleKind.binary_map:
            return cls.binary_map(state.get("mapping", {}))
        return cls.passthrough()


@dataclass(frozen=True)
class EncodingSpec:
    """An ordered set of column rules and a normalization mode."""

    rules: Dict[str, ColumnRule]
    normalization: Normalization = Normalization.none

    def rule_for(self, name: str) -> ColumnRule:
        try:
            return self.rules[name]
        except KeyError:
            raise ConfigurationError(f"No encoding rule for column {name!r}") from None

    def check_covers(self, ds: Dataset):
        """Verify that every column of ``ds`` has exactly one rule and vice versa."""
        uncovered = [n for n in ds.names if n not in self.rules]
        extra = [n for n in self.rules if n not in ds.names]
        if uncovered or extra:
            raise ConfigurationError(
                f"Encoding rules do not match the dataset columns: missing {uncovered}, unknown {extra}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "columns": {name: rule.to_dict() for name, rule in self.rules.items()},
            "normalization": self.normalization.value,
        }

    @classmethod
    def from_dict(cls, state: Mapping[str, Any]) -> "EncodingSpec":
        rules = {name: ColumnRule.from_dict(rule) for name, rule in state["columns"].items()}
        try:
            normalization = Normalization(state.get("normalization", "none"))
        except ValueError as err:
            raise ConfigurationError(f"Unknown normalization {state.get('normalization')!r}") from err
        return cls(rules, normalization)

    @classmethod
    def for_dataset(cls, ds: Dataset, normalization: Normalization = Normalization.none) -> "EncodingSpec":
        """Default rules: passthrough for numeric, one-hot (drop-first) for categorical,
        identity binary-map when the levels of a binary column are 0 and 1."""
        rules = {}
        for col in ds.columns:
            if col.kind == ColumnKind.numeric:
                rules[col.name] = ColumnRule.passthrough()
            elif col.kind == ColumnKind.binary and {str(v) for v in col.levels} <= {"0", "1"}:
                rules[col.name] = ColumnRule.binary_map({"0": 0, "1": 1})
            else:
                rules[col.name] = ColumnRule.one_hot()
        return cls(rules, normalization)


def encode_raw(ds: Dataset, spec: EncodingSpec,
               levels: Optional[Mapping[str, Sequence[Any]]] = None) -> Tuple[np.ndarray, List[str]]:
    """
    Expand ``ds`` into an uncentered numeric matrix.

    Parameters
    ----------
    ds : :class:`~.Dataset`
        The table to encode.
    spec : :class:`EncodingSpec`
        The rules, which must cover every column of ``ds``.
    levels : Mapping, optional
        Level sets to one-hot against. Defaults to the level sets recorded in ``ds``; pass
        the training level sets to encode held-out rows with the training layout.

    Returns
    -------
    matrix : np.ndarray
    names : list of str
    """
    spec.check_covers(ds)
    blocks = []
    names = []
    for col in ds.columns:
        rule = spec.rule_for(col.name)
        values = ds.values(col.name)
        if rule.kind == RuleKind.passthrough:
            if col.kind != ColumnKind.numeric:
                raise ConfigurationError(f"Column {col.name!r} is {col.kind.value} and cannot pass through")
            blocks.append(values.astype(np.float64)[:, None])
            names.append(col.name)
        elif rule.kind == RuleKind.binary_map:
            labels = np.array([str(v) for v in values], dtype=object)
            unknown = [v for v in set(labels) if v not in rule.mapping]
            if unknown:
                raise ParseError(f"Unknown levels {sorted(unknown)} for binary column", column=col.name)
            blocks.append(np.array([rule.mapping[v] for v in labels], dtype=np.float64)[:, None])
            names.append(col.name)
        else:
            col_levels = tuple(levels[col.name]) if levels is not None and col.name in levels else col.levels
            unseen = sorted({str(v) for v in values if v not in col_levels})
            if unseen:
                message = f"Levels {unseen} of column {col.name!r} were not seen in training and encode as all zeros"
                logger.warning(message)
                warnings.warn(message, DataWarning, stacklevel=2)
            used = col_levels[1:] if rule.drop_first else col_levels
            for level in used:
                blocks.append((values == level).astype(np.float64)[:, None])
                names.append(f"{col.name}={level}")
    if not blocks:
        return np.zeros((ds.n, 0)), names
    return np.hstack(blocks), names


@dataclass(frozen=True)
class CenteringStats:
    """
    Everything needed to replay an encoding on new rows.

    Attributes
    ----------
    spec : :class:`EncodingSpec`
    names : tuple of str
        The kept encoded column names.
    col_means, col_scales : np.ndarray
        Per kept column shift and divisor.
    keep : np.ndarray
        Positions of the kept columns within the raw encoding.
    levels : dict
        The categorical level sets seen during fitting.
    dropped : tuple of str
        Encoded columns removed for having zero variance.
    """

    spec: EncodingSpec
    names: Tuple[str, ...]
    col_means: np.ndarray
    col_scales: np.ndarray
    keep: np.ndarray
    levels: Dict[str, Tuple[Any, ...]] = field(default_factory=dict)
    dropped: Tuple[str, ...] = ()

    @property
    def d(self) -> int:
        return len(self.col_means)

    def encode(self, ds: Dataset) -> np.ndarray:
        """The raw (uncentered) kept columns of ``ds`` in the training layout."""
        raw, _ = encode_raw(ds, self.spec, self.levels)
        return raw[:, self.keep]

    def transform(self, ds: Dataset) -> "CenteredMatrix":
        return apply_centering(self, self.encode(ds))


@dataclass(frozen=True)
class CenteredMatrix:
    """
    A real matrix together with the column shifts and divisors that produced it.

    ``centered`` is set for every matrix produced by centering, including held-out data
    shifted by training statistics, whose column means need not be exactly zero.
    """

    values: np.ndarray
    col_means: np.ndarray
    col_scales: np.ndarray
    centered: bool = True
    names: Tuple[str, ...] = ()
    stats: Optional[CenteringStats] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        values = np.array(as_2d(self.values, "values"), copy=True)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "col_means", np.asarray(self.col_means, dtype=np.float64).ravel())
        object.__setattr__(self, "col_scales", np.asarray(self.col_scales, dtype=np.float64).ravel())
        n, d = values.shape
        if d < 1 or n < 1:
            raise DegenerateInputError(f"A centered matrix needs at least one row and column, got {values.shape}")
        if self.col_means.shape != (d,) or self.col_scales.shape != (d,):
            raise DimensionMismatchError(
                f"Expected {d} column statistics, got {self.col_means.shape} and {self.col_scales.shape}")
        if not np.all(self.col_scales > 0):
            raise DegenerateInputError("Column scales must be strictly positive")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def __repr__(self):
        return f"{self.__class__.__name__}(n={self.n}, d={self.d}, centered={self.centered})"


def _zero_variance(std: np.ndarray, mean: np.ndarray) -> np.ndarray:
    return std <= 1e-12 * np.maximum(1.0, np.abs(mean))


def center(values: Any, scale: bool = False, names: Optional[Sequence[str]] = None) -> CenteredMatrix:
    """
    Center the columns of a numeric array, optionally scaling them to unit variance.

    Raises
    ------
    DegenerateInputError
        When fewer than two rows are given, or a column is constant while ``scale`` is set.
    """
    arr = as_2d(values)
    if arr.shape[0] < 2:
        raise DegenerateInputError(f"Centering needs at least two rows, got {arr.shape[0]}")
    means = arr.mean(axis=0)
    scales = np.ones_like(means)
    if scale:
        scales = arr.std(axis=0)
        flat = _zero_variance(scales, means)
        if flat.any():
            raise DegenerateInputError(f"Columns {np.flatnonzero(flat).tolist()} have zero variance")
    return CenteredMatrix((arr - means) / scales, means, scales, True, tuple(names or ()))


def encode_center(ds: Dataset, spec: EncodingSpec) -> CenteredMatrix:
    """
    Encode ``ds`` with ``spec``, then center its columns (and scale them when the spec
    asks for unit variance).

    Zero-variance columns under unit-variance scaling are dropped; each drop issues a
    :class:`~.DataWarning` and is listed in ``stats.dropped``.
    """
    raw, names = encode_raw(ds, spec)
    if raw.shape[0] < 2:
        raise DegenerateInputError(f"Centering needs at least two rows, got {raw.shape[0]}")
    means = raw.mean(axis=0)
    scales = np.ones_like(means)
    keep = np.arange(raw.shape[1])
    dropped: Tuple[str, ...] = ()
    if spec.normalization == Normalization.zero_mean_unit_variance:
        scales = raw.std(axis=0)
        flat = _zero_variance(scales, means)
        if flat.any():
            dropped = tuple(names[i] for i in np.flatnonzero(flat))
            message = f"Dropping zero-variance columns {list(dropped)}"
            logger.warning(message)
            warnings.warn(message, DataWarning, stacklevel=2)
            keep = np.flatnonzero(~flat)
            means, scales = means[keep], scales[keep]
    if keep.size == 0:
        raise DegenerateInputError("No columns left after encoding")
    kept = tuple(names[i] for i in keep)
    levels = {c.name: c.levels for c in ds.columns if c.kind != ColumnKind.numeric}
    stats = CenteringStats(spec, kept, means, scales, keep, levels, dropped)
    return CenteredMatrix((raw[:, keep] - means) / scales, means, scales, True, kept, stats)


def apply_centering(stats: Union[CenteringStats, CenteredMatrix], X_new: Any) -> CenteredMatrix:
    """
    Shift ``X_new`` by stored column means and divide by stored scales.

    ``stats`` may be a :class:`CenteringStats` or a fitted :class:`CenteredMatrix`.

    Raises
    ------
    DimensionMismatchError
        When the column count of ``X_new`` differs from the stored statistics.
    """
    arr = as_2d(X_new, "X_new")
    means, scales = stats.col_means, stats.col_scales
    if arr.shape[1] != means.shape[0]:
        raise DimensionMismatchError(f"Expected {means.shape[0]} columns, got {arr.shape[1]}")
    if isinstance(stats, CenteredMatrix):
        names, record = stats.names, stats.stats
    else:
        names, record = stats.names, stats
    return CenteredMatrix((arr - means) / scales, means, scales, True, names, record)


MatrixLike = Union[CenteredMatrix, np.ndarray]


def matrix_values(X: MatrixLike, name: str = "matrix") -> np.ndarray:
    """The raw values of a :class:`CenteredMatrix` or array, as a 2D ``float64`` array."""
    if isinstance(X, CenteredMatrix):
        return X.values
    return as_2d(X, name)


def require_centered(X: MatrixLike, name: str = "matrix") -> np.ndarray:
    """
    The values of ``X``, verifying that they are column-centered.

    A :class:`CenteredMatrix` is trusted through its ``centered`` flag. A plain array must
    have every column mean within ``CENTERING_TOLERANCE`` of zero, relative to its largest entry.

    Raises
    ------
    CenteringError
    """
    if isinstance(X, CenteredMatrix):
        if not X.centered:
            raise CenteringError(f"{name} is not centered")
        return X.values
    arr = as_2d(X, name)
    if arr.size:
        bound = CENTERING_TOLERANCE * max(1.0, float(np.abs(arr).max()))
        worst = float(np.abs(arr.mean(axis=0)).max())
        if worst > bound:
            raise CenteringError(f"{name} is not column-centered (largest column mean {worst:.3g})")
    return arr
