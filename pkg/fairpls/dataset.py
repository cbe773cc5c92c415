"""Tabular datasets, CSV ingestion and index splitting."""
import enum
import logging
import os

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, TYPE_CHECKING

import numpy as np
import pandas as pd

from .utils import ConfigurationError, DegenerateInputError, ParseError

if TYPE_CHECKING:
    from .encoding import EncodingSpec

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

# The header occupies the first line, so data row ``i`` lives on line ``i + 2``
_HEADER_LINES = 1


class ColumnKind(enum.Enum):
    numeric = "numeric"
    categorical = "categorical"
    binary = "binary"


@dataclass(frozen=True)
class Column:
    """
    A column description.

    Attributes
    ----------
    name : str
        The column header.
    kind : :class:`ColumnKind`
        How the column's values are interpreted.
    levels : tuple
        The finite, sorted level set of a categorical or binary column. Empty for numeric columns.
    """

    name: str
    kind: ColumnKind
    levels: Tuple[Any, ...] = ()


@dataclass(frozen=True)
class Dataset:
    """
    An immutable table of typed columns.

    Numeric columns hold ``float64`` values, categorical and binary columns hold their raw
    labels. The level set of every non-numeric column is recorded when the dataset is built
    so that subsets of the rows encode with the same layout.
    """

    frame: pd.DataFrame
    columns: Tuple[Column, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if list(self.frame.columns) != names:
            raise ConfigurationError(f"Frame columns {list(self.frame.columns)} do not match {names}")
        for col in self.columns:
            if col.kind != ColumnKind.numeric and not col.levels:
                raise ConfigurationError(f"Column {col.name!r} has no recorded level set")
        if len(self.frame) < 2:
            raise DegenerateInputError(f"A dataset needs at least two rows, got {len(self.frame)}")

    @property
    def n(self) -> int:
        return len(self.frame)

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.columns]

    @property
    def rows(self) -> List[Tuple[Any, ...]]:
        return list(self.frame.itertuples(index=False, name=None))

    def column(self, name: str) -> Column:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)

    def levels(self, name: str) -> Tuple[Any, ...]:
        return self.column(name).levels

    def values(self, name: str) -> np.ndarray:
        return self.frame[name].to_numpy()

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Select rows by position, keeping the full-data level sets."""
        frame = self.frame.iloc[np.asarray(indices, dtype=int)].reset_index(drop=True)
        return self.__class__(frame, self.columns)

    def select(self, names: Sequence[str]) -> "Dataset":
        """Select a subset of the columns."""
        cols = tuple(self.column(n) for n in names)
        return self.__class__(self.frame[list(names)].copy(), cols)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, kinds: Dict[str, ColumnKind]) -> "Dataset":
        columns = []
        for name in frame.columns:
            kind = kinds[name]
            levels = ()
            if kind != ColumnKind.numeric:
                levels = tuple(sorted(pd.unique(frame[name]), key=_level_key))
            columns.append(Column(name, kind, levels))
        return cls(frame.reset_index(drop=True), tuple(columns))

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"{self.__class__.__name__}(n={self.n}, columns={self.names})"


def _level_key(value) -> Tuple[int, Any]:
    # numbers before strings so mixed level sets still sort deterministically
    if isinstance(value, (int, float, np.integer, np.floating)):
        return (0, float(value))
    return (1, str(value))


def load_csv(path: os.PathLike, schema: "EncodingSpec", drop_rows_with: Iterable[str] = ()) -> Dataset:
    """
    Read a UTF-8, comma separated file with a header row into a :class:`Dataset`.

    The schema's column rules determine the column kinds: ``passthrough`` columns are
    numeric, ``one-hot`` columns are categorical and ``binary-map`` columns are binary.
    Header columns the schema does not mention are ignored.

    Parameters
    ----------
    path : os.PathLike
        The file to read.
    schema : :class:`~.EncodingSpec`
        The encoding rules, one per column to load.
    drop_rows_with : Iterable[str]
        Tokens which mark a missing value. Rows holding one of them in a loaded column are
        removed before parsing. Without tokens, any empty cell is a :class:`~.ParseError`.

    Raises
    ------
    FileNotFoundError
        When ``path`` does not exist.
    ParseError
        When a value cannot be parsed, is missing, or is an unknown level of a binary-map column.
        The error carries the file line number and the column name.
    """
    from .encoding import RuleKind

    if not os.path.exists(path):
        raise FileNotFoundError(f"No such dataset file: {path}")
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8", skipinitialspace=True)
    except (pd.errors.ParserError, UnicodeDecodeError) as err:
        raise ParseError(f"Could not read {path}: {err}") from err

    missing = [name for name in schema.rules if name not in frame.columns]
    if missing:
        raise ParseError(f"Schema columns {missing} are not in the header of {path}")
    frame = frame[list(schema.rules)]
    line_numbers = np.arange(len(frame)) + _HEADER_LINES + 1

    tokens = set(drop_rows_with)
    if tokens:
        stripped = frame.apply(lambda col: col.str.strip())
        incomplete = stripped.isin(tokens).any(axis=1).to_numpy()
        if incomplete.any():
            logger.info("Dropping %d rows with missing values from %s", int(incomplete.sum()), path)
            frame = frame.loc[~incomplete].reset_index(drop=True)
            line_numbers = line_numbers[~incomplete]

    kinds: Dict[str, ColumnKind] = {}
    parsed = {}
    for name, rule in schema.rules.items():
        raw = frame[name].str.strip()
        empty = (raw == "").to_numpy()
        if empty.any():
            raise ParseError("Missing value", row=int(line_numbers[np.argmax(empty)]), column=name)
        if rule.kind == RuleKind.passthrough:
            values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=np.float64)
            bad = ~np.isfinite(values)
            if bad.any():
                i = int(np.argmax(bad))
                raise ParseError(f"Non-numeric token {raw.iloc[i]!r}", row=int(line_numbers[i]), column=name)
            kinds[name] = ColumnKind.numeric
            parsed[name] = values
        elif rule.kind == RuleKind.binary_map:
            known = {str(k) for k in rule.mapping}
            unknown = ~raw.isin(known).to_numpy()
            if unknown.any():
                i = int(np.argmax(unknown))
                raise ParseError(
                    f"Unknown level {raw.iloc[i]!r} for binary column", row=int(line_numbers[i]), column=name)
            kinds[name] = ColumnKind.binary
            parsed[name] = raw.to_numpy(dtype=object)
        else:
            kinds[name] = ColumnKind.categorical
            parsed[name] = raw.to_numpy(dtype=object)
    table = pd.DataFrame(parsed, columns=list(schema.rules))
    dataset = Dataset.from_frame(table, kinds)
    logger.debug("Loaded %r from %s", dataset, path)
    return dataset


def split_folds(n: int, k_folds: int, seed: int = 0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Partition ``range(n)`` into ``k_folds`` test sets of near-equal size.

    Returns
    -------
    list of (train, test)
        Sorted index arrays; the test sets partition ``range(n)`` and their sizes differ by at most one.
    """
    if not 2 <= k_folds <= n:
        raise ConfigurationError(f"k_folds must lie in [2, {n}], got {k_folds}")
    order = np.random.default_rng(seed).permutation(n)
    folds = []
    for test in np.array_split(order, k_folds):
        test = np.sort(test)
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        folds.append((np.flatnonzero(mask), test))
    return folds


def train_test_split(n: int, train_fraction: float = 0.7, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Draw one random train/test split with ``round(train_fraction * n)`` training rows."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(round(train_fraction * n))
    if not 2 <= n_train <= n - 2:
        raise ConfigurationError(f"A split of {n} rows at {train_fraction} leaves fewer than two rows on a side")
    order = np.random.default_rng(seed).permutation(n)
    return np.sort(order[:n_train]), np.sort(order[n_train:])


@dataclass(frozen=True)
class PreparedDataset:
    """
    A recipe applied to a file: encoded features plus the target and sensitive vectors.

    Attributes
    ----------
    name : str
        The recipe name.
    features : :class:`Dataset`
        The feature columns.
    target : np.ndarray
        ``0/1`` labels for classification, real values for regression.
    sensitive : np.ndarray
        ``1`` for the privileged group and ``0`` otherwise.
    task : str
        Either ``"classification"`` or ``"regression"``.
    """

    name: str
    features: Dataset
    target: np.ndarray
    sensitive: np.ndarray
    task: str
    feature_spec: "EncodingSpec" = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.features.n

    def subset(self, indices: Sequence[int]) -> "PreparedDataset":
        indices = np.asarray(indices, dtype=int)
        return self.__class__(
            self.name, self.features.subset(indices), self.target[indices], self.sensitive[indices],
            self.task, self.feature_spec)
