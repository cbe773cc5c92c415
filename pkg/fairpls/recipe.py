"""
Dataset recipes: versioned JSON documents describing how a public tabular dataset is
turned into features, a target and a binary sensitive attribute.

Bundled recipes live in :mod:`fairpls.recipes` and are looked up by name; any other
value is treated as a path to a recipe file.
"""
import json
import logging
import os

from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import jsonschema
import numpy as np

from .dataset import PreparedDataset, load_csv
from .encoding import ColumnRule, EncodingSpec
from .utils import ConfigurationError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

RECIPE_PACKAGE = __name__.replace(".recipe", "") + ".recipes"

BUNDLED_RECIPES = ("adult", "compas", "german", "law_school", "diabetes", "communities")

DATA_DIR_ENV = "FAIRPLS_DATA_DIR"


def load_bundled_json(name: str) -> Dict[str, Any]:
    """Read a JSON document shipped in :mod:`fairpls.recipes`."""
    res = resources.open_text(RECIPE_PACKAGE, name + ".json")
    with res:
        return json.load(res)


_schema_cache: Dict[str, Dict[str, Any]] = {}


def validate_document(document: Mapping[str, Any], schema_name: str):
    """
    Validate ``document`` against one of the bundled JSON schemas.

    Raises
    ------
    ConfigurationError
        Carrying the first validation error's message and location.
    """
    if schema_name not in _schema_cache:
        _schema_cache[schema_name] = load_bundled_json(schema_name)
    try:
        jsonschema.validate(document, _schema_cache[schema_name])
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigurationError(f"Invalid {schema_name} document at {where}: {err.message}") from err


@dataclass(frozen=True)
class ColumnMapping:
    """Maps one raw column onto a numeric vector: a label set, a threshold, or the values themselves."""

    column: str
    positive: Tuple[str, ...] = ()
    threshold: Optional[float] = None
    side: str = "above"
    continuous: bool = False

    def __post_init__(self):
        modes = sum([bool(self.positive), self.threshold is not None, self.continuous])
        if modes != 1:
            raise ConfigurationError(
                f"Column {self.column!r} needs exactly one of positive, threshold or continuous")

    @property
    def numeric(self) -> bool:
        return self.continuous or self.threshold is not None

    def loading_rule(self) -> ColumnRule:
        return ColumnRule.passthrough() if self.numeric else ColumnRule.one_hot()

    def apply(self, values: np.ndarray) -> np.ndarray:
        if self.continuous:
            return values.astype(np.float64)
        if self.threshold is not None:
            values = values.astype(np.float64)
            hit = values > self.threshold if self.side == "above" else values <= self.threshold
            return hit.astype(np.float64)
        positive = set(self.positive)
        return np.array([str(v) in positive for v in values], dtype=np.float64)

    def to_dict(self) -> Dict[str, Any]:
        state: Dict[str, Any] = {"column": self.column}
        if self.positive:
            state["positive"] = list(self.positive)
        if self.threshold is not None:
            state["threshold"] = self.threshold
            state["side"] = self.side
        if self.continuous:
            state["continuous"] = True
        return state

    @classmethod
    def from_dict(cls, state: Mapping[str, Any]) -> "ColumnMapping":
        return cls(
            state["column"], tuple(state.get("positive", ())), state.get("threshold"),
            state.get("side", "above"), bool(state.get("continuous", False)))


@dataclass(frozen=True)
class DatasetRecipe:
    """
    A parsed recipe document.

    Attributes
    ----------
    name : str
    task : str
        ``"classification"`` or ``"regression"``.
    file : str
        The CSV file, resolved against a data directory unless absolute.
    target, sensitive : :class:`ColumnMapping`
    features : :class:`~.EncodingSpec`
    missing_tokens : tuple of str
    approximate : bool
        Whether the preprocessing only approximates a published one.
    """

    name: str
    task: str
    file: str
    target: ColumnMapping
    sensitive: ColumnMapping
    features: EncodingSpec
    missing_tokens: Tuple[str, ...] = ()
    approximate: bool = False
    description: str = ""
    url: Optional[str] = field(default=None, repr=False)

    def __post_init__(self):
        overlap = {self.target.column, self.sensitive.column} & set(self.features.rules)
        if overlap:
            raise ConfigurationError(f"Recipe {self.name!r} uses {sorted(overlap)} as both feature and label")
        if self.task == "regression" and not self.target.continuous:
            raise ConfigurationError(f"Regression recipe {self.name!r} needs a continuous target")
        if self.sensitive.continuous:
            raise ConfigurationError(f"Recipe {self.name!r} must binarize its sensitive column")

    def resolve_path(self, data_dir: Optional[os.PathLike] = None) -> str:
        if os.path.isabs(self.file):
            return self.file
        if data_dir is None:
            data_dir = os.environ.get(DATA_DIR_ENV, ".")
        return os.path.join(data_dir, self.file)

    def to_dict(self) -> Dict[str, Any]:
        source = {"file": self.file}
        if self.url:
            source["url"] = self.url
        return {
            "name": self.name,
            "description": self.description,
            "approximate": self.approximate,
            "task": self.task,
            "source": source,
            "missing_tokens": list(self.missing_tokens),
            "target": self.target.to_dict(),
            "sensitive": self.sensitive.to_dict(),
            "features": self.features.to_dict(),
        }

    @classmethod
    def from_dict(cls, state: Mapping[str, Any]) -> "DatasetRecipe":
        validate_document(state, "recipe-schema")
        return cls(
            name=state["name"],
            task=state["task"],
            file=state["source"]["file"],
            target=ColumnMapping.from_dict(state["target"]),
            sensitive=ColumnMapping.from_dict(state["sensitive"]),
            features=EncodingSpec.from_dict(state["features"]),
            missing_tokens=tuple(state.get("missing_tokens", ())),
            approximate=state.get("approximate", False),
            description=state.get("description", ""),
            url=state["source"].get("url"),
        )


def load_recipe(name_or_path: Union[str, os.PathLike]) -> DatasetRecipe:
    """
    Load a bundled recipe by name, or a recipe file by path.

    Raises
    ------
    ConfigurationError
        When the document is not a valid recipe.
    FileNotFoundError
        When ``name_or_path`` is neither a bundled name nor an existing file.
    """
    if str(name_or_path) in BUNDLED_RECIPES:
        state = load_bundled_json(str(name_or_path))
    else:
        with open(name_or_path, "rt", encoding="utf-8") as fh:
            state = json.load(fh)
    recipe = DatasetRecipe.from_dict(state)
    if recipe.approximate:
        logger.debug("Recipe %r only approximates the published preprocessing", recipe.name)
    return recipe


def load_recipe_dataset(recipe: DatasetRecipe, data_dir: Optional[os.PathLike] = None) -> PreparedDataset:
    """
    Read the recipe's CSV file and split it into features, target and sensitive vectors.

    Rows holding one of the recipe's missing tokens in any used column are dropped.
    """
    rules: Dict[str, ColumnRule] = dict(recipe.features.rules)
    rules[recipe.target.column] = recipe.target.loading_rule()
    rules[recipe.sensitive.column] = recipe.sensitive.loading_rule()
    schema = EncodingSpec(rules, recipe.features.normalization)
    path = recipe.resolve_path(data_dir)
    table = load_csv(path, schema, recipe.missing_tokens)

    target = recipe.target.apply(table.values(recipe.target.column))
    sensitive = recipe.sensitive.apply(table.values(recipe.sensitive.column))
    groups = np.unique(sensitive)
    if groups.size < 2:
        raise ConfigurationError(f"Recipe {recipe.name!r} yields a single sensitive group on {path}")
    features = table.select(list(recipe.features.rules))
    logger.info(
        "Prepared %s: %d rows, %d raw features, %.3f privileged", recipe.name, features.n,
        len(features.columns), sensitive.mean())
    return PreparedDataset(recipe.name, features, target, sensitive, recipe.task, recipe.features)


def list_recipes() -> List[str]:
    return list(BUNDLED_RECIPES)
