"""
A portable plain text format for fitted models.

A model file starts with a ``<FairPlsModel=kind>`` line, followed by ``key=value``
attribute lines and ``<Matrix=name rows=r cols=c>`` blocks holding ``r`` lines of ``c``
space separated decimal values each, in row-major order::

    <FairPlsModel=fair-pls>
    version=1
    eta=1.0
    mode=demographic-parity
    <Matrix=W rows=2 cols=1>
    0.6
    0.8

Floats are written with their shortest round-trip representation, so reading a written
model reproduces it exactly.
"""
import enum
import io
import json
import logging
import os
import re

from typing import Any, Dict, List, Optional, TextIO, Tuple, Union

import numpy as np

from .encoding import CenteringStats, EncodingSpec
from .fair_pls import FairnessMode, FairPlsModel
from .kernel import CenteredGram, KernelFairPlsModel, KernelSpec
from .pls import FitDiagnostics, PlsModel
from .utils import ParseError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

FORMAT_VERSION = "1"

START_OF_MODEL_MARKER = re.compile(r"^<FairPlsModel\s*=\s*(\S+)>$")
START_OF_MATRIX_MARKER = re.compile(r"^<Matrix=([\w.]+)\s+rows=(\d+)\s+cols=(\d+)>$")
ATTRIBUTE_PATTERN = re.compile(r"^([A-Za-z_][\w.]*)=(.*)$")

Model = Union[PlsModel, FairPlsModel, KernelFairPlsModel]


class ModelKind(enum.Enum):
    pls = "pls"
    fair_pls = "fair-pls"
    kernel_fair_pls = "kernel-fair-pls"


def _format_float(value: float) -> str:
    return repr(float(value))


def _write_matrix(handle: TextIO, name: str, matrix: np.ndarray):
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    rows, cols = matrix.shape
    handle.write(f"<Matrix={name} rows={rows} cols={cols}>\n")
    for row in matrix:
        handle.write(" ".join(_format_float(v) for v in row))
        handle.write("\n")


def _write_attributes(handle: TextIO, attributes: Dict[str, Any]):
    for key, value in attributes.items():
        if isinstance(value, float):
            value = _format_float(value)
        elif isinstance(value, (dict, list, tuple)):
            value = json.dumps(value, sort_keys=True)
        handle.write(f"{key}={value}\n")


def _stats_attributes(stats: Optional[CenteringStats]) -> Dict[str, Any]:
    if stats is None:
        return {}
    return {
        "encoding": stats.spec.to_dict(),
        "encoding.names": list(stats.names),
        "encoding.levels": {k: [v.item() if isinstance(v, np.generic) else v for v in levels]
                            for k, levels in stats.levels.items()},
        "encoding.keep": [int(i) for i in stats.keep],
        "encoding.dropped": list(stats.dropped),
    }


def _model_payload(model: Model) -> Tuple[ModelKind, Dict[str, Any], Dict[str, np.ndarray]]:
    if isinstance(model, FairPlsModel):
        attributes = {"eta": float(model.eta), "mode": model.mode.value, "ridge": float(model.ridge)}
        matrices = {"W": model.W, "Gamma": model.Gamma, "T": model.T, "objective": model.objective}
        return ModelKind.fair_pls, attributes, matrices
    if isinstance(model, PlsModel):
        matrices = {"W": model.W, "P": model.P, "C": model.C, "B_coeffs": model.B_coeffs, "T": model.T, "U": model.U}
        return ModelKind.pls, {}, matrices
    if isinstance(model, KernelFairPlsModel):
        rows, cols, digest = model.training_fingerprint
        attributes = {
            "eta": float(model.eta),
            "kernel_X": model.kernel_X.to_dict(),
            "kernel_S": model.kernel_S.to_dict(),
            "gram.grand_mean": float(model.centering.grand_mean),
            "fingerprint.rows": rows,
            "fingerprint.cols": cols,
            "fingerprint.sha1": digest,
        }
        matrices = {
            "A": model.A, "T": model.T, "T_hat": model.T_hat, "V": model.V, "X_train": model.X_train,
            "gram.col_means": model.centering.col_means, "objective": model.objective,
        }
        return ModelKind.kernel_fair_pls, attributes, matrices
    raise TypeError(f"Cannot serialize {type(model).__name__}")


def write_model(model: Model, destination: Union[os.PathLike, TextIO]):
    """Write ``model`` to a path or an open text stream."""
    kind, attributes, matrices = _model_payload(model)
    header = {"version": FORMAT_VERSION, "k": model.k}
    header.update(attributes)
    header["diagnostics"] = model.diagnostics.to_dict()
    header.update(_stats_attributes(model.stats))
    if model.stats is not None:
        matrices = dict(matrices)
        matrices["encoding.col_means"] = model.stats.col_means
        matrices["encoding.col_scales"] = model.stats.col_scales

    def _write(handle):
        handle.write(f"<FairPlsModel={kind.value}>\n")
        _write_attributes(handle, header)
        for name, matrix in matrices.items():
            _write_matrix(handle, name, matrix)

    if isinstance(destination, io.IOBase) or hasattr(destination, "write"):
        _write(destination)
    else:
        with open(destination, "wt", encoding="utf-8", newline="\n") as handle:
            _write(handle)
    logger.debug("Wrote %r", model)


def _parse(lines: List[str]) -> Tuple[ModelKind, Dict[str, str], Dict[str, np.ndarray]]:
    if not lines:
        raise ParseError("Empty model file")
    match = START_OF_MODEL_MARKER.match(lines[0].strip())
    if not match:
        raise ParseError("Missing <FairPlsModel=...> header", row=1)
    try:
        kind = ModelKind(match.group(1))
    except ValueError:
        raise ParseError(f"Unknown model kind {match.group(1)!r}", row=1) from None
    attributes: Dict[str, str] = {}
    matrices: Dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        match = START_OF_MATRIX_MARKER.match(line)
        if match:
            name, rows, cols = match.group(1), int(match.group(2)), int(match.group(3))
            values = np.zeros((rows, cols))
            for r in range(rows):
                if i >= len(lines):
                    raise ParseError(f"Matrix {name} ends after {r} of {rows} rows", row=i)
                tokens = lines[i].split()
                i += 1
                if len(tokens) != cols:
                    raise ParseError(f"Matrix {name} row has {len(tokens)} values, expected {cols}", row=i)
                try:
                    values[r] = [float(t) for t in tokens]
                except ValueError:
                    raise ParseError(f"Non-numeric value in matrix {name}", row=i) from None
            matrices[name] = values
            continue
        match = ATTRIBUTE_PATTERN.match(line)
        if not match:
            raise ParseError(f"Could not parse line {line!r}", row=i)
        attributes[match.group(1)] = match.group(2)
    return kind, attributes, matrices


def _require(matrices: Dict[str, np.ndarray], *names: str) -> List[np.ndarray]:
    missing = [n for n in names if n not in matrices]
    if missing:
        raise ParseError(f"Model file lacks the matrices {missing}")
    return [matrices[n] for n in names]


def _vector(matrix: np.ndarray) -> np.ndarray:
    return matrix.reshape(-1)


def _read_stats(attributes: Dict[str, str], matrices: Dict[str, np.ndarray]) -> Optional[CenteringStats]:
    if "encoding" not in attributes:
        return None
    spec = EncodingSpec.from_dict(json.loads(attributes["encoding"]))
    means, scales = _require(matrices, "encoding.col_means", "encoding.col_scales")
    return CenteringStats(
        spec,
        tuple(json.loads(attributes["encoding.names"])),
        _vector(means),
        _vector(scales),
        np.array(json.loads(attributes["encoding.keep"]), dtype=int),
        {k: tuple(v) for k, v in json.loads(attributes["encoding.levels"]).items()},
        tuple(json.loads(attributes.get("encoding.dropped", "[]"))),
    )


def read_model(source: Union[os.PathLike, TextIO]) -> Model:
    """
    Read a model written by :func:`write_model`.

    Raises
    ------
    ParseError
        When the file is malformed, with the offending line number where known.
    """
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, "rt", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    kind, attributes, matrices = _parse(lines)
    if attributes.get("version") != FORMAT_VERSION:
        raise ParseError(f"Unsupported model format version {attributes.get('version')!r}")
    k = int(attributes.get("k", "0"))
    diagnostics = FitDiagnostics.from_dict(json.loads(attributes.get("diagnostics", "{}")))
    stats = _read_stats(attributes, matrices)
    if kind == ModelKind.pls:
        W, P, C, B, T, U = _require(matrices, "W", "P", "C", "B_coeffs", "T", "U")
        return PlsModel(W, P, C, _vector(B)[:k], T, U, stats, diagnostics)
    if kind == ModelKind.fair_pls:
        W, G, T, objective = _require(matrices, "W", "Gamma", "T", "objective")
        return FairPlsModel(
            W, G, T, float(attributes["eta"]), FairnessMode(attributes["mode"]), float(attributes["ridge"]),
            _vector(objective)[:k], stats, diagnostics)
    A, T, T_hat, V, X_train, col_means, objective = _require(
        matrices, "A", "T", "T_hat", "V", "X_train", "gram.col_means", "objective")
    centering = CenteredGram(np.zeros((0, 0)), _vector(col_means), float(attributes["gram.grand_mean"]))
    recorded = (int(attributes["fingerprint.rows"]), int(attributes["fingerprint.cols"]),
                attributes["fingerprint.sha1"])
    model = KernelFairPlsModel(
        A, T, T_hat, V, float(attributes["eta"]), KernelSpec.from_dict(json.loads(attributes["kernel_X"])),
        KernelSpec.from_dict(json.loads(attributes["kernel_S"])), X_train, centering, _vector(objective)[:k],
        recorded, stats, diagnostics)
    model.verify_training_data()
    return model
