"""Python access to the fusionkit core.

Numeric routines are thin wrappers over the C++ library. Pipeline functions
take an optional ``config`` dict of overrides on top of the built-in defaults,
using the same sections and keys as the command-line tool's JSON config.
"""

from __future__ import annotations

import csv
import io
import json
import os
from typing import Any, Mapping, Optional

from . import _fusionkit
from ._fusionkit import (
    FusionkitError,
    InvalidArgument,
    NumericError,
    ParseError,
    ShapeError,
    __version__,
    kmeans,
    maxpool_reduce,
    normal_cdf,
    rbf_kernel,
    score_test,
    silhouette,
    tokenize,
    train_svm,
)

__all__ = [
    "FusionkitError",
    "InvalidArgument",
    "NumericError",
    "ParseError",
    "ShapeError",
    "__version__",
    "clusters",
    "config_hash",
    "default_config",
    "gradcheck",
    "grid",
    "kmeans",
    "maxpool_reduce",
    "normal_cdf",
    "prepare",
    "probe",
    "rbf_kernel",
    "score_test",
    "silhouette",
    "synth",
    "tokenize",
    "train_svm",
]


def _overrides(config: Optional[Mapping[str, Any]]) -> str:
    return json.dumps(config) if config else ""


def default_config() -> dict:
    return json.loads(_fusionkit.default_config())


def config_hash(config: Optional[Mapping[str, Any]] = None) -> str:
    return _fusionkit.config_hash(_overrides(config))


def probe(request: Any, config: Optional[Mapping[str, Any]] = None) -> Any:
    """Runs core routines on JSON-compatible inputs; see the CLI's ``probe`` subcommand."""
    return json.loads(_fusionkit.probe(json.dumps(request), _overrides(config)))


def synth(out_dir: os.PathLike | str, seed: int = 0, config: Optional[Mapping[str, Any]] = None) -> None:
    _fusionkit.synth(_overrides(config), seed, os.fspath(out_dir))


def prepare(out_dir: os.PathLike | str, seed: int = 0, config: Optional[Mapping[str, Any]] = None) -> int:
    """Assembles super-tweets and splits; returns the super-tweet count."""
    return _fusionkit.prepare(_overrides(config), seed, os.fspath(out_dir))


def grid(
    prepared_dir: os.PathLike | str,
    seed: int = 0,
    config: Optional[Mapping[str, Any]] = None,
    log_dir: os.PathLike | str | None = None,
) -> list[dict]:
    """Runs the configured grid; returns one dict per results row."""
    text = _fusionkit.grid(_overrides(config), seed, os.fspath(prepared_dir), None if log_dir is None else os.fspath(log_dir))
    return list(csv.DictReader(io.StringIO(text)))


def clusters(seed: int = 0, config: Optional[Mapping[str, Any]] = None) -> tuple[list[dict], dict]:
    """Cluster report rows and the summary document."""
    text, summary = _fusionkit.clusters(_overrides(config), seed)
    return list(csv.DictReader(io.StringIO(text))), json.loads(summary)


def gradcheck(seed: int = 0) -> dict[str, float]:
    """Maximum relative gradient error per checked loss."""
    return dict(_fusionkit.gradcheck(seed))
