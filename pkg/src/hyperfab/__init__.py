"""hyperfab: a distributed, steerable hyperparameter and architecture search engine."""

from __future__ import annotations

from .space import (Configuration, DiffEntry, ParamNode, SearchSpace, SpaceDiff,
                    SpaceError, SpaceParseError, SpaceStore, SpaceValidationError,
                    decode, diff_spaces, encode, enumerate_configurations,
                    new_version, parse_space, sample, serialize_space, space_from_doc)

__version__ = "0.1.0"

__all__ = [
    "Configuration",
    "DiffEntry",
    "ParamNode",
    "SearchSpace",
    "SpaceDiff",
    "SpaceError",
    "SpaceParseError",
    "SpaceStore",
    "SpaceValidationError",
    "decode",
    "diff_spaces",
    "encode",
    "enumerate_configurations",
    "new_version",
    "parse_space",
    "sample",
    "serialize_space",
    "space_from_doc",
    "__version__",
]
