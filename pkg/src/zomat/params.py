"""The optimization variable: an ordered collection of named matrix blocks.

Blocks are 2-d float arrays.  Each block carries a kind, either ``"matrix"``
(optimized by the configured matrix method) or ``"vector"`` (optimized by the
full-space fallback).  A weight of shape (n, 1) can still be a matrix block;
the kind is declared by whoever builds the space, not inferred from shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix

MATRIX = "matrix"
VECTOR = "vector"
_KINDS = (MATRIX, VECTOR)


class ParamSpace:
    """Ordered, named matrix blocks with per-block kinds.

    Immutable by convention: optimizer steps produce new spaces via
    :meth:`updated` instead of writing into block arrays.
    """

    def __init__(self, blocks, kinds=None):
        self._blocks = {}
        for name, value in dict(blocks).items():
            arr = np.atleast_2d(np.asarray(value, dtype=float))
            self._blocks[str(name)] = as_matrix(arr, name=f"block {name!r}")
        if not self._blocks:
            raise ValueError("ParamSpace needs at least one block")
        kinds = dict(kinds or {})
        unknown = set(kinds) - set(self._blocks)
        if unknown:
            raise ValueError(f"kinds given for unknown blocks: {sorted(unknown)}")
        self._kinds = {name: kinds.get(name, MATRIX) for name in self._blocks}
        for name, kind in self._kinds.items():
            if kind not in _KINDS:
                raise ValueError(f"block {name!r} has invalid kind {kind!r}")

    @property
    def names(self) -> tuple:
        return tuple(self._blocks)

    def kind(self, name: str) -> str:
        return self._kinds[name]

    @property
    def kinds(self) -> dict:
        return dict(self._kinds)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._blocks[name]

    def __contains__(self, name: str) -> bool:
        return name in self._blocks

    def items(self):
        return self._blocks.items()

    def index(self, name: str) -> int:
        """Position of a block in the fixed ordering (used for seed splits)."""
        return self.names.index(name)

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self._blocks.values())

    def copy(self) -> "ParamSpace":
        return ParamSpace(
            {name: value.copy() for name, value in self._blocks.items()},
            kinds=self._kinds,
        )

    def updated(self, changes) -> "ParamSpace":
        """New space with some blocks replaced; shapes must be preserved."""
        blocks = {name: value for name, value in self._blocks.items()}
        for name, value in changes.items():
            if name not in blocks:
                raise KeyError(f"unknown block {name!r}")
            arr = np.asarray(value, dtype=float)
            if arr.shape != blocks[name].shape:
                raise ValueError(
                    f"block {name!r} shape changed from "
                    f"{blocks[name].shape} to {arr.shape}"
                )
            blocks[name] = arr
        return ParamSpace(blocks, kinds=self._kinds)

    def allclose(self, other: "ParamSpace", rtol=1e-12, atol=1e-12) -> bool:
        if self.names != other.names:
            return False
        return all(
            np.allclose(self[name], other[name], rtol=rtol, atol=atol)
            for name in self.names
        )


@dataclass(frozen=True)
class ParamPartition:
    """Block names split by optimization treatment."""

    matrix_blocks: tuple
    vector_blocks: tuple


def partition(space: ParamSpace) -> ParamPartition:
    """Split a space into matrix-method blocks and fallback vector blocks."""
    matrix = tuple(n for n in space.names if space.kind(n) == MATRIX)
    vector = tuple(n for n in space.names if space.kind(n) == VECTOR)
    return ParamPartition(matrix_blocks=matrix, vector_blocks=vector)
