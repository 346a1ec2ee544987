"""Exception types shared across the workbench.

Every error raised on a user-facing path derives from WorkbenchError so the
CLI can map failures to exit codes and a machine-readable category string.
"""

from __future__ import annotations


class WorkbenchError(Exception):
    """Base class; `category` feeds the CLI error channel."""

    category = "workbench"


class ConfigError(WorkbenchError):
    category = "config"


class IoError(WorkbenchError):
    category = "io"


class MissingDataset(WorkbenchError):
    category = "missing-dataset"


class SchemaMismatch(WorkbenchError):
    category = "schema-mismatch"


class InvalidSparsity(WorkbenchError):
    category = "invalid-sparsity"


class NonFiniteState(WorkbenchError):
    category = "non-finite-state"


class NegativeMass(WorkbenchError):
    category = "negative-mass"


class DimensionMismatch(WorkbenchError):
    category = "dimension-mismatch"


class EmptyBatch(WorkbenchError):
    category = "empty-batch"


class EmptyNetwork(WorkbenchError):
    category = "empty-network"


class UnknownGroup(WorkbenchError):
    category = "unknown-group"
