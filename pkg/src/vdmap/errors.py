"""Exception hierarchy shared by every pipeline stage.

Each error carries a machine-readable ``code`` and an ``exit_code`` used by
the command-line front end, plus an optional ``details`` mapping that is
serialized to stderr as JSON.
"""

from __future__ import annotations

from typing import Any


class VDMError(Exception):
    code = "vdm_error"
    exit_code = 1

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        out = {"code": self.code, "message": str(self)}
        out.update(self.details)
        return out


class DegenerateEmbedding(VDMError):
    code = "degenerate_embedding"
    exit_code = 10


class DuplicatePoints(VDMError):
    code = "duplicate_points"
    exit_code = 11


class GraphDisconnected(VDMError):
    """Raised when the neighborhood graph has more than one component.

    ``details["labels"]`` holds the per-vertex component label.
    """

    code = "graph_disconnected"
    exit_code = 12


class RankDeficient(VDMError):
    code = "rank_deficient"
    exit_code = 13


class NearSingularAlignment(VDMError):
    code = "near_singular_alignment"
    exit_code = 14


class ConvergenceFailure(VDMError):
    code = "convergence_failure"
    exit_code = 15


class TruncationInsideCluster(VDMError):
    code = "truncation_inside_cluster"
    exit_code = 16


class NumericalInconsistency(VDMError):
    code = "numerical_inconsistency"
    exit_code = 17


class ZeroFieldOnBall(VDMError):
    code = "zero_field_on_ball"
    exit_code = 18


class ChartSearchFailed(VDMError):
    code = "chart_search_failed"
    exit_code = 19


class MultiplicityMismatch(VDMError):
    code = "multiplicity_mismatch"
    exit_code = 20


class InsufficientSpectrum(VDMError):
    code = "insufficient_spectrum"
    exit_code = 21


class ConfigError(VDMError):
    code = "config_error"
    exit_code = 2
