import enum
from dataclasses import dataclass

import numpy as np


class Verdict(str, enum.Enum):
    ABNORMAL = "abnormal"
    NOT_ABNORMAL = "not_abnormal"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True, eq=False)
class AbnormalCertificate:
    """Outcome of the pull-back rank test along a piecewise curve.

    ``annihilator`` holds one unit covector per row, expressed at the start
    point; ``residuals`` holds the matching transport residual
    max over t and a of |<eta(t), X_a(c(t))>|.
    """

    pullback: np.ndarray
    singular_values: np.ndarray
    rank: int
    annihilator: np.ndarray
    residuals: np.ndarray
    verdict: Verdict
    rank_tol: float
    certificate_tol: float
    sample_times: np.ndarray

    @property
    def dimension(self) -> int:
        return self.pullback.shape[0]

    @property
    def residual_max(self) -> float | None:
        """Smallest candidate residual; None when the annihilator is trivial."""
        if len(self.residuals) == 0:
            return None
        return float(np.min(self.residuals))

    @property
    def relative_sigma_min(self) -> float:
        # Fewer samples than dimensions leave implicit zero singular values.
        if len(self.singular_values) < self.dimension or self.singular_values[0] == 0:
            return 0.0
        return float(self.singular_values[-1] / self.singular_values[0])

    @property
    def witness(self) -> np.ndarray | None:
        """The annihilator with the smallest transport residual."""
        if len(self.residuals) == 0:
            return None
        return self.annihilator[int(np.argmin(self.residuals))]

    def as_dict(self) -> dict:
        return {
            "rank": self.rank,
            "singular_values": [float(v) for v in self.singular_values],
            "annihilator": [[float(c) for c in row] for row in self.annihilator],
            "residual_max": self.residual_max,
            "verdict": self.verdict.value,
        }
