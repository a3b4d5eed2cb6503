"""
Finite-difference gradient check results.
"""

from dataclasses import dataclass, field

import pandas as pd

REPORT_COLUMNS = ["suite", "param", "max_rel_error", "checked", "excluded", "passed"]


@dataclass
class GradcheckLine:
    """
    Outcome for one parameter class of one suite.

    Attributes:
        suite (str): Suite name (raster, encoder, mgf.mouth, ...)
        param (str): Parameter class within the suite
        max_rel_error (float): Largest relative error over the checked coordinates
        checked (int): Coordinates compared
        excluded (int): Coordinates skipped because they sit near a discontinuity
        tolerance (float): Pass threshold
    """
    suite: str
    param: str
    max_rel_error: float = 0.0
    checked: int = 0
    excluded: int = 0
    tolerance: float = 1e-3

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error <= self.tolerance

    def add(self, rel_error: float):
        self.checked += 1
        self.max_rel_error = max(self.max_rel_error, float(rel_error))

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{self.suite:<10} {self.param:<16} max_rel={self.max_rel_error:.3e} "
                f"checked={self.checked} excluded={self.excluded} {verdict}")


@dataclass
class GradcheckReport:
    lines: list[GradcheckLine] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.lines) and all(line.passed for line in self.lines)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"suite": l.suite, "param": l.param, "max_rel_error": l.max_rel_error,
              "checked": l.checked, "excluded": l.excluded, "passed": l.passed} for l in self.lines],
            columns=REPORT_COLUMNS,
        )

    def text(self) -> str:
        return "\n".join(str(line) for line in self.lines)
