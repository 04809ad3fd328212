from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class BoundReport:
    """Verdict on one inequality, with the evidence behind it.

    ``worst_margin`` is signed so that positive values are violations:
    it is (left side - right side) at the worst sample.
    """

    name: str
    verdict: bool
    worst_margin: float
    witnesses: list = field(default_factory=list)
    fitted_constants: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.verdict = bool(self.verdict)
        self.worst_margin = float(self.worst_margin) + 0.0
        if not self.verdict and not self.witnesses:
            raise ValueError(f"failing report {self.name!r} must carry witnesses")

    @property
    def passed(self):
        return self.verdict

    def __bool__(self):
        return self.verdict

    def summary(self):
        tag = "PASS" if self.verdict else "FAIL"
        consts = ", ".join(f"{k}={v:.6g}" for k, v in self.fitted_constants.items())
        line = f"[{tag}] {self.name}: worst_margin={self.worst_margin:.6g}"
        return f"{line} ({consts})" if consts else line
