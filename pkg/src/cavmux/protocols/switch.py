"""Piezo retuning of the cavity resonance between dopants."""

from __future__ import annotations

from dataclasses import dataclass, field


class SwitchError(ValueError):
    pass


@dataclass(frozen=True)
class RetuneRecord:
    start: float
    target: float
    settle: float  # seconds spent before the cavity is usable

    @property
    def moved(self) -> bool:
        return self.settle > 0


@dataclass
class CavityController:
    """Cavity resonance frequency with a fixed settle time per move."""

    frequency: float
    tuning_range: tuple[float, float] = (-20e9, 20e9)
    settle_time: float = 0.5e-3
    history: list[RetuneRecord] = field(default_factory=list)

    def __post_init__(self):
        lo, hi = self.tuning_range
        if not lo < hi:
            raise SwitchError("tuning range is empty")
        if self.settle_time < 0:
            raise SwitchError("settle time must be >= 0")
        self._check(self.frequency)

    def _check(self, f: float) -> None:
        lo, hi = self.tuning_range
        if not lo <= f <= hi:
            raise SwitchError(f"target {f:.6g} Hz outside the piezo tuning range [{lo:.6g}, {hi:.6g}] Hz")

    @property
    def retunes(self) -> int:
        return sum(r.moved for r in self.history)

    def switch(self, target: float) -> RetuneRecord:
        self._check(target)
        settle = 0.0 if target == self.frequency else self.settle_time
        rec = RetuneRecord(self.frequency, target, settle)
        self.history.append(rec)
        self.frequency = target
        return rec

    def ensure(self, target: float, tolerance: float) -> RetuneRecord | None:
        """Retune only if ``target`` lies more than ``tolerance`` from the resonance."""
        if abs(target - self.frequency) <= tolerance:
            return None
        return self.switch(target)


def cavity_switch(controller: CavityController, target: float) -> RetuneRecord:
    return controller.switch(target)
