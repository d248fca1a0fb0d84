from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum, auto
from typing import TYPE_CHECKING, Protocol

from eigenmax.core.types import StopReason

if TYPE_CHECKING:
    from eigenmax.core.config import AscentConfig


class StopAction(StrEnum):
    CONTINUE = auto()
    STOP = auto()


@dataclass
class AscentContext:
    iteration: int
    lambda_bar: float
    certificate: float
    direction_norm: float
    stalled: bool = False


@dataclass
class StopResult:
    action: StopAction = StopAction.CONTINUE
    reason: StopReason | None = None
    message: str | None = None


class StopRule(Protocol):
    def check(self, context: AscentContext) -> StopResult: ...

    def reset(self) -> None: ...


class CertificateRule:
    def __init__(self, tol_cert: float) -> None:
        self.tol_cert = tol_cert

    def check(self, context: AscentContext) -> StopResult:
        if context.certificate < self.tol_cert:
            return StopResult(
                action=StopAction.STOP,
                reason=StopReason.CERTIFIED,
                message=f"Certificate {context.certificate:.3e} < {self.tol_cert:.3e}",
            )
        return StopResult()

    def reset(self) -> None:
        pass


class StationarityRule:
    def __init__(self, direction_tol: float) -> None:
        self.direction_tol = direction_tol

    def check(self, context: AscentContext) -> StopResult:
        if context.direction_norm <= self.direction_tol:
            return StopResult(
                action=StopAction.STOP,
                reason=StopReason.STATIONARY,
                message=f"Ascent direction vanished ({context.direction_norm:.3e})",
            )
        return StopResult()

    def reset(self) -> None:
        pass


class StallRule:
    def check(self, context: AscentContext) -> StopResult:
        if context.stalled:
            return StopResult(
                action=StopAction.STOP,
                reason=StopReason.STALLED,
                message=f"Backtracking exhausted at iteration {context.iteration}",
            )
        return StopResult()

    def reset(self) -> None:
        pass


class IterationBudgetRule:
    def __init__(self, max_iterations: int) -> None:
        self.max_iterations = max_iterations

    def check(self, context: AscentContext) -> StopResult:
        if context.iteration >= self.max_iterations:
            return StopResult(
                action=StopAction.STOP,
                reason=StopReason.BUDGET,
                message=f"Iteration budget of {self.max_iterations} reached",
            )
        return StopResult()

    def reset(self) -> None:
        pass


class StopRulePipeline:
    def __init__(self) -> None:
        self.rules: list[StopRule] = []

    def add(self, rule: StopRule) -> StopRulePipeline:
        self.rules.append(rule)
        return self

    def clear(self) -> None:
        self.rules.clear()

    def reset(self) -> None:
        for rule in self.rules:
            rule.reset()

    def run(self, context: AscentContext) -> StopResult:
        for rule in self.rules:
            result = rule.check(context)
            if result.action == StopAction.STOP:
                return result
        return StopResult()

    @classmethod
    def from_config(cls, config: AscentConfig) -> StopRulePipeline:
        return (
            cls()
            .add(CertificateRule(config.tol_cert))
            .add(StationarityRule(config.direction_tol))
            .add(StallRule())
            .add(IterationBudgetRule(config.max_iterations))
        )
