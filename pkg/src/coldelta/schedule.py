"""Per-step execution modes: dense refresh, sparse delta, or skipped."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

DENSE = "dense"
SPARSE = "sparse"
SKIPPED = "skipped"


@dataclass(frozen=True)
class StepSchedule:
    total_steps: int
    dense_interval: int
    use_step_cache: bool
    window: int
    stride: int
    modes: tuple[str, ...]

    def steps(self, mode: str) -> list[int]:
        return [i for i, m in enumerate(self.modes) if m == mode]

    @property
    def dense_steps(self) -> list[int]:
        return self.steps(DENSE)

    @property
    def sparse_steps(self) -> list[int]:
        return self.steps(SPARSE)

    @property
    def skipped_steps(self) -> list[int]:
        return self.steps(SKIPPED)

    @property
    def computed_steps(self) -> int:
        return self.total_steps - len(self.skipped_steps)

    @property
    def window_start(self) -> int:
        return (self.total_steps - self.window) // 2

    @property
    def step_cache_speedup(self) -> float:
        """Model evaluations saved by skipping whole steps."""
        return self.total_steps / self.computed_steps

    def next_computed(self, step: int) -> str | None:
        """Mode of the first non-skipped step after ``step`` (``None`` at the end)."""
        for m in self.modes[step + 1:]:
            if m != SKIPPED:
                return m
        return None


def resolve_schedule(
    total_steps: int,
    dense_interval: int,
    use_step_cache: bool = False,
    window: int = 30,
    stride: int = 4,
) -> StepSchedule:
    """Resolve the mode of every step.

    ``dense_interval`` sparse steps follow each dense step (0 = all dense).
    With step caching, only every ``stride``-th step of the centered
    ``window`` is computed and the rest are skipped. Skipped steps do not
    count toward the dense-refresh interval, so dense steps are never skipped
    and every sparse step has a dense step before it.
    """
    if total_steps < 1:
        raise ConfigError(f"total_steps must be >= 1, got {total_steps}")
    if dense_interval < 0:
        raise ConfigError(f"dense_interval must be >= 0, got {dense_interval}")
    if use_step_cache:
        if window > total_steps:
            raise ConfigError(f"step-cache window {window} exceeds total_steps {total_steps}")
        if stride < 1 or window < 0:
            raise ConfigError(f"invalid step-cache window={window} stride={stride}")

    start = (total_steps - window) // 2 if use_step_cache else 0
    modes: list[str] = []
    computed = 0
    for s in range(total_steps):
        in_window = use_step_cache and start <= s < start + window
        if s > 0 and in_window and (s - start) % stride:
            modes.append(SKIPPED)
            continue
        modes.append(DENSE if computed % (dense_interval + 1) == 0 else SPARSE)
        computed += 1
    return StepSchedule(total_steps, dense_interval, use_step_cache, window, stride, tuple(modes))
