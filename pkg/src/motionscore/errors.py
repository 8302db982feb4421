"""Exception types shared across the toolkit."""


class MotionScoreError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(MotionScoreError, ValueError):
    """Shape mismatch between arrays; the message names the offending axis."""


class InputError(MotionScoreError, ValueError):
    """Invalid data passed to an operation (wrong range, non-finite, empty)."""


class ConfigError(MotionScoreError, ValueError):
    """Invalid configuration value."""


class ContractError(MotionScoreError, RuntimeError):
    """An operation was called in a state that violates its contract."""


class ValidationError(MotionScoreError, ValueError):
    """Dataset validation failure; carries one message per offending item."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class PipelineError(MotionScoreError, RuntimeError):
    """A pipeline stage failed; records the stage and the offending clip."""

    def __init__(self, stage, clip_id, cause):
        self.stage = stage
        self.clip_id = clip_id
        self.cause = cause
        where = f"stage {stage!r}" + (f", clip {clip_id!r}" if clip_id else "")
        super().__init__(f"{where}: {cause}")
