"""Exception types shared across the package."""


class ScenarioError(ValueError):
    """Invalid scenario definition or scenario file."""


class IllegalActionError(ValueError):
    """An agent submitted an action its legal-action mask forbids."""


class ReplayParseError(ValueError):
    """Malformed replay log; carries the offending line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"replay line {line_number}: {message}")
        self.line_number = line_number


class CheckpointError(ValueError):
    """Corrupt or incompatible checkpoint file."""
