class AskToActError(Exception):
    """Base class for every error raised by the simulator, trainer and harness."""


class SceneValidationError(AskToActError):
    pass


class SceneGenerationError(AskToActError):
    pass


class TaskGenerationError(AskToActError):
    """The requested family cannot be instantiated in the given scene."""

    def __init__(self, family: str, missing: str):
        super().__init__(f"cannot generate {family} episode: {missing}")
        self.family = family
        self.missing = missing


class SearchLimitError(AskToActError):
    """Minimum-question search expanded more nodes than allowed."""


class ActionParseError(AskToActError):
    """Malformed action encoding. Raised to the harness, never to the agent."""


class QuestionParseError(AskToActError):
    """Question text outside the nine-template grammar."""


class InstructionParseError(AskToActError, ValueError):
    """Instruction text outside the fetch, clutter and preference templates."""


class EpisodeFinishedError(AskToActError):
    pass


class TrainingDivergedError(AskToActError):
    def __init__(self, message: str, last_checkpoint: str | None = None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


class ReplayMismatchError(AskToActError):
    pass


class FixtureMissError(AskToActError):
    pass


class FixtureCollisionError(AskToActError):
    pass


class BridgeUnavailableError(AskToActError):
    pass
