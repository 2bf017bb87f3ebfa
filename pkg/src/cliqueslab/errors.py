"""Exception hierarchy shared by the lab modules."""


class LabError(Exception):
    pass


class ContextError(LabError):
    """A scalar or point was used with an action it does not belong to."""


class InvalidPointError(LabError):
    pass


class ParameterError(LabError):
    """Action parameters fail their structural invariants."""


class ProtocolError(LabError):
    pass


class ConfigurationError(LabError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class AuthorizationError(LabError):
    pass


class NonterminationError(LabError):
    pass


class SequencingError(LabError):
    """The attack could not proceed; ``step`` names the attack step label."""

    def __init__(self, step, message):
        super().__init__(f"attack step {step}: {message}")
        self.step = step


class UnsupportedInitiatorError(SequencingError):
    pass
