"""Exception taxonomy shared across the package."""


class WebcpError(Exception):
    """Base class for all webcp errors."""


class ProviderError(WebcpError):
    """A search or embedding provider failed."""


class TransportError(ProviderError):
    """Transient network failure (timeout, connection reset, 5xx).

    Safe to retry; the HTTP clients already retry internally before
    raising this.
    """


class ProviderDeniedError(ProviderError):
    """The provider refused the request (quota, auth, ban). Not retriable."""


class FetchError(WebcpError):
    """A page or image could not be fetched (timeout, blocked, 4xx/5xx)."""


class EmbeddingFormatError(WebcpError):
    """A .wcpe file is malformed. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class MissingEmbeddingError(WebcpError):
    """A required vector is absent from an embedding store."""


class ConfigError(WebcpError):
    """Invalid configuration. ``problems`` lists every violation found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class CalibrationError(WebcpError):
    """Calibration is impossible with the given inputs."""


class StageError(WebcpError):
    """A pipeline stage failed. ``stage`` names the failing stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
