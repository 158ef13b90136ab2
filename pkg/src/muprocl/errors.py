"""Shared exception types for the engine."""


class InputError(ValueError):
    """An operation received input violating its preconditions."""


class ConfigError(ValueError):
    """A run configuration is invalid or internally inconsistent."""


class ParseError(ValueError):
    """A persisted file is malformed; message carries the line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class MissingEmbeddingError(KeyError):
    """A prompt key has no stored embedding."""

    def __init__(self, prompt):
        super().__init__(f"no embedding for prompt: {prompt!r}")
        self.prompt = prompt


class AgentError(RuntimeError):
    """The prompt-generation agent failed (transport or malformed reply)."""


class ContractViolation(RuntimeError):
    """An API was used against its stated contract (frozen bank mutation, stale cache)."""
