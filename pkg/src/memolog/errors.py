"""Engine-level error types."""


class EngineError(Exception):
    pass


class TabledPruneError(EngineError):
    """A cut tried to prune a generator or consumer node; execution aborts."""


class ResourceLimitError(EngineError):
    """Step budget or wall-clock deadline exceeded."""

    def __init__(self, kind: str) -> None:
        super().__init__("resource limit exceeded: %s" % kind)
        self.kind = kind
