"""Exception types shared across the pipeline."""


class PannavError(Exception):
    """Base class for every error raised by this package."""


class EmptyCluster(PannavError):
    pass


class FrameMismatch(PannavError):
    pass


class DuplicateClassId(PannavError):
    def __init__(self, class_id):
        super().__init__(f"duplicate class id {class_id}")
        self.class_id = class_id


class MissingUnknownClass(PannavError):
    def __init__(self):
        super().__init__("registry has no class with id 0 ('unknown')")


class NegativeCost(PannavError):
    def __init__(self, name, cost):
        super().__init__(f"class {name!r} has invalid traverse cost {cost!r}")
        self.name = name
        self.cost = cost


class RegistryError(PannavError):
    """Malformed registry document that is not covered by a narrower error."""


class EndOfStream(PannavError):
    pass


class CorruptMaskFile(PannavError):
    def __init__(self, path, reason=""):
        msg = f"corrupt mask file {path}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.path = path


class DegenerateCloud(PannavError):
    pass


class NonPositiveDefinite(PannavError):
    pass


class NonMonotonicStamp(PannavError):
    pass


class GridMismatch(PannavError):
    pass


class InvalidStart(PannavError):
    pass


class NoPathFound(PannavError):
    pass


class ConfigError(PannavError):
    """Invalid scenario or pipeline configuration.

    ``field`` is the dotted path of the offending entry, e.g. ``world.actors[0].speed``.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class ReplayDivergence(PannavError):
    """Replayed run drifted away from the recorded one."""
