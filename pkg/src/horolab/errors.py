"""Exception types raised across horolab."""


class HorolabError(Exception):
    """Base class for all horolab errors."""


class ParameterError(HorolabError, ValueError):
    pass


class ResourceLimitError(HorolabError):
    """An explicit construction would exceed a configured cap."""

    def __init__(self, cap_name: str, cap: int, requested: int | None = None):
        self.cap_name = cap_name
        self.cap = cap
        self.requested = requested
        msg = f"{cap_name} exceeded (cap={cap}"
        if requested is not None:
            msg += f", requested at least {requested}"
        super().__init__(msg + ")")


class EnumerationBudgetError(ResourceLimitError):
    pass


class UnknownVertexError(HorolabError, KeyError):
    pass


class EmptyOverlapError(HorolabError, ValueError):
    pass


class ZeroVolumeError(HorolabError, ZeroDivisionError):
    pass
