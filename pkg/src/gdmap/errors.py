"""Exception hierarchy shared by every gdmap module."""


class GDMError(Exception):
    """Base class for all gdmap errors."""


class EmptyInput(GDMError, ValueError):
    pass


class InvalidArgument(GDMError, ValueError):
    pass


class DegenerateGroup(GDMError, ValueError):
    pass


class DegenerateSchedule(GDMError, ValueError):
    pass


class DegenerateTangent(GDMError, ValueError):
    pass


class NumericalError(GDMError, ArithmeticError):
    pass


class TrainingDiverged(NumericalError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss})")
        self.step = step
        self.loss = loss


class IncompatibleCheckpoint(GDMError):
    pass


class ParseError(GDMError, ValueError):
    """Malformed input file. ``location`` is a line number or byte offset."""

    def __init__(self, message: str, path=None, location=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if location is not None:
                where += f":{location}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.location = location


class MissingScan(GDMError, FileNotFoundError):
    pass
