"""Exception hierarchy shared by all floorgraph modules."""


class FloorgraphError(Exception):
    pass


class InvalidDiagram(FloorgraphError, ValueError):
    pass


class SelfLoop(InvalidDiagram):
    def __init__(self, index):
        self.index = index
        super().__init__(f"self-loop on room {index}")


class IndexOutOfRange(InvalidDiagram):
    def __init__(self, i, j, num_rooms):
        self.i, self.j, self.num_rooms = i, j, num_rooms
        super().__init__(f"edge ({i}, {j}) out of range for {num_rooms} rooms")


class EmptyGraph(InvalidDiagram):
    def __init__(self):
        super().__init__("bubble diagram has no rooms")


class ShapeMismatch(FloorgraphError, ValueError):
    pass


class LengthMismatch(FloorgraphError, ValueError):
    pass


class EmptyMask(FloorgraphError, ValueError):
    pass


class Unsatisfiable(FloorgraphError):
    def __init__(self, num_rooms, reason=""):
        self.num_rooms = num_rooms
        super().__init__(f"cannot tile the canvas with {num_rooms} rooms {reason}".strip())


class ParseError(FloorgraphError, ValueError):
    def __init__(self, line, reason):
        self.line, self.reason = line, reason
        super().__init__(f"line {line}: {reason}")


class SchemaVersionMismatch(FloorgraphError, ValueError):
    pass


class NonFiniteLoss(FloorgraphError, ArithmeticError):
    def __init__(self, step, terms):
        self.step, self.terms = step, dict(terms)
        super().__init__(f"non-finite loss at step {step}: {self.terms}")


class NonSymmetricCovariance(FloorgraphError, ValueError):
    pass


class NoEdges(FloorgraphError, ValueError):
    pass
