"""Exception hierarchy.

Every error raised on purpose by the package derives from ``CtxPropError`` so
the CLI can turn it into a one-line reason and a nonzero exit code.
"""


class CtxPropError(Exception):
    """Base class for all package errors."""


# geometry
class BehindCamera(CtxPropError):
    pass


class OutOfImage(CtxPropError):
    pass


class EmptyGrid(CtxPropError):
    pass


class NoProjectableBox(CtxPropError):
    pass


class NoOverlap(CtxPropError):
    pass


# relations / models
class TooFewObjects(CtxPropError):
    pass


class EmptyTrainingSet(CtxPropError):
    pass


class ZeroBandwidth(CtxPropError):
    pass


class OutOfExtent(CtxPropError):
    pass


class EmptyCorpus(CtxPropError):
    pass


class ModelMissing(CtxPropError):
    pass


class ModelFormatError(CtxPropError):
    pass


# dataset io
class MalformedLine(CtxPropError):
    def __init__(self, line_no, field_index, message):
        self.line_no = line_no
        self.field_index = field_index
        super().__init__(f"line {line_no}, field {field_index}: {message}")


class MissingMatrix(CtxPropError):
    pass


class MalformedMatrix(CtxPropError):
    pass


# evaluation
class NoAnnotations(CtxPropError):
    pass
