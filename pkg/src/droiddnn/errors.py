"""Exception hierarchy shared by every droiddnn module."""


class DroidDnnError(Exception):
    """Base class for all structured errors raised by this package."""


# container / format parsing
class MalformedContainer(DroidDnnError, ValueError):
    pass


class UnsupportedCompression(DroidDnnError):
    pass


class EntryNotFound(DroidDnnError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class CorruptEntry(DroidDnnError):
    pass


class MalformedAxml(DroidDnnError, ValueError):
    pass


class MalformedDex(DroidDnnError, ValueError):
    def __init__(self, message: str, entry: str | None = None):
        super().__init__(f"{entry}: {message}" if entry else message)
        self.entry = entry


class NoDexFound(DroidDnnError):
    pass


class MissingManifest(DroidDnnError):
    pass


class MalformedDer(DroidDnnError, ValueError):
    pass


class NoCertificateFound(DroidDnnError):
    pass


# features
class SchemaParseError(DroidDnnError, ValueError):
    pass


class ExtractionError(DroidDnnError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause


class EmptySubset(DroidDnnError, ValueError):
    pass


# models
class BadDims(DroidDnnError, ValueError):
    pass


class DimMismatch(DroidDnnError, ValueError):
    pass


class InsufficientData(DroidDnnError, ValueError):
    pass


class NonFiniteLoss(DroidDnnError, ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) during epoch {epoch}")
        self.epoch = epoch


class ModelParseError(DroidDnnError, ValueError):
    pass


class EmptyTrainSet(DroidDnnError, ValueError):
    pass


class BadK(DroidDnnError, ValueError):
    pass


class SingleClassData(DroidDnnError, ValueError):
    pass


class EmptyEvaluation(DroidDnnError, ValueError):
    pass


class ManifestParseError(DroidDnnError, ValueError):
    pass
