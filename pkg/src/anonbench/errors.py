"""Exception types shared across the package."""


class AnonbenchError(Exception):
    """Base class for all anonbench errors."""


class ManifestError(AnonbenchError, ValueError):
    """A dataset manifest violates its invariants."""


class DuplicateIdError(ManifestError):
    """Two records (or embedding rows) share the same id."""


class EmptyManifestError(ManifestError):
    """A manifest holds no records (possibly after dropping box-less ones)."""


class MalformedBoxError(ManifestError):
    """A bounding box is syntactically invalid or lies fully outside its image."""


class MissingImageError(ManifestError):
    """A manifest record points at an image file that does not exist."""


class EmbeddingFormatError(AnonbenchError, ValueError):
    """An embedding file violates the EMB1 binary layout."""


class BadMagicError(EmbeddingFormatError):
    """The file does not start with the EMB1 magic bytes."""


class TruncatedPayloadError(EmbeddingFormatError):
    """Declared row/column counts do not match the payload length."""


class ImageTooSmallError(AnonbenchError, ValueError):
    """An image is too small for the requested operation."""


class DatabaseTooSmallError(AnonbenchError, ValueError):
    """The database is so small that the relevance cutoff would be zero."""


class InconsistentCoverageError(AnonbenchError, ValueError):
    """Ranked lists for different queries cover different databases."""


class IdSetMismatchError(AnonbenchError, ValueError):
    """Query and database embedding matrices hold different id sets."""


class ZeroVarianceError(AnonbenchError, ValueError):
    """A series is constant, so its correlation is undefined."""


class DegenerateIdealError(AnonbenchError, ValueError):
    """The ideal DCG is not positive, so nDCG is undefined."""


class EmptyGridError(AnonbenchError, ValueError):
    """An experiment grid enumerates zero scenarios."""


class MixedDatasetsError(AnonbenchError, ValueError):
    """Reports from different datasets were combined into one summary."""
