"""Exception hierarchy shared by all lesionmil modules.

Every error raised on a documented failure path derives from
:class:`LesionMilError`, so callers (and the CLI) can catch one base class.
"""


class LesionMilError(Exception):
    """Base class for all lesionmil errors."""


class MissingFile(LesionMilError):
    """A referenced image, mask, or manifest file does not exist."""


class MalformedManifest(LesionMilError):
    """A manifest row cannot be parsed or violates a corpus invariant."""


class ShapeMismatch(LesionMilError):
    """Two arrays that must share a shape do not."""


class ArchitectureMismatch(ShapeMismatch):
    """Input does not match the classifier architecture (a shape error)."""


class IoFailure(LesionMilError):
    """Reading or writing an artifact file failed."""


class OracleMaskMissing(LesionMilError):
    """Oracle segmentation requested but no mask was supplied."""


class EmptyForeground(LesionMilError):
    """A segmentation step produced or received a mask with no foreground."""


class NoTilesIncluded(LesionMilError):
    """No tile of the grid met the mask inclusion criterion."""


class BoxOutsideImage(LesionMilError):
    """A box annotation does not fit inside its image."""


class EmptyBag(LesionMilError):
    """A bag with zero tiles was passed where tiles are required."""


class EmptyTrainingSet(LesionMilError):
    """A training step received no labeled examples."""


class CorruptCheckpoint(LesionMilError):
    """A checkpoint file is truncated or otherwise unreadable."""


class VersionMismatch(LesionMilError):
    """A checkpoint was written by an incompatible format version."""


class AlignmentMismatch(LesionMilError):
    """Per-bag predictions do not line up with the corpus bags."""


class DegenerateCorpus(LesionMilError):
    """Training requires at least one positive and one negative bag."""


class LengthMismatch(LesionMilError):
    """Two parallel sequences differ in length."""


class DegenerateLabels(LesionMilError):
    """An operation needs both classes present in the truth labels."""


class InvalidConfig(LesionMilError):
    """A run configuration key or value is not acceptable."""
