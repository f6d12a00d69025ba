"""Exception types shared across the package."""


class MVBootstrapError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateConfiguration(MVBootstrapError):
    """Geometry problem has no well-posed solution (rank deficiency etc.)."""


class IncompleteInput(MVBootstrapError):
    """An operation requiring complete landmark sets received missing points."""


class InsufficientLabels(MVBootstrapError):
    """Not enough labeled frame-views to train on."""


class NonFiniteLoss(MVBootstrapError):
    """Training objective became NaN/inf.  Carries the offending step index."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class NoSeeds(MVBootstrapError):
    """Tracking was asked to propagate labels but no seed frame was given."""


class SingularSystem(MVBootstrapError):
    """Unregularized least squares on a rank-deficient design matrix."""


class ProtocolError(MVBootstrapError):
    """Malformed request/response line on the detector plugin wire."""


class TooFewFrames(MVBootstrapError):
    """Label-set initialization asked for fewer frames than the minimum."""


class AllMissing(MVBootstrapError):
    """Bounding box requested for landmarks with no present point."""


class MissingHeadBone(MVBootstrapError):
    """PCKh normalization bone has a missing endpoint in the groundtruth."""


class BadGrid(MVBootstrapError):
    """Threshold grid for PCK AUC is unsorted or too short."""


class NoPositives(MVBootstrapError):
    """Precision-recall AUC needs at least one positive (outlier) example."""


class SchemaError(MVBootstrapError):
    """Annotation file violates the record schema.

    Carries the 1-based line number and the offending key when known.
    """

    def __init__(self, line, key, message):
        self.line = line
        self.key = key
        super().__init__(f"line {line}: {message}" + (f" (key {key!r})" if key else ""))


class StageError(MVBootstrapError):
    """A pipeline stage failed.  Carries the stage tag and partial manifest."""

    def __init__(self, stage, cause, manifest=None):
        self.stage = stage
        self.cause = cause
        self.manifest = manifest
        super().__init__(f"stage {stage!r}: {cause}")
