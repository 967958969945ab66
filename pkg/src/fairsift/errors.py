"""Exception types shared across the toolkit."""


class FairsiftError(Exception):
    """Base class for every error raised by this package."""


class InvalidScheme(FairsiftError):
    pass


class MalformedRecord(FairsiftError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateId(FairsiftError):
    def __init__(self, record_id: str):
        super().__init__(f"duplicate id {record_id!r}")
        self.record_id = record_id


class UnknownLabel(FairsiftError):
    def __init__(self, label: str):
        super().__init__(f"unknown label {label!r}")
        self.label = label


class UnknownRelevantId(FairsiftError):
    def __init__(self, query_id: str, image_id: str):
        super().__init__(f"query {query_id!r} references unknown image {image_id!r}")
        self.query_id = query_id
        self.image_id = image_id


class ZeroNormVector(FairsiftError):
    pass


class DimensionMismatch(FairsiftError):
    pass


class InvalidInput(FairsiftError):
    pass


class EmptyCandidateSet(FairsiftError):
    pass


class EmptyTrainingSet(FairsiftError):
    pass


class NonFiniteLoss(FairsiftError):
    pass


class MissingPrediction(FairsiftError):
    def __init__(self, image_id: str):
        super().__init__(f"no attribute prediction for image {image_id!r}")
        self.image_id = image_id


class MissingLabel(FairsiftError):
    def __init__(self, image_id: str):
        super().__init__(f"no attribute label for image {image_id!r}")
        self.image_id = image_id


class EmptyInput(FairsiftError):
    pass


class NoRelevantImages(FairsiftError):
    pass


class InvalidAlpha(FairsiftError):
    pass


class LengthMismatch(FairsiftError):
    pass


class ZeroVariance(FairsiftError):
    pass


class DegenerateX(FairsiftError):
    pass


class InvalidSpec(FairsiftError):
    pass


class ConfigError(FairsiftError):
    """Bad run configuration (CLI exit code 3)."""
