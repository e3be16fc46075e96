"""Exception hierarchy shared across the pipeline modules."""


class ForgeError(Exception):
    """Base class for all pipeline errors.

    `category` is the single-word machine-parseable tag the CLI prints on
    failure (one line: ``error: <category>: <message>``).
    """

    category = "error"

    def __str__(self) -> str:  # pragma: no cover - trivial
        return super().__str__() or self.category


# --- ingest ---------------------------------------------------------------

class MalformedCue(ForgeError):
    category = "malformed-cue"

    def __init__(self, line_no: int, message: str = ""):
        self.line_no = line_no
        super().__init__(message or f"unparseable cue at line {line_no}")


class EmptyInput(ForgeError):
    category = "empty-input"


class EmptyTranscript(ForgeError):
    category = "empty-transcript"


class NotAVideo(ForgeError):
    category = "not-a-video"


class IOFailure(ForgeError):
    category = "io-failure"


class BackendUnavailable(ForgeError):
    category = "backend-unavailable"


class DecodeFailure(ForgeError):
    category = "decode-failure"


# --- segmenter ------------------------------------------------------------

class NoMatch(ForgeError):
    category = "no-match"


class InvalidDecision(ForgeError):
    category = "invalid-decision"

    def __init__(self, index, message: str = ""):
        self.index = index
        super().__init__(message or f"decision references unknown boundary {index}")


class ConflictingDecisions(ForgeError):
    category = "conflicting-decisions"


# --- refine ---------------------------------------------------------------

class NoTissue(ForgeError):
    category = "no-tissue"


# --- instructgen ----------------------------------------------------------

class JudgeMalformed(ForgeError):
    category = "judge-malformed"


class Ungrounded(ForgeError):
    category = "ungrounded-feature"

    def __init__(self, feature: str):
        self.feature = feature
        super().__init__(f"feature not grounded in transcript: {feature!r}")


class MissingDiagnosisLine(ForgeError):
    category = "missing-diagnosis-line"


# --- stager ----------------------------------------------------------------

class DegenerateSegment(ForgeError):
    category = "degenerate-segment"


class InsufficientVideos(ForgeError):
    category = "insufficient-videos"


class CompositionViolation(ForgeError):
    category = "composition-violation"


class CountMismatch(ForgeError):
    category = "count-mismatch"


class UnknownStage(ForgeError):
    category = "unknown-stage"


# --- evalharness ------------------------------------------------------------

class ParseFailure(ForgeError):
    category = "parse-failure"
