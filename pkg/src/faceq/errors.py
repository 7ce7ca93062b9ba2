"""Exception hierarchy shared by every faceq module.

Each error carries a stable machine-parsable ``code`` (used as the CLI's
``E_*`` prefix) and an exit ``category``: 2 for data errors, 3 for numeric
failures.
"""

from __future__ import annotations


class FaceqError(Exception):
    code = "E_ERROR"
    category = 2


# -- corpus / file ingestion ------------------------------------------------

class MalformedRow(FaceqError):
    code = "E_MALFORMED_ROW"


class DimensionMismatch(FaceqError):
    code = "E_DIM_MISMATCH"


class DuplicateImageId(FaceqError):
    code = "E_DUPLICATE_IMAGE_ID"


class UnknownImageId(FaceqError):
    code = "E_UNKNOWN_IMAGE_ID"


class DuplicatePair(FaceqError):
    code = "E_DUPLICATE_PAIR"


# -- annotation sessions ----------------------------------------------------

class PoolTooSmall(FaceqError):
    code = "E_POOL_TOO_SMALL"


class OutOfOrder(FaceqError):
    code = "E_OUT_OF_ORDER"


class SessionClosed(FaceqError):
    code = "E_SESSION_CLOSED"


class Incomplete(FaceqError):
    code = "E_INCOMPLETE"


# -- matrix completion --------------------------------------------------------

class UnknownReference(FaceqError):
    code = "E_UNKNOWN_REFERENCE"


class WorkerWithoutData(FaceqError):
    code = "E_WORKER_NO_DATA"


class TooFewWorkers(FaceqError):
    code = "E_TOO_FEW_WORKERS"


# -- matcher quality values ---------------------------------------------------

class DegenerateImpostorSpread(FaceqError):
    code = "E_DEGENERATE_IMPOSTOR_SPREAD"
    category = 3


class MissingGenuineScore(FaceqError):
    code = "E_MISSING_GENUINE_SCORE"


class TooFewImpostors(FaceqError):
    code = "E_TOO_FEW_IMPOSTORS"


# -- regression model ---------------------------------------------------------

class TooFewRows(FaceqError):
    code = "E_TOO_FEW_ROWS"


class NonFiniteInput(FaceqError):
    code = "E_NON_FINITE_INPUT"


class TooFewSubjects(FaceqError):
    code = "E_TOO_FEW_SUBJECTS"


class GridExhausted(FaceqError):
    code = "E_GRID_EXHAUSTED"
    category = 3


class MalformedModelFile(FaceqError):
    code = "E_MALFORMED_MODEL_FILE"


class VersionMismatch(FaceqError):
    code = "E_VERSION_MISMATCH"


# -- evaluation ----------------------------------------------------------------

class EmptyScores(FaceqError):
    code = "E_EMPTY_SCORES"


class MissingQuality(FaceqError):
    code = "E_MISSING_QUALITY"


class MissingPairScore(FaceqError):
    code = "E_MISSING_PAIR_SCORE"


class LengthMismatch(FaceqError):
    code = "E_LENGTH_MISMATCH"


class DegenerateConstantInput(FaceqError):
    code = "E_DEGENERATE_CONSTANT_INPUT"
    category = 3


class MissingTarget(FaceqError):
    code = "E_MISSING_TARGET"
