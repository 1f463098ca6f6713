"""Exception hierarchy for the cswd package."""


class CswdError(Exception):
    """Base class for all package errors."""


class AudioTooShort(CswdError):
    pass


class BadSampleRate(CswdError):
    pass


class ShapeMismatch(CswdError):
    pass


class NonFiniteValue(CswdError):
    pass


class NotScalar(CswdError):
    pass


class GraphFreed(CswdError):
    pass


class NonDeterministicFunction(CswdError):
    pass


class SequenceTooShort(CswdError):
    pass


class EmptySequence(CswdError):
    pass


class OutOfVocabId(CswdError):
    pass


class VariantMismatch(CswdError):
    pass


class ParseError(CswdError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateId(CswdError):
    pass


class MissingFile(CswdError):
    pass


class EmptyCorpus(CswdError):
    pass


class UtteranceTooShort(CswdError):
    def __init__(self, utt_id, detail=""):
        self.utt_id = utt_id
        super().__init__(f"utterance {utt_id!r} too short{': ' + detail if detail else ''}")


class NonFiniteLoss(CswdError):
    def __init__(self, step, batch_id, loss):
        self.step = step
        self.batch_id = batch_id
        super().__init__(f"non-finite loss {loss!r} at step {step} (batch {batch_id})")


class EmptyEvalSet(CswdError):
    pass


class CheckpointError(CswdError):
    pass
