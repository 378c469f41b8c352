"""Exception types shared across the package."""


class SpecJudgeError(Exception):
    """Base class for all package errors."""


class UnknownUnit(SpecJudgeError):
    """A named method/function/lemma does not exist in the source file."""


class UnsupportedSpec(SpecJudgeError):
    """A clause set uses heap constructs (old/fresh/modifies/reads) that
    cannot be expressed as a first-order comparison lemma."""


class UnknownSymbol(SpecJudgeError):
    """A clause references a name that cannot be bound from the method's
    parameters, return values, or the surrounding program."""


class VerifierUnavailable(SpecJudgeError):
    """The verifier subprocess could not be started or is misbehaving."""


class EmptyInput(SpecJudgeError):
    """An aggregation was asked to run over zero records."""


class DimensionMismatch(SpecJudgeError):
    """Embedding vectors do not share a common dimensionality."""


class ProviderUnavailable(SpecJudgeError):
    """The external embedding endpoint could not be reached."""


class ClientUnavailable(SpecJudgeError):
    """The chat-completion endpoint could not be reached after retries."""
