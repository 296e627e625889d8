"""Exception hierarchy for promptevo."""


class PromptEvoError(Exception):
    """Base class for all promptevo errors."""


# --- bundle I/O ---

class BundleFormatError(PromptEvoError):
    """The file is not a valid embedding bundle."""


class BadMagicError(BundleFormatError):
    pass


class VersionMismatchError(BundleFormatError):
    pass


class DimZeroError(BundleFormatError):
    pass


class RowCountOverflowError(BundleFormatError):
    """Declared row count does not fit the file contents."""


class ZeroNormRowError(PromptEvoError):
    """A row with near-zero norm cannot be normalized."""


class IoFailureError(PromptEvoError):
    pass


class SpecInvalidError(PromptEvoError):
    """A synthetic benchmark spec violates its invariants."""


# --- prompt library ---

class NoPlaceholderError(PromptEvoError):
    """A template is missing its single `{}` class placeholder."""


class EmptyLibraryError(PromptEvoError):
    pass


class FingerprintMismatchError(PromptEvoError):
    """Encoded texts do not match the manifest they claim to satisfy."""


class CountMismatchError(PromptEvoError):
    pass


# --- scoring ---

class UnboundIdError(PromptEvoError):
    """A candidate references a text id the store does not contain."""


class RemoveAbsentError(PromptEvoError):
    """Delta removal of an id that is not in the cached set."""


class DegenerateVarianceError(PromptEvoError):
    """Correlation is undefined for a zero-variance series."""


class UnboundDescriptionsError(PromptEvoError):
    """Description texts required by the candidate are not bound."""


# --- search / driver ---

class EmptyPopulationError(PromptEvoError):
    pass


class NoTemplatesError(PromptEvoError):
    pass


class MissingInputError(PromptEvoError):
    """A configured input file does not exist or cannot be read."""


class ConfigError(PromptEvoError):
    """The run configuration is malformed."""


class ManifestPendingError(PromptEvoError):
    """Two-phase run stopped: an encode manifest awaits embeddings.

    Not a failure; the CLI maps it to its own exit status.
    """

    def __init__(self, manifest_path):
        super().__init__(f"encode manifest written to {manifest_path}")
        self.manifest_path = manifest_path
