class SdeStabError(Exception):
    pass


class RejectedInputError(SdeStabError, ValueError):
    """Raised when an argument has the wrong shape or violates a precondition."""


class RejectedCertificateError(SdeStabError, ValueError):
    """Raised when certificate constants break their sign or ordering constraints."""


class UnsupportedSchemeError(SdeStabError):
    pass


class ConfigError(SdeStabError, ValueError):
    """Config could not be parsed or validated.

    ``errors`` holds ``(field_path, message)`` pairs.
    """

    def __init__(self, message, errors=()):
        super().__init__(message)
        self.errors = list(errors)
