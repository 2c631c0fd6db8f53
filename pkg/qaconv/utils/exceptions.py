class QAConvError(ValueError):
    """Base error for every failure the library reports to its callers"""

    code = "QACONV_ERROR"
    exit_code = 1

    def __init__(self, message, details=None):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        """Convert error to dictionary"""
        error = {"code": self.code, "message": self.message}
        if self.details:
            error["details"] = self.details
        return error


class FormatError(QAConvError):
    """Bad magic, unknown version, truncated payload or malformed record"""

    code = "FORMAT_ERROR"
    exit_code = 3


class ProfileMismatchError(QAConvError):
    """Feature profiles, channel counts or matrix shapes disagree"""

    code = "PROFILE_MISMATCH"
    exit_code = 4


class PreconditionError(QAConvError):
    """An operation was called outside its domain"""

    code = "PRECONDITION_FAILED"
    exit_code = 5


class ConfigError(QAConvError):
    """Invalid configuration file or configuration value"""

    code = "CONFIG_ERROR"
    exit_code = 6
