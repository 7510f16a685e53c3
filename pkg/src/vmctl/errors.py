"""Error taxonomy shared by the solvers and the CLI exit codes."""


class VmctlError(Exception):
    """Base class for structured failures."""

    exit_code = 1


class ConfigError(VmctlError):
    """Invalid configuration or inconsistent setup (exit code 2)."""

    exit_code = 2

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NumericalError(VmctlError):
    """Runtime numerical failure: escape, blow-up, non-finite values (exit code 3)."""

    exit_code = 3

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class OutputError(VmctlError):
    """I/O failure writing or reading run artifacts (exit code 4)."""

    exit_code = 4
