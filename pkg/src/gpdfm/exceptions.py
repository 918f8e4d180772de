"""Exception hierarchy used across the package."""


class GPDFMError(Exception):
    """Base class for package errors."""


class ConfigError(GPDFMError, ValueError):
    """Invalid configuration, unknown key, or inconsistent model dimensions."""


class DomainError(GPDFMError, ValueError):
    """Input data outside the domain of a transformation."""


class SamplerError(GPDFMError, RuntimeError):
    """A Gibbs block failed; carries the iteration and block name when known."""

    def __init__(self, message, iteration=None, block=None):
        self.iteration = iteration
        self.block = block
        prefix = ""
        if block is not None:
            prefix = f"[{block}"
            prefix += f" @ iteration {iteration}] " if iteration is not None else "] "
        super().__init__(prefix + message)
