"""Exception types shared across the package.

Everything derives from ValueError (bad inputs) or RuntimeError (a
computation that could not complete), so callers who don't care about
the distinction can catch the builtin.
"""


class InvalidSpecError(ValueError):
    """A sampling/privacy spec violates its own invariants (e.g. WOR with Qb > |D|)."""


class OutOfRegimeError(ValueError):
    """Parameters fall outside the regime the amplification bound is proven for.

    The subsampling amplification result only covers eps_local <= 1.  We refuse
    to extrapolate silently; pass allow_extrapolation=True to apply the same
    formula anyway and have the result tagged as unproven.
    """


class DegenerateHoeffdingError(ValueError):
    """The concentration slack delta' = 2*exp(-2*beta^2*N) is >= 1.

    The single-round central bound divides by 1 - delta', so it is vacuous in
    this regime.  The message suggests the minimum N that fixes it.
    """


class DegenerateParameterError(ValueError):
    """A formula input sits on a removable singularity (q = 0 or q = 1, T = 0, ...)."""


class SearchFailureError(RuntimeError):
    """The accountant's numeric search could not bracket a solution below its ceiling."""


class DataFormatError(ValueError):
    """A dataset file failed to parse or violated the expected schema."""


class ConfigError(ValueError):
    """An experiment configuration is invalid.

    Carries the full list of problems so the CLI can report them all at once.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
