class Error(Exception):
    pass


class FrameSizeError(Error):
    """Error when a vector does not fit the frame it is used with.

    Raised for bit sequences that cannot be split into MN symbols and
    for vectors whose length differs from MN.
    """

    pass


class InvalidBitsError(Error):
    """Bit vector contains values other than 0 and 1."""

    pass


class InvalidGridError(Error):
    """Frame dimensions are not positive integers."""

    pass


class UnknownConstellationError(Error):
    """Error when a constellation cannot be found by name."""

    pass


class InvalidVarianceError(Error):
    """Variance input is negative, non-positive or not finite."""

    pass


class InvalidChannelError(Error):
    """Channel description is inconsistent with the frame it lives on."""

    pass


class ChannelFileNotFoundError(InvalidChannelError):
    """Error when a channel document cannot be found.

    Essentially a wrapper around FileNotFoundError.
    """

    pass


class DenseGuardError(Error):
    """Error when a dense MN x MN matrix would exceed the size guard."""

    helper_message = (
        "Increase OTFS_DENSE_GUARD if the memory is available, or use a "
        "smaller frame."
    )

    def __init__(self, msg="", *args, **kwargs):
        # Avoid having a prefixing space if the msg is empty.
        if msg:
            msg = " ".join([msg, self.helper_message])
        else:
            msg = self.helper_message
        super().__init__(msg, *args, **kwargs)


class SolverError(Error):
    """Linear system is singular or not positive definite."""

    pass


class InvalidNoiseError(Error):
    """Noise level or effective SNR is outside of its valid range."""

    pass


class OracleBudgetError(Error):
    """Exhaustive search would enumerate more hypotheses than allowed."""

    pass


class InvalidDetectorConfigError(Error):
    """Detector configuration violates its invariants."""

    pass


class InvalidSimConfigError(Error):
    """Simulation configuration document is invalid."""

    pass


class BoundViolationError(Error):
    """A measured effective SNR exceeded its theoretical upper bound."""

    pass


class InvalidSampleSizeError(Error):
    """Too few Monte-Carlo samples requested."""

    pass


class BerNotReachedError(Error):
    """The simulated Es/N0 points do not straddle the requested BER."""

    pass
