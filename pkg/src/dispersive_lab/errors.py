"""Exception hierarchy shared by every module of the lab."""


class LabError(Exception):
    """Base class for all errors raised by dispersive_lab."""


class NonSymmetricSpectrum(LabError):
    """A real field was requested from coefficients without conjugate symmetry."""


class SymbolSingularity(LabError):
    """A Fourier symbol evaluated to NaN or Inf on a resolved wavenumber."""


class NegativeOrderOnMean(LabError):
    """D_x^s with s < 0 was applied to a field with a nonzero mean."""


class UnresolvedBand(LabError):
    """A dyadic annulus reaches beyond the Nyquist wavenumber of the grid."""


class NonZeroMeanIntegrand(LabError):
    """A periodic antiderivative was requested for an integrand with nonzero mean."""


class IterationDiverged(LabError):
    """Picard differences grew past the divergence guard.

    The partial trace is kept on ``self.trace`` for inspection.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NoContractionFound(LabError):
    """Horizon halving gave up without reaching a contraction."""


class StepUnstable(LabError):
    """The reference integrator saw the L2 norm jump by more than 10x."""


class ConfigError(LabError):
    """Experiment configuration failed schema validation."""
