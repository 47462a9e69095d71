"""Exceptions raised by the KAM pipeline."""


class KamError(Exception):
    """Base class for pipeline failures."""


class DomainError(KamError, ValueError):
    """Argument outside the domain of an operation."""


class ResonantParameter(KamError):
    """A small divisor fell below its threshold.

    ``witness`` is a dict with keys kind, k, i, iota1, j, iota2, value,
    threshold (site entries are None where the kind does not use them).
    """

    def __init__(self, witness):
        self.witness = dict(witness)
        super().__init__("resonant parameter: %s" % _fmt(self.witness))


class FlowDiverged(KamError):
    """The Dyson series of the linear flow part did not decay."""


class ResidualTooLarge(KamError):
    """A substitute-back residual exceeded its gate."""

    def __init__(self, residual, gate):
        self.residual = residual
        self.gate = gate
        super().__init__("residual %.3e above gate %.3e" % (residual, gate))


class SmallnessGateFailed(KamError):
    """The schedule's smallness gate fails and no override was given."""

    def __init__(self, gate):
        self.gate = dict(gate)
        super().__init__("smallness gate fails (log %.6g > %.6g); set override_gate to run anyway"
                         % (gate["lhs_log"], gate["rhs_log"]))


class ConfigError(KamError):
    """Invalid run configuration."""


def _fmt(w):
    return ", ".join("%s=%s" % (k, w[k]) for k in w)
