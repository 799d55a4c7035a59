"""Exception hierarchy shared by every dfsblock module."""


class DfsBlockError(Exception):
    """Base class for all dfsblock failures."""


class ModelError(DfsBlockError):
    """Invalid model input: bad indices, edges, generators or shapes."""


class CapacityError(DfsBlockError):
    """A request exceeds a configured size or search cap."""


class LeakageError(DfsBlockError):
    """A Hamiltonian does not leave the requested subspace invariant."""

    def __init__(self, message: str, commutator_norm: float):
        super().__init__(f"{message} (||[P,H]|| = {commutator_norm:.3e})")
        self.commutator_norm = commutator_norm


class IntegrationError(DfsBlockError):
    """Time integration lost unitarity or failed to converge."""


class GridMismatchError(DfsBlockError):
    """Quadrature inputs are not sampled on the same grid."""


class GapClosureError(DfsBlockError):
    """A spectral gap required by the construction is zero."""


class SynthesisDegeneracyError(DfsBlockError):
    """The unit rotation angle is (numerically) a rational multiple of pi."""


class CompilationError(DfsBlockError):
    """A logical operation cannot be compiled with the available controls."""


class ContractViolation(DfsBlockError):
    """A verification metric missed its numerical contract."""
