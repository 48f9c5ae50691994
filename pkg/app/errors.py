"""Exception hierarchy shared by every module of the simulator."""


class IsingMachineError(Exception):
    """Base class for all errors raised by the simulator."""


class NotHermitian(IsingMachineError):
    pass


class InvalidState(IsingMachineError):
    pass


class DimensionMismatch(IsingMachineError):
    pass


class NotCP(IsingMachineError):
    def __init__(self, min_eigenvalue):
        super().__init__(
            f"Choi matrix has eigenvalue {min_eigenvalue:.3e} below -1e-8"
        )
        self.min_eigenvalue = min_eigenvalue


class OutOfBall(IsingMachineError):
    def __init__(self, norm):
        super().__init__(f"Bloch vector norm {norm:.12g} exceeds 1")
        self.norm = norm


class InvalidParams(IsingMachineError):
    pass


class TooLarge(IsingMachineError):
    pass


class Degenerate(IsingMachineError):
    pass


class NoConvergence(IsingMachineError):
    def __init__(self, message, best_residual=float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


class NotAchievable(IsingMachineError):
    def __init__(self, best_residual):
        super().__init__(
            f"Transition matrix not achievable; best residual "
            f"{best_residual:.3e} > 1e-4"
        )
        self.best_residual = best_residual


class DegenerateStates(IsingMachineError):
    pass


class NoDecomposition(IsingMachineError):
    def __init__(self, best_residual):
        super().__init__(
            f"No CZ-core decomposition found; best residual "
            f"{best_residual:.3e} > 1e-6"
        )
        self.best_residual = best_residual


class IncompleteData(IsingMachineError):
    pass


class IllConditioned(IsingMachineError):
    pass


class InsufficientData(IsingMachineError):
    pass


class IoError(IsingMachineError):
    def __init__(self, path, reason):
        super().__init__(f"Failed to write {path}: {reason}")
        self.path = path


class UsageError(IsingMachineError):
    pass
