class MachineError(RuntimeError):
    """A base machine failed to fit or predict.

    ``machine`` carries the display name of the offending machine when known.
    """

    def __init__(self, message, machine=None):
        self.machine = machine
        if machine is not None:
            message = f"[{machine}] {message}"
        super().__init__(message)


class SingularDesignError(MachineError):
    pass


class ConvergenceError(MachineError):
    pass
