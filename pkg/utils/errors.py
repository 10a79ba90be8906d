# exception hierarchy shared by all commands.
# exit codes: 0 success, 1 usage, 2 data, 3 numeric


class LL3DError(Exception):
    exit_code = 1


class UsageError(LL3DError):
    exit_code = 1


class DataError(LL3DError):
    exit_code = 2


class CheckpointError(DataError):
    pass


class NumericError(LL3DError):
    exit_code = 3


class DimensionError(NumericError, ValueError):
    pass


class ContractError(NumericError):
    pass


class NonFiniteError(NumericError):
    pass


class FrozenMutationError(NumericError):
    pass
