from .comm import (
    BufferExhausted,
    CollectiveMismatch,
    DeadlockError,
    MessageBuffer,
    RankComm,
    SerialComm,
    Tally,
    World,
    run_ranks,
)

__all__ = [
    "BufferExhausted",
    "CollectiveMismatch",
    "DeadlockError",
    "MessageBuffer",
    "RankComm",
    "SerialComm",
    "Tally",
    "World",
    "run_ranks",
]
