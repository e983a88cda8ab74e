"""Simulated message-passing runtime.

A :class:`World` hosts ``size`` logical ranks, each running the same program
in its own thread.  Point-to-point channels are reliable and ordered per
``(source, dest, tag)``; collectives are barriers whose results are reduced
in ascending rank order, so every run is bitwise reproducible.

Two scheduling modes are available.  ``deterministic`` passes a baton in
round-robin order so that exactly one rank executes at any time;
``concurrent`` lets all threads run freely.  Both detect global deadlock
(no rank able to progress) and abort every rank with :class:`DeadlockError`.
"""

from __future__ import annotations

import struct
import threading
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "MessageBuffer",
    "BufferExhausted",
    "DeadlockError",
    "CollectiveMismatch",
    "RankAborted",
    "Tally",
    "World",
    "RankComm",
    "SerialComm",
    "run_ranks",
]

_INT = struct.Struct("<q")
_REAL = struct.Struct("<d")


class BufferExhausted(EOFError):
    """Read past the end of a :class:`MessageBuffer`."""


class DeadlockError(RuntimeError):
    pass


class CollectiveMismatch(DeadlockError):
    pass


class RankAborted(RuntimeError):
    """Raised in a rank because another rank failed."""


class MessageBuffer:
    """Typed byte buffer with little-endian 64-bit integers and reals.

    Values are consumed in the order they were appended.  Nested buffers are
    length-prefixed.
    """

    __slots__ = ("_data", "_pos")

    def __init__(self, data: bytes | bytearray | None = None):
        self._data = bytearray(data) if data is not None else bytearray()
        self._pos = 0

    def __len__(self) -> int:
        return len(self._data)

    def to_bytes(self) -> bytes:
        return bytes(self._data)

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def exhausted(self) -> bool:
        return self._pos >= len(self._data)

    def write_int(self, value: int) -> None:
        self._data += _INT.pack(int(value))

    def write_real(self, value: float) -> None:
        self._data += _REAL.pack(float(value))

    def write_ints(self, values: Iterable[int]) -> None:
        arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype="<i8")
        self._data += arr.tobytes()

    def write_reals(self, values: Iterable[float]) -> None:
        arr = np.asarray(values if isinstance(values, np.ndarray) else list(values), dtype="<f8")
        self._data += arr.tobytes()

    def write_u8(self, value: int) -> None:
        self._data.append(int(value) & 0xFF)

    def write_raw(self, raw: bytes) -> None:
        self._data += raw

    def write_bytes(self, raw: bytes) -> None:
        self.write_int(len(raw))
        self._data += raw

    def write_buffer(self, other: "MessageBuffer") -> None:
        self.write_bytes(bytes(other._data))

    def _take(self, n: int) -> memoryview:
        if n < 0 or self._pos + n > len(self._data):
            raise BufferExhausted(
                f"read of {n} bytes at offset {self._pos} exceeds buffer of {len(self._data)} bytes"
            )
        view = memoryview(self._data)[self._pos : self._pos + n]
        self._pos += n
        return view

    def read_int(self) -> int:
        return _INT.unpack(self._take(8))[0]

    def read_real(self) -> float:
        return _REAL.unpack(self._take(8))[0]

    def read_ints(self, n: int) -> np.ndarray:
        return np.frombuffer(self._take(8 * n), dtype="<i8").astype(np.int64)

    def read_reals(self, n: int) -> np.ndarray:
        return np.frombuffer(self._take(8 * n), dtype="<f8").astype(np.float64)

    def read_u8(self) -> int:
        return self._take(1)[0]

    def read_raw(self, n: int) -> bytes:
        return bytes(self._take(n))

    def read_bytes(self) -> bytes:
        n = self.read_int()
        return bytes(self._take(n))

    def read_buffer(self) -> "MessageBuffer":
        return MessageBuffer(self.read_bytes())


@dataclass
class Tally:
    """Per-category message and byte counters shared by all ranks of a world."""

    messages: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    nbytes: dict[str, int] = field(default_factory=lambda: defaultdict(int))

    def add(self, category: str, nbytes: int, messages: int = 1) -> None:
        self.messages[category] += messages
        self.nbytes[category] += nbytes

    def count(self, category: str) -> int:
        return self.messages.get(category, 0)

    @property
    def total_messages(self) -> int:
        return sum(self.messages.values())

    @property
    def total_bytes(self) -> int:
        return sum(self.nbytes.values())

    def snapshot(self) -> dict[str, tuple[int, int]]:
        return {k: (self.messages[k], self.nbytes.get(k, 0)) for k in sorted(self.messages)}


@dataclass
class _Collective:
    op: str
    values: list
    arrived: int = 0
    departed: int = 0


def _payload_size(value: Any) -> int:
    if isinstance(value, MessageBuffer):
        return len(value)
    if isinstance(value, (bytes, bytearray)):
        return len(value)
    if isinstance(value, np.ndarray):
        return value.nbytes
    if isinstance(value, (list, tuple)):
        return sum(_payload_size(v) for v in value)
    if isinstance(value, dict):
        return sum(_payload_size(k) + _payload_size(v) for k, v in value.items())
    return 8


class World:
    """Shared state of a simulated communicator of ``size`` ranks."""

    def __init__(self, size: int, mode: str = "deterministic"):
        if size < 1:
            raise ValueError("world size must be >= 1")
        if mode not in ("deterministic", "concurrent"):
            raise ValueError(f"unknown scheduling mode {mode!r}")
        self.size = size
        self.mode = mode
        self.tally = Tally()
        self._lock = threading.Lock()
        self._conds = [threading.Condition(self._lock) for _ in range(size)]
        self._queues: dict[tuple[int, int, int], deque] = defaultdict(deque)
        self._colls: dict[int, _Collective] = {}
        self._state = ["ready"] * size
        self._preds: list[Callable[[], bool] | None] = [None] * size
        self._turn = 0
        self._error: BaseException | None = None

    # -- scheduling -----------------------------------------------------
    def _runnable(self, r: int) -> bool:
        st = self._state[r]
        if st == "ready":
            return True
        if st == "blocked":
            return self._preds[r]()
        return False

    def _pass_turn(self, rank: int) -> None:
        for k in range(1, self.size + 1):
            r = (rank + k) % self.size
            if self._runnable(r):
                self._turn = r
                self._conds[r].notify()
                return
        if any(s != "done" for s in self._state):
            self._fail(DeadlockError(self._deadlock_report()))

    def _deadlock_report(self) -> str:
        blocked = [r for r, s in enumerate(self._state) if s == "blocked"]
        return f"collective mismatch: no rank can progress (blocked ranks {blocked})"

    def _fail(self, exc: BaseException) -> None:
        if self._error is None:
            self._error = exc
        for c in self._conds:
            c.notify_all()

    def _check_error(self) -> None:
        if self._error is not None:
            if isinstance(self._error, DeadlockError):
                raise type(self._error)(str(self._error))
            raise RankAborted("another rank failed") from None

    def _block(self, rank: int, pred: Callable[[], bool]) -> None:
        # caller holds the lock
        self._check_error()
        if pred():
            return
        self._preds[rank] = pred
        self._state[rank] = "blocked"
        cond = self._conds[rank]
        if self.mode == "deterministic":
            self._pass_turn(rank)
            while self._error is None and not (self._turn == rank and pred()):
                cond.wait()
        else:
            while self._error is None and not pred():
                if self._all_stuck():
                    self._fail(DeadlockError(self._deadlock_report()))
                    break
                cond.wait()
        self._state[rank] = "running"
        self._preds[rank] = None
        self._check_error()

    def _all_stuck(self) -> bool:
        for r, s in enumerate(self._state):
            if s in ("ready", "running"):
                return False
            if s == "blocked" and self._preds[r]():
                return False
        return True

    def _wake(self) -> None:
        if self.mode == "concurrent":
            for c in self._conds:
                c.notify_all()

    # -- program execution ------------------------------------------------
    def run(self, fn: Callable[..., Any], *args: Any, **kwargs: Any) -> list:
        results: list[Any] = [None] * self.size
        errors: list[BaseException | None] = [None] * self.size

        def body(rank: int) -> None:
            comm = RankComm(self, rank)
            with self._lock:
                if self.mode == "deterministic":
                    while self._error is None and self._turn != rank:
                        self._conds[rank].wait()
                if self._error is not None:
                    self._state[rank] = "done"
                    self._pass_turn(rank) if self.mode == "deterministic" else self._wake()
                    errors[rank] = RankAborted("aborted before start")
                    return
                self._state[rank] = "running"
            try:
                results[rank] = fn(comm, *args, **kwargs)
            except BaseException as exc:  # noqa: BLE001 - propagated to caller
                errors[rank] = exc
                with self._lock:
                    if not isinstance(exc, (RankAborted, DeadlockError)):
                        self._fail(exc)
                    elif self._error is None:
                        self._fail(exc)
            finally:
                with self._lock:
                    self._state[rank] = "done"
                    if self.mode == "deterministic":
                        if self._turn == rank or self._error is not None:
                            self._pass_turn(rank)
                    else:
                        self._wake()
                        for c in self._conds:
                            c.notify_all()

        if self.size == 1:
            body(0)
        else:
            threads = [
                threading.Thread(target=body, args=(r,), name=f"rank-{r}", daemon=True)
                for r in range(self.size)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()

        primary = [e for e in errors if e is not None and not isinstance(e, (RankAborted, DeadlockError))]
        if primary:
            raise primary[0]
        dead = [e for e in errors if isinstance(e, DeadlockError)]
        if dead:
            raise dead[0]
        if any(e is not None for e in errors):
            raise next(e for e in errors if e is not None)
        return results


class RankComm:
    """One rank's handle on a :class:`World`."""

    def __init__(self, world: World, rank: int):
        self.world = world
        self.rank = rank
        self.size = world.size
        self._coll_seq = 0
        self.sent_messages = 0  # this rank's share of the world tally
        self.sent_bytes = 0

    @property
    def tally(self) -> Tally:
        return self.world.tally

    # -- point to point -----------------------------------------------------
    def send(self, dest: int, payload: Any, tag: int = 0, category: str = "p2p") -> None:
        if not 0 <= dest < self.size:
            raise ValueError(f"invalid destination rank {dest}")
        w = self.world
        with w._lock:
            w._check_error()
            w._queues[(self.rank, dest, tag)].append(payload)
            n = _payload_size(payload)
            w.tally.add(category, n)
            self.sent_messages += 1
            self.sent_bytes += n
            w._wake()

    def probe(self, source: int, tag: int = 0) -> bool:
        w = self.world
        with w._lock:
            return bool(w._queues.get((source, self.rank, tag)))

    def recv(self, source: int, tag: int = 0) -> Any:
        w = self.world
        key = (source, self.rank, tag)
        with w._lock:
            q = w._queues[key]
            w._block(self.rank, lambda: bool(q))
            return q.popleft()

    # -- collectives ----------------------------------------------------------
    def _collective(self, op: str, value: Any, category: str = "collective") -> list:
        w = self.world
        seq = self._coll_seq
        self._coll_seq += 1
        with w._lock:
            w._check_error()
            c = w._colls.get(seq)
            if c is None:
                c = w._colls[seq] = _Collective(op, [None] * self.size)
            if c.op != op:
                exc = CollectiveMismatch(
                    f"collective mismatch: rank {self.rank} called {op!r} while another rank called {c.op!r}"
                )
                w._fail(exc)
                raise exc
            c.values[self.rank] = value
            c.arrived += 1
            if self.size > 1:
                n = _payload_size(value) * (self.size - 1)
                w.tally.add(category, n, messages=self.size - 1)
                self.sent_messages += self.size - 1
                self.sent_bytes += n
            w._wake()
            w._block(self.rank, lambda: c.arrived == self.size)
            values = list(c.values)
            c.departed += 1
            if c.departed == self.size:
                del w._colls[seq]
            return values

    def barrier(self) -> None:
        self._collective("barrier", None)

    def allgather(self, value: Any, category: str = "collective") -> list:
        return self._collective("allgather", value, category)

    def alltoall(self, values: Sequence[Any], category: str = "alltoall") -> list:
        """Personalised all-to-all: ``values[q]`` goes to rank ``q``."""
        if len(values) != self.size:
            raise ValueError("alltoall needs one entry per rank")
        allv = self._collective("alltoall", list(values), category)
        return [allv[r][self.rank] for r in range(self.size)]

    def global_min(self, x: float) -> float:
        vals = self._collective("min", float(x))
        return min(vals)

    def global_max(self, x: float) -> float:
        vals = self._collective("max", float(x))
        return max(vals)

    def global_sum(self, x: float) -> float:
        vals = self._collective("sum", x)
        total = vals[0]
        for v in vals[1:]:
            total = total + v
        return total

    def broadcast(self, value: Any, root: int = 0) -> Any:
        return self._collective("bcast", value if self.rank == root else None)[root]


class SerialComm(RankComm):
    """Communicator of a standalone single-rank world."""

    def __init__(self) -> None:
        super().__init__(World(1), 0)


def run_ranks(size: int, fn: Callable[..., Any], *args: Any, mode: str = "deterministic", **kwargs: Any) -> list:
    """Run ``fn(comm, *args, **kwargs)`` on ``size`` simulated ranks and return per-rank results."""
    return World(size, mode).run(fn, *args, **kwargs)
