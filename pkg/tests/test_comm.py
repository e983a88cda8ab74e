import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alugrid.parallel.comm import (
    BufferExhausted,
    CollectiveMismatch,
    DeadlockError,
    MessageBuffer,
    SerialComm,
    World,
    run_ranks,
)


@given(st.lists(st.one_of(st.integers(-2**63, 2**63 - 1).map(lambda v: ("i", v)),
                          st.floats(allow_nan=False).map(lambda v: ("r", v)),
                          st.binary(max_size=40).map(lambda v: ("b", v)))))
def test_buffer_roundtrip(items):
    buf = MessageBuffer()
    for kind, v in items:
        {"i": buf.write_int, "r": buf.write_real, "b": buf.write_bytes}[kind](v)
    back = MessageBuffer(buf.to_bytes())
    for kind, v in items:
        got = {"i": back.read_int, "r": back.read_real, "b": back.read_bytes}[kind]()
        assert got == v
    assert back.exhausted()


def test_buffer_underflow():
    buf = MessageBuffer()
    buf.write_int(3)
    back = MessageBuffer(buf.to_bytes())
    back.read_int()
    with pytest.raises(BufferExhausted):
        back.read_real()


def test_array_reads():
    buf = MessageBuffer()
    buf.write_ints([1, 2, 3])
    buf.write_reals([0.5, -1.0])
    back = MessageBuffer(buf.to_bytes())
    assert back.read_ints(3).tolist() == [1, 2, 3]
    assert back.read_reals(2).tolist() == [0.5, -1.0]


def _ring(comm):
    nxt = (comm.rank + 1) % comm.size
    prv = (comm.rank - 1) % comm.size
    comm.send(nxt, comm.rank * 10)
    return comm.recv(prv)


@pytest.mark.parametrize("mode", ["deterministic", "concurrent"])
def test_ring_and_collectives(mode):
    assert run_ranks(5, _ring, mode=mode) == [40, 0, 10, 20, 30]

    def prog(comm):
        return (comm.allgather(comm.rank), comm.global_sum(comm.rank + 0.5),
                comm.global_min(float(comm.rank)), comm.global_max(float(comm.rank)),
                comm.broadcast("x" if comm.rank == 0 else None), comm.alltoall([comm.rank * 10 + q for q in range(comm.size)]))

    out = run_ranks(3, prog, mode=mode)
    for r, (gath, s, lo, hi, b, a2a) in enumerate(out):
        assert gath == [0, 1, 2]
        assert s == 4.5 and lo == 0.0 and hi == 2.0 and b == "x"
        assert a2a == [q * 10 + r for q in range(3)]


def test_sum_is_rank_ordered():
    vals = [1e16, 1.0, -1e16, 1.0]

    def prog(comm):
        return comm.global_sum(vals[comm.rank])

    expect = ((vals[0] + vals[1]) + vals[2]) + vals[3]
    assert run_ranks(4, prog) == [expect] * 4


def test_deadlock_detected():
    def prog(comm):
        return comm.recv((comm.rank + 1) % comm.size)

    with pytest.raises(DeadlockError):
        run_ranks(2, prog)


def test_collective_mismatch():
    def prog(comm):
        if comm.rank == 0:
            comm.barrier()
        else:
            comm.allgather(1)

    with pytest.raises(CollectiveMismatch):
        run_ranks(2, prog)


def test_rank_exception_propagates():
    def prog(comm):
        if comm.rank == 1:
            raise KeyError("boom")
        comm.barrier()

    with pytest.raises(KeyError):
        run_ranks(3, prog)


def test_tally_counts_categories():
    w = World(3)

    def prog(comm):
        comm.send((comm.rank + 1) % 3, b"abcd", category="probe")
        comm.recv((comm.rank - 1) % 3)
        comm.allgather(comm.rank)

    w.run(prog)
    assert w.tally.count("probe") == 3
    assert w.tally.count("nothing") == 0
    assert w.tally.total_messages >= 3


def test_probe_and_tags():
    def prog(comm):
        if comm.rank == 0:
            comm.send(1, "a", tag=7)
            comm.send(1, "b", tag=3)
            comm.barrier()
            return None
        comm.barrier()
        assert comm.probe(0, tag=3) and comm.probe(0, tag=7)
        return comm.recv(0, tag=3) + comm.recv(0, tag=7)

    assert run_ranks(2, prog)[1] == "ba"


def test_serial_comm():
    c = SerialComm()
    assert c.rank == 0 and c.size == 1
    assert c.allgather(5) == [5]
    assert c.global_min(2.5) == 2.5
    assert math.isinf(c.global_min(math.inf))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.lists(st.floats(-1e6, 1e6), min_size=6, max_size=6))
def test_modes_agree(size, vals):
    def prog(comm):
        x = np.array(vals) * (comm.rank + 1)
        return comm.global_sum(float(x.sum())), comm.allgather(float(x[0]))

    assert run_ranks(size, prog) == run_ranks(size, prog, mode="concurrent")


def test_bad_world():
    with pytest.raises(ValueError):
        World(0)
    with pytest.raises(ValueError):
        World(2, "fast")
