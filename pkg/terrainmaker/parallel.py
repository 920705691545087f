"""
Optional MPI distribution.

When ``mpi4py`` is importable, independent work items (room fusions, room
scorings) are dealt round-robin over the ranks of ``COMM_WORLD`` and the
results gathered on every rank. Without it everything runs on rank 0.

"""
import importlib.util

found_mpi4py = importlib.util.find_spec("mpi4py") is not None

if found_mpi4py:
    from mpi4py import MPI
    use_mpi = True
    comm = MPI.COMM_WORLD
    rank = comm.Get_rank()
    nprocs = comm.Get_size()
else:
    rank = 0
    nprocs = 1
    use_mpi = False
    comm = None


def is_master():
    return rank == 0


def map_round_robin(func, items):
    """``[func(x) for x in items]`` with item ``i`` computed on rank ``i % nprocs``.

    Every rank receives the full, ordered result list.
    """
    items = list(items)
    mine = {i: func(x) for i, x in enumerate(items) if i % nprocs == rank}
    if use_mpi and nprocs > 1:
        merged = {}
        for part in comm.allgather(mine):
            merged.update(part)
        mine = merged
    return [mine[i] for i in range(len(items))]


def barrier():
    """Wait for every rank (no-op without MPI)."""
    if use_mpi and nprocs > 1:
        comm.Barrier()
