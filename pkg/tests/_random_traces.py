"""Random, structurally valid traces that bypass the profile generator."""

import random

from fhe_iosim.workload import MULT_KEY_ID, OpKind, OpRecord, Trace, rot_key_id


def random_trace(seed: int, clock_hz: int = 10**9, max_ops: int = 200) -> Trace:
    rng = random.Random(seed)
    records = []
    for i in range(rng.randint(1, max_ops)):
        kind = rng.choice(list(OpKind))
        evk_id = rot = None
        evk = 0
        if kind is OpKind.HROT:
            rot = rng.randint(1, 64)
            evk_id, evk = rot_key_id(rot), rng.randint(1, 10**9)
        elif kind is OpKind.HMULT:
            evk_id, evk = MULT_KEY_ID, rng.randint(1, 10**9)
        records.append(
            OpRecord(
                op_id=i,
                kind=kind,
                compute_cycles=rng.randint(0, 10**6),
                ct_read_bytes=rng.randint(0, 10**8),
                ct_write_bytes=rng.randint(0, 10**8),
                evk_id=evk_id,
                evk_bytes=evk,
                rot_amount=rot,
            )
        )
    return Trace.from_records(
        records, app_name="rand", accel_name="sharp", clock_hz=clock_hz, seed=seed,
        iterations=rng.choice([1, 1, 32]),
    )
