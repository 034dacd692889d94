"""Benchmark: compiled extension vs pure-Python engine.

Run as ``python -m pdmpis.bench [n]``.  Reports per-trajectory wall time
for both engines on both built-in models and checks that the engines
produce identical skeletons on the benchmarked streams.
"""

from __future__ import annotations

import sys
import time

from . import _dispatch
from .core import RngStream
from .models import heated_room_model, heated_room_scheme, tiny_ctmc_model


def _time_engine(model, scheme, n, engine):
    t0 = time.perf_counter()
    for i in range(n):
        _dispatch.simulate(model, scheme, RngStream(99, i), engine=engine)
    return (time.perf_counter() - t0) / n


def _parity(model, scheme, n):
    for i in range(n):
        a = _dispatch.simulate(model, scheme, RngStream(99, i), engine="python")
        b = _dispatch.simulate(model, scheme, RngStream(99, i), engine="compiled")
        ea, eb = a.skeleton.entries, b.skeleton.entries
        if len(ea) != len(eb) or a.log_weight != b.log_weight or any(
                x != y for x, y in zip(ea, eb)):
            return False
    return True


def main(argv=None) -> int:
    args = argv if argv is not None else sys.argv[1:]
    n_py = int(args[0]) if args else 5
    n_cy = max(50, 20 * n_py)
    if not _dispatch.HAVE_COMPILED:
        print("compiled engine unavailable; nothing to compare")
        return 1
    hm = heated_room_model()
    cases = [
        ("heated_room / original", hm, None),
        ("heated_room / biased", hm, heated_room_scheme(hm, 0.915, 1.197)),
        ("tiny_ctmc / original", tiny_ctmc_model(0.1, 1.0, 2, 2.0), None),
    ]
    print(f"{'case':<28} {'python':>12} {'compiled':>12} {'speedup':>9} {'parity':>7}")
    for name, model, scheme in cases:
        t_py = _time_engine(model, scheme, n_py, "python")
        t_cy = _time_engine(model, scheme, n_cy, "compiled")
        ok = _parity(model, scheme, min(n_py, 5))
        print(f"{name:<28} {t_py * 1e3:>10.2f}ms {t_cy * 1e3:>10.3f}ms "
              f"{t_py / t_cy:>8.0f}x {'ok' if ok else 'FAIL':>7}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
