"""Benchmark the compiled CTC kernels against the numpy reference.

Times the two hot paths used in training and beam decoding:

* forward_backward: loss + gradient for one (T, V) utterance
* prefix scoring: prefix_init plus a decode-shaped loop of prefix_extend

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sentence_g2p import _ctc_ref

try:
    from sentence_g2p import _ctc_speed
except ImportError:
    _ctc_speed = None


def random_logp(rng, T: int, V: int) -> np.ndarray:
    x = rng.standard_normal((T, V))
    x -= np.log(np.exp(x).sum(axis=1, keepdims=True))
    return np.ascontiguousarray(x)


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_forward_backward(backend, logp, targets, blank, repeats):
    return best_of(lambda: backend.forward_backward(logp, targets, blank), repeats)


def bench_prefix(backend, logp, blank, steps, width, rng, repeats):
    V = logp.shape[1]
    cand = np.ascontiguousarray(rng.integers(0, V - 1, size=width), dtype=np.int64)

    def run():
        r = backend.prefix_init(logp, blank)
        out_len, last = 0, -1
        for _ in range(steps):
            psi, r_new = backend.prefix_extend(logp, blank, r, out_len, last, cand)
            k = int(np.argmax(psi))
            r, out_len, last = r_new[k], out_len + 1, int(cand[k])

    return best_of(run, repeats)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    blank = 0
    print(f"{'case':<34} {'numpy':>10} {'cython':>10} {'speedup':>8}")

    for T, V, U in ((60, 45, 20), (150, 45, 50), (300, 45, 100)):
        logp = random_logp(rng, T, V)
        targets = np.ascontiguousarray(
            rng.integers(1, V, size=U), dtype=np.int64
        )
        t_ref = bench_forward_backward(_ctc_ref, logp, targets, blank, args.repeats)
        row = f"forward_backward T={T:<4} U={U:<4}"
        if _ctc_speed is None:
            print(f"{row:<34} {t_ref * 1e3:>8.2f}ms {'n/a':>10}")
            continue
        loss_r, grad_r, _ = _ctc_ref.forward_backward(logp, targets, blank)
        loss_s, grad_s, _ = _ctc_speed.forward_backward(logp, targets, blank)
        assert abs(loss_r - loss_s) < 1e-10 and np.allclose(grad_r, grad_s)
        t_spd = bench_forward_backward(_ctc_speed, logp, targets, blank, args.repeats)
        print(
            f"{row:<34} {t_ref * 1e3:>8.2f}ms {t_spd * 1e3:>8.2f}ms"
            f" {t_ref / t_spd:>7.1f}x"
        )

    for T, steps, width in ((60, 20, 8), (150, 50, 8)):
        logp = random_logp(rng, T, 45)
        t_ref = bench_prefix(_ctc_ref, logp, blank, steps, width, rng, args.repeats)
        row = f"prefix T={T:<4} steps={steps} k={width}"
        if _ctc_speed is None:
            print(f"{row:<34} {t_ref * 1e3:>8.2f}ms {'n/a':>10}")
            continue
        t_spd = bench_prefix(_ctc_speed, logp, blank, steps, width, rng, args.repeats)
        print(
            f"{row:<34} {t_ref * 1e3:>8.2f}ms {t_spd * 1e3:>8.2f}ms"
            f" {t_ref / t_spd:>7.1f}x"
        )


if __name__ == "__main__":
    main()
