"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 1000 100000] [--repeat 5]

Prints best-of-N wall time per call for each kernel and backend, the
speedup, and whether both backends returned bit-identical results. The last
block times a short training run end to end under each backend.
"""

import argparse
import time
import timeit

import numpy as np

from sglayout import _kernels
from sglayout._kernels import _fallback
from sglayout.encoder import ModelDims, init_model
from sglayout.stats import SynthSpec, synth_corpus
from sglayout.train import TrainConfig, train


def kernel_cases(n, rng):
    boxes_a = np.column_stack([rng.random((n, 2)), rng.uniform(0.01, 0.5, (n, 2))])
    boxes_b = np.column_stack([rng.random((n, 2)), rng.uniform(0.01, 0.5, (n, 2))])
    values = rng.normal(size=(n, 64))
    index = rng.integers(0, max(n // 4, 1), size=n)
    segments = max(n // 4, 1)
    return {
        "segment_sum": lambda mod: mod.segment_sum(values, index, segments),
        "relative_geometry": lambda mod: mod.relative_geometry(boxes_a, boxes_b, 1e-6),
        "box_iou": lambda mod: mod.box_iou(boxes_a, boxes_b),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return a.tobytes() == b.tobytes()


def bench_kernels(sizes, repeat):
    native = _kernels._native
    print(f"{'kernel':<18} {'n':>8} {'python ms':>10} {'native ms':>10} {'speedup':>8}  identical")
    for n in sizes:
        for name, call in kernel_cases(n, np.random.default_rng(0)).items():
            number = max(1, 20000 // n)
            t_py = min(timeit.repeat(lambda: call(_fallback), number=number, repeat=repeat)) / number
            t_c = min(timeit.repeat(lambda: call(native), number=number, repeat=repeat)) / number
            print(f"{name:<18} {n:>8} {t_py * 1e3:>10.3f} {t_c * 1e3:>10.3f} {t_py / t_c:>7.1f}x  "
                  f"{same(call(_fallback), call(native))}")


def bench_training(steps):
    doc = {"categories": ["c0", "c1", "c2"], "scenes": 640, "objects_per_scene": [2, 4], "seed": 1,
           "anchor_size": [0.1, 0.2], "anchor_center": [0.35, 0.65],
           "predicates": {"above": {"sigma_log_s": 0.1, "mu_dx": 0.1, "sigma_dx": 0.05, "mu_dy": -0.4, "sigma_dy": 0.05},
                          "beside": {"mu_log_s": 0.6, "sigma_log_s": 0.1, "mu_dx": 0.5, "sigma_dx": 0.05,
                                     "sigma_dy": 0.05}}}
    spec = SynthSpec.from_json(doc)
    corpus = synth_corpus(spec)
    print(f"\ntraining, {steps} steps of batch 32 (hidden 64, 2 layers)")
    histories = {}
    for backend in ("python", "native"):
        _kernels.use_backend(backend)
        model = init_model(spec.vocab, ModelDims(32, 32, 64, 2), seed=0)
        t0 = time.perf_counter()
        res = train(model, corpus, TrainConfig(max_steps=steps, seed=0))
        elapsed = time.perf_counter() - t0
        histories[backend] = [r.total for r in res.history]
        print(f"  {backend:<7} {elapsed:7.2f}s  ({elapsed / steps * 1e3:.1f} ms/step)")
    print(f"  identical loss histories: {histories['python'] == histories['native']}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[100, 10000, 200000])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--train-steps", type=int, default=200)
    args = parser.parse_args()
    if not _kernels.HAVE_NATIVE:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    bench_kernels(args.sizes, args.repeat)
    if args.train_steps:
        bench_training(args.train_steps)


if __name__ == "__main__":
    main()
