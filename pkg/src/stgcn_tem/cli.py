"""Command-line entry point: ``stgcn-tem <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import gradcheck, io
from .config import ConfigError, build_run_config, parse_config
from .data import generate_synthetic
from .layers import STGCN, spatial_gcn, tem_forward
from .tensor import conv_time
from .topology import (
    TopologyError,
    build_spatial_partition,
    build_temporal_partition,
    load_topology,
    path_distance,
)
from .training import evaluate, format_history, predict, train

log = logging.getLogger("stgcn_tem")


def _matrix(m: np.ndarray, fmt: str = "{:.6f}") -> str:
    return "\n".join(" ".join(fmt.format(v) for v in row) for row in m)


def cmd_graph(args) -> int:
    topo = load_topology(args.topology)
    dist = path_distance(topo)
    print(f"joints {topo.joint_count} cog {topo.cog_joint} bones {len(topo.bones)}")
    print("# adjacency")
    print(_matrix(topo.bone_matrix(), "{:.0f}"))
    for part in (build_spatial_partition(topo, args.hops, dist, args.epsilon),
                 build_temporal_partition(topo, args.temporal_hops, dist, args.epsilon)):
        for k in range(part.num_subsets):
            print(f"# {part.kind} mask {k} (D={part.max_hop})")
            print(_matrix(part.subset_masks[k], "{:.0f}"))
            print(f"# {part.kind} normalized {k} (epsilon={part.epsilon:g})")
            print(_matrix(part.normalized[k]))
    return 0


def cmd_gen(args) -> int:
    topo = load_topology(args.topology)
    ds = generate_synthetic(topo, args.classes, args.per_class, args.frames, args.noise, args.seed, args.dims)
    io.write_sequence_file(args.out, ds)
    print(f"wrote {len(ds)} samples ({topo.joint_count} joints, {args.frames} frames, {args.dims} channels) to {args.out}")
    return 0


def cmd_forward(args) -> int:
    cfg, params = io.load_model(args.checkpoint)
    model = STGCN(cfg)
    ds = io.read_sequence_file(args.sequences)
    probs = predict(model, params, ds)
    for sid, p in zip(ds.ids, probs):
        print(sid, " ".join(f"{v:.17g}" for v in p))
    return 0


def cmd_train(args) -> int:
    cfg_path = Path(args.config)
    values = parse_config(cfg_path.read_text(encoding="utf-8"))
    if "data" not in values:
        raise ConfigError("config needs a 'data' entry")
    data = io.read_sequence_file(cfg_path.parent / values["data"])
    run = build_run_config(values, cfg_path.parent, data.shape[2], data.class_count, args.seed)
    params, history = train(run.model, data, run.train)
    io.save_model(args.out, run.model, params)
    text = format_history(history)
    if args.history:
        Path(args.history).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    cfg, params = io.load_model(args.checkpoint)
    report = evaluate(STGCN(cfg), params, io.read_sequence_file(args.sequences))
    sys.stdout.write(report.format())
    return 0


def cmd_gradcheck(args) -> int:
    reports = gradcheck.run_suite(args.seed, args.step)
    failed = [name for name, r in reports.items() if not r.passed]
    for name, r in reports.items():
        where = "" if r.passed else f" at {r.failing[0]}{list(r.failing[1])}"
        print(f"{name:<24s} worst rel err {r.worst:.3e} tol {r.tolerance:g} {'ok' if r.passed else 'FAIL'}{where}")
    print("FAILED: " + ", ".join(failed) if failed else "all gradient checks passed")
    return 1 if failed else 0


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    n, f, c = args.joints, args.frames, args.channels
    topo = load_topology(args.topology) if args.topology else load_topology(f"chain{n}")
    n = topo.joint_count
    sp, tp = build_spatial_partition(topo), build_temporal_partition(topo)
    x = rng.normal(size=(f, n, c))
    w = [rng.normal(size=(c, c)) for _ in range(3)]
    m = [np.ones((n, n))] * 3
    kernel, bias = rng.normal(size=(args.kernel_size, c, c)), np.zeros(c)
    kernels = {
        "spatial": lambda: spatial_gcn(x, sp, w, m),
        "tem": lambda: tem_forward(x, tp, w, m, "residual"),
        "temporal": lambda: conv_time(x, kernel, bias, 1),
    }
    print(f"N={n} F={f} C={c} repeat={args.repeat}")
    for name, fn in kernels.items():
        fn()
        start = time.perf_counter()
        for _ in range(args.repeat):
            fn()
        per = (time.perf_counter() - start) / args.repeat
        print(f"{name:<9s} {per * 1e3:.4f} ms/call")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stgcn-tem", description="Skeleton ST-GCN with a temporal extension module.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("graph", help="print adjacency, partition masks and normalized matrices")
    g.add_argument("topology", help="topology file or built-in name (ntu25, openpose18, chainN, starN)")
    g.add_argument("--hops", type=int, default=1, help="spatial sampling distance")
    g.add_argument("--temporal-hops", type=int, default=1, help="inter-frame sampling distance")
    g.add_argument("--epsilon", type=float, default=1e-6)
    g.set_defaults(func=cmd_graph)

    g = sub.add_parser("gen", help="write a synthetic dataset as a sequence file")
    g.add_argument("--topology", default="openpose18")
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--per-class", type=int, default=10)
    g.add_argument("--frames", type=int, default=20)
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--dims", type=int, default=2, choices=(2, 3))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--out", required=True)
    g.set_defaults(func=cmd_gen)

    g = sub.add_parser("forward", help="class probabilities, one line per sample")
    g.add_argument("checkpoint")
    g.add_argument("sequences")
    g.set_defaults(func=cmd_forward)

    g = sub.add_parser("train", help="train from a key = value config file")
    g.add_argument("config")
    g.add_argument("-o", "--out", required=True, help="checkpoint to write")
    g.add_argument("--history", help="write the per-epoch CSV here instead of stdout")
    g.add_argument("--seed", type=int, help="override the config seed")
    g.set_defaults(func=cmd_train)

    g = sub.add_parser("eval", help="top-1 / top-5 accuracy and confusion matrix")
    g.add_argument("checkpoint")
    g.add_argument("sequences")
    g.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient suite; exit 1 on failure")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--step", type=float, default=gradcheck.STEP)
    g.set_defaults(func=cmd_gradcheck)

    g = sub.add_parser("bench", help="time the spatial, TEM and temporal kernels")
    g.add_argument("--joints", type=int, default=25)
    g.add_argument("--frames", type=int, default=64)
    g.add_argument("--channels", type=int, default=16)
    g.add_argument("--kernel-size", type=int, default=9)
    g.add_argument("--topology", help="use this topology instead of a chain of --joints joints")
    g.add_argument("--repeat", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TopologyError, io.FormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
