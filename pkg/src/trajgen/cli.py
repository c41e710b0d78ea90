"""Operator entry points for every pipeline stage and ablation toggle.

Exit codes: 0 ok, 2 usage error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from dataclasses import asdict

import numpy as np

from trajgen import chain as chain_mod
from trajgen import dataset_io, matching
from trajgen.baselines import PREDICTOR_KINDS, Predictor, predict
from trajgen.errors import DataError
from trajgen.evaluation import evaluate
from trajgen.geometry import NoiseFilter
from trajgen.mapgen import MapGenConfig
from trajgen.samples import SampleConfig, generate_sample
from trajgen.seeds import derive_seed

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _add_generation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="top-level RNG seed")
    p.add_argument("--lane-width", type=float, default=6.0)
    p.add_argument("--sidewalk-width", type=float, default=1.5)
    p.add_argument("--branching-max", type=int, default=5,
                   help="max roads branched off the backbone")
    p.add_argument("--double-width-prob", type=float, default=0.5)
    p.add_argument("--lidar-intensity", type=float, default=0.5)
    p.add_argument("--crop-size", type=int, default=360)
    p.add_argument("--n-gt-min", type=int, default=1)
    p.add_argument("--n-gt-max", type=int, default=5)
    p.add_argument("--shift-right-bias", type=float, default=0.7)
    p.add_argument("--no-lidar-noise", action="store_true",
                   help="disable simulated border dropout")
    p.add_argument("--no-shift", action="store_true",
                   help="keep trajectories centered in the lane")
    p.add_argument("--no-unreachable", action="store_true",
                   help="do not add disconnected roads")
    p.add_argument("--no-sidewalk-jitter", action="store_true")


def _configs_from_args(args) -> tuple[MapGenConfig, SampleConfig]:
    map_cfg = MapGenConfig(
        lane_width=args.lane_width,
        sidewalk_width=args.sidewalk_width,
        branching_factor_max=args.branching_max,
        double_width_prob=args.double_width_prob,
        unreachable_roads=not args.no_unreachable,
        lidar_noise=not args.no_lidar_noise,
        sidewalk_jitter=not args.no_sidewalk_jitter,
        lidar_intensity=args.lidar_intensity,
    )
    sample_cfg = SampleConfig(
        n_gt_range=(args.n_gt_min, args.n_gt_max),
        shift_enabled=not args.no_shift,
        shift_right_bias=args.shift_right_bias,
        crop_size=args.crop_size,
    )
    return map_cfg, sample_cfg


def cmd_estimate_chain(args) -> int:
    result = dataset_io.ingest_real(args.split_dir)
    for name, reason in result.rejected:
        log.warning("rejected %s: %s", name, reason)
    print(f"ingested {len(result.records)} trajectories "
          f"({len(result.rejected)} rejected)")
    if not result.records:
        raise DataError("no usable trajectories in the split")
    noise_filter = None if args.no_filter else NoiseFilter(args.rho_min, args.theta_max)
    chain = chain_mod.estimate(
        [traj for traj, _ in result.records],
        c=args.clusters,
        n=args.state_order,
        noise_filter=noise_filter,
        seed=args.seed,
        scale=(args.scale_rho, args.scale_theta),
    )
    dataset_io.save_chain(chain, args.output)
    print(f"chain: {chain.clusters.n_clusters} clusters, order {chain.order}, "
          f"{chain.n_states} states -> {args.output}")
    return EXIT_OK


_WORKER_STATE: dict = {}


def _worker_init(chain_path, map_cfg_dict, sample_cfg_dict):
    _WORKER_STATE["chain"] = dataset_io.load_chain(chain_path)
    _WORKER_STATE["map_cfg"] = MapGenConfig(**map_cfg_dict)
    sample_cfg_dict = dict(sample_cfg_dict)
    sample_cfg_dict["n_gt_range"] = tuple(sample_cfg_dict["n_gt_range"])
    _WORKER_STATE["sample_cfg"] = SampleConfig(**sample_cfg_dict)


def _worker_generate(seed: int):
    return generate_sample(_WORKER_STATE["chain"], _WORKER_STATE["map_cfg"],
                           _WORKER_STATE["sample_cfg"], seed)


def cmd_gen_dataset(args) -> int:
    chain = dataset_io.load_chain(args.chain)
    map_cfg, sample_cfg = _configs_from_args(args)
    seeds = [derive_seed(args.seed, "sample", i) for i in range(args.count)]
    config = {"map": asdict(map_cfg), "sample": asdict(sample_cfg),
              "base_seed": args.seed}

    if args.workers > 1:
        import multiprocessing as mp

        with mp.Pool(args.workers, initializer=_worker_init,
                     initargs=(args.chain, asdict(map_cfg), asdict(sample_cfg))) as pool:
            samples = pool.map(_worker_generate, seeds)
    else:
        samples = (generate_sample(chain, map_cfg, sample_cfg, s) for s in seeds)

    manifest = dataset_io.write_dataset(samples, args.output, config)
    print(f"wrote {manifest['count']} samples -> {args.output}")
    return EXIT_OK


def cmd_render(args) -> int:
    from PIL import Image

    from trajgen.render import render_sample

    samples, _ = dataset_io.read_dataset(args.dataset)
    if not 0 <= args.index < len(samples):
        raise DataError(f"index {args.index} out of range (0..{len(samples) - 1})")
    predictions = None
    if args.predictions:
        all_preds = dataset_io.read_predictions(args.predictions)
        predictions = all_preds.get(dataset_io.sample_id(args.index))
    image = render_sample(samples[args.index], predictions)
    Image.fromarray(image).save(args.output)
    print(f"rendered sample {args.index} -> {args.output}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from trajgen.server import SampleServer

    chain = dataset_io.load_chain(args.chain)
    map_cfg, sample_cfg = _configs_from_args(args)
    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        raise DataError(f"--bind must be host:port, got {args.bind!r}")
    server = SampleServer((host, int(port)), chain, map_cfg, sample_cfg,
                          real_dataset=args.real_dataset)
    print(f"serving on {host}:{port} (config hash {server.config_hash:#018x}); "
          f"Ctrl-C to stop")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_eval(args) -> int:
    samples, _ = dataset_io.read_dataset(args.dataset)
    gts = {dataset_io.sample_id(i): s.futures for i, s in enumerate(samples)}

    if args.predictions:
        preds = dataset_io.read_predictions(args.predictions)
    else:
        predictor = Predictor(kind=args.baseline, sigma_a=args.kalman_sigma_a,
                              sigma_z=args.kalman_sigma_z)
        horizon = len(samples[0].futures[0]) if samples else 40
        preds = {dataset_io.sample_id(i): [predict(predictor, s.past, horizon)]
                 for i, s in enumerate(samples)}

    modes = ["top1", "best_of_k"] if args.mode == "both" else [args.mode]
    note = ("best_of_k takes the per-metric, per-horizon minimum over K "
            "predictions against the first ground-truth future")
    reports = {}
    for mode in modes:
        report = evaluate(preds, gts, mode=mode, notes=note)
        reports[mode] = report.to_dict()
        print(report.to_text())
        print()
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(reports if len(reports) > 1 else next(iter(reports.values())),
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"report -> {args.output}")
    return EXIT_OK


def cmd_export_match_vectors(args) -> int:
    data = matching.write_match_vectors(args.output, args.seed, args.cases)
    print(f"wrote {len(data['cases'])} match vectors -> {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajgen",
        description="Synthetic trajectory + semantic map generation, "
                    "streaming, and ADE/FDE evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate-chain",
                       help="estimate a motion chain from a real split")
    p.add_argument("split_dir")
    p.add_argument("-o", "--output", required=True, help="output chain file")
    p.add_argument("--clusters", type=int, default=40,
                   help="K-means cluster count (e.g. 20/40/60/80)")
    p.add_argument("--state-order", type=int, default=2,
                   help="timesteps per chain state (1 or 2)")
    p.add_argument("--rho-min", type=float, default=0.005)
    p.add_argument("--theta-max", type=float, default=0.5,
                   help="radians; pass 0.00873 for the degree reading of 0.5")
    p.add_argument("--no-filter", action="store_true")
    p.add_argument("--scale-rho", type=float, default=1.0)
    p.add_argument("--scale-theta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_estimate_chain)

    p = sub.add_parser("gen-dataset", help="generate a sample archive")
    p.add_argument("--chain", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--workers", type=int, default=1)
    _add_generation_flags(p)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("render", help="render a sample to a false-color image")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--predictions", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="stream generated samples over TCP")
    p.add_argument("--chain", required=True)
    p.add_argument("--bind", default="127.0.0.1:7447")
    p.add_argument("--real-dataset", default=None,
                   help="dataset archive to mix into batches")
    _add_generation_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", help="score predictions against a dataset")
    p.add_argument("--dataset", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--predictions", help="prediction file (JSON lines)")
    group.add_argument("--baseline", choices=PREDICTOR_KINDS)
    p.add_argument("--mode", choices=["top1", "best_of_k", "both"],
                   default="both")
    p.add_argument("--kalman-sigma-a", type=float, default=1.0)
    p.add_argument("--kalman-sigma-z", type=float, default=0.1)
    p.add_argument("-o", "--output", default=None, help="JSON report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-match-vectors",
                       help="emit matching/loss test vectors")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=64)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_export_match_vectors)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BrokenPipeError:
        return EXIT_OK
    except Exception:  # anything else is an internal failure
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
