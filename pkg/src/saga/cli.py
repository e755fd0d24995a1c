"""Command line wiring every capability: world generation, depth rendering,
single-step planning, episode flight, benchmarking, training, gradient
checks, weight manifests, and the positional-encoding ablation.

Exit codes are a stable scripting contract: 0 success, 2 usage or validation
error, 3 numerical or runtime fault. Every file-writing command drops a
sidecar <output>.meta with the resolved settings and sha256 input hashes;
stdout-only commands print the same block as '#' comment lines.
"""

import argparse
import hashlib
import os
import sys

import numpy as np

from . import autodiff as ad
from . import config as cf
from . import geometry as geo
from . import harness as hn
from . import layers as ly
from . import network as nw
from . import training as tr
from . import trajectory as tj
from . import world as ws

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAULT = 3


class UsageError(ValueError):
    pass


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def metadata_lines(cfg, args_map, inputs):
    lines = cfg.echo_lines()
    for name in sorted(args_map):
        lines.append(f"arg.{name}={args_map[name]}")
    for name in sorted(inputs):
        lines.append(f"input.{name}.sha256={_sha256(inputs[name])}")
    return lines


def write_metadata(primary_path, cfg, args_map, inputs):
    with open(primary_path + ".meta", "w") as f:
        f.write("\n".join(metadata_lines(cfg, args_map, inputs)) + "\n")


def _resolve(args, flag_map):
    overrides = {k: v for k, v in flag_map.items() if v is not None}
    return cf.RunConfig.resolve(getattr(args, "config", None), overrides)


def parse_int_list(text):
    """'0-9' ranges and comma lists, mixed: '0-3,7' -> [0,1,2,3,7]."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (
                part[:part.index("-", 1)], part[part.index("-", 1) + 1:])
            out.append(range(int(lo), int(hi) + 1))
        else:
            out.append([int(part)])
    flat = [i for block in out for i in block]
    if not flat:
        raise UsageError(f"empty integer list: {text!r}")
    return flat


def parse_float_list(text):
    try:
        vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"bad float list: {text!r}")
    if not vals:
        raise UsageError(f"empty float list: {text!r}")
    return vals


def _require_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"missing {what} file: {path}")


def _start_pose(world):
    yaw = hn.heading_yaw(np.zeros(3), world.start, world.goal)
    return tj.Pose(world.start.copy(), yaw)


def _lattice(cfg):
    return geo.build_lattice(r_min=cfg["r_min"], r_max=cfg["r_max"],
                             v_term_max=cfg["v_max"])


def _train_config(cfg):
    return tr.TrainConfig(
        batch_size=cfg["batch_size"], epochs=cfg["epochs"], lr=cfg["lr"],
        beta1=cfg["beta1"], beta2=cfg["beta2"], eps=cfg["adam_eps"],
        seed=cfg["seed"], ppe_enabled=cfg["ppe_enabled"], v_max=cfg["v_max"],
        planning_margin=cfg["planning_margin"],
        collect_density=cfg["collect_density"],
        cost_weights=cfg.cost_weights())


# ---------------------------------------------------------------- commands

def cmd_gen_world(args):
    cfg = _resolve(args, {"seed": args.seed, "density": args.density})
    if cfg["density"] < 0:
        raise UsageError("density must be >= 0")
    try:
        world = ws.generate_world(cfg["seed"], cfg["density"])
    except RuntimeError as e:
        raise UsageError(str(e))
    ws.save_world(world, args.out)
    write_metadata(args.out, cfg, {"out": args.out}, {})
    print(f"world seed={cfg['seed']} density={cfg['density']:g} "
          f"pillars={len(world.pillars)} -> {args.out}")
    return EXIT_OK


def cmd_render(args):
    cfg = _resolve(args, {})
    _require_file(args.world, "world")
    world = ws.load_world(args.world)
    depth = ws.render_depth(world, _start_pose(world))
    ws.save_depth(depth, args.out)
    write_metadata(args.out, cfg, {"out": args.out, "world": args.world},
                   {"world": args.world})
    print(f"depth {depth.shape[0]}x{depth.shape[1]} "
          f"min={depth.min():.9g} max={depth.max():.9g} -> {args.out}")
    return EXIT_OK


PLAN_HEADER = ("anchor,yaw_deg,pitch_deg,px,py,pz,vx,vy,vz,ax,ay,az,score")


def cmd_plan(args):
    cfg = _resolve(args, {})
    _require_file(args.world, "world")
    _require_file(args.weights, "weights")
    world = ws.load_world(args.world)
    store = ly.load_weights(args.weights)
    lattice = _lattice(cfg)
    net = nw.PlannerNet(nw.PlannerConfig(ppe_enabled=cfg["ppe_enabled"]),
                        store, lattice)

    pose = _start_pose(world)
    depth = ws.render_depth(world, pose)
    rot_t = pose.rotation().T
    g_b = rot_t @ (world.goal - world.start)
    state = np.concatenate([np.zeros(3), np.zeros(3), g_b])
    out = net.forward(depth, state)

    lines = [PLAN_HEADER]
    for i in range(geo.N_ANCHORS):
        term = geo.decode_terminal(lattice, i, out.u_norm[i])
        yaw_deg, pitch_deg = np.rad2deg(lattice.anchor_angles(i))
        vals = np.concatenate([[yaw_deg, pitch_deg], term.p_b, term.v_b,
                               term.a_b, [out.scores[i]]])
        lines.append(f"{i}," + ",".join(f"{v:.9g}" for v in vals))
    text = "\n".join(lines) + "\n"

    meta = metadata_lines(cfg, {"world": args.world, "weights": args.weights},
                          {"world": args.world, "weights": args.weights})
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
        write_metadata(args.out, cfg,
                       {"world": args.world, "weights": args.weights,
                        "out": args.out},
                       {"world": args.world, "weights": args.weights})
        print(f"plan -> {args.out}")
    else:
        for line in meta:
            print(f"# {line}")
        sys.stdout.write(text)
    return EXIT_OK


def cmd_fly(args):
    cfg = _resolve(args, {"v_max": args.vmax})
    _require_file(args.world, "world")
    if args.mode == "learned" and not args.weights:
        raise UsageError("learned mode requires --weights")
    inputs = {"world": args.world}
    planner = None
    if args.weights:
        _require_file(args.weights, "weights")
        inputs["weights"] = args.weights
    world = ws.load_world(args.world)
    econfig = hn.EpisodeConfig(**cfg.episode_kwargs(args.mode))
    if args.mode == "learned":
        store = ly.load_weights(args.weights)
        planner = nw.PlannerNet(
            nw.PlannerConfig(ppe_enabled=cfg["ppe_enabled"]), store,
            econfig.lattice())
    result = hn.run_episode(world, econfig, planner)

    csv_path = args.out_prefix + ".csv"
    with open(csv_path, "w") as f:
        f.write(hn.episode_csv(result))
    write_metadata(args.out_prefix, cfg,
                   {"world": args.world, "mode": args.mode,
                    "out_prefix": args.out_prefix}, inputs)
    print(f"success={'true' if result.success else 'false'} "
          f"failure_cause={result.failure_cause} "
          f"time_s={result.time_consumption:.9g} "
          f"length_m={result.traj_length:.9g} "
          f"avg_safety_m={result.avg_safety:.9g} "
          f"min_safety_m={result.min_safety:.9g} "
          f"smoothness={result.smoothness:.9g}")
    return EXIT_OK


def cmd_bench(args):
    cfg = _resolve(args, {"density": args.density})
    seeds = parse_int_list(args.seeds)
    speeds = parse_float_list(args.speeds)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for mode in modes:
        if mode not in ("learned", "oracle", "random"):
            raise UsageError(f"unknown mode {mode!r}")
    net_config = None
    if "learned" in modes:
        if not args.weights:
            raise UsageError("learned mode requires --weights")
        _require_file(args.weights, "weights")
        net_config = nw.PlannerConfig(ppe_enabled=cfg["ppe_enabled"])
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")

    kwargs = cfg.episode_kwargs(mode="oracle")
    kwargs.pop("v_max")
    kwargs.pop("selection_mode")
    rows = hn.run_benchmark(seeds, speeds, [cfg["density"]], modes,
                            config_kwargs=kwargs, weights_path=args.weights,
                            net_config=net_config, jobs=args.jobs)
    with open(args.out, "w") as f:
        f.write(hn.report_csv(rows))
    inputs = {"weights": args.weights} if args.weights else {}
    write_metadata(args.out, cfg,
                   {"seeds": args.seeds, "speeds": args.speeds,
                    "modes": args.modes, "jobs": args.jobs, "out": args.out},
                   inputs)
    n_agg = len(hn.aggregate_rows(rows))
    print(f"bench rows={len(rows)} aggregates={n_agg} -> {args.out}")
    return EXIT_OK


def cmd_train(args):
    cfg = _resolve(args, {"epochs": args.epochs,
                          "frames_per_world": args.frames})
    tcfg = _train_config(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    inputs = {}

    if args.dataset:
        _require_file(args.dataset, "dataset")
        samples = tr.load_dataset(args.dataset)
        base_dir = os.path.dirname(os.path.abspath(args.dataset))
        inputs["dataset"] = args.dataset
        print(f"dataset n={len(samples)} (loaded)")
    else:
        seeds = parse_int_list(args.collect_seeds)
        samples, skipped = tr.collect_dataset(
            seeds, cfg["frames_per_world"], tcfg, args.out_dir)
        base_dir = args.out_dir
        tr.save_dataset(samples, os.path.join(args.out_dir, "train.sgds"))
        print(f"dataset n={len(samples)} skipped_episodes={skipped}")
    if not samples:
        raise UsageError("empty training dataset")

    worlds = tr.load_worlds(samples, base_dir)
    store, curve = tr.train(samples, worlds, tcfg, out_dir=args.out_dir)
    weights_path = os.path.join(args.out_dir, "weights.sagw")
    ly.save_weights(store, weights_path)
    with open(os.path.join(args.out_dir, "loss.csv"), "w") as f:
        f.write(tr.curve_csv(curve))
    drop = 1.0 - curve[-1][3] / curve[0][3] if curve[0][3] else 0.0
    print(f"trained epochs={len(curve)} l_total_first={curve[0][3]:.9g} "
          f"l_total_last={curve[-1][3]:.9g} drop={100 * drop:.1f}%")

    if args.heldout_seeds:
        seeds = parse_int_list(args.heldout_seeds)
        held, skipped = tr.collect_dataset(
            seeds, args.heldout_frames, tcfg, args.out_dir)
        held_worlds = tr.load_worlds(held, args.out_dir)
        planner = nw.PlannerNet(tcfg.net_config(), store, tcfg.lattice())
        st = tr.evaluate_regret(planner, held, held_worlds, tcfg.cost_weights,
                                tcfg.planning_margin, tcfg.v_max)
        print(f"regret={st.mean_regret:.9g} random={st.random_regret:.9g} "
              f"ratio={st.mean_regret / st.random_regret:.9g} "
              f"agreement={st.agreement:.9g} frames={st.frames}")

    write_metadata(os.path.join(args.out_dir, "train"), cfg,
                   {"out_dir": args.out_dir}, inputs)
    return EXIT_OK


def cmd_gradcheck(args):
    from . import pipeline as pl
    err = pl.end_to_end_grad_check(tiny=True, seed=args.seed or 0)
    print(f"max_rel_err={err:.3e}")
    if not args.tiny:
        prim = pl.primitive_grad_checks(seed=args.seed or 0)
        for name, e in prim:
            print(f"  {name}: {e:.3e}")
        err = max(err, max(e for _, e in prim))
        print(f"max_rel_err_overall={err:.3e}")
    return EXIT_OK if err < 1e-4 else EXIT_FAULT


def cmd_manifest(args):
    _require_file(args.weights, "weights")
    store = ly.load_weights(args.weights)
    print(f"# input.weights.sha256={_sha256(args.weights)}")
    for line in nw.manifest_lines(store):
        print(line)
    return EXIT_OK


def cmd_ablate(args):
    cfg = _resolve(args, {"frames_per_world": args.frames})
    tcfg = _train_config(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    train_seeds = parse_int_list(args.train_seeds)
    held_seeds = parse_int_list(args.heldout_seeds)
    bench_seeds = parse_int_list(args.bench_seeds)

    samples, sk1 = tr.collect_dataset(train_seeds, cfg["frames_per_world"],
                                      tcfg, args.out_dir)
    held, sk2 = tr.collect_dataset(held_seeds, args.heldout_frames, tcfg,
                                   args.out_dir)
    if not samples or not held:
        raise UsageError("ablation needs nonempty train and held-out sets")
    print(f"train n={len(samples)} skipped={sk1}; "
          f"heldout n={len(held)} skipped={sk2}")
    worlds = tr.load_worlds(samples + held, args.out_dir)
    rows, text = tr.ablate_ppe(samples, held, worlds, tcfg, args.out_dir,
                               bench_seeds=bench_seeds,
                               bench_density=cfg["density"])
    out_csv = os.path.join(args.out_dir, "ablation.csv")
    with open(out_csv, "w") as f:
        f.write(text)
    write_metadata(out_csv, cfg, {"out_dir": args.out_dir}, {})
    sys.stdout.write(text)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="saga", description="anchor-lattice local planner toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value settings file")
        p.set_defaults(func=func)
        return p

    p = add("gen-world", cmd_gen_world, "sample a pillar world")
    p.add_argument("--seed", type=int)
    p.add_argument("--density", type=float)
    p.add_argument("--out", required=True)

    p = add("render", cmd_render, "render a depth image at the start pose")
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True)

    p = add("plan", cmd_plan, "one forward pass: 15 terminal states + scores")
    p.add_argument("--world", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out")

    p = add("fly", cmd_fly, "fly one receding-horizon episode")
    p.add_argument("--world", required=True)
    p.add_argument("--weights")
    p.add_argument("--vmax", type=float)
    p.add_argument("--mode", default="oracle",
                   choices=("learned", "oracle", "random"))
    p.add_argument("--out-prefix", required=True)

    p = add("bench", cmd_bench, "episode grid -> report CSV with aggregates")
    p.add_argument("--seeds", required=True, help="e.g. 0-4 or 0,2,5")
    p.add_argument("--speeds", default="2,3,4")
    p.add_argument("--density", type=float)
    p.add_argument("--modes", default="oracle")
    p.add_argument("--weights")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "collect (or load) a dataset and train")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dataset", help="existing dataset file; skips collection")
    p.add_argument("--collect-seeds", default="100-159")
    p.add_argument("--heldout-seeds", default="",
                   help="world seeds for regret evaluation after training")
    p.add_argument("--heldout-frames", type=int, default=30)
    p.add_argument("--epochs", type=int)
    p.add_argument("--frames", type=int, help="frames kept per world")

    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient audit")
    p.add_argument("--tiny", action="store_true",
                   help="end-to-end shrunken-network check only")
    p.add_argument("--seed", type=int)

    p = add("manifest", cmd_manifest, "list weight tensors and shapes")
    p.add_argument("--weights", required=True)

    p = add("ablate", cmd_ablate, "paired direction-encoding ablation")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train-seeds", default="100-119")
    p.add_argument("--heldout-seeds", default="200-204")
    p.add_argument("--heldout-frames", type=int, default=30)
    p.add_argument("--bench-seeds", default="0-2")
    p.add_argument("--frames", type=int, help="frames kept per world")

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (cf.ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: missing file: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ad.NumericsError as e:
        print(f"numerical fault: {e}", file=sys.stderr)
        return EXIT_FAULT
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"fault: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
