"""
Command line interface.

    terrainmaker simulate   --config run.toml --out out/
    terrainmaker map        --config run.toml --out out/
    terrainmaker fuse       --config run.toml --out out/
    terrainmaker traverse   --config run.toml --out out/ [--figures]
    terrainmaker localize   --config run.toml --out out/ [--figures]
    terrainmaker eval-rpe   --config run.toml --out out/ [--estimate est.tum --ground-truth gt.tum]
    terrainmaker eval-recon --config run.toml --out out/
    terrainmaker eval-trav  --config run.toml --out out/ [--figures]

Exit codes: 0 success, 2 configuration error, 3 data error (including unreadable
files), 4 numerical failure.

"""
import argparse
import logging
import os
import sys

from terrainmaker.config import load_config
from terrainmaker.exceptions import DataError, TerrainMakerError
from terrainmaker.terrainmaker import TerrainMaker
from terrainmaker.version import terrainmaker_version

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s: %(message)s"


def _figures_dir(tm):
    import matplotlib
    matplotlib.use("Agg")
    path = os.path.join(tm.out, "figures")
    os.makedirs(path, exist_ok=True)
    return path


def cmd_simulate(tm, args):
    tm.simulate()


def cmd_map(tm, args):
    tm.build_map()


def cmd_fuse(tm, args):
    tm.fuse()


def cmd_traverse(tm, args):
    maps = tm.traverse()
    reports = tm.evaluate_traversability(maps)
    if args.figures:
        from terrainmaker.tools.plotting import plot_fscore_sweep, plot_grid_map
        folder = _figures_dir(tm)
        for m in maps:
            stem = f"room_{m.instance_id:02d}_{m.class_name}"
            plot_grid_map(m, "elevation", savefigname=os.path.join(folder, f"{stem}_elevation.png"))
            plot_grid_map(m, "traversability", vmin=0.0, vmax=1.0,
                          savefigname=os.path.join(folder, f"{stem}_traversability.png"))
        plot_fscore_sweep(reports, savefigname=os.path.join(folder, "traversability_fscore.png"))


def cmd_localize(tm, args):
    run = tm.localize()
    if args.figures:
        from terrainmaker.tools.plotting import plot_trajectories
        plot_trajectories([run.gt, run.odometry, run.localized], ["ground truth", "odometry", "localized"],
                          savefigname=os.path.join(_figures_dir(tm), "localization.png"))


def cmd_eval_rpe(tm, args):
    tm.evaluate_rpe(args.estimate, args.ground_truth)


def cmd_eval_recon(tm, args):
    tm.evaluate_reconstruction()


def cmd_eval_trav(tm, args):
    reports = tm.evaluate_traversability()
    if args.figures:
        from terrainmaker.tools.plotting import plot_fscore_sweep
        plot_fscore_sweep(reports, savefigname=os.path.join(_figures_dir(tm), "traversability_fscore.png"))


COMMANDS = {
    "simulate": (cmd_simulate, "generate the synthetic walk, clouds, keyframes and labels"),
    "map": (cmd_map, "build the labeled pose graph with submaps"),
    "fuse": (cmd_fuse, "median-fuse submaps into one terrain map per room"),
    "traverse": (cmd_traverse, "score traversability of the room maps"),
    "localize": (cmd_localize, "relocalize a revisit walk against the map"),
    "eval-rpe": (cmd_eval_rpe, "relative pose error of a trajectory"),
    "eval-recon": (cmd_eval_recon, "point-to-point error of the room maps"),
    "eval-trav": (cmd_eval_trav, "precision/recall/F sweep of traversability"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="TOML configuration file (defaults when omitted)")
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--no-progress", action="store_true", help="hide progress bars")

    parser = argparse.ArgumentParser(prog="terrainmaker", description="Terrain mapping on a synthetic walk.")
    parser.add_argument("--version", action="version", version=f"terrainmaker {terrainmaker_version}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        if name in ("traverse", "localize", "eval-trav"):
            p.add_argument("--figures", action="store_true", help="also write PNG figures")
        if name == "eval-rpe":
            p.add_argument("--estimate", default=None, help="estimated trajectory (TUM), default out/odom.tum")
            p.add_argument("--ground-truth", default=None, help="ground truth (TUM), default out/gt.tum")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT, stream=sys.stderr)
    try:
        config = load_config(args.config, args.seed, args.out)
        tm = TerrainMaker(config, show_progress=not args.no_progress)
        args.func(tm, args)
    except TerrainMakerError as err:
        print(f"terrainmaker {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return err.exit_code
    except OSError as err:
        print(f"terrainmaker {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
