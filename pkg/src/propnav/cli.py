"""Command-line entry point: ``propnav run | train-safety | render | oracle``.

Every verb accepts ``--config FILE``, a plain ``key = value`` text file whose
keys are the long flag names (dashes or underscores). Flags given on the
command line win over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench, oracles, sim, training, world
from .world import write_pgm


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _csv_list(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="propnav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run a seeded benchmark suite and export results")
    run.add_argument("--suite", choices=world.SUITES, default="Flat")
    run.add_argument("--pipeline", "--config-tag", dest="pipeline", choices=sim.CONFIG_TAGS,
                     default="vpnav")
    run.add_argument("--layouts", type=int, default=20, help="number of map layouts")
    run.add_argument("--goals", type=int, default=5, help="goals per layout")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default="results")
    run.add_argument("--models", default=None,
                     help="directory with collision.csv and fall.csv (default: train and cache)")
    run.add_argument("--formats", type=_csv_list, default=("json", "csv"),
                     help="comma list from json,csv,ticks,pgm")
    run.add_argument("--workers", type=int, default=1)

    tr = sub.add_parser("train-safety", help="train the collision and fall classifiers")
    tr.add_argument("--rollouts", type=int, default=training.DEFAULT_ROLLOUTS)
    tr.add_argument("--eval-rollouts", type=int, default=None)
    tr.add_argument("--stride", type=int, default=training.DEFAULT_STRIDE)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", default="models")

    rd = sub.add_parser("render", help="render an exported episode as a PGM image")
    rd.add_argument("episode", help="episode summary JSON (tick CSV is found next to it)")
    rd.add_argument("--ticks", default=None, help="tick CSV (default: same stem, .csv)")
    rd.add_argument("--layer", choices=("world",), default="world")
    rd.add_argument("--scale", type=int, default=1)
    rd.add_argument("--out", default=None, help="output PGM (default: same stem, .pgm)")

    orc = sub.add_parser("oracle", help="cross-check the FMM and SDF solvers by brute force")
    orc.add_argument("--fmm-grids", type=int, default=200)
    orc.add_argument("--sdf-grids", type=int, default=100)
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--out", default=None, help="also write the JSON report here")

    for sp in (run, tr, rd, orc):
        sp.add_argument("--config", default=None, help="key = value defaults file")
    p.verbs = {"run": run, "train-safety": tr, "render": rd, "oracle": orc}
    return p


def parse_args(argv=None) -> argparse.Namespace:
    """Parse twice: once to find ``--config``, then with the file as defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser.verbs[args.verb]
        known = {a.dest: a for a in sub._actions}
        values = read_config(args.config)
        unknown = sorted(set(values) - set(known))
        if unknown:
            parser.error(f"unknown keys in {args.config}: {', '.join(unknown)}")
        defaults = {}
        for k, v in values.items():
            act = known[k]
            val = act.type(v) if act.type else v
            if act.choices and val not in act.choices:
                parser.error(f"{args.config}: {k} must be one of {list(act.choices)}")
            defaults[k] = val
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def cmd_run(args) -> int:
    bad = set(args.formats) - {"json", "csv", "ticks", "pgm"}
    if bad:
        raise SystemExit(f"unknown formats: {sorted(bad)}")
    mc = mf = None
    if args.pipeline in sim.PROPRIO_TAGS:
        if args.models:
            mc, mf = training.load_models(args.models)
        else:
            mc, mf = training.cached_models(seed=0)
    need_ticks = "ticks" in args.formats or "pgm" in args.formats
    res = bench.run_suite(args.suite, args.pipeline, args.layouts, args.goals, args.seed,
                          mc, mf, workers=args.workers, record_ticks=need_ticks,
                          keep_belief="pgm" in args.formats)
    bench.export(res, args.out, args.formats)
    print(f"{res.suite_tag} {res.config_tag}: success {res.success_rate:.1f}%  "
          f"SPL {res.spl:.3f}  time {res.mean_time:.1f}s  ({res.n_episodes} episodes)")
    return 0


def cmd_train(args) -> int:
    models = training.train_safety(args.rollouts, args.seed, args.stride, args.eval_rollouts)
    training.save_models(models, args.out)
    (Path(args.out) / "report.json").write_text(
        json.dumps(models.report, sort_keys=True, indent=1) + "\n")
    r = models.report
    print(f"collision AUC {r['collision_auc']:.3f}  fall AUC {r['fall_auc']:.3f}  "
          f"fall recall {r['fall_recall']:.3f}  ({r['n_train']} training windows)")
    return 0


def cmd_render(args) -> int:
    ep = Path(args.episode)
    ticks = Path(args.ticks) if args.ticks else ep.with_suffix(".csv")
    rec = sim.EpisodeRecord.from_files(ep.read_text(), ticks.read_text())
    img = bench.render_episode(rec, args.layer, args.scale)
    out = Path(args.out) if args.out else ep.with_suffix(".pgm")
    out.write_bytes(write_pgm(img))
    print(f"wrote {out} ({img.shape[1]}x{img.shape[0]})")
    return 0


def cmd_oracle(args) -> int:
    rep = oracles.cross_check(args.fmm_grids, args.sdf_grids, args.seed)
    ok = oracles.cross_check_passed(rep)
    rep["passed"] = ok
    text = json.dumps(rep, sort_keys=True, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0 if ok else 1


COMMANDS = {"run": cmd_run, "train-safety": cmd_train, "render": cmd_render, "oracle": cmd_oracle}


def main(argv=None) -> int:
    args = parse_args(argv)
    return COMMANDS[args.verb](args)


if __name__ == "__main__":
    raise SystemExit(main())
