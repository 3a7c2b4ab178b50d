"""Command-line pipeline: generate, train-teacher, calibrate, evaluate, dump-embeddings.

Every command writes ``manifest.json`` next to its outputs. ``graphnc replay
MANIFEST`` re-executes the recorded command line, optionally into another
directory, which is how runs are reproduced.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from graphnc import __version__, checkpoint
from graphnc.calibration import (
    TrainConfig,
    embed,
    infer,
    load_student,
    save_student,
    train_student,
    write_loss_trace,
)
from graphnc.errors import DatasetError
from graphnc.graph import load_graph, normalize_adjacency, save_graph, split_labeled_normals
from graphnc.metrics import EvalReport, evaluate
from graphnc.synthetic import SyntheticConfig, generate_synthetic
from graphnc.teachers import TEACHERS, TeacherConfig, load_teacher_scores, train_teacher, write_scores

logger = logging.getLogger("graphnc")

MANIFEST = "manifest.json"
LABELED_FILE = "labeled_normals.tsv"
DELTA_KEYS = ("auroc", "auprc", "normal_score_variance", "fpr", "fnr")


class CLIError(Exception):
    pass


class Run:
    """Collects inputs, outputs and phase timings for the manifest."""

    def __init__(self, command, argv, out_dir):
        self.command = command
        self.argv = list(argv)
        self.out_dir = Path(out_dir)
        self.config = {}
        self.inputs = {}
        self.outputs = []
        self.seeds = []
        self.durations = {}

    @contextlib.contextmanager
    def phase(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.durations[name] = self.durations.get(name, 0.0) + time.perf_counter() - start

    def path(self, name) -> Path:
        p = self.out_dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(str(Path(name)))
        return p

    def write_manifest(self):
        manifest = {
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": sorted(set(self.outputs)),
            "seeds": self.seeds,
            "version": __version__,
            "durations_sec": {k: round(v, 6) for k, v in self.durations.items()},
        }
        (self.out_dir / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _prepare_out(path, force):
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise CLIError(f"output path {out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()) and not force:
        raise CLIError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_seeds(args):
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise CLIError(f"--seeds must be comma-separated integers, got {args.seeds!r}") from None
        if not seeds:
            raise CLIError("--seeds is empty")
        if len(set(seeds)) != len(seeds):
            raise CLIError("--seeds contains duplicates")
        return seeds
    return [args.seed]


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def read_labeled(path, n):
    mask = np.zeros(n, dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            token = line.strip()
            if not token:
                continue
            try:
                node = int(token)
            except ValueError:
                raise DatasetError(f"node id {token!r} is not an integer", path, lineno) from None
            if not 0 <= node < n:
                raise DatasetError(f"node id {node} out of range [0, {n})", path, lineno)
            mask[node] = True
    return mask


def write_labeled(path, mask):
    path.write_text("".join(f"{i}\n" for i in np.flatnonzero(mask)), encoding="utf-8")


def _with_split(g, args, seed):
    """Labeled normals from ``--labeled`` if given, else a seeded split of the normal nodes."""
    if args.labeled:
        mask = read_labeled(args.labeled, g.num_nodes)
        return g.with_labeled_normal(mask)
    if g.labels is None:
        return g
    return split_labeled_normals(g, args.label_ratio, seed)


def _teacher_config(args, seed):
    return TeacherConfig(
        hidden_dim=args.teacher_hidden_dim,
        epochs=args.teacher_epochs,
        learning_rate=args.teacher_lr,
        structure_weight=args.structure_weight,
        seed=seed,
    )


def _emit(args, payload):
    if args.json:
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")


# ---------------------------------------------------------------- commands


def cmd_generate(args, run):
    if not 0.0 <= args.anomaly_rate < 0.5:
        raise CLIError(f"--anomaly-rate must be in [0, 0.5), got {args.anomaly_rate}")
    cfg = SyntheticConfig(
        num_nodes=args.nodes,
        attr_dim=args.attr_dim,
        num_clusters=args.clusters,
        contextual_anomaly_rate=args.anomaly_rate / 2,
        structural_anomaly_rate=args.anomaly_rate / 2,
        clique_size=args.clique_size,
        feature_noise_scale=args.noise,
        avg_degree=args.avg_degree,
    )
    run.config = {"synthetic": vars(cfg), "seed": args.seed}
    run.seeds = [args.seed]
    with run.phase("generate"):
        g = generate_synthetic(cfg, args.seed)
    with run.phase("write"):
        save_graph(g, run.out_dir)
    run.outputs += ["edges.tsv", "features.tsv", "labels.tsv", "meta.json"]
    summary = {"num_nodes": g.num_nodes, "num_edges": g.num_edges, "num_anomalies": int(g.labels.sum())}
    _emit(args, summary)


def cmd_train_teacher(args, run):
    run.inputs = {"data": str(args.data), "labeled": args.labeled}
    with run.phase("load"):
        g = _with_split(load_graph(args.data), args, args.seed)
    cfg = _teacher_config(args, args.seed)
    run.config = {"teacher": args.teacher, "teacher_config": vars(cfg), "label_ratio": args.label_ratio}
    run.seeds = [args.seed]
    with run.phase("train"):
        t = train_teacher(args.teacher, g, cfg)
    with run.phase("write"):
        write_scores(run.path("scores.tsv"), t.scores)
        write_labeled(run.path(LABELED_FILE), g.labeled_normal)
        meta = {"kind": "teacher", "teacher": args.teacher, "raw_min": repr(t.raw_min), "raw_max": repr(t.raw_max)}
        meta.update({k: repr(v) if isinstance(v, float) else v for k, v in vars(cfg).items()})
        checkpoint.save_checkpoint(run.path("teacher.ckpt"), t.params, meta)
        report = None
        if g.labels is not None:
            report = evaluate(t.scores, g, seed=args.seed)
            run.path("report.json").write_text(report.to_json(), encoding="utf-8")
    _emit(args, report.to_dict() if report else {"scores": str(run.out_dir / "scores.tsv")})


def _train_config(args, seed):
    return TrainConfig(
        alpha=args.alpha,
        omega=args.omega,
        learning_rate=args.lr,
        epochs=args.epochs,
        hidden_dim=args.hidden_dim,
        seed=seed,
        resample_mask_each_epoch=args.resample_mask,
    )


def _compare(teacher: EvalReport, student: EvalReport):
    t, s = teacher.to_dict(), student.to_dict()
    return {
        "teacher": t,
        "student": s,
        "delta": {k: s[k] - t[k] for k in DELTA_KEYS},
    }


def _aggregate(rows):
    keys = rows[0].keys()
    out = {}
    for k in keys:
        vals = np.array([r[k] for r in rows], dtype=np.float64)
        out[k] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


def cmd_calibrate(args, run):
    if bool(args.teacher_scores) == bool(args.teacher):
        raise CLIError("give exactly one of --teacher-scores FILE or --teacher {%s}" % "|".join(TEACHERS))
    seeds = _parse_seeds(args)
    run.seeds = seeds
    run.inputs = {"data": str(args.data), "teacher_scores": args.teacher_scores, "labeled": args.labeled}
    with run.phase("load"):
        base = load_graph(args.data)
        fixed_teacher = load_teacher_scores(args.teacher_scores, base.num_nodes) if args.teacher_scores else None
    run.config = {
        "train": {k: v for k, v in vars(_train_config(args, seeds[0]).resolved(base.attr_dim)).items() if k != "seed"},
        "teacher": args.teacher or "file",
        "teacher_config": vars(_teacher_config(args, seeds[0])) if args.teacher else None,
        "label_ratio": args.label_ratio,
    }

    comparisons = []
    for seed in seeds:
        prefix = f"seed_{seed}/" if len(seeds) > 1 else ""
        g = _with_split(base, args, seed)
        a_hat = normalize_adjacency(g)
        if fixed_teacher is None:
            with run.phase("teacher"):
                teacher = train_teacher(args.teacher, g, _teacher_config(args, seed))
            write_scores(run.path(prefix + "teacher_scores.tsv"), teacher.scores)
        else:
            teacher = fixed_teacher
        cfg = _train_config(args, seed)
        with run.phase("calibrate"):
            student = train_student(g, a_hat, teacher, cfg)
        with run.phase("write"):
            scores = infer(student, g, a_hat)
            save_student(run.path(prefix + "student.ckpt"), student)
            write_scores(run.path(prefix + "scores.tsv"), scores)
            write_loss_trace(run.path(prefix + "loss_trace.csv"), student)
            write_labeled(run.path(prefix + LABELED_FILE), g.labeled_normal)
            if g.labels is not None:
                h = embed(student, g, a_hat)
                s_rep = evaluate(scores, g, embeddings=h, seed=seed)
                t_rep = evaluate(teacher.scores, g, seed=seed)
                run.path(prefix + "report.json").write_text(s_rep.to_json(), encoding="utf-8")
                comparison = _compare(t_rep, s_rep)
                _write_json(run.path(prefix + "comparison.json"), comparison)
                comparisons.append(comparison)
        logger.info("seed %d done", seed)

    if len(seeds) > 1 and comparisons:
        agg = {"seeds": seeds}
        for part in ("teacher", "student", "delta"):
            rows = [{k: v for k, v in c[part].items() if isinstance(v, float)} for c in comparisons]
            agg[part] = _aggregate(rows)
        _write_json(run.path("aggregate.json"), agg)
        _emit(args, agg)
    elif comparisons:
        _emit(args, comparisons[0])


def _load_raw_scores(path, n):
    t = load_teacher_scores(path, n)
    return np.asarray(t.raw)


def cmd_evaluate(args, run):
    run.inputs = {"data": str(args.data), "scores": str(args.scores), "labeled": args.labeled}
    run.seeds = [args.seed]
    run.config = {"label_ratio": args.label_ratio}
    with run.phase("load"):
        g = _with_split(load_graph(args.data), args, args.seed)
        scores = _load_raw_scores(args.scores, g.num_nodes)
    if g.labels is None:
        raise CLIError(f"{args.data} has no labels.tsv; evaluation needs ground truth")
    with run.phase("evaluate"):
        report = evaluate(scores, g, seed=args.seed)
    run.path("report.json").write_text(report.to_json(), encoding="utf-8")
    run.path("report.csv").write_text(report.to_csv(), encoding="utf-8")
    _emit(args, report.to_dict())


def cmd_dump_embeddings(args, run):
    run.inputs = {"data": str(args.data), "checkpoint": str(args.checkpoint), "labeled": args.labeled}
    run.seeds = [args.seed]
    run.config = {"label_ratio": args.label_ratio}
    with run.phase("load"):
        g = _with_split(load_graph(args.data), args, args.seed)
        student = load_student(args.checkpoint)
    with run.phase("embed"):
        h = embed(student, g, normalize_adjacency(g))
    d = h.shape[1]
    labels = g.labels.tolist() if g.labels is not None else [""] * g.num_nodes
    with open(run.path("embeddings.csv"), "w", encoding="utf-8") as fh:
        fh.write("node_id,label,is_labeled_normal," + ",".join(f"h_{j}" for j in range(d)) + "\n")
        for i, row in enumerate(h.tolist()):
            fh.write(f"{i},{labels[i]},{int(g.labeled_normal[i])}," + ",".join(repr(v) for v in row) + "\n")
    _emit(args, {"rows": g.num_nodes, "dim": d})


COMMANDS = {
    "generate": cmd_generate,
    "train-teacher": cmd_train_teacher,
    "calibrate": cmd_calibrate,
    "evaluate": cmd_evaluate,
    "dump-embeddings": cmd_dump_embeddings,
}


# ---------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--serial", action="store_true", help="single-threaded BLAS for bitwise reproducibility")
    common.add_argument("--json", action="store_true", help="print the main report to stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", required=True, help="dataset directory")
    data.add_argument("--labeled", help="file of labeled-normal node ids (one per line)")
    data.add_argument("--label-ratio", type=float, default=0.15, help="fraction of normal nodes labeled")

    teacher = argparse.ArgumentParser(add_help=False)
    teacher.add_argument("--teacher-epochs", type=int, default=TeacherConfig.epochs)
    teacher.add_argument("--teacher-lr", type=float, default=TeacherConfig.learning_rate)
    teacher.add_argument("--teacher-hidden-dim", type=int, default=TeacherConfig.hidden_dim)
    teacher.add_argument("--structure-weight", type=float, default=TeacherConfig.structure_weight)

    parser = argparse.ArgumentParser(prog="graphnc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    defaults = SyntheticConfig()
    p.add_argument("--nodes", type=int, default=defaults.num_nodes)
    p.add_argument("--attr-dim", type=int, default=defaults.attr_dim)
    p.add_argument("--clusters", type=int, default=defaults.num_clusters)
    p.add_argument("--anomaly-rate", type=float, default=0.05, help="split evenly between contextual and structural")
    p.add_argument("--clique-size", type=int, default=defaults.clique_size)
    p.add_argument("--noise", type=float, default=defaults.feature_noise_scale)
    p.add_argument("--avg-degree", type=float, default=defaults.avg_degree)

    p = sub.add_parser("train-teacher", parents=[common, data, teacher], help="train a built-in teacher")
    p.add_argument("--teacher", required=True, choices=TEACHERS)

    p = sub.add_parser("calibrate", parents=[common, data, teacher], help="train the student against a teacher")
    p.add_argument("--teacher-scores", help="teacher scores TSV (node_id<TAB>score)")
    p.add_argument("--teacher", choices=TEACHERS, help="train this built-in teacher per seed instead")
    p.add_argument("--alpha", type=float, default=TrainConfig.alpha)
    p.add_argument("--omega", type=float, default=TrainConfig.omega)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--lr", type=float, default=None, help="default depends on attribute dimension")
    p.add_argument("--hidden-dim", type=int, default=TrainConfig.hidden_dim)
    p.add_argument("--resample-mask", action="store_true", help="draw a fresh mask every epoch")
    p.add_argument("--seeds", help="comma-separated seeds; overrides --seed")

    p = sub.add_parser("evaluate", parents=[common, data], help="evaluate a scores file")
    p.add_argument("--scores", required=True)

    p = sub.add_parser("dump-embeddings", parents=[common, data], help="export student representations")
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="write into this directory instead of the recorded one")
    return parser


def _replay_argv(manifest_path, out):
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    argv = list(manifest["argv"])
    if out is not None:
        idx = argv.index("--out")
        argv[idx + 1] = str(out)
    if "--force" not in argv:
        argv.append("--force")
    if "--serial" not in argv:
        argv.append("--serial")
    return argv


def run_command(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        return run_command(_replay_argv(args.manifest, args.out))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = _prepare_out(args.out, args.force)
    run = Run(args.command, argv, out)
    limits = threadpool_limits(limits=1) if args.serial else contextlib.nullcontext()
    with limits:
        COMMANDS[args.command](args, run)
    run.write_manifest()
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return run_command(argv)
    except (CLIError, OSError, ValueError, RuntimeError) as exc:
        kind = type(exc).__name__
        msg = " ".join(str(exc).split())
        sys.stderr.write(f"graphnc: error: {kind}: {msg}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
