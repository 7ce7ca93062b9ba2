"""Command-line front door for every pipeline stage.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure. Data and
numeric failures print a one-line machine-parsable code prefix (E_...).
Seeds are mandatory wherever randomness is involved; identical inputs and
seeds produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_io
from . import matcomp, mqv, pipeline, svr
from . import evaluation as ev
from .errors import FaceqError
from .pairwise import Response, export_comparisons, load_comparisons, save_comparisons
from .store import SessionStore, load_session_config


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage failures exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"E_USAGE: {message}\n")


def _load_pool(path: str) -> tuple[str, ...]:
    """Image ids from a features csv or a plain one-id-per-line file."""
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("image_id,"):
        return tuple(r.image_id for r in corpus_io.load_features(path).records)
    return corpus_io.load_id_list(path)


def _open_store(args) -> SessionStore:
    root = Path(args.store)
    config_path = root / "config.json"
    pool_path = root / "pool.txt"
    if getattr(args, "config", None):
        root.mkdir(parents=True, exist_ok=True)
        if not config_path.exists():
            shutil.copyfile(args.config, config_path)
    if getattr(args, "pool", None):
        root.mkdir(parents=True, exist_ok=True)
        if not pool_path.exists():
            corpus_io.save_id_list(_load_pool(args.pool), pool_path)
    if not config_path.exists() or not pool_path.exists():
        raise FaceqError(
            "session store is not initialized; pass --config and --pool on first use"
        )
    config = load_session_config(config_path)
    pool = corpus_io.load_id_list(pool_path)
    return SessionStore(root / "sessions", config, pool)


def _write_curve(curve: ev.Curve, out: str, plot: bool, title: str) -> None:
    ev.save_curve(curve, out)
    if plot:
        from .plots import plot_curve

        plot_curve(curve, str(Path(out).with_suffix(".png")), title=title)


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = corpus_io.load_features(args.features)
    corpus_io.save_features(corpus, out / "features.csv")
    manifest = {"dim": corpus.dim, "n_records": len(corpus), "files": ["features.csv"]}
    if args.scores:
        scores = corpus_io.load_scores(args.scores, corpus)
        corpus_io.save_scores(scores, out / "scores.csv")
        manifest["files"].append("scores.csv")
        manifest["n_scores"] = len(scores)
    if args.templates:
        templates = corpus_io.load_templates(args.templates, corpus)
        corpus_io.save_templates(templates, out / "templates.csv")
        manifest["files"].append("templates.csv")
        manifest["n_templates"] = len(templates)
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    print(f"workspace ready: {out} ({len(corpus)} records, dim {corpus.dim})")
    return 0


def cmd_synth(args) -> int:
    noise = pipeline.SynthNoise(
        feature_noise=args.feature_noise,
        genuine_noise=args.genuine_noise,
        impostor_noise=args.impostor_noise,
        flip_prob=args.flip,
        similar_band=args.similar_band,
        affinity_spread=args.affinity_spread,
    )
    data = pipeline.synth_corpus(
        args.subjects,
        args.per_subject,
        dim=args.dim,
        noise=noise,
        seed=args.seed,
        n_raters=args.raters,
        comparisons_per_rater=args.comparisons_per_rater,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus_io.save_features(data.corpus, out / "features.csv")
    corpus_io.save_quality(data.latent_quality, out / "latent.csv")
    corpus_io.save_scores(data.scores, out / "scores.csv")
    save_comparisons(data.comparisons, out / "comparisons.csv")
    corpus_io.save_id_list(data.gallery_ids, out / "gallery.txt")
    corpus_io.save_id_list(data.probe_ids, out / "probes.txt")
    corpus_io.save_templates(data.templates, out / "templates.csv")
    gallery_templates = [t for t in data.templates if len(t.member_ids) == 1]
    probe_templates = [t for t in data.templates if len(t.member_ids) > 1]
    with open(out / "pairs.csv", "w") as fh:
        fh.write("gallery_template_id,probe_template_id\n")
        for g in gallery_templates:
            for p in probe_templates:
                fh.write(f"{g.template_id},{p.template_id}\n")
    print(
        f"synthetic workspace: {out} ({len(data.corpus)} images, "
        f"{len(data.scores)} scores, {len(data.comparisons)} comparisons)"
    )
    return 0


def cmd_session(args) -> int:
    store = _open_store(args)
    if args.session_cmd == "new":
        session_id, session = store.create(args.rater)
        print(f"session {session_id} state={session.state.value} pairs={len(session.schedule)}")
    elif args.session_cmd == "respond":
        session = store.record(args.session, args.position, Response(args.response))
        print(f"session {args.session} state={session.state.value} answered={session.answered}")
    elif args.session_cmd == "status":
        if args.session:
            session = store.get(args.session)
            if session is None:
                raise FaceqError(f"unknown session {args.session!r}")
            print(
                f"session {args.session} state={session.state.value} "
                f"answered={session.answered} remaining={len(session.schedule) - session.answered}"
            )
        else:
            for session_id, session in sorted(store.sessions().items()):
                print(f"{session_id} rater={session.rater_id} state={session.state.value}")
    elif args.session_cmd == "export":
        comparisons = export_comparisons(store.sessions().values())
        save_comparisons(comparisons, args.out)
        print(f"exported {len(comparisons)} comparisons to {args.out}")
    return 0


def cmd_complete(args) -> int:
    comparisons = load_comparisons(args.comparisons)
    workers = (
        corpus_io.load_id_list(args.workers)
        if args.workers
        else tuple(dict.fromkeys(row.rater_id for row in comparisons.rows))
    )
    if args.images:
        images = _load_pool(args.images)
    else:
        seen: dict[str, None] = {}
        for row in comparisons.rows:
            seen.setdefault(row.left_id, None)
            seen.setdefault(row.right_id, None)
        images = tuple(seen)
    params = matcomp.CompletionParams(
        rank=args.rank,
        margin=args.margin,
        similar_weight=args.similar_weight,
        l2_reg=args.l2_reg,
        learn_rate=args.learn_rate,
        max_iters=args.max_iters,
        tol=args.tol,
        seed=args.seed,
    )
    matrix = matcomp.complete_matrix(comparisons, workers, images, params)
    normalized = matcomp.normalize_worker_rows(matrix)
    quality = matcomp.aggregate(normalized, args.aggregate)
    corpus_io.save_quality(quality, args.out)
    if args.matrix_out:
        matcomp.save_rating_matrix(normalized, args.matrix_out)
    if args.uncovered_out:
        corpus_io.save_id_list(matrix.uncovered_images, args.uncovered_out)
    if args.concordance_out:
        summary = matcomp.worker_concordance(normalized)
        with open(args.concordance_out, "w") as fh:
            fh.write("worker_a,worker_b,rho\n")
            for a, b, rho in summary.pairs:
                fh.write(f"{a},{b},{rho!r}\n")
            fh.write(f"mean,,{summary.mean_rho!r}\n")
        from .plots import plot_histogram

        plot_histogram(
            summary.hist_counts,
            summary.hist_edges,
            str(Path(args.concordance_out).with_suffix(".png")),
            xlabel="pairwise Spearman rho",
            title=f"inter-worker concordance (mean {summary.mean_rho:.2f})",
        )
    print(
        f"completed {matrix.n_workers}x{matrix.n_images} matrix rank={matrix.rank_used} "
        f"objective={matrix.objective_trace[-1]:.6g} "
        f"uncovered={len(matrix.uncovered_images)} -> {args.out}"
    )
    return 0


def cmd_mqv(args) -> int:
    corpus = corpus_io.load_features(args.features)
    scores = corpus_io.load_scores(args.scores, corpus)
    gallery = corpus_io.load_id_list(args.gallery)
    probes = corpus_io.load_id_list(args.probes)
    result = mqv.compute_mqv(scores, corpus, gallery, probes)
    corpus_io.save_quality(result.quality, args.out)
    if args.report:
        mqv.save_probe_errors(result.errors, args.report)
    print(f"mqv for {len(result.quality)} probes ({len(result.errors)} omitted) -> {args.out}")
    return 0


def cmd_train(args) -> int:
    corpus = corpus_io.load_features(args.features)
    targets = corpus_io.load_quality(args.targets)
    rows = [r.image_id for r in corpus.records if r.image_id in targets]
    missing = [i for i in targets.values if i not in corpus]
    if missing:
        raise FaceqError(f"targets name unknown images: {missing[:5]!r}")
    X = corpus.feature_matrix(rows)
    y = np.array([targets[r] for r in rows])
    subjects = [corpus.subject_of(r) for r in rows]
    grid = svr.load_grid(args.grid) if args.grid else svr.DEFAULT_GRID
    result = svr.grid_search(
        X,
        y,
        subjects,
        grid=grid,
        k=args.folds,
        seed=args.seed,
        target_kind=svr.TargetKind(args.target_kind),
        jobs=args.jobs,
    )
    svr.save_model(result.model, args.out)
    best = result.best_params
    score = max(c.mean_rho for c in result.cells if not c.failed)
    print(
        f"trained on {len(rows)} rows; best C={best.C} gamma={best.gamma} "
        f"epsilon={best.epsilon} (val rho={score:.4f}) -> {args.out}"
    )
    return 0


def cmd_predict(args) -> int:
    model = svr.load_model(args.model)
    corpus = corpus_io.load_features(args.features)
    ids = [r.image_id for r in corpus.records]
    pred = svr.predict_many(model, corpus.feature_matrix(ids))
    quality = corpus_io.QualityAssignment({i: float(p) for i, p in zip(ids, pred)})
    if args.floor:
        quality = ev.apply_failure_floor(quality, corpus)
    corpus_io.save_quality(quality, args.out)
    print(f"predicted quality for {len(ids)} records -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    plot = not args.no_plot
    if args.eval_cmd == "evr":
        corpus = corpus_io.load_features(args.features)
        scores = corpus_io.load_scores(args.scores, corpus)
        quality = corpus_io.load_quality(args.quality)
        fractions = tuple(
            np.round(np.arange(0.0, args.max_reject + 1e-9, args.step), 10)
        )
        curve = ev.evr_curve(
            scores,
            corpus,
            quality,
            error_kind=ev.ErrorKind(args.error_kind),
            initial_error=args.initial_error,
            reject_fractions=fractions,
        )
        _write_curve(
            ev.as_curve(curve), args.out, plot,
            f"{args.error_kind} vs reject (t={curve.fixed_threshold:.4g})",
        )
        print(f"evr curve ({len(curve.reject_fractions)} points) -> {args.out}")
    elif args.eval_cmd == "roc":
        corpus = corpus_io.load_features(args.features)
        scores = corpus_io.load_scores(args.scores, corpus)
        genuine, impostor = scores.split_genuine_impostor(corpus)
        fars = tuple(float(t) for t in args.far_grid.split(","))
        curve = ev.roc(genuine, impostor, fars)
        _write_curve(ev.as_curve(curve), args.out, plot, "ROC")
        print(f"roc ({len(fars)} operating points) -> {args.out}")
    elif args.eval_cmd == "sweep":
        templates = corpus_io.load_templates(args.templates)
        scores_corpusless = _load_pair_scores(args.pair_scores)
        quality = corpus_io.load_quality(args.quality)
        pairs = _load_template_pairs(args.pairs)
        percentiles = tuple(float(t) for t in args.percentiles.split(","))
        curve = ev.quality_sweep(
            templates,
            pairs,
            scores_corpusless,
            quality,
            percentiles,
            target_fmr=args.target_fmr,
            rule=ev.FuseRule(args.rule),
        )
        _write_curve(
            ev.as_curve(curve), args.out, plot,
            f"FNMR vs quality percentile (FMR target {args.target_fmr})",
        )
        print(
            f"sweep over {len(percentiles)} percentiles "
            f"({curve.n_genuine_pairs} genuine / {curve.n_impostor_pairs} impostor pairs) -> {args.out}"
        )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_or_create_salt

    workspace = Path(args.workspace)
    config = load_session_config(args.session_config)
    pool = _load_pool(str(workspace / "features.csv"))
    store = SessionStore(workspace / "sessions", config, pool)
    salt = load_or_create_salt(workspace / ".image_salt")
    image_dir = workspace / "images"
    app = create_app(store, image_dir if image_dir.is_dir() else None, salt)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _load_pair_scores(path: str) -> dict[tuple[str, str], float]:
    """Scores keyed (gallery_member, probe_member) from a scores csv."""
    header, rows = corpus_io._read_rows(path)
    if header != ["probe_id", "gallery_id", "score"]:
        raise FaceqError(f"{path}: bad header {header!r}")
    return {(g, p): float(s) for p, g, s in rows}


def _load_template_pairs(path: str) -> list[tuple[str, str]]:
    header, rows = corpus_io._read_rows(path)
    if header != ["gallery_template_id", "probe_template_id"]:
        raise FaceqError(f"{path}: bad header {header!r}")
    return [(g, p) for g, p in rows]


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="faceq", description=__doc__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("ingest", help="validate inputs and build a workspace")
    p.add_argument("--features", required=True)
    p.add_argument("--scores")
    p.add_argument("--templates")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic workspace")
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--per-subject", type=int, required=True)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--raters", type=int, default=20)
    p.add_argument("--comparisons-per-rater", type=int, default=800)
    p.add_argument("--feature-noise", type=float, default=0.05)
    p.add_argument("--genuine-noise", type=float, default=0.02)
    p.add_argument("--impostor-noise", type=float, default=0.0)
    p.add_argument("--flip", type=float, default=0.1)
    p.add_argument("--similar-band", type=float, default=0.05)
    p.add_argument("--affinity-spread", type=float, default=0.0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("session", help="offline annotation session driver")
    ssub = p.add_subparsers(dest="session_cmd", required=True)
    sp = ssub.add_parser("new")
    sp.add_argument("--store", required=True)
    sp.add_argument("--rater", required=True)
    sp.add_argument("--config", help="session config JSON (first use)")
    sp.add_argument("--pool", help="features csv or id list (first use)")
    sp = ssub.add_parser("respond")
    sp.add_argument("--store", required=True)
    sp.add_argument("--session", required=True)
    sp.add_argument("--position", type=int, required=True)
    sp.add_argument("--response", required=True, choices=[r.value for r in Response])
    sp = ssub.add_parser("status")
    sp.add_argument("--store", required=True)
    sp.add_argument("--session")
    sp = ssub.add_parser("export")
    sp.add_argument("--store", required=True)
    sp.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_session)

    p = sub.add_parser("complete", help="matrix completion of pairwise comparisons")
    p.add_argument("--comparisons", required=True)
    p.add_argument("--rank", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--aggregate", choices=matcomp.AGGREGATORS, default="median")
    p.add_argument("--images", help="image universe (features csv or id list)")
    p.add_argument("--workers", help="explicit worker id list")
    p.add_argument("--matrix-out", help="write the normalized matrix (long form)")
    p.add_argument("--uncovered-out", help="write ids never compared by anyone")
    p.add_argument("--concordance-out",
                   help="write pairwise worker Spearman rhos (csv + histogram png)")
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--similar-weight", type=float, default=1.0)
    p.add_argument("--l2-reg", type=float, default=0.01)
    p.add_argument("--learn-rate", type=float, default=0.05)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(fn=cmd_complete)

    p = sub.add_parser("mqv", help="impostor-normalized genuine-score targets")
    p.add_argument("--features", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--probes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="per-probe error report csv")
    p.set_defaults(fn=cmd_mqv)

    p = sub.add_parser("train", help="grid-searched SVR quality model")
    p.add_argument("--features", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--grid", help="grid csv (C,gamma,epsilon); default grid if omitted")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-kind", choices=["HQV", "MQV"], default="HQV")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="predict quality from features")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--floor", action=argparse.BooleanOptionalAction, default=True,
                   help="floor detection failures below the minimum quality")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("evaluate", help="recognition-error evaluation curves")
    esub = p.add_subparsers(dest="eval_cmd", required=True)
    ep = esub.add_parser("evr")
    ep.add_argument("--features", required=True)
    ep.add_argument("--scores", required=True)
    ep.add_argument("--quality", required=True)
    ep.add_argument("--error-kind", choices=["FNMR", "FMR"], default="FNMR")
    ep.add_argument("--initial-error", type=float, default=0.2)
    ep.add_argument("--max-reject", type=float, default=0.5)
    ep.add_argument("--step", type=float, default=0.01)
    ep.add_argument("--out", required=True)
    ep.add_argument("--no-plot", action="store_true")
    ep = esub.add_parser("roc")
    ep.add_argument("--features", required=True)
    ep.add_argument("--scores", required=True)
    ep.add_argument("--far-grid", default="0.001,0.01,0.1")
    ep.add_argument("--out", required=True)
    ep.add_argument("--no-plot", action="store_true")
    ep = esub.add_parser("sweep")
    ep.add_argument("--templates", required=True)
    ep.add_argument("--pair-scores", required=True)
    ep.add_argument("--pairs", required=True,
                    help="csv of gallery_template_id,probe_template_id")
    ep.add_argument("--quality", required=True)
    ep.add_argument("--percentiles", default="0,10,20,30,40,50,60,70,80,90")
    ep.add_argument("--target-fmr", type=float, default=0.01)
    ep.add_argument("--rule", choices=["MEAN", "MAX"], default="MEAN")
    ep.add_argument("--out", required=True)
    ep.add_argument("--no-plot", action="store_true")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("serve", help="start the annotation service")
    p.add_argument("--workspace", required=True)
    p.add_argument("--session-config", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit as exc:  # argparse --help (0) and usage errors (1)
        return int(exc.code or 0)
    except FaceqError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return exc.category
    except ValueError as exc:
        print(f"E_USAGE: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
