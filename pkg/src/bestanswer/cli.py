"""Command-line entry point: ``bestanswer <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from bestanswer.config import AppConfig, load_config
from bestanswer.dataset import (
    RANKED,
    FeatureCase,
    MissingInputError,
    assemble,
    check_inputs,
    thread_feature_rows,
    tokenize_corpus,
    uses_ranks,
)
from bestanswer.discretise import learn_directions
from bestanswer.evaluate import evaluate_cases, macro_average
from bestanswer.ingest import DumpParseError, RecordError, corpus_stats, load_corpus, load_site, save_corpus
from bestanswer.model import ClassifierConfig, ModelFormatError, TreeConfig, load_model, save_model, train
from bestanswer.report import export_drift_csv, monthly_drift
from bestanswer.service import PredictionService, RequestRejected, handle_predict, make_server
from bestanswer.synthetic import SiteSpec, generate_posts, stretch, write_dump
from bestanswer.textfeat import BackgroundModel, build_background_model

log = logging.getLogger("bestanswer")


class CliError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bestanswer", description="Best-answer prediction from shallow text features.")
    p.add_argument("--config", help="JSON config file (default: $BESTANSWER_CONFIG)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def corpus_arg(sp):
        sp.add_argument("--corpus", required=True, help="corpus file written by 'ingest'")

    sp = sub.add_parser("ingest", help="parse extracted dump XML into a corpus file")
    sp.add_argument("--posts", help="Posts.xml")
    sp.add_argument("--users", help="Users.xml (needed for cases 4-6)")
    sp.add_argument("--site", help="site name (default: parent directory of Posts.xml)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--min-answers", type=int)
    sp.add_argument("--include-unresolved", dest="resolved_only", action="store_const", const=False)
    sp.add_argument("--keep-code", action="store_const", const=True)

    sp = sub.add_parser("stats", help="print corpus counts as JSON")
    corpus_arg(sp)

    sp = sub.add_parser("features", help="export a case's feature table as CSV")
    corpus_arg(sp)
    sp.add_argument("--case", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--alpha", type=float)

    sp = sub.add_parser("train", help="train a model artifact on a whole corpus")
    corpus_arg(sp)
    sp.add_argument("--case", type=int, required=True)
    sp.add_argument("--out", required=True, help="model artifact path")
    sp.add_argument("--bg-out", help="background model path (default: <out>.bg.json)")
    _classifier_args(sp)

    sp = sub.add_parser("evaluate", help="grouped k-fold evaluation of feature cases")
    corpus_arg(sp)
    sp.add_argument("--case", type=int, action="append", dest="cases")
    sp.add_argument("--all-cases", action="store_true")
    sp.add_argument("--k", type=int)
    sp.add_argument("--out-dir", default=".")
    _classifier_args(sp)

    sp = sub.add_parser("drift", help="monthly feature means of accepted vs other answers")
    corpus_arg(sp)
    sp.add_argument("--out", help="CSV path (default: <site>_drift_<timestamp>.csv)")
    sp.add_argument("--std", action="store_true", help="add per-month standard deviation columns")
    sp.add_argument("--alpha", type=float)

    sp = sub.add_parser("predict", help="score a request file with a trained model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--bg", help="background model (default: <model>.bg.json)")
    sp.add_argument("--request", required=True, help="JSON request file")
    sp.add_argument("--out", help="write the response here instead of stdout")

    sp = sub.add_parser("serve", help="run the HTTP prediction service")
    sp.add_argument("--model", required=True)
    sp.add_argument("--bg")
    sp.add_argument("--host")
    sp.add_argument("--port", type=int)

    sp = sub.add_parser("synth", help="write a synthetic dump (Posts.xml, Users.xml)")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--threads", type=int, default=500)
    sp.add_argument("--distort", action="store_true", help="stretch lengths and lengthen words")
    sp.add_argument("--no-users", action="store_true")
    sp.add_argument("--seed", type=int)
    return p


def _classifier_args(sp):
    sp.add_argument("--classifier", choices=["decision_tree", "logistic"])
    sp.add_argument("--max-depth", type=int)
    sp.add_argument("--min-leaf", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--alpha", type=float)


def _effective_classifier(cfg: AppConfig, args) -> ClassifierConfig:
    c = cfg.classifier
    tree = TreeConfig(
        max_depth=args.max_depth if args.max_depth is not None else c.tree.max_depth,
        min_leaf=args.min_leaf if args.min_leaf is not None else c.tree.min_leaf,
    )
    return ClassifierConfig(
        kind=args.classifier or c.kind,
        tree=tree,
        logistic=c.logistic,
        seed=args.seed if args.seed is not None else cfg.seed,
    )


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _bg_path(model_path: str, explicit: str | None) -> Path:
    return Path(explicit) if explicit else Path(model_path + ".bg.json")


def _load_artifacts(model_path: str, bg_path: str | None):
    model = load_model(Path(model_path).read_bytes())
    with open(_bg_path(model_path, bg_path), encoding="utf-8") as fh:
        bg = BackgroundModel.from_json(json.load(fh))
    return model, bg


def cmd_ingest(cfg: AppConfig, args) -> int:
    cfg = cfg.override(posts=args.posts, users=args.users, site=args.site, min_answers=args.min_answers,
                       resolved_only=args.resolved_only, keep_code=args.keep_code)
    if not cfg.posts:
        raise CliError("ingest needs --posts (or 'posts' in the config file)")
    corpus = load_site(cfg.posts, cfg.users, cfg.site, cfg.min_answers, cfg.resolved_only, cfg.keep_code)
    save_corpus(corpus, args.out)
    print(json.dumps(corpus_stats(corpus), sort_keys=True))
    return 0


def cmd_stats(cfg: AppConfig, args) -> int:
    print(json.dumps(corpus_stats(load_corpus(args.corpus)), indent=2, sort_keys=True))
    return 0


def _fit_whole_corpus(corpus, case: FeatureCase, alpha: float):
    tokenized = tokenize_corpus(corpus.threads)
    bg = build_background_model(tokenized.values(), alpha)
    profile = None
    if uses_ranks(case):
        profile = learn_directions([thread_feature_rows(t, bg, tokenized) for t in corpus.threads], RANKED)
    return tokenized, bg, profile


def cmd_features(cfg: AppConfig, args) -> int:
    cfg = cfg.override(alpha=args.alpha)
    corpus = load_corpus(args.corpus)
    case = FeatureCase(args.case)
    check_inputs(corpus, case)
    tokenized, bg, profile = _fit_whole_corpus(corpus, case, cfg.alpha)
    _write_text(Path(args.out), assemble(corpus, case, bg, profile, tokenized).to_csv())
    return 0


def cmd_train(cfg: AppConfig, args) -> int:
    cfg = cfg.override(alpha=args.alpha)
    corpus = load_corpus(args.corpus)
    case = FeatureCase(args.case)
    check_inputs(corpus, case)
    tokenized, bg, profile = _fit_whole_corpus(corpus, case, cfg.alpha)
    dataset = assemble(corpus, case, bg, profile, tokenized)
    model = train(dataset, _effective_classifier(cfg, args), profile, bg.digest())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(save_model(model))
    _write_text(_bg_path(args.out, args.bg_out), json.dumps(bg.to_json(), sort_keys=True) + "\n")
    print(json.dumps({"model": str(out), "case": int(case), "rows": len(dataset.rows)}))
    return 0


def cmd_evaluate(cfg: AppConfig, args) -> int:
    cfg = cfg.override(k=args.k, alpha=args.alpha, seed=args.seed)
    if args.all_cases:
        cases = list(range(1, 7))
    else:
        cases = args.cases or list(cfg.cases)
    corpus = load_corpus(args.corpus)
    reports = evaluate_cases(corpus, cases, cfg.k, _effective_classifier(cfg, args), cfg.seed, cfg.alpha)
    out_dir = Path(args.out_dir)
    for case, report in reports.items():
        stem = f"{corpus.site_name}_case{int(case)}"
        _write_text(out_dir / f"{stem}.json", report.dumps())
        _write_text(out_dir / f"{stem}.csv", report.to_csv())
        m = macro_average([report])
        print(f"case {int(case)}: P={m.precision:.3f} R={m.recall:.3f} FM={m.f_measure:.3f} AUC={m.auc:.3f}")
    return 0


def cmd_drift(cfg: AppConfig, args) -> int:
    cfg = cfg.override(alpha=args.alpha)
    corpus = load_corpus(args.corpus)
    if not corpus.threads:
        raise CliError("corpus has no threads")
    bg = build_background_model(tokenize_corpus(corpus.threads).values(), cfg.alpha)
    points = monthly_drift(corpus, bg)
    out = args.out or f"{corpus.site_name}_drift_{datetime.now(timezone.utc):%Y%m%dT%H%M%SZ}.csv"
    export_drift_csv(points, out, include_std=args.std)
    print(out)
    return 0


def cmd_predict(cfg: AppConfig, args) -> int:
    model, bg = _load_artifacts(args.model, args.bg)
    with open(args.request, encoding="utf-8") as fh:
        request = json.load(fh)
    response = handle_predict(request, model, bg, cfg.keep_code, cfg.max_body_chars)
    text = json.dumps(response, indent=2, sort_keys=True) + "\n"
    if args.out:
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_serve(cfg: AppConfig, args) -> int:
    cfg = cfg.override(host=args.host, port=args.port)
    model, bg = _load_artifacts(args.model, args.bg)
    service = PredictionService(model, bg, cfg.keep_code, cfg.max_body_chars, cfg.max_request_bytes)
    server = make_server(service, cfg.host, cfg.port)
    log.info("serving case %d model on http://%s:%d", int(model.case), *server.server_address[:2])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_synth(cfg: AppConfig, args) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    spec = SiteSpec("synthetic", n_threads=args.threads)
    if args.distort:
        spec = SiteSpec("synthetic", n_threads=args.threads, length_map=stretch, word_length_shift=3)
    posts, users = generate_posts(spec, seed)
    print(write_dump(posts, None if args.no_users else users, args.out_dir))
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "features": cmd_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "drift": cmd_drift,
    "predict": cmd_predict,
    "serve": cmd_serve,
    "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except MissingInputError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return 1
    except (CliError, DumpParseError, RecordError, ModelFormatError, RequestRejected, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
