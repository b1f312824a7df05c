"""rvector command-line front end."""
import argparse
import logging
import sys
from typing import Callable, Optional, Sequence

import numpy as np

from .audio import read_wav
from .config import Settings, load_config
from .constants import (
    DEFAULT_LOG_LEVEL,
    EXIT_DATA,
    EXIT_OK,
    RETRIEVAL_TOP_K,
    CohortMode,
    EnrollStrategy,
    TrialLabel,
)
from .errors import MissingIdsError, RVectorError
from .fbank import compute_fbank
from .metrics import DcfParams, det_sweep, evaluate, min_dcf
from .network import (
    NET_SPECS,
    NetSpec,
    build_network,
    network_from_bundle,
    network_to_bundle,
)
from .pipeline import (
    cohort_from_store,
    cohort_from_training,
    cohort_to_store,
    embed_enrollment_concat,
    embed_entries,
    format_retrieval,
    retrieval_map,
    retrieve_topk,
    run_verification,
    scoring_chain,
)
from .scoring import ScoreSet, fuse_scores
from .store import (
    TrialSet,
    atomic_write_bytes,
    atomic_write_text,
    format_enrollment,
    format_trials,
    parse_enrollment,
    parse_trials,
    parse_wav_list,
    read_cnceleb_lists,
    read_scores,
    read_store,
    write_scores,
    write_store,
)
from .tensorio import TensorBundle
from .training import (
    format_loss_trace,
    speaker_labels,
    stage_one_plan,
    stage_two_plan,
    train_two_stage,
)

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


log = logging.getLogger(__name__)


def _read_bundle(path: str) -> TensorBundle:
    with open(path, "rb") as handle:
        return TensorBundle.from_bytes(handle.read())


def _settings(args: argparse.Namespace) -> Settings:
    return load_config(getattr(args, "config", None)).evolve_from(vars(args))


def _load_trials(args: argparse.Namespace) -> TrialSet:
    trials = parse_trials(args.trials)
    if getattr(args, "enroll", None):
        trials = trials.with_enrollment(parse_enrollment(args.enroll))
    return trials


def cmd_fbank(args: argparse.Namespace) -> int:
    settings = _settings(args)
    audio = read_wav(args.wav, settings.sample_rate, utterance_id=args.wav)
    atomic_write_bytes(args.out, bytes(compute_fbank(audio)))
    return EXIT_OK


def cmd_embed(args: argparse.Namespace) -> int:
    settings = _settings(args)
    spec = NetSpec.from_code(args.spec) if args.spec is not None else None
    if args.weights:
        net = network_from_bundle(_read_bundle(args.weights), spec)
    else:
        net = build_network(spec or NET_SPECS[34], seed=settings.seed)
    entries = parse_wav_list(args.list)
    if args.concat_enroll:
        store = embed_enrollment_concat(
            net, entries, parse_enrollment(args.concat_enroll), settings.sample_rate
        )
    else:
        store = embed_entries(net, entries, settings.sample_rate)
    write_store(args.out, store)
    if args.save_weights:
        atomic_write_bytes(args.save_weights, bytes(network_to_bundle(net)))
    log.info("Wrote %d embeddings to %r", len(store), args.out)
    return EXIT_OK


def cmd_train_head(args: argparse.Namespace) -> int:
    settings = _settings(args)
    store = read_store(args.store)
    ids = list(store)
    labels, base_ids = speaker_labels([store.speaker(u) for u in ids])
    speed_perturb = not args.no_speed_perturb
    if speed_perturb and not np.any(labels >= len(base_ids)):
        log.warning(
            "No speed-perturbed speakers in %r, stage I uses base speakers only",
            args.store,
        )
        speed_perturb = False
    stage_one = stage_one_plan(speed_perturb=speed_perturb)
    stage_two = stage_two_plan()
    if args.stage_one_epochs is not None:
        stage_one = stage_one.scaled(args.stage_one_epochs)
    if args.stage_two_epochs is not None:
        stage_two = stage_two.scaled(args.stage_two_epochs)
    result = train_two_stage(
        store.matrix(ids),
        labels,
        len(base_ids),
        stage_one,
        stage_two,
        seed=settings.seed,
        batch_size=settings.batch_size,
    )
    atomic_write_bytes(args.out, bytes(result.head.to_bundle()))
    if args.trace:
        atomic_write_text(args.trace, format_loss_trace(result.trace))
    return EXIT_OK


def cmd_cohort(args: argparse.Namespace) -> int:
    cohort = cohort_from_training(read_store(args.store))
    write_store(args.out, cohort_to_store(cohort))
    log.info("Cohort of %d speakers written to %r", len(cohort), args.out)
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    settings = _settings(args)
    store = read_store(args.store)
    cohort = None
    if args.cohort:
        cohort = cohort_from_store(read_store(args.cohort, store.dim))
    concat = read_store(args.concat_store, store.dim) if args.concat_store else None
    result = run_verification(
        _load_trials(args),
        store,
        cohort,
        settings=settings,
        concat_store=concat,
        system=args.system,
    )
    write_scores(args.out, result.scores)
    if result.report is not None:
        if args.report:
            atomic_write_text(args.report, result.report.to_text())
        else:
            sys.stdout.write(result.report.to_text())
    return EXIT_OK


def _labels_for(score_set: ScoreSet, trials: TrialSet) -> np.ndarray:
    label_of = {t.key: t.label for t in trials.trials}
    missing = ["{} {}".format(*key) for key in score_set.keys if key not in label_of]
    if missing:
        raise MissingIdsError(missing)
    return np.array([label_of[key] is TrialLabel.Target for key in score_set.keys])


def cmd_evaluate(args: argparse.Namespace) -> int:
    settings = _settings(args)
    score_set = read_scores(args.scores)
    labels = _labels_for(score_set, parse_trials(args.trials))
    params = DcfParams(
        p_target=settings.p_target,
        c_miss=settings.c_miss,
        c_fa=settings.c_fa,
        normalize=not args.raw_dcf,
    )
    curve = det_sweep(score_set.scores, labels)
    report = evaluate(score_set.scores, labels, params, curve)
    if args.det:
        atomic_write_text(args.det, curve.to_text())
    if args.out:
        atomic_write_text(args.out, report.to_text())
    else:
        sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_retrieve(args: argparse.Namespace) -> int:
    settings = _settings(args)
    queries = read_store(args.queries)
    pool = read_store(args.pool, queries.dim)
    cohort = None
    if args.cohort:
        cohort = cohort_from_store(read_store(args.cohort, pool.dim))
    chain = scoring_chain(cohort, settings.asnorm, settings)
    results = retrieve_topk(queries, pool, args.k, chain)
    atomic_write_text(args.out, format_retrieval(results))
    if args.map:
        value = retrieval_map(results, queries, pool, args.k)
        sys.stdout.write("map={!r}\n".format(value))
    return EXIT_OK


def cmd_fuse(args: argparse.Namespace) -> int:
    settings = _settings(args)
    score_sets = [read_scores(path) for path in args.scores]
    quality = args.quality
    weights = args.weights or settings.fusion_weights
    if quality is None and weights is None and args.trials:
        trials = parse_trials(args.trials)
        quality = [
            min_dcf(
                det_sweep(s.scores, _labels_for(s, trials)), settings.dcf_params
            )[0]
            for s in score_sets
        ]
        log.info("Fusion quality (minDCF) %r", quality)
    write_scores(args.out, fuse_scores(score_sets, quality=quality, weights=weights))
    return EXIT_OK


def cmd_convert_cnceleb(args: argparse.Namespace) -> int:
    trials = read_cnceleb_lists(args.lists)
    atomic_write_text(args.out_trials, format_trials(trials))
    atomic_write_text(args.out_enroll, format_enrollment(trials.enrollment))
    return EXIT_OK


def _settings_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value settings file")
    parser.add_argument("--top-k", dest="top_k", type=int, help="AS-norm cohort top-K")
    parser.add_argument("--p-target", dest="p_target", type=float)
    parser.add_argument(
        "--strategy",
        choices=[s.value for s in EnrollStrategy],
        help="enrollment strategy",
    )
    parser.add_argument(
        "--asnorm", dest="asnorm", action="store_const", const=True, default=None
    )
    parser.add_argument(
        "--no-asnorm", dest="asnorm", action="store_const", const=False, default=None
    )
    parser.add_argument(
        "--cohort-mode", dest="cohort_mode", choices=[m.value for m in CohortMode]
    )
    parser.add_argument(
        "--normalize-after-average",
        dest="normalize_after_average",
        action="store_const",
        const=True,
        default=None,
    )
    parser.add_argument("--sample-rate", dest="sample_rate", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rvector", description="Deep r-vector speaker verification toolkit."
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler: Callable, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text)
        _settings_flags(sub)
        sub.set_defaults(handler=handler)
        return sub

    sub = command("fbank", cmd_fbank, "dump CMN-normalized fbank features")
    sub.add_argument("wav")
    sub.add_argument("out")

    sub = command("embed", cmd_embed, "embed a list of WAV files")
    sub.add_argument(
        "--spec",
        type=int,
        choices=sorted(NET_SPECS),
        help="default 34, or the checkpoint's",
    )
    sub.add_argument("--list", required=True, help="utterance_id speaker_id wav [genre]")
    sub.add_argument("--out", required=True)
    sub.add_argument("--weights", help="network checkpoint to load")
    sub.add_argument("--save-weights", dest="save_weights")
    sub.add_argument(
        "--concat-enroll",
        dest="concat_enroll",
        help="enrollment file; embed each speaker's joined audio instead",
    )

    sub = command("train-head", cmd_train_head, "two-stage AAM training of the head")
    sub.add_argument("--store", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--trace", help="loss trace output")
    sub.add_argument("--stage-one-epochs", dest="stage_one_epochs", type=int)
    sub.add_argument("--stage-two-epochs", dest="stage_two_epochs", type=int)
    sub.add_argument("--no-speed-perturb", dest="no_speed_perturb", action="store_true")

    sub = command("cohort", cmd_cohort, "average training embeddings per speaker")
    sub.add_argument("--store", required=True)
    sub.add_argument("--out", required=True)

    sub = command("score", cmd_score, "score a trial list")
    sub.add_argument("--trials", required=True)
    sub.add_argument("--enroll", help="enroll_speaker utterance_id lines")
    sub.add_argument("--store", required=True)
    sub.add_argument("--cohort")
    sub.add_argument("--concat-store", dest="concat_store")
    sub.add_argument("--out", required=True)
    sub.add_argument("--report")
    sub.add_argument("--system", default="")

    sub = command("evaluate", cmd_evaluate, "minDCF, EER and FNR/FPR of a score file")
    sub.add_argument("--scores", required=True)
    sub.add_argument("--trials", required=True)
    sub.add_argument("--det", help="write threshold fnr fpr lines")
    sub.add_argument("--raw-dcf", dest="raw_dcf", action="store_true")
    sub.add_argument("--out")

    sub = command("retrieve", cmd_retrieve, "top-k retrieval from a pool")
    sub.add_argument("--queries", required=True)
    sub.add_argument("--pool", required=True)
    sub.add_argument("--cohort")
    sub.add_argument("-k", type=int, default=RETRIEVAL_TOP_K)
    sub.add_argument("--out", required=True)
    sub.add_argument("--map", action="store_true", help="print mAP by speaker identity")

    sub = command("fuse", cmd_fuse, "fuse aligned score files")
    sub.add_argument("--scores", nargs="+", required=True)
    sub.add_argument("--quality", nargs="+", type=float, help="minDCF per system")
    sub.add_argument("--weights", nargs="+", type=float)
    sub.add_argument("--trials", help="labelled trials to derive quality from")
    sub.add_argument("--out", required=True)

    sub = command("convert-cnceleb", cmd_convert_cnceleb, "convert CN-Celeb eval lists")
    sub.add_argument("--lists", required=True, help="directory holding trials.lst")
    sub.add_argument("--out-trials", dest="out_trials", required=True)
    sub.add_argument("--out-enroll", dest="out_enroll", required=True)
    return parser


def _log_level(verbose: int) -> int:
    if verbose >= 2:
        return logging.DEBUG
    if verbose == 1:
        return logging.INFO
    return getattr(logging, DEFAULT_LOG_LEVEL.upper(), logging.WARNING)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns 0, or 3 on a data error (argparse exits 2)."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=_log_level(args.verbose),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (RVectorError, OSError, RuntimeError) as exc:
        log.error("%s: %s", args.command, exc)
        log.debug("Traceback", exc_info=True)
        return EXIT_DATA
