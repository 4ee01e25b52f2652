"""Command-line interface: one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ._constants import DEFAULT_K, DEFAULT_SEED, DEFAULT_WINDOW, EVAL_TASKS, TASKS
from ._io import write_jsonl, write_text

logger = logging.getLogger("gazemind")

SUBCOMMANDS = (
    "featurize", "stats", "gen-rules", "profile-fit", "profile-assign", "build-db", "retrieve", "predict",
    "evaluate", "perturb", "ablate", "synth", "interpolate", "split", "inject-noise", "inject-missing",
)
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class CliError(Exception):
    """User-facing failure reported as one line with exit status 1."""


# ---------------------------------------------------------------- config


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment; keys use - or _."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key = value")
            key, val = (p.strip() for p in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def _coerce(value: str, default):
    if isinstance(default, bool):
        v = value.lower()
        if v in _TRUE:
            return True
        if v in _FALSE:
            return False
        raise CliError(f"expected a boolean, got {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def _apply_config(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, argv, cfg: dict) -> argparse.Namespace:
    """Config values become defaults; explicit flags still win."""
    known = {a.dest: a.default for a in sub._actions}
    known.update({a.dest: a.default for a in parser._actions})
    defaults = {}
    for key, val in cfg.items():
        if key in known and key not in ("func", "help", "command"):
            defaults[key] = _coerce(val, known[key]) if known[key] is not None else val
    sub.set_defaults(**{k: v for k, v in defaults.items() if k in {a.dest for a in sub._actions}})
    parser.set_defaults(**{k: v for k, v in defaults.items() if k in {a.dest for a in parser._actions}})
    return parser.parse_args(argv)


# ---------------------------------------------------------------- loaders


def _gaze_files(inputs) -> list[Path]:
    files = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            for f in sorted(p.glob("*.csv")):
                stem = f.stem
                if "_" in stem and stem.rpartition("_")[2] in TASKS:
                    files.append(f)
        elif p.exists():
            files.append(p)
        else:
            raise FileNotFoundError(f"no such file or directory: {item}")
    if not files:
        raise CliError("no gaze recordings found (expected <user>_<task>.csv files)")
    return files


def _load_features(path) -> dict:
    from .gaze.features import read_feature_series

    series = read_feature_series(path)
    if not series:
        raise CliError(f"{path}: no feature records")
    return {(s.user_id, s.task_id): s for s in series}


def _load_labels(path) -> dict:
    from .datakit.labels import labels_by_session, read_labels_csv

    return labels_by_session(read_labels_csv(path))


def _dataset(features_path, labels_path=None):
    from .pipeline import Dataset, _align

    series = _load_features(features_path)
    if labels_path is None:
        return Dataset(series, {})
    labels = _load_labels(labels_path)
    ds_series, ds_labels = {}, {}
    for key, s in sorted(series.items()):
        if key not in labels:
            continue
        ds_series[key], ds_labels[key] = _align(s, labels[key])
    if not ds_series:
        raise CliError("no feature session has matching labels")
    return Dataset(ds_series, ds_labels)


def _split_users(args, all_users, part: str):
    if getattr(args, "split", None):
        from .datakit.split import SplitManifest

        manifest = SplitManifest.load(args.split)
        return list(getattr(manifest, part)), manifest
    return list(all_users), None


def _tasks(value: str | None, default=EVAL_TASKS) -> tuple:
    if not value or value == "all":
        return tuple(default)
    tasks = tuple(t.strip() for t in value.split(",") if t.strip())
    bad = [t for t in tasks if t not in TASKS]
    if bad:
        raise CliError(f"unknown task {bad[0]!r}; expected one of {', '.join(TASKS)}")
    return tasks


def _backend(args):
    from .llm import make_backend

    kwargs = {}
    if getattr(args, "timeout", None) is not None:
        kwargs["timeout"] = args.timeout
    if getattr(args, "retries", None) is not None:
        kwargs["max_retries"] = args.retries
    if args.backend == "remote":
        kwargs["max_in_flight"] = max(1, args.jobs)
    return make_backend(args.backend, base_url=args.base_url, model=args.model, token_env=args.token_env, **kwargs)


def _load_table(path):
    from .gaze.table import FeatureTable, parse_markdown

    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return FeatureTable.from_dict(json.loads(text))
    cells = parse_markdown(text)
    return FeatureTable(cells, cells.shape[0] - 1)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------- commands


def cmd_featurize(args) -> int:
    from .gaze.events import IVTConfig
    from .gaze.features import featurize, write_feature_series
    from .gaze.recording import read_gaze_csv

    cfg = IVTConfig(velocity_threshold=args.threshold, blink_min_ms=args.blink_min_ms, blink_max_ms=args.blink_max_ms)
    series = [featurize(read_gaze_csv(f), cfg=cfg) for f in _gaze_files(args.input)]
    write_feature_series(args.out, series)
    logger.info("wrote %d sessions to %s", len(series), args.out)
    return 0


def cmd_stats(args) -> int:
    from .pipeline import fit_stats

    ds = _dataset(args.features)
    users, _ = _split_users(args, ds.users, "train")
    fit_stats(ds, users).save(args.out)
    return 0


def _stats_for(args, ds, users):
    from .gaze.normalize import PopulationStats
    from .pipeline import fit_stats

    if getattr(args, "stats", None):
        return PopulationStats.load(args.stats)
    return fit_stats(ds, users)


def cmd_gen_rules(args) -> int:
    from .pipeline import fit_rules
    from .rules import RuleStore

    ds = _dataset(args.train, args.labels)
    users, _ = _split_users(args, ds.users, "train")
    stats = _stats_for(args, ds, users)
    backend = _backend(args) if args.backend == "remote" else None
    tasks = _tasks(args.task)
    new = fit_rules(ds, users, stats, tasks, args.min_sep, backend)
    missing = [t for t in tasks if t not in new]
    if missing:
        raise CliError(f"no labelled training sessions for task {missing[0]!r}")
    store = RuleStore.load(args.out) if Path(args.out).exists() and not args.overwrite else RuleStore()
    store.update(new)
    store.save(args.out)
    for task in tasks:
        for w in new[task].warnings:
            logger.warning("%s: %s", task, w)
    return 0


def _k_range(text: str) -> tuple:
    if "-" in text:
        lo, hi = (int(v) for v in text.split("-", 1))
        return tuple(range(lo, hi + 1))
    return tuple(int(v) for v in text.split(","))


def cmd_profile_fit(args) -> int:
    from .pipeline import fit_profile_model
    from .profiles import save_profile_model

    ds = _dataset(args.features)
    users, _ = _split_users(args, ds.users, "train")
    model, profiles = fit_profile_model(ds, users, _k_range(args.k_range), args.seed)
    save_profile_model(args.out, model, {u: p.name for u, p in profiles.items()})
    logger.info("k=%d names=%s", model.k, ",".join(model.names))
    return 0


def cmd_profile_assign(args) -> int:
    from .pipeline import user_profile
    from .profiles import load_profile_model

    model, _ = load_profile_model(args.profiles)
    ds = _dataset(args.calibration)
    if args.user not in ds.users:
        raise CliError(f"user {args.user!r} not found in {args.calibration}")
    prof = user_profile(model, ds, args.user)
    if args.out:
        write_jsonl(args.out, [prof.to_dict()])
    _emit(prof.to_dict())
    return 0


def cmd_build_db(args) -> int:
    from .pipeline import build_db
    from .profiles import load_profile_model

    ds = _dataset(args.features, args.labels)
    users, manifest = _split_users(args, ds.users, "train")
    stats = _stats_for(args, ds, users)
    _, names = load_profile_model(args.profiles)
    unknown = [u for u in users if u not in names and ds.keys(users=[u], tasks=_tasks(args.tasks))]
    if unknown:
        raise CliError(f"user {unknown[0]!r} has no profile assignment in {args.profiles}")
    db = build_db(ds, users, stats, names, args.window, args.stride, _tasks(args.tasks), manifest)
    db.save(args.out)
    logger.info("wrote %d records to %s", len(db), args.out)
    return 0


def cmd_retrieve(args) -> int:
    from .retrieval import RetrievalDB, retrieve

    db = RetrievalDB.load(args.db)
    table = _load_table(args.query)
    res = retrieve(db, table, args.task, args.profile, args.k, metric=args.metric, exclude_user=args.exclude_user)
    _emit({
        "fallback": res.fallback,
        "results": [
            {"rank": i + 1, "distance": float(d), "user": r.user_id, "window_id": r.window_id, "label": r.label,
             "task": r.task_id, "profile": r.profile}
            for i, (r, d) in enumerate(zip(res.records, res.distances))
        ],
    })
    return 0


def cmd_predict(args) -> int:
    from .gaze.normalize import PopulationStats
    from .inference.session import write_prediction_log
    from .pipeline import FittedModel, PipelineConfig, predict
    from .profiles import load_profile_model
    from .retrieval import RetrievalDB
    from .rules import RuleStore

    backend = _backend(args)
    ds = _dataset(args.features)
    users, _ = _split_users(args, ds.users, "test")
    if args.user:
        users = [args.user]
    cfg = PipelineConfig(window=args.window, k=args.k, use_rules=not args.no_rules,
                         use_profiles=not args.no_profiles, use_retrieval=not args.no_retrieval,
                         metric=args.metric, eval_tasks=_tasks(args.tasks), jobs=args.jobs)
    rules = RuleStore.load(args.rules) if args.rules else RuleStore()
    if cfg.use_rules and not args.rules:
        raise CliError("--rules is required unless --no-rules is given")
    if cfg.use_rules:
        missing = [t for t in cfg.eval_tasks if t not in rules and ds.keys(users=users, tasks=(t,))]
        if missing:
            raise CliError(f"no rule for task {missing[0]!r} in {args.rules}")
    model = load_profile_model(args.profiles)[0] if args.profiles else None
    if cfg.use_profiles and model is None:
        raise CliError("--profiles is required unless --no-profiles is given")
    db = RetrievalDB.load(args.db) if args.db else None
    if cfg.use_retrieval and db is None:
        raise CliError("--db is required unless --no-retrieval is given")
    if db is not None and db.window is not None and db.window != cfg.window:
        raise CliError(f"database tables have T={db.window} but --window is {cfg.window}")
    stats = PopulationStats.load(args.stats)
    fm = FittedModel(cfg, stats, rules, model, {}, db)
    results = predict(fm, ds, users, backend, cfg)
    windows = [w for key in sorted(results) for w in results[key].windows]
    write_prediction_log(args.out, windows)
    logger.info("%d sessions, %d model calls", len(results), sum(r.n_calls for r in results.values()))
    return 0


def cmd_evaluate(args) -> int:
    from .eval.metrics import confusion, format_report, metrics, per_user_accuracy, write_metric_rows, write_per_user
    from .inference.session import expand_labels, read_prediction_log

    windows = read_prediction_log(args.predictions)
    if not windows:
        raise CliError(f"{args.predictions}: empty prediction log")
    labels = _load_labels(args.labels)
    by_session: dict = {}
    for w in windows:
        by_session.setdefault((w.user_id, w.task_id), []).append(w)
    preds, truth, per, seen = [], [], {}, {}
    for key in sorted(by_session):
        if key not in labels:
            raise CliError(f"no labels for {key[0]}/{key[1]}")
        p = expand_labels(sorted(by_session[key], key=lambda w: w.window_end), 0)
        y = labels[key][: len(p)]
        if len(y) < len(p):
            raise CliError(f"labels for {key[0]}/{key[1]} cover {len(y)} s but predictions cover {len(p)} s")
        preds.extend(p)
        truth.extend(y)
        per[key] = p
        seen[key] = y
    cm = confusion(preds, truth)
    report = metrics(cm)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_text(out / "summary.txt", format_report(report, cm, title="evaluation"))
    write_metric_rows(out / "metrics.csv", [report.row()])
    write_per_user(out / "per_user.csv", out / "accuracy_cdf.csv", per_user_accuracy(per, seen))
    sys.stdout.write(format_report(report, cm))
    return 0


def cmd_perturb(args) -> int:
    from .eval.counterfactual import counterfactual_run
    from .gaze.normalize import PopulationStats, normalize
    from .gaze.table import build_table
    from .inference.mock import PredictionRequest
    from .inference.prompts import assemble_prompts
    from .inference.response import parse_response
    from .llm import invoke
    from .pipeline import user_profile
    from .profiles import load_profile_model
    from .retrieval import RetrievalDB, retrieve
    from .rules import RuleStore

    backend = _backend(args)
    ds = _dataset(args.features)
    users, _ = _split_users(args, ds.users, "test")
    rule = RuleStore.load(args.rules).get(args.task)
    if rule is None:
        raise CliError(f"no rule for task {args.task!r} in {args.rules}")
    stats = PopulationStats.load(args.stats)
    model = load_profile_model(args.profiles)[0] if args.profiles else None
    db = RetrievalDB.load(args.db) if args.db else None
    keys = ds.keys(users=users, tasks=(args.task,))
    if not keys:
        raise CliError(f"no {args.task} sessions for the selected users")
    candidates = [(key, end) for key in keys for end in range(args.window - 1, len(ds.series[key]), args.window)]
    rng = np.random.default_rng(args.seed)
    pick = np.sort(rng.choice(len(candidates), min(args.samples, len(candidates)), replace=False))
    profiles = {u: user_profile(model, ds, u) for u in sorted({k[0] for k in keys})} if model else {}
    Z = {key: normalize(ds.series[key], stats) for key in keys}
    samples, contexts = [], {}
    for i in pick:
        key, end = candidates[i]
        table = build_table(Z[key], end, args.window, key[0], key[1])
        prof = profiles.get(key[0])
        refs = []
        if db is not None:
            refs = list(retrieve(db, table, args.task, getattr(prof, "name", ""), args.k).records)
        samples.append(table)
        contexts[(table.user_id, table.end_second)] = (prof, tuple(refs))

    # References stay fixed per sample so only the perturbed feature changes.
    def predict_fn(table):
        prof, refs = contexts[(table.user_id, table.end_second)]
        prompts = assemble_prompts(rule, prof, list(refs), table, args.task, args.window, stats)
        completion = invoke(backend, prompts.system, prompts.user, PredictionRequest(rule, prof, refs, table))
        return parse_response(completion.text)

    features = args.feature.split(",") if args.feature else rule.features[: args.top]
    report = counterfactual_run(samples, features, predict_fn, task_id=args.task)
    report.save_csv(args.out)
    for r in report.rows:
        sys.stdout.write(f"{r.task_id} {r.feature} (#{r.rank}) flip={r.flip_rate:.2f}% "
                         f"direction={r.direction_correct:.2f}% attribution={r.attribution_correct:.2f}%\n")
    return 0


def _load_raw(args):
    from .datakit.labels import labels_by_session, read_labels_csv
    from .gaze.recording import read_gaze_csv

    recs = [read_gaze_csv(f) for f in _gaze_files([args.data])]
    labels_path = args.labels or str(Path(args.data) / "labels.csv")
    labels = labels_by_session(read_labels_csv(labels_path))
    return recs, labels


def cmd_ablate(args) -> int:
    from .eval.ablation import ablation_grid, run_ablations, write_ablation_csv
    from .pipeline import PipelineConfig, build_dataset

    windows = [int(w) for w in args.windows.split(",")] if args.windows else []
    cells = ablation_grid(windows, modules=args.modules)
    recs, labels = _load_raw(args)
    ds = build_dataset(recs, labels)
    manifest = None
    if args.split:
        from .datakit.split import SplitManifest

        manifest = SplitManifest.load(args.split)
    base = PipelineConfig(window=args.window, k=args.k, seed=args.seed, jobs=args.jobs)
    backend = _backend(args)
    rows = run_ablations(ds, cells, base, backend=backend, split=manifest)
    write_ablation_csv(args.out, rows, timing=not args.no_timing)
    for r in rows:
        acc = "failed" if r.accuracy is None else f"{r.accuracy:.4f}"
        sys.stdout.write(f"{r.cell}: accuracy={acc}\n")
    return 0


def cmd_synth(args) -> int:
    from .datakit.synth import SynthConfig, synth_generate

    cfg = SynthConfig(n_users=args.users, tasks=_tasks(args.tasks, TASKS), duration_s=args.duration,
                      noise_scale=args.noise, seed=args.seed)
    synth_generate(cfg).save(args.out)
    return 0


def cmd_interpolate(args) -> int:
    from .datakit.labels import interpolate_labels, read_reports_csv, read_spans_csv, write_labels_csv

    reports = read_reports_csv(args.reports)
    spans = read_spans_csv(args.spans)
    rows = []
    for key in sorted(set(reports) | set(spans)):
        if key not in spans:
            raise CliError(f"reports for {key[0]}/{key[1]} but no task spans")
        if key not in reports:
            raise CliError(f"task spans for {key[0]}/{key[1]} but no reports")
        rows.extend(interpolate_labels(reports[key], spans[key], key[1], user=key[0], task=key[1]))
    write_labels_csv(args.out, rows)
    return 0


def cmd_split(args) -> int:
    from .datakit.split import split_users

    src = Path(args.users_from)
    if src.is_dir():
        users = {f.stem.rpartition("_")[0] for f in _gaze_files([src])}
    elif src.suffix == ".jsonl":
        users = {u for u, _ in _load_features(src)}
    else:
        users = {line.strip() for line in src.read_text(encoding="utf-8").splitlines()
                 if line.strip() and not line.startswith("#")}
    if len(users) < 2:
        raise CliError("need at least two users to split")
    manifest = split_users(users, args.ratio, args.seed)
    manifest.save(args.out)
    sys.stdout.write(f"train={len(manifest.train)} test={len(manifest.test)}\n")
    return 0


def cmd_inject_noise(args) -> int:
    from .datakit.inject import inject_label_noise
    from .datakit.labels import LabeledSecond, read_labels_csv, write_labels_csv

    rows = read_labels_csv(args.labels)
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.user, r.task), []).append(r)
    out = []
    for i, key in enumerate(sorted(groups)):
        g = sorted(groups[key], key=lambda r: r.second)
        noisy = inject_label_noise([r.level3 for r in g], args.rate, seed=args.seed + i)
        out.extend(LabeledSecond(r.user, r.task, r.second, lab, r.source) for r, lab in zip(g, noisy))
    write_labels_csv(args.out, out)
    return 0


def cmd_inject_missing(args) -> int:
    from .datakit.inject import inject_missing
    from .gaze.recording import read_gaze_csv, write_gaze_csv

    out = Path(args.out_dir)
    for i, f in enumerate(_gaze_files(args.input)):
        rec = inject_missing(read_gaze_csv(f), args.ratio, seed=args.seed + i)
        write_gaze_csv(out / f.name, rec)
    return 0


# ---------------------------------------------------------------- parser


def _add_backend(p) -> None:
    p.add_argument("--backend", choices=("mock", "remote"), default="mock", help="model backend (default: mock)")
    p.add_argument("--base-url", default=None, help="chat-completion endpoint (or GAZEMIND_BASE_URL)")
    p.add_argument("--model", default=None, help="remote model name (or GAZEMIND_MODEL)")
    p.add_argument("--token-env", default="GAZEMIND_API_KEY", help="environment variable holding the API token")
    p.add_argument("--timeout", type=float, default=None, help="per-request timeout in seconds")
    p.add_argument("--retries", type=int, default=None, help="retries for timeouts and 5xx/429 responses")


def _add_split(p, part: str) -> None:
    p.add_argument("--split", default=None, help=f"split manifest; restricts to {part} users")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazemind", description="Gaze-based cognitive load pipeline.")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="global random seed")
    parser.add_argument("--config", default=None, help="flat key = value file supplying option defaults")
    parser.add_argument("--jobs", type=int, default=1, help="maximum worker count")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    p = add("featurize", cmd_featurize, "Detect gaze events and write per-second features.")
    p.add_argument("--input", nargs="+", required=True, help="gaze CSV files or directories of <user>_<task>.csv")
    p.add_argument("--out", required=True, help="feature series JSONL")
    p.add_argument("--threshold", type=float, default=30.0, help="I-VT velocity threshold (deg/s)")
    p.add_argument("--blink-min-ms", type=float, default=70.0, help="shortest invalid run counted as a blink")
    p.add_argument("--blink-max-ms", type=float, default=500.0, help="longest invalid run counted as a blink")

    p = add("stats", cmd_stats, "Fit population feature statistics on training users.")
    p.add_argument("--features", required=True, help="feature series JSONL")
    _add_split(p, "train")
    p.add_argument("--out", required=True, help="population statistics JSON")

    p = add("gen-rules", cmd_gen_rules, "Generate task-guidance rules from labelled training features.")
    p.add_argument("--train", required=True, help="feature series JSONL")
    p.add_argument("--labels", required=True, help="label CSV (user,task,second,level3,source)")
    p.add_argument("--task", default="all", help="task id(s), comma separated, or 'all' for the evaluation tasks")
    p.add_argument("--stats", default=None, help="population statistics JSON (fitted on --train if absent)")
    _add_split(p, "train")
    p.add_argument("--min-sep", type=float, default=0.3, help="minimum separation score for a ranked feature")
    p.add_argument("--out", required=True, help="rule JSONL (existing tasks are kept unless --overwrite)")
    p.add_argument("--overwrite", action="store_true", help="replace the rule file instead of merging")
    _add_backend(p)

    p = add("profile-fit", cmd_profile_fit, "Cluster training users into profiles.")
    p.add_argument("--features", required=True, help="feature series JSONL")
    _add_split(p, "train")
    p.add_argument("--k-range", default="2-6", help="candidate cluster counts, e.g. 2-6 or 2,3,4")
    p.add_argument("--out", required=True, help="profile model JSONL")

    p = add("profile-assign", cmd_profile_assign, "Assign one user to a profile from calibration features.")
    p.add_argument("--profiles", required=True, help="profile model JSONL")
    p.add_argument("--calibration", required=True, help="feature series JSONL containing the user's sessions")
    p.add_argument("--user", required=True, help="user id")
    p.add_argument("--out", default=None, help="optional JSONL for the assignment")

    p = add("build-db", cmd_build_db, "Build the retrieval database from training windows.")
    p.add_argument("--features", required=True, help="feature series JSONL")
    p.add_argument("--labels", required=True, help="label CSV")
    p.add_argument("--stats", default=None, help="population statistics JSON")
    p.add_argument("--profiles", required=True, help="profile model JSONL with training assignments")
    _add_split(p, "train")
    p.add_argument("--tasks", default="all", help="tasks to index (default: evaluation tasks)")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW, help="window length T in seconds")
    p.add_argument("--stride", type=int, default=1, help="seconds between stored windows")
    p.add_argument("--out", required=True, help="database JSONL")

    p = add("retrieve", cmd_retrieve, "Query the retrieval database with one feature table.")
    p.add_argument("--db", required=True, help="database JSONL")
    p.add_argument("--query", required=True, help="table file: JSON record or rendered markdown")
    p.add_argument("--task", required=True, help="task id")
    p.add_argument("--profile", default="", help="profile name")
    p.add_argument("-k", type=int, default=DEFAULT_K, help="number of references")
    p.add_argument("--metric", choices=("descriptor", "cosine"), default="descriptor", help="similarity")
    p.add_argument("--exclude-user", default=None, help="skip records from this user")

    p = add("predict", cmd_predict, "Predict per-window cognitive load for evaluation sessions.")
    p.add_argument("--features", required=True, help="feature series JSONL")
    p.add_argument("--stats", required=True, help="population statistics JSON")
    p.add_argument("--rules", default=None, help="rule JSONL")
    p.add_argument("--profiles", default=None, help="profile model JSONL")
    p.add_argument("--db", default=None, help="database JSONL")
    _add_split(p, "test")
    p.add_argument("--user", default=None, help="predict a single user")
    p.add_argument("--tasks", default="all", help="tasks to predict (default: evaluation tasks)")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW, help="window length T in seconds")
    p.add_argument("-k", type=int, default=DEFAULT_K, help="number of references")
    p.add_argument("--metric", choices=("descriptor", "cosine"), default="descriptor", help="similarity")
    p.add_argument("--no-rules", action="store_true", help="generic feature definitions instead of task rules")
    p.add_argument("--no-profiles", action="store_true", help="population baseline instead of user profiles")
    p.add_argument("--no-retrieval", action="store_true", help="no reference examples")
    p.add_argument("--out", required=True, help="prediction log JSONL")
    _add_backend(p)

    p = add("evaluate", cmd_evaluate, "Score a prediction log against per-second labels.")
    p.add_argument("--predictions", required=True, help="prediction log JSONL")
    p.add_argument("--labels", required=True, help="label CSV")
    p.add_argument("--out-dir", required=True, help="directory for summary.txt, metrics.csv and per-user CSVs")

    p = add("perturb", cmd_perturb, "Counterfactual sign flips of top-ranked rule features.")
    p.add_argument("--features", required=True, help="feature series JSONL")
    p.add_argument("--stats", required=True, help="population statistics JSON")
    p.add_argument("--rules", required=True, help="rule JSONL")
    p.add_argument("--profiles", default=None, help="profile model JSONL")
    p.add_argument("--db", default=None, help="database JSONL")
    p.add_argument("--task", required=True, help="task id")
    _add_split(p, "test")
    p.add_argument("--samples", type=int, default=200, help="number of windows to perturb")
    p.add_argument("--top", type=int, default=3, help="perturb the top-N rule features")
    p.add_argument("--feature", default=None, help="comma-separated features instead of --top")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW, help="window length T in seconds")
    p.add_argument("-k", type=int, default=DEFAULT_K, help="number of references")
    p.add_argument("--out", required=True, help="counterfactual report CSV")
    _add_backend(p)

    p = add("ablate", cmd_ablate, "Run the pipeline over window lengths and module toggles.")
    p.add_argument("--data", required=True, help="directory of <user>_<task>.csv recordings")
    p.add_argument("--labels", default=None, help="label CSV (default: <data>/labels.csv)")
    _add_split(p, "train/test")
    p.add_argument("--windows", default=None, help="comma-separated window lengths, e.g. 3,5,10,20")
    p.add_argument("--modules", action="store_true", help="add the module on/off cells")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW, help="window length for module cells")
    p.add_argument("-k", type=int, default=DEFAULT_K, help="number of references")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock columns (byte-stable output)")
    p.add_argument("--out", required=True, help="ablation report CSV")
    _add_backend(p)

    p = add("synth", cmd_synth, "Generate a synthetic cohort with ground-truth labels.")
    p.add_argument("--users", type=int, default=30, help="number of users")
    p.add_argument("--tasks", default="all", help="tasks to generate (default: all three)")
    p.add_argument("--duration", type=int, default=300, help="seconds per reading/gaming session")
    p.add_argument("--noise", type=float, default=0.25, help="noise scale (0 = noiseless)")
    p.add_argument("--out", required=True, help="output directory")

    p = add("interpolate", cmd_interpolate, "Turn load reports into per-second labels.")
    p.add_argument("--reports", required=True, help="report CSV (user,task,timestamp_s,level7)")
    p.add_argument("--spans", required=True, help="task span CSV (user,task,start_s,end_s)")
    p.add_argument("--out", required=True, help="label CSV")

    p = add("split", cmd_split, "Split users into train and test sets.")
    p.add_argument("--users-from", required=True, help="recording directory, feature JSONL or user-id list")
    p.add_argument("--ratio", type=float, default=0.7, help="training fraction")
    p.add_argument("--out", required=True, help="split manifest")

    p = add("inject-noise", cmd_inject_noise, "Flip a fraction of labels to adjacent levels.")
    p.add_argument("--labels", required=True, help="label CSV")
    p.add_argument("--rate", type=float, required=True, help="fraction of seconds to flip per session")
    p.add_argument("--out", required=True, help="noisy label CSV")

    p = add("inject-missing", cmd_inject_missing, "Drop and re-interpolate a fraction of gaze samples.")
    p.add_argument("--input", nargs="+", required=True, help="gaze CSV files or directories")
    p.add_argument("--ratio", type=float, required=True, help="fraction of samples to drop")
    p.add_argument("--out-dir", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = read_config(args.config)
            sub = parser._subparsers._group_actions[0].choices[args.command]
            args = _apply_config(parser, sub, argv, cfg)
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one parseable line
        msg = str(exc).replace("\n", " ")
        if isinstance(exc, KeyError) and exc.args:
            msg = str(exc.args[0])
        sys.stderr.write(f"gazemind: error: {args.command}: {type(exc).__name__}: {msg}\n")
        if args.verbose:
            logger.exception("details")
        return 1


if __name__ == "__main__":
    sys.exit(main())
