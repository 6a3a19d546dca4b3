"""Command-line pipeline: every analysis is a subcommand with seeded, manifest-tracked outputs.

Each subcommand writes its artifacts plus a ``manifest.json`` (input hashes,
resolved config, seed, tool version) into ``--out``. Outputs carry no
timestamps, so identical config + seed reproduce byte-identical files.
Config values come from ``--config`` (JSON); explicit flags override them.
Set HDL_LOG to control log verbosity.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Optional, Sequence

import click
import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_INTERVENTION_MONTH,
    composition_table,
    coping_conditionals,
    its_fit,
    monthly_proportions,
    write_composition_csv,
    write_coping_csv,
    write_its_csv,
    write_its_series_csv,
)
from .corpus import (
    DEFAULT_KEYWORDS,
    DEFAULT_LONELINESS_SUBREDDITS,
    EXCLUDED,
    FeatureVector,
    LabeledTarget,
    Post,
    SplitAssignment,
    candidate_filter,
    era_of,
    hash_featurize,
    join,
    load_embeddings,
    month_index_of,
    read_labeled,
    read_posts,
    split_dataset,
    stratified_sample,
    write_embeddings,
    write_labeled,
)
from .metrics import evaluate_run, summarize_runs, write_report_csv
from .models import (
    MODEL_KINDS,
    EmbedMlpClassifier,
    HdlnClassifier,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .schema import aggregate_annotations, default_schema, interrater_agreement, read_annotations
from .validation import targets_matrix

logger = logging.getLogger(__name__)

CONFIG_PATH_KEYS = ("posts", "annotations", "embeddings", "checkpoint", "split_file", "labeled", "pred")
CONFIG_KEYS = set(CONFIG_PATH_KEYS) | {
    "out",
    "model",
    "beta",
    "seed",
    "epochs",
    "batch_size",
    "lr",
    "warmup_ratio",
    "patience",
    "intervention_month",
    "category",
    "label",
    "group",
    "features",
    "hash_dim",
    "target_n",
    "subreddits",
    "keywords",
    "mode",
}


class CliError(click.ClickException):
    def show(self, file=None) -> None:
        # Machine-readable error record on stderr, nonzero exit via ClickException.
        click.echo(json.dumps({"error": "CliError", "message": self.message}), err=True)


def _fail_on_error(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except Exception as exc:
            click.echo(
                json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True
            )
            raise SystemExit(1)

    return wrapper


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    for key in CONFIG_PATH_KEYS:
        if key in cfg and cfg[key] is not None and not Path(cfg[key]).exists():
            raise CliError(f"config path {key}={cfg[key]!r} does not exist")
    return cfg


def _resolve(flag_value, config: dict, key: str, default=None, required: bool = False):
    value = flag_value if flag_value is not None else config.get(key, default)
    if required and value is None:
        raise CliError(f"missing required option --{key.replace('_', '-')}")
    return value


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, inputs: Sequence[str], extra: Optional[dict] = None) -> None:
    manifest = {
        "tool": "hdlkit",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(str(p)) for p in inputs},
    }
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _out_dir(out: Optional[str], config: dict) -> Path:
    path = Path(_resolve(out, config, "out", required=True))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _subreddit_set(value: Optional[str], config: dict) -> frozenset[str]:
    raw = _resolve(value, config, "subreddits")
    if raw is None:
        return DEFAULT_LONELINESS_SUBREDDITS
    return frozenset(s.strip() for s in str(raw).split(",") if s.strip())


def _keyword_list(value: Optional[str], config: dict) -> tuple[str, ...]:
    raw = _resolve(value, config, "keywords")
    if raw is None:
        return DEFAULT_KEYWORDS
    return tuple(s.strip() for s in str(raw).split(",") if s.strip())


def _parse_group_expr(expr: Optional[str]) -> tuple[Optional[str], Optional[set[str]]]:
    """'field' groups by field; 'field:v1|v2' filters to those values; None/'all' means everything."""
    if expr is None or expr == "all":
        return None, None
    if ":" in expr:
        field, _, values = expr.partition(":")
        return field.strip(), {v.strip() for v in values.split("|") if v.strip()}
    return expr.strip(), None


_GROUP_FIELDS = ("subreddit", "era", "year")


def _group_value(post: Post, field: str) -> str:
    if field == "subreddit":
        return post.subreddit
    if field == "era":
        return era_of(post.created_utc)
    if field == "year":
        from datetime import datetime, timezone

        return str(datetime.fromtimestamp(post.created_utc, tz=timezone.utc).year)
    raise CliError(f"unknown group field {field!r}; expected one of {_GROUP_FIELDS}")


def _features_for(
    config: dict,
    features: Optional[str],
    embeddings: Optional[str],
    posts_path: Optional[str],
    hash_dim: Optional[int],
    seed: int,
) -> dict[str, FeatureVector]:
    mode = _resolve(features, config, "features", default=None)
    emb_path = _resolve(embeddings, config, "embeddings")
    if mode is None:
        mode = "embeddings" if emb_path else "hash"
    if mode == "embeddings":
        if emb_path is None:
            raise CliError("--features embeddings requires --embeddings")
        return load_embeddings(emb_path)
    if mode == "hash":
        posts_file = _resolve(posts_path, config, "posts", required=True)
        dim = int(_resolve(hash_dim, config, "hash_dim", default=256))
        return {p.id: hash_featurize(p, dim, seed) for p in read_posts(posts_file)}
    raise CliError(f"unknown --features mode {mode!r}; expected 'hash' or 'embeddings'")


def _read_predictions(path: str, schema) -> list[tuple[str, np.ndarray]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                values = [v for b in schema.blocks for v in row[b.name]]
            except (KeyError, ValueError, TypeError) as exc:
                raise CliError(f"{path}:{lineno}: malformed prediction row: {exc}")
            out.append((str(row["post_id"]), np.asarray(values, dtype=np.float64)))
    return out


def _write_predictions(path: Path, ids: Sequence[str], probs: np.ndarray, schema) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pid, row in zip(ids, probs):
            rec: dict[str, object] = {"post_id": pid}
            start = 0
            for b in schema.blocks:
                rec[b.name] = [float(v) for v in row[start : start + b.size]]
                start += b.size
            fh.write(json.dumps(rec) + "\n")


@click.group()
@click.version_option(version=__version__, prog_name="hdlkit")
def main() -> None:
    """Hierarchical distributional-label pipeline."""
    logging.basicConfig(level=os.environ.get("HDL_LOG", "WARNING").upper())


config_option = click.option("--config", type=click.Path(exists=True), default=None, help="JSON config; flags override it.")
out_option = click.option("--out", type=click.Path(), default=None, help="Output directory.")
seed_option = click.option("--seed", type=int, default=None, help="Pipeline seed (default 0).")


@main.command("filter")
@config_option
@click.option("--posts", type=click.Path(exists=True), default=None)
@click.option("--subreddits", default=None, help="Comma-separated loneliness subreddit names.")
@click.option("--keywords", default=None, help="Comma-separated keyword stems.")
@out_option
@_fail_on_error
def filter_cmd(config, posts, subreddits, keywords, out):
    """Route posts to lonely-candidate / nonlonely-candidate / excluded."""
    cfg = _load_config(config)
    out_dir = _out_dir(out, cfg)
    posts_path = _resolve(posts, cfg, "posts", required=True)
    subs = _subreddit_set(subreddits, cfg)
    keys = _keyword_list(keywords, cfg)
    counts = {"lonely-candidate": 0, "nonlonely-candidate": 0, EXCLUDED: 0}
    with open(out_dir / "kinds.jsonl", "w", encoding="utf-8") as fh:
        for post in read_posts(posts_path):
            kind = candidate_filter(post, subs, keys)
            counts[kind] += 1
            fh.write(json.dumps({"id": post.id, "kind": kind}) + "\n")
    _write_manifest(
        out_dir,
        "filter",
        {"posts": posts_path, "subreddits": sorted(subs), "keywords": list(keys)},
        [posts_path],
        extra={"counts": counts},
    )


@main.command("aggregate")
@config_option
@click.option("--annotations", type=click.Path(exists=True), default=None)
@click.option("--posts", type=click.Path(exists=True), default=None)
@click.option("--subreddits", default=None)
@click.option("--keywords", default=None)
@out_option
@_fail_on_error
def aggregate_cmd(config, annotations, posts, subreddits, keywords, out):
    """Aggregate per-post annotations into distributional targets (plus agreement table)."""
    cfg = _load_config(config)
    out_dir = _out_dir(out, cfg)
    ann_path = _resolve(annotations, cfg, "annotations", required=True)
    posts_path = _resolve(posts, cfg, "posts", required=True)
    subs = _subreddit_set(subreddits, cfg)
    keys = _keyword_list(keywords, cfg)

    schema = default_schema()
    posts_by_id = {p.id: p for p in read_posts(posts_path)}
    records = read_annotations(ann_path)
    by_post: dict[str, list] = {}
    for r in records:
        by_post.setdefault(r.post_id, []).append(r)

    targets: list[LabeledTarget] = []
    counts = {"retained": 0, "discarded": 0, "excluded": 0, "missing_post": 0}
    for pid in sorted(by_post):
        post = posts_by_id.get(pid)
        if post is None:
            counts["missing_post"] += 1
            logger.warning("annotated post %s not in posts file; skipped", pid)
            continue
        kind = candidate_filter(post, subs, keys)
        if kind == EXCLUDED:
            counts["excluded"] += 1
            continue
        labels = aggregate_annotations(by_post[pid], kind, schema)
        if labels is None:
            counts["discarded"] += 1
            continue
        counts["retained"] += 1
        targets.append(LabeledTarget(post_id=pid, labels=labels, month_index=month_index_of(post.created_utc)))
    write_labeled(str(out_dir / "labeled.jsonl"), targets)

    with open(out_dir / "agreement.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "annotator_a", "annotator_b", "agreement"])
        for block in schema.blocks:
            try:
                pairs = interrater_agreement(records, block.name, schema)
            except Exception:
                continue
            for (a, b), value in pairs.items():
                writer.writerow([block.name, a, b, repr(value)])

    _write_manifest(
        out_dir,
        "aggregate",
        {"annotations": ann_path, "posts": posts_path, "subreddits": sorted(subs), "keywords": list(keys)},
        [ann_path, posts_path],
        extra={"counts": counts},
    )


@main.command("sample")
@config_option
@click.option("--posts", type=click.Path(exists=True), default=None)
@click.option("--target-n", type=int, default=None)
@seed_option
@out_option
@_fail_on_error
def sample_cmd(config, posts, target_n, seed, out):
    """Stratified sample preserving (subreddit, era) proportions."""
    cfg = _load_config(config)
    out_dir = _out_dir(out, cfg)
    posts_path = _resolve(posts, cfg, "posts", required=True)
    n = int(_resolve(target_n, cfg, "target_n", required=True))
    seed = int(_resolve(seed, cfg, "seed", default=0))
    population = read_posts(posts_path)
    sampled = stratified_sample(population, lambda p: (p.subreddit, era_of(p.created_utc)), n, seed)
    with open(out_dir / "sampled_posts.jsonl", "w", encoding="utf-8") as fh:
        for p in sampled:
            fh.write(
                json.dumps(
                    {"id": p.id, "subreddit": p.subreddit, "created_utc": p.created_utc, "title": p.title, "body": p.body}
                )
                + "\n"
            )
    _write_manifest(out_dir, "sample", {"posts": posts_path, "target_n": n, "seed": seed}, [posts_path])


@main.command("featurize")
@config_option
@click.option("--posts", type=click.Path(exists=True), default=None)
@click.option("--hash-dim", type=int, default=None)
@seed_option
@out_option
@_fail_on_error
def featurize_cmd(config, posts, hash_dim, seed, out):
    """Hash-featurize posts into the embeddings JSONL format."""
    cfg = _load_config(config)
    out_dir = _out_dir(out, cfg)
    posts_path = _resolve(posts, cfg, "posts", required=True)
    dim = int(_resolve(hash_dim, cfg, "hash_dim", default=256))
    seed = int(_resolve(seed, cfg, "seed", default=0))
    vectors = (hash_featurize(p, dim, seed) for p in read_posts(posts_path))
    n = write_embeddings(str(out_dir / "embeddings.jsonl"), vectors)
    _write_manifest(
        out_dir, "featurize", {"posts": posts_path, "hash_dim": dim, "seed": seed}, [posts_path], extra={"n_vectors": n}
    )


@main.command("split")
@config_option
@click.option("--labeled", type=click.Path(exists=True), default=None)
@seed_option
@out_option
@_fail_on_error
def split_cmd(config, labeled, seed, out):
    """Assign 70/20/10 train/validation/test splits."""
    cfg = _load_config(config)
    out_dir = _out_dir(out, cfg)
    labeled_path = _resolve(labeled, cfg, "labeled", required=True)
    seed = int(_resolve(seed, cfg, "seed", default=0))
    targets = read_labeled(labeled_path)
    assignment = split_dataset(targets, seed)
    payload = {"seed": assignment.seed, "assignment": assignment.assignment}
    (out_dir / "split.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _write_manifest(out_dir, "split", {"labeled": labeled_path, "seed": seed}, [labeled_path])


def _load_split(path: str) -> SplitAssignment:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return SplitAssignment(assignment=dict(payload["assignment"]), seed=int(payload["seed"]))


@main.command("train")
@config_option
@click.option("--labeled", type=click.Path(exists=True), default=None)
@click.option("--embeddings", type=click.Path(exists=True), default=None)
@click.option("--posts", type=click.Path(exists=True), default=None)
@click.option("--features", type=click.Choice(["hash", "embeddings"]), default=None)
@click.option("--hash-dim", type=int, default=None)
@click.option("--split-file", type=click.Path(exists=True), default=None)
@click.option("--model", "model_kind", type=click.Choice(sorted(MODEL_KINDS)), default=None)
@click.option("--beta", type=float, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--warmup-ratio", type=float, default=None)
@click.option("--patience", type=int, default=None)
@seed_option
@out_option
@_fail_on_error
def train_cmd(config, labeled, embeddings, posts, features, hash_dim, split_file, model_kind, beta, epochs, batch_size, lr, warmup_ratio, patience, seed, out):
    """Train a model on the labeled dataset; writes checkpoint + per-epoch history."""
    cfg = _load_config(config)
    out_dir = _out_dir(out, cfg)
    labeled_path = _resolve(labeled, cfg, "labeled", required=True)
    kind = _resolve(model_kind, cfg, "model", default="hdln")
    if kind == "embed-mlp" and beta is not None:
        raise CliError("--beta only applies to --model hdln")
    seed = int(_resolve(seed, cfg, "seed", default=0))
    config_epochs = _resolve(epochs, cfg, "epochs")
    train_config = TrainConfig(
        epochs=int(config_epochs) if config_epochs is not None else (20 if kind == "hdln" else 10),
        batch_size=int(_resolve(batch_size, cfg, "batch_size", default=16)),
        base_lr=float(_resolve(lr, cfg, "lr", default=2e-5)),
        warmup_ratio=float(_resolve(warmup_ratio, cfg, "warmup_ratio", default=0.1)),
        patience=int(_resolve(patience, cfg, "patience", default=3)),
        beta=float(_resolve(beta, cfg, "beta", default=0.0)),
        seed=seed,
    )

    targets = read_labeled(labeled_path)
    feats = _features_for(cfg, features, embeddings, posts, hash_dim, seed)
    examples, report = join([t.post_id for t in targets], targets, feats)
    if report.missing_features:
        logger.warning("join dropped %d posts without features", report.missing_features)

    split_path = _resolve(split_file, cfg, "split_file")
    assignment = _load_split(split_path) if split_path else split_dataset(examples, seed)
    by_split: dict[str, list] = {"train": [], "validation": [], "test": []}
    for ex in examples:
        split = assignment.assignment.get(ex.post_id)
        if split:
            by_split[split].append(ex)

    est, history = train(kind, by_split["train"], by_split["validation"], train_config)
    save_checkpoint(est, str(out_dir / "model.ckpt"))
    with open(out_dir / "history.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_accuracy", "improved", "lr_last"])
        for entry in history:
            writer.writerow(
                [
                    entry["epoch"],
                    repr(entry["train_loss"]),
                    repr(entry.get("val_accuracy", "")),
                    entry.get("improved", ""),
                    repr(entry["lr_last"]),
                ]
            )
    inputs = [labeled_path] + ([split_path] if split_path else [])
    emb_path = _resolve(embeddings, cfg, "embeddings")
    if emb_path:
        inputs.append(emb_path)
    _write_manifest(
        out_dir,
        "train",
        {
            "labeled": labeled_path,
            "model": kind,
            "seed": seed,
            "epochs": train_config.epochs,
            "batch_size": train_config.batch_size,
            "lr": train_config.base_lr,
            "warmup_ratio": train_config.warmup_ratio,
            "patience": train_config.patience,
            "beta": train_config.beta,
            "split": "file" if split_path else "auto",
        },
        inputs,
        extra={"join_report": report.as_dict(), "split_sizes": {k: len(v) for k, v in by_split.items()}},
    )


@main.command("predict")
@config_option
@click.option("--checkpoint", type=click.Path(exists=True), default=None)
@click.option("--embeddings", type=click.Path(exists=True), default=None)
@click.option("--posts", type=click.Path(exists=True), default=None)
@click.option("--features", type=click.Choice(["hash", "embeddings"]), default=None)
@click.option("--hash-dim", type=int, default=None)
@click.option("--beta", type=float, default=None)
@seed_option
@out_option
@_fail_on_error
def predict_cmd(config, checkpoint, embeddings, posts, features, hash_dim, beta, seed, out):
    """Predict block distributions for every feature row (HDLN: blended at --beta)."""
    cfg = _load_config(config)
    out_dir = _out_dir(out, cfg)
    ckpt_path = _resolve(checkpoint, cfg, "checkpoint", required=True)
    seed = int(_resolve(seed, cfg, "seed", default=0))
    est = load_checkpoint(ckpt_path)
    if isinstance(est, EmbedMlpClassifier) and beta is not None:
        raise CliError("--beta only applies to hdln checkpoints")
    feats = _features_for(cfg, features, embeddings, posts, hash_dim, seed)
    ids = sorted(feats)
    x = np.stack([feats[i].values for i in ids])
    if isinstance(est, HdlnClassifier):
        b = float(_resolve(beta, cfg, "beta", default=est.beta))
        probs = est.predict_bundle(x, beta=b).blended
    else:
        probs = est.predict_proba(x)
    _write_predictions(out_dir / "predictions.jsonl", ids, probs, est.schema_)
    inputs = [ckpt_path]
    emb_path = _resolve(embeddings, cfg, "embeddings")
    if emb_path:
        inputs.append(emb_path)
    _write_manifest(
        out_dir,
        "predict",
        {"checkpoint": ckpt_path, "seed": seed, "beta": float(beta) if beta is not None else getattr(est, "beta", None)},
        inputs,
        extra={"n_predictions": len(ids)},
    )


@main.command("eval")
@config_option
@click.option("--pred", "preds", type=click.Path(exists=True), multiple=True)
@click.option("--labeled", type=click.Path(exists=True), default=None)
@click.option("--split-file", type=click.Path(exists=True), default=None)
@click.option("--split-name", default="test", show_default=True)
@out_option
@_fail_on_error
def eval_cmd(config, preds, labeled, split_file, split_name, out):
    """Score one or more prediction files (mean and std across them)."""
    cfg = _load_config(config)
    out_dir = _out_dir(out, cfg)
    labeled_path = _resolve(labeled, cfg, "labeled", required=True)
    if not preds:
        raise CliError("at least one --pred file is required")
    schema = default_schema()
    targets = {t.post_id: t for t in read_labeled(labeled_path, schema)}
    keep: Optional[set[str]] = None
    split_path = _resolve(split_file, cfg, "split_file")
    if split_path:
        assignment = _load_split(split_path)
        keep = {pid for pid, s in assignment.assignment.items() if s == split_name}

    runs = []
    for pred_path in preds:
        rows = _read_predictions(pred_path, schema)
        pairs = [
            (vals, targets[pid].labels)
            for pid, vals in rows
            if pid in targets and (keep is None or pid in keep)
        ]
        if not pairs:
            raise CliError(f"{pred_path}: no overlap with the labeled {split_name} set")
        probs = np.stack([p for p, _ in pairs])
        t = targets_matrix([lab for _, lab in pairs], schema)
        runs.append(evaluate_run(probs, t, schema))
    summary = summarize_runs(runs)
    write_report_csv(str(out_dir / "report.csv"), summary)
    _write_manifest(
        out_dir,
        "eval",
        {"labeled": labeled_path, "preds": list(preds), "split_name": split_name},
        [labeled_path, *preds],
        extra={"n_runs": len(runs)},
    )


def _labels_with_posts(labeled_path: str, posts_path: str):
    targets = read_labeled(labeled_path)
    posts = {p.id: p for p in read_posts(posts_path)}
    joined = [(t, posts[t.post_id]) for t in targets if t.post_id in posts]
    if len(joined) < len(targets):
        logger.warning("%d labeled rows have no post and were dropped", len(targets) - len(joined))
    return joined


def _pred_rows_with_posts(pred_path: str, posts_path: str, schema):
    rows = _read_predictions(pred_path, schema)
    posts = {p.id: p for p in read_posts(posts_path)}
    joined = []
    for pid, vals in rows:
        post = posts.get(pid)
        if post is None:
            continue
        labels = _probs_to_labelset(vals, schema)
        joined.append((LabeledTarget(post_id=pid, labels=labels, month_index=month_index_of(post.created_utc)), post))
    return joined


def _probs_to_labelset(vals: np.ndarray, schema):
    from .schema import DistributionalLabel, PostLabelSet

    out = []
    start = 0
    for b in schema.blocks:
        block_vals = vals[start : start + b.size]
        total = float(block_vals.sum())
        if total > 0:
            block_vals = block_vals / total  # exact renormalization guards float drift
        out.append(DistributionalLabel(b, tuple(float(v) for v in block_vals)))
        start += b.size
    if out[0].values == (1.0, 0.0):
        # A saturated non-lonely prediction: analyses ignore its fine-grained
        # mass anyway, and the label-set invariant requires zeros here.
        out[1:] = [DistributionalLabel.zero(d.block) for d in out[1:]]
    return PostLabelSet(lonely=out[0], fine_grained=tuple(out[1:]))


def _analysis_source(cfg, labeled, pred, posts, schema):
    posts_path = _resolve(posts, cfg, "posts", required=True)
    if labeled is not None or pred is not None:
        labeled_path, pred_path = labeled, pred
    else:
        labeled_path, pred_path = cfg.get("labeled"), cfg.get("pred")
    if labeled_path and pred_path:
        raise CliError("pass either --labeled or --pred, not both")
    if labeled_path:
        return _labels_with_posts(labeled_path, posts_path), labeled_path, posts_path
    if pred_path:
        return _pred_rows_with_posts(pred_path, posts_path, schema), pred_path, posts_path
    raise CliError("one of --labeled or --pred is required")


@main.command("compose")
@config_option
@click.option("--labeled", type=click.Path(exists=True), default=None)
@click.option("--pred", type=click.Path(exists=True), default=None)
@click.option("--posts", type=click.Path(exists=True), default=None)
@click.option("--group", default=None, help="Grouping field (subreddit|era|year), optionally 'field:v1|v2' to filter.")
@out_option
@_fail_on_error
def compose_cmd(config, labeled, pred, posts, group, out):
    """Fine-grained category composition per group (percentages, NA removed)."""
    cfg = _load_config(config)
    out_dir = _out_dir(out, cfg)
    schema = default_schema()
    joined, source_path, posts_path = _analysis_source(cfg, labeled, pred, posts, schema)
    field, values = _parse_group_expr(_resolve(group, cfg, "group", default="subreddit"))
    field = field or "subreddit"
    if values is not None:
        joined = [(t, p) for t, p in joined if _group_value(p, field) in values]
    labels = [t.labels for t, _ in joined]
    groups = [_group_value(p, field) for _, p in joined]
    table = composition_table(labels, groups, schema)
    write_composition_csv(str(out_dir / "composition.csv"), table)
    _write_manifest(
        out_dir,
        "compose",
        {"source": source_path, "posts": posts_path, "group": field, "filter": sorted(values) if values else None},
        [source_path, posts_path],
    )


@main.command("coping")
@config_option
@click.option("--labeled", type=click.Path(exists=True), default=None)
@click.option("--pred", type=click.Path(exists=True), default=None)
@click.option("--posts", type=click.Path(exists=True), default=None)
@click.option("--category", default=None, help="Condition category: duration, context, or interpersonal.")
@click.option("--label", default=None, help="Condition label; default: every non-NA label of the category.")
@click.option("--mode", type=click.Choice(["soft", "argmax"]), default=None)
@click.option("--group", default=None, help="Optional filter 'field:v1|v2'.")
@out_option
@_fail_on_error
def coping_cmd(config, labeled, pred, posts, category, label, mode, group, out):
    """Interaction-style conditionals for one loneliness-form category."""
    cfg = _load_config(config)
    out_dir = _out_dir(out, cfg)
    schema = default_schema()
    joined, source_path, posts_path = _analysis_source(cfg, labeled, pred, posts, schema)
    category = _resolve(category, cfg, "category", required=True)
    mode = _resolve(mode, cfg, "mode", default="soft")
    field, values = _parse_group_expr(_resolve(group, cfg, "group"))
    if values is not None:
        joined = [(t, p) for t, p in joined if _group_value(p, field) in values]
    labels = [t.labels for t, _ in joined]
    block = schema.block(category)
    wanted = [label] if label else [l for l in block.labels if l != "na"]
    conditionals: dict[str, dict[str, float]] = {}
    for cond_label in wanted:
        try:
            conditionals[cond_label] = coping_conditionals(labels, category, cond_label, mode=mode, schema=schema)
        except Exception as exc:
            if label:
                raise
            logger.warning("skipping %s=%s: %s", category, cond_label, exc)
    if not conditionals:
        raise CliError(f"no condition label of {category!r} carries mass")
    write_coping_csv(str(out_dir / "coping.csv"), conditionals, category)
    _write_manifest(
        out_dir,
        "coping",
        {"source": source_path, "posts": posts_path, "category": category, "label": label, "mode": mode},
        [source_path, posts_path],
    )


@main.command("its")
@config_option
@click.option("--labeled", type=click.Path(exists=True), default=None)
@click.option("--pred", type=click.Path(exists=True), default=None)
@click.option("--posts", type=click.Path(exists=True), default=None)
@click.option("--category", default=None)
@click.option("--label", default=None)
@click.option("--group", default=None, help="Optional filter 'field:v1|v2'.")
@click.option("--intervention-month", type=int, default=None)
@out_option
@_fail_on_error
def its_cmd(config, labeled, pred, posts, category, label, group, intervention_month, out):
    """Interrupted time-series fit of a label's monthly proportion."""
    cfg = _load_config(config)
    out_dir = _out_dir(out, cfg)
    schema = default_schema()
    joined, source_path, posts_path = _analysis_source(cfg, labeled, pred, posts, schema)
    category = _resolve(category, cfg, "category", required=True)
    label = _resolve(label, cfg, "label", required=True)
    month = int(_resolve(intervention_month, cfg, "intervention_month", default=DEFAULT_INTERVENTION_MONTH))
    field, values = _parse_group_expr(_resolve(group, cfg, "group"))
    if values is not None:
        joined = [(t, p) for t, p in joined if _group_value(p, field) in values]
    if not joined:
        raise CliError("empty group after filtering")
    series = monthly_proportions(
        [t.labels for t, _ in joined],
        [t.month_index for t, _ in joined],
        category,
        label,
        intervention_month=month,
        schema=schema,
    )
    fit = its_fit(series)
    write_its_csv(str(out_dir / "its.csv"), fit)
    write_its_series_csv(str(out_dir / "series.csv"), series, fit)
    _write_manifest(
        out_dir,
        "its",
        {
            "source": source_path,
            "posts": posts_path,
            "category": category,
            "label": label,
            "intervention_month": month,
            "group": group,
        },
        [source_path, posts_path],
    )


@main.command("export-embeddings")
@config_option
@click.option("--checkpoint", type=click.Path(exists=True), default=None)
@click.option("--embeddings", type=click.Path(exists=True), default=None)
@click.option("--beta", type=float, default=None)
@out_option
@_fail_on_error
def export_embeddings_cmd(config, checkpoint, embeddings, beta, out):
    """CSV of predictions joined with raw embeddings, for external projection tools."""
    cfg = _load_config(config)
    out_dir = _out_dir(out, cfg)
    ckpt_path = _resolve(checkpoint, cfg, "checkpoint", required=True)
    emb_path = _resolve(embeddings, cfg, "embeddings", required=True)
    est = load_checkpoint(ckpt_path)
    feats = load_embeddings(emb_path)
    ids = sorted(feats)
    x = np.stack([feats[i].values for i in ids])
    if isinstance(est, HdlnClassifier):
        b = float(_resolve(beta, cfg, "beta", default=est.beta))
        probs = est.predict_bundle(x, beta=b).blended
    else:
        if beta is not None:
            raise CliError("--beta only applies to hdln checkpoints")
        probs = est.predict_proba(x)
    schema = est.schema_
    prob_cols = [f"p_{b.name}_{label}" for b in schema.blocks for label in b.labels]
    dim = x.shape[1]
    with open(out_dir / "pred_embeddings.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["post_id", *prob_cols, *[f"e{i}" for i in range(dim)]])
        for pid, prow, erow in zip(ids, probs, x):
            writer.writerow([pid, *[repr(float(v)) for v in prow], *[repr(float(v)) for v in erow]])
    _write_manifest(
        out_dir, "export-embeddings", {"checkpoint": ckpt_path, "embeddings": emb_path}, [ckpt_path, emb_path]
    )


if __name__ == "__main__":
    main()
