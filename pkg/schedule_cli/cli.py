"""
Command-line entry point.

Every command resolves its configuration, writes its outputs into a run
directory together with ``config.yml`` and ``manifest.json``, and exits with
0 (ok), 1 (usage), 2 (data error) or 3 (numeric failure).
"""

import argparse
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml

from schedule_domain import (
    STEPS_PER_DAY,
    PersonAttributes,
    SplitPlan,
    TooFewPersonsError,
    attributes_to_arrays,
    build_split,
    schedules_to_array,
)
from schedule_io import (
    load_checkpoint,
    make_synthetic_corpus,
    read_diaries,
    read_schedules,
    save_checkpoint,
    write_corpus,
)
from schedule_metrics import compare, compare_grouped, curve_tables, format_metrics_table
from schedule_models import (
    GeneratorModel,
    ImputerModel,
    MarkovModel,
    ModelStateError,
    NumericalError,
    TrainReport,
    evaluate_imputer,
    fit_markov,
    generate_for_attributes,
    impute_batch,
    paired_days,
    paired_weeks,
    reference_picks,
    sample_markov,
    scored_loss,
    synthesize_activity_weeks,
    train_generator,
    train_imputer,
)

from .config import RunConfig
from .runs import RunDirectory

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

REPORT_NAME = "train_report.json"
SPLIT_NAME = "split.json"
GROUP_COLUMNS = {"age": 0, "occupation": 1}


class UsageError(Exception):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _attributes_or_default(path: Optional[str], age: int, occupation: int, n: int, seed: int) -> List[PersonAttributes]:
    if path is None:
        return [PersonAttributes(age, occupation, f"g{i}") for i in range(n)]
    pool = [s.attributes for s in read_schedules(path)]
    picks = reference_picks(n, len(pool), seed)
    return [PersonAttributes(pool[j].age_class, pool[j].occupation_class, f"g{i}") for i, j in enumerate(picks)]


def _load_split(path: Optional[str], corpus, seed: int) -> Optional[SplitPlan]:
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            return SplitPlan.from_dict(json.load(fh))
    try:
        return build_split([item.person_id for item in corpus], seed)
    except TooFewPersonsError as err:
        logger.warning("%s; training and validating on the whole corpus", err)
        return None


def _write_split(run: RunDirectory, split: Optional[SplitPlan]) -> None:
    if split is not None:
        run.file(SPLIT_NAME).write_text(json.dumps(split.to_dict(), indent=2, sort_keys=True) + "\n")


def _write_report(run: RunDirectory, name: str, payload: str) -> None:
    run.file(name).write_text(payload + "\n", encoding="utf-8")


def _training_summary(checkpoint: str) -> Optional[dict]:
    path = Path(checkpoint).with_name(REPORT_NAME)
    if not path.exists():
        return None
    report = TrainReport.from_dict(json.loads(path.read_text(encoding="utf-8")))
    return {"best_loss": report.best_loss, "best_accuracy": report.best_accuracy, "best_epoch": report.best_epoch}


def _write_curves(run: RunDirectory, prefix: str, states: np.ndarray, labels: Sequence[str], max_lag: int) -> None:
    for name, frame in curve_tables(states, labels, max_lag).items():
        frame.to_csv(run.file(f"curves/{prefix}_{name}.csv"), float_format="%.6g")


# commands ------------------------------------------------------------------


def cmd_make_corpus(args, config: RunConfig, run: RunDirectory):
    corpus = config["corpus"]
    persons = args.persons or corpus["persons"]
    seed = corpus["seed"] if args.seed is None else args.seed
    schedules, diaries = make_synthetic_corpus(config.persona_spec(), persons, seed)
    write_corpus(schedules, run.file("weeks.csv"))
    write_corpus(diaries, run.file("diaries.csv"))
    logger.info("wrote %d weeks and %d diaries to %s", len(schedules), len(diaries), run.path)
    return [], {"corpus": seed}


def _train_seed(args, config: RunConfig) -> int:
    return config["training"]["seed"] if args.seed is None else args.seed


def cmd_train_gen(args, config: RunConfig, run: RunDirectory):
    mobility, _ = config.alphabets()
    corpus = read_schedules(args.corpus, mobility)
    seed = _train_seed(args, config)
    split = _load_split(args.split, corpus, config["training"]["split_seed"])
    fold = config["training"]["fold"] if args.fold is None else args.fold
    model, report = train_generator(corpus, split, fold, config.model_config("generator"), seed, verbose=args.verbose)
    save_checkpoint(model, run.file("generator.ckpt"))
    _write_report(run, REPORT_NAME, report.to_json())
    _write_split(run, split)
    return [args.corpus], {"training": seed, "split": config["training"]["split_seed"]}


def cmd_train_imp(args, config: RunConfig, run: RunDirectory):
    mobility, activities = config.alphabets()
    corpus = read_diaries(args.corpus, activities)
    seed = _train_seed(args, config)
    split = _load_split(args.split, corpus, config["training"]["split_seed"])
    fold = config["training"]["fold"] if args.fold is None else args.fold
    model, report = train_imputer(
        corpus, split, fold, config.model_config("imputer"), seed, verbose=args.verbose, mobility=mobility
    )
    save_checkpoint(model, run.file("imputer.ckpt"))
    _write_report(run, REPORT_NAME, report.to_json())
    _write_split(run, split)
    return [args.corpus], {"training": seed, "split": config["training"]["split_seed"]}


def _eval_settings(args, config: RunConfig) -> Tuple[int, int, float]:
    ev = config["evaluation"]
    n = ev["n"] if args.n is None else args.n
    seed = ev["seed"] if args.seed is None else args.seed
    temperature = ev["temperature"] if args.temperature is None else args.temperature
    if n < 1:
        raise ValueError(f"--n must be positive, got {n}")
    return n, seed, temperature


def cmd_generate(args, config: RunConfig, run: RunDirectory):
    n, seed, temperature = _eval_settings(args, config)
    model = load_checkpoint(args.model, expected_kind=GeneratorModel.KIND)
    attributes = _attributes_or_default(args.attributes_from, args.age, args.occupation, n, seed)
    weeks = generate_for_attributes(model, attributes, seed, temperature, verbose=args.verbose)
    write_corpus(weeks, run.file("generated.csv"))
    inputs = [args.model] + ([args.attributes_from] if args.attributes_from else [])
    return inputs, {"sampling": seed}


def cmd_impute(args, config: RunConfig, run: RunDirectory):
    _, seed, temperature = _eval_settings(args, config)
    model = load_checkpoint(args.model, expected_kind=ImputerModel.KIND)
    weeks = read_schedules(args.corpus)
    imputed = impute_batch(model, weeks, seed, temperature, verbose=args.verbose)
    write_corpus(imputed, run.file("imputed.csv"))
    return [args.model, args.corpus], {"sampling": seed}


def cmd_synthesize(args, config: RunConfig, run: RunDirectory):
    n, seed, temperature = _eval_settings(args, config)
    generator = load_checkpoint(args.generator, expected_kind=GeneratorModel.KIND)
    imputer = load_checkpoint(args.imputer, expected_kind=ImputerModel.KIND)
    attributes = _attributes_or_default(args.attributes_from, args.age, args.occupation, n, seed)
    weeks = synthesize_activity_weeks(generator, imputer, attributes, seed, temperature, verbose=args.verbose)
    write_corpus(weeks, run.file("activity_weeks.csv"))
    inputs = [args.generator, args.imputer] + ([args.attributes_from] if args.attributes_from else [])
    return inputs, {"sampling": seed}


def cmd_fit_markov(args, config: RunConfig, run: RunDirectory):
    mk = config["markov"]
    corpus = read_schedules(args.corpus, config.alphabets()[0])
    model = fit_markov(corpus, alpha=mk["alpha"], stratify=mk["stratify"], min_persons=mk["min_persons"])
    save_checkpoint(model, run.file("markov.ckpt"))
    return [args.corpus], {}


def _paired_samples(model, reference, n, seed, temperature):
    """(generated states, reference states, generated attributes, reference attributes)."""
    if isinstance(model, GeneratorModel):
        generated, chosen = paired_weeks(model, reference, n, seed, temperature)
        return (
            schedules_to_array(generated),
            schedules_to_array(chosen),
            [s.attributes for s in generated],
            [s.attributes for s in chosen],
        )
    if isinstance(model, MarkovModel):
        chosen = [reference[i] for i in reference_picks(n, len(reference), seed)]
        attributes = [s.attributes for s in chosen]
        generated = sample_markov(model, n, seed, attributes=attributes)
        return schedules_to_array(generated), schedules_to_array(chosen), attributes, attributes
    raise ValueError(f"cannot evaluate a {type(model).__name__}")


def cmd_evaluate(args, config: RunConfig, run: RunDirectory):
    n, seed, temperature = _eval_settings(args, config)
    model = load_checkpoint(args.model)
    if isinstance(model, ImputerModel):
        reference = read_diaries(args.reference)
        generated, original = paired_days(model, reference, n, seed, temperature)
        report = compare(generated, original, include_hd=False, max_lag=STEPS_PER_DAY // 2)
        labels = model.alphabet.labels
        gen_groups = ref_groups = None
        if args.group_by:
            picks = reference_picks(n, len(reference), seed)
            days = [len(reference[i].days) for i in picks]
            col = GROUP_COLUMNS[args.group_by]
            gen_groups = ref_groups = np.repeat(attributes_to_arrays([reference[i].attributes for i in picks])[col], days)
    else:
        reference = read_schedules(args.reference)
        generated, original, gen_attrs, ref_attrs = _paired_samples(model, reference, n, seed, temperature)
        report = compare(generated, original)
        labels = model.alphabet.labels
        if args.group_by:
            col = GROUP_COLUMNS[args.group_by]
            gen_groups = attributes_to_arrays(gen_attrs)[col]
            ref_groups = attributes_to_arrays(ref_attrs)[col]

    _write_report(run, "report.json", report.to_json())
    _write_curves(run, "generated", generated, labels, report.max_lag)
    _write_curves(run, "reference", original, labels, report.max_lag)
    if args.group_by:
        grouped = compare_grouped(generated, original, gen_groups, ref_groups, max_lag=report.max_lag)
        rows = [(f"{args.group_by}={g}", r, None) for g, r in grouped.items()]
        _write_report(run, f"grouped_{args.group_by}.txt", format_metrics_table(rows))
        frame = pd.DataFrame.from_records(
            [
                {args.group_by: g, "sp_rmse": r.sp_rmse, "sd_rmse": r.sd_rmse, "ac_rmse": r.ac_rmse, "na_mae": r.na_mae}
                for g, r in grouped.items()
            ]
        )
        frame.to_csv(run.file(f"grouped_{args.group_by}.csv"), index=False)
    logger.info(
        "sp %.3f  sd %.3f  ac %.4f  na %.3f  hd %s",
        report.sp_rmse,
        report.sd_rmse,
        report.ac_rmse,
        report.na_mae,
        "-" if report.hd_mae is None else f"{report.hd_mae:.3f}",
    )
    return [args.model, args.reference], {"sampling": seed}


def cmd_compare(args, config: RunConfig, run: RunDirectory):
    n, seed, temperature = _eval_settings(args, config)
    reference = read_schedules(args.reference)
    rows, payload = [], {}
    for name, path in (("attention", args.generator), ("markov", args.markov)):
        model = load_checkpoint(path)
        generated, original, _, _ = _paired_samples(model, reference, n, seed, temperature)
        report = compare(generated, original)
        rows.append((name, report, _training_summary(path)))
        payload[name] = report.to_dict()
    table = format_metrics_table(rows)
    _write_report(run, "compare.txt", table)
    _write_report(run, "compare.json", json.dumps(payload, indent=2, sort_keys=True))
    print(table)
    return [args.generator, args.markov, args.reference], {"sampling": seed}


GRID_SECTION = {"generator": "grid", "imputer": "grid_imputer"}


def grid_points(config: RunConfig, model: str = "generator") -> Iterator[Tuple[dict, str]]:
    """Yield (overrides, label) for every point of the configured sweep of ``model``."""
    grid = config[GRID_SECTION[model]]
    keys = sorted(grid)
    for values in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, values))
        label = "-".join(f"{k.rsplit('.', 1)[-1]}={v}" for k, v in overrides.items())
        yield overrides, label


def _held_out(corpus, split: Optional[SplitPlan], fold: int):
    if split is None:
        return corpus
    held_out = set(split.validation_ids(fold))
    return [s for s in corpus if s.person_id in held_out] or corpus


def _grid_point(payload):
    """Train and evaluate one grid point; runs in a worker process."""
    data, kind, overrides, label, corpus_path, split_dict, index = payload
    config = RunConfig(data).with_overrides(overrides)
    mobility, activities = config.alphabets()
    split = SplitPlan.from_dict(split_dict) if split_dict else None
    seed = config["training"]["seed"] + index
    fold = config["training"]["fold"]
    ev = config["evaluation"]
    extra = {}
    if kind == "imputer":
        corpus = read_diaries(corpus_path, activities)
        model, report = train_imputer(corpus, split, fold, config.model_config("imputer"), seed, mobility=mobility)
        reference = _held_out(corpus, split, fold)
        metrics = evaluate_imputer(model, reference, ev["n"], ev["seed"], ev["temperature"])
        _, extra["imputation_accuracy"] = scored_loss(model, reference, seed=ev["seed"])
    else:
        corpus = read_schedules(corpus_path, mobility)
        model, report = train_generator(corpus, split, fold, config.model_config("generator"), seed)
        generated, chosen = paired_weeks(model, _held_out(corpus, split, fold), ev["n"], ev["seed"], ev["temperature"])
        metrics = compare(schedules_to_array(generated), schedules_to_array(chosen))
    return index, label, overrides, seed, metrics, report, extra


def cmd_grid(args, config: RunConfig, run: RunDirectory):
    mobility, activities = config.alphabets()
    if args.model == "imputer":
        corpus = read_diaries(args.corpus, activities)
    else:
        corpus = read_schedules(args.corpus, mobility)
    split = _load_split(args.split, corpus, config["training"]["split_seed"])
    _write_split(run, split)
    payloads = [
        (config.to_dict(), args.model, overrides, label, args.corpus, split.to_dict() if split else None, i)
        for i, (overrides, label) in enumerate(grid_points(config, args.model))
    ]
    logger.info("%s grid of %d points, %d job(s)", args.model, len(payloads), args.jobs)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_grid_point, payloads))
    else:
        results = []
        for payload in payloads:
            results.append(_grid_point(payload))
            logger.info("grid point %d/%d done: %s", payload[-1] + 1, len(payloads), payload[3])
    results.sort(key=lambda r: r[0])

    rows, records = [], []
    for index, label, overrides, seed, metrics, report, extra in results:
        summary = {"best_loss": report.best_loss, "best_accuracy": report.best_accuracy, "best_epoch": report.best_epoch}
        summary.update(extra)
        rows.append((label, metrics, summary))
        records.append({"index": index, "label": label, "seed": seed, **overrides, **metrics.to_dict(), **summary})
        _write_report(run, f"points/{index:03d}_report.json", report.to_json())
    _write_report(run, "grid.txt", format_metrics_table(rows))
    keep = [c for c in records[0] if not c.endswith("_by_state")] if records else []
    pd.DataFrame.from_records(records)[keep].to_csv(run.file("grid.csv"), index=False)
    return [args.corpus], {"training": config["training"]["seed"], "points": len(results)}


# parser --------------------------------------------------------------------


def _add_eval_flags(p) -> None:
    p.add_argument("--n", type=int, default=None, help="number of samples (evaluation.n)")
    p.add_argument("--seed", type=int, default=None, help="sampling seed (evaluation.seed)")
    p.add_argument("--temperature", type=float, default=None, help="sampling temperature")


def _add_attribute_flags(p) -> None:
    p.add_argument("--attributes-from", default=None, help="week corpus whose attributes are resampled")
    p.add_argument("--age", type=int, default=0, help="age class when no corpus is given")
    p.add_argument("--occupation", type=int, default=0, help="occupation class when no corpus is given")


def _add_training_flags(p) -> None:
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None, help="split.json from an earlier run")
    p.add_argument("--fold", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="YAML run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config value")
    common.add_argument("--run-dir", default=None, help="output directory instead of <root>/<time>-<hash>")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--verbose", action="store_true", help="progress lines at INFO")

    parser = _Parser(prog="occupancy-schedules", description="Weekly occupancy schedule models")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("make-corpus", parents=[common], help="draw a synthetic persona corpus")
    p.add_argument("--persons", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_make_corpus)

    p = sub.add_parser("train-gen", parents=[common], help="train the weekly mobility generator")
    _add_training_flags(p)
    p.set_defaults(handler=cmd_train_gen)

    p = sub.add_parser("train-imp", parents=[common], help="train the activity imputer on diaries")
    _add_training_flags(p)
    p.set_defaults(handler=cmd_train_imp)

    p = sub.add_parser("generate", parents=[common], help="sample mobility weeks")
    p.add_argument("--model", required=True)
    _add_eval_flags(p)
    _add_attribute_flags(p)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("impute", parents=[common], help="impute at-home activities of mobility weeks")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    _add_eval_flags(p)
    p.set_defaults(handler=cmd_impute)

    p = sub.add_parser("synthesize", parents=[common], help="generate weeks and impute their activities")
    p.add_argument("--generator", required=True)
    p.add_argument("--imputer", required=True)
    _add_eval_flags(p)
    _add_attribute_flags(p)
    p.set_defaults(handler=cmd_synthesize)

    p = sub.add_parser("fit-markov", parents=[common], help="fit the Markov chain baseline")
    p.add_argument("--corpus", required=True)
    p.set_defaults(handler=cmd_fit_markov)

    p = sub.add_parser("evaluate", parents=[common], help="metrics and curve data for one model")
    p.add_argument("--model", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--group-by", choices=sorted(GROUP_COLUMNS), default=None)
    _add_eval_flags(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("compare", parents=[common], help="attention generator against the Markov baseline")
    p.add_argument("--generator", required=True)
    p.add_argument("--markov", required=True)
    p.add_argument("--reference", required=True)
    _add_eval_flags(p)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("grid", parents=[common], help="hyperparameter grid over the generator or the imputer")
    p.add_argument("--corpus", required=True, help="weeks for the generator, diaries for the imputer")
    p.add_argument("--model", choices=sorted(GRID_SECTION), default="generator")
    p.add_argument("--split", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(handler=cmd_grid)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError(f"--jobs must be >= 1, got {args.jobs}")
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = RunConfig.load(args.config, args.set)
        run = RunDirectory(config.output_root(), config.config_hash(), args.run_dir)
        run.write_config(config.to_yaml())
        inputs, seeds = args.handler(args, config, run)
        run.write_manifest(args.command, inputs + ([args.config] if args.config else []), seeds)
    except NumericalError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError, yaml.YAMLError, ModelStateError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
