"""Command-line entry points: run, extract, synth, report.

Exit codes: 0 success, 2 usage/config problems (including unreadable input),
3 insufficient data (fewer than two eligible users).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import classifiers, pipeline, runner, synth
from .errors import ConfigError, DataInsufficiencyError, SchemaError, TouchAuthError
from .evaluation import DEFAULT_WINDOWS
from .features import FEATURE_SETS, clean_nonfinite, extract_corpus, write_feature_csv
from .ingest import (
    Corpus,
    filter_clicks,
    label_directions,
    parse_raw_events,
    select_eligible_users,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _load_toml(path: Path) -> dict:
    try:
        import tomllib  # python >= 3.11
    except ModuleNotFoundError:
        try:
            import tomli as tomllib  # type: ignore[no-redef]
        except ModuleNotFoundError:
            return _parse_flat_toml(path.read_text(encoding="utf-8"))
    with path.open("rb") as fh:
        return tomllib.load(fh)


def _parse_flat_toml(text: str) -> dict:
    """Minimal TOML subset for flat configs: scalars and one-line arrays."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        out[key.strip()] = _parse_toml_value(value.strip(), lineno)
    return out


def _parse_toml_value(token: str, lineno: int):
    if token.startswith("[") and token.endswith("]"):
        inner = token[1:-1].strip()
        if not inner:
            return []
        return [_parse_toml_value(t.strip(), lineno) for t in inner.split(",")]
    if token.startswith('"') and token.endswith('"') and len(token) >= 2:
        return token[1:-1]
    if token in ("true", "false"):
        return token == "true"
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ConfigError(f"config line {lineno}: cannot parse value {token!r}") from None


def parse_windows(spec) -> tuple[int, ...]:
    """Accept [1, 2, 5], "1-20", or "1,3,5" forms."""
    if isinstance(spec, (list, tuple)):
        windows = tuple(int(w) for w in spec)
    else:
        text = str(spec).strip()
        if "-" in text and "," not in text:
            lo, _, hi = text.partition("-")
            windows = tuple(range(int(lo), int(hi) + 1))
        else:
            windows = tuple(int(t) for t in text.split(",") if t.strip())
    if not windows or min(windows) < 1:
        raise ConfigError(f"invalid windows {spec!r}")
    return windows


def _csv_list(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


_CONFIG_KEYS = {
    "input", "format", "out_dir", "master_seed", "families", "schemas",
    "approaches", "windows", "train_per_dir", "test_per_dir", "workers",
    "save_models",
}


def build_run_config(args) -> tuple[runner.ExperimentConfig, Path, str, Path]:
    """Merge config file and CLI overrides into an ExperimentConfig."""
    file_cfg: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        file_cfg = _load_toml(path)
        unknown = set(file_cfg) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    def pick(cli_value, key, default):
        if cli_value is not None:
            return cli_value
        return file_cfg.get(key, default)

    input_path = pick(args.input, "input", None)
    if input_path is None:
        raise ConfigError("an input corpus is required (--input or `input` in the config)")
    out_dir = pick(args.out, "out_dir", None)
    if out_dir is None:
        raise ConfigError("an output directory is required (--out or `out_dir` in the config)")

    families = pick(args.families and _csv_list(args.families), "families", list(classifiers.FAMILIES))
    schemas = pick(args.schemas and _csv_list(args.schemas), "schemas", list(FEATURE_SETS))
    approaches = pick(args.approaches and _csv_list(args.approaches), "approaches", list(pipeline.APPROACHES))
    windows = parse_windows(pick(args.windows, "windows", list(DEFAULT_WINDOWS)))
    try:
        cfg = runner.ExperimentConfig(
            master_seed=int(pick(args.seed, "master_seed", 0)),
            families=tuple(families),
            schemas=tuple(schemas),
            approaches=tuple(approaches),
            windows=windows,
            train_per_dir=int(pick(args.train_per_dir, "train_per_dir", 50)),
            test_per_dir=int(pick(args.test_per_dir, "test_per_dir", 30)),
            workers=int(pick(args.workers, "workers", 1)),
            save_models=bool(pick(args.save_models or None, "save_models", False)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    fmt = str(pick(args.format, "format", "canonical"))
    return cfg, Path(input_path), fmt, Path(out_dir)


def cmd_run(args) -> int:
    cfg, input_path, fmt, out_dir = build_run_config(args)
    if not input_path.is_file():
        raise ConfigError(f"input corpus not found: {input_path}")
    corpus = parse_raw_events(input_path, fmt)
    artifacts = runner.run_experiment(corpus, cfg, out_dir)
    print(f"eligible users: {len(artifacts.dataset.users)}")
    print(f"fits logged: {artifacts.n_fits_logged}")
    print(f"reports written to {artifacts.out_dir}")
    return EXIT_OK


def cmd_extract(args) -> int:
    input_path = Path(args.input)
    if not input_path.is_file():
        raise ConfigError(f"input corpus not found: {input_path}")
    corpus = parse_raw_events(input_path, args.format)
    n_parsed = len(corpus)
    corpus = filter_clicks(corpus)
    corpus = label_directions(corpus)
    vectors = extract_corpus(corpus)
    kept = clean_nonfinite(vectors)
    kept_keys = {(fv.user_id, fv.session, fv.swipe_id) for fv in kept}
    cleaned = Corpus.from_strokes(
        [s for s in corpus.strokes if (s.user_id, s.session, s.swipe_id) in kept_keys]
    )
    subsets, _ = select_eligible_users(cleaned, args.train_per_dir, args.test_per_dir)
    write_feature_csv(vectors, args.out)
    print(f"rows read: {corpus.parse_stats.rows_read if corpus.parse_stats else 0}")
    print(f"clicks removed: {n_parsed - len(corpus)}")
    print(f"strokes with non-finite features dropped: {len(vectors) - len(kept)}")
    print(f"qualifying strokes: {len(kept)}")
    print(f"eligible users: {len(subsets)}")
    print(f"features written to {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.users < 2:
        raise ConfigError("synthetic corpus needs at least 2 users (one-vs-rest)")
    if args.train_per_dir < 1 or args.test_per_dir < 1:
        raise ConfigError("per-direction stroke counts must be positive")
    if args.separability < 0:
        raise ConfigError("separability must be >= 0")
    corpus = synth.generate_synthetic_corpus(
        n_users=args.users,
        train_per_dir=args.train_per_dir,
        test_per_dir=args.test_per_dir,
        seed=args.seed,
        separability=args.separability,
    )
    synth.write_corpus_csv(corpus, args.out)
    print(f"wrote {len(corpus)} strokes for {len(corpus.users)} users to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "scores.csv").is_file() or not (run_dir / "manifest.json").is_file():
        raise ConfigError(f"{run_dir} does not contain scores.csv and manifest.json")
    report = runner.rerender_reports(run_dir, args.out)
    target = Path(args.out) if args.out else run_dir
    print(f"re-rendered reports for {len(report.rows)} metric rows in {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="touchauth",
        description="Touch-stroke continuous-authentication experiments",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full experiment: ingest, grid search, evaluate, report")
    run.add_argument("--config", help="TOML experiment config")
    run.add_argument("--input", help="canonical stroke CSV (overrides config)")
    run.add_argument("--format", default=None, help="input format (default: canonical)")
    run.add_argument("--out", help="output directory (overrides config)")
    run.add_argument("--seed", type=int, default=None, help="master seed")
    run.add_argument("--workers", type=int, default=None, help="worker processes")
    run.add_argument("--families", default=None, help="comma list: knn,svm,rf,et,gb")
    run.add_argument("--schemas", default=None, help="comma list: ta,wvw,syed,bs,cheng")
    run.add_argument("--approaches", default=None, help="comma list: bi,omni")
    run.add_argument("--windows", default=None, help="fusion windows, e.g. 1-20 or 1,5,10")
    run.add_argument("--train-per-dir", type=int, default=None, dest="train_per_dir")
    run.add_argument("--test-per-dir", type=int, default=None, dest="test_per_dir")
    run.add_argument("--save-models", action="store_true", dest="save_models")
    run.set_defaults(func=cmd_run)

    extract = sub.add_parser("extract", help="feature dump plus cleaning statistics")
    extract.add_argument("--input", required=True)
    extract.add_argument("--format", default="canonical")
    extract.add_argument("--out", required=True, help="features CSV path")
    extract.add_argument("--train-per-dir", type=int, default=50, dest="train_per_dir")
    extract.add_argument("--test-per-dir", type=int, default=30, dest="test_per_dir")
    extract.set_defaults(func=cmd_extract)

    synth_p = sub.add_parser("synth", help="write a synthetic canonical-CSV corpus")
    synth_p.add_argument("--users", type=int, required=True)
    synth_p.add_argument("--train-per-dir", type=int, default=60, dest="train_per_dir")
    synth_p.add_argument("--test-per-dir", type=int, default=40, dest="test_per_dir")
    synth_p.add_argument("--separability", type=float, default=1.0)
    synth_p.add_argument("--seed", type=int, default=0)
    synth_p.add_argument("--out", required=True)
    synth_p.set_defaults(func=cmd_synth)

    report = sub.add_parser("report", help="re-render reports from a run directory")
    report.add_argument("--run-dir", required=True, dest="run_dir")
    report.add_argument("--out", default=None, help="target directory (default: in place)")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except DataInsufficiencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TouchAuthError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
