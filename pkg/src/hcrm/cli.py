"""Command-line entry point: ``hcrm {fit,eval,verify,pmf}``.

Exit codes: 0 success, 1 a verification check failed, 2 bad input or usage,
3 a runtime failure such as an exhausted sampling budget.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import crm_core, distributions
from .crm_core import LevySpec
from .data_io import Corpus, CorpusFormatError, load_uci_bow, split_train_test, synth_corpus
from .franchise import (
    FranchiseState,
    HierarchyModel,
    SamplerConfig,
    progress_record,
    run_chain,
)
from .topic_model import (
    SummaryAccumulator,
    perplexity,
    read_summary_csv,
    unigram_perplexity,
    write_summary_csv,
    write_top_words,
)

log = logging.getLogger("hcrm")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    # corpus: a UCI docword file, or a synthetic corpus when synth_topics > 0
    docword: str = ""
    vocab: str = ""
    synth_topics: int = 0
    synth_vocab: int = 10
    synth_docs: int = 50
    synth_doc_len: int = 40
    synth_alpha: float = 0.5
    synth_eta: float = 0.5
    synth_seed: int = 0
    p_train: float = 0.5
    # model
    base: str = "gamma"
    object: str = "gamma"
    object_d: float = 0.0
    d: float = 0.0
    theta: float = 1.0
    sggp_components: str = ""
    # sampler
    seed: int = 0
    iterations: int = 2000
    burn_in: int = 500
    thin: int = 5
    eta: float = 0.5
    table_prior: str = "joint"
    h_method: str = "series"
    theta_target: str = "dish"
    resample_hyper: bool = True
    use_likelihood: bool = True
    check_invariants: bool = False
    # output
    record_every: int = 1
    top_n: int = 10

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            iterations=self.iterations, burn_in=self.burn_in, thinning=self.thin,
            seed=self.seed, eta=self.eta, table_prior=self.table_prior,
            h_method=self.h_method, theta_target=self.theta_target,
            resample_hyper=self.resample_hyper, use_likelihood=self.use_likelihood,
            check_invariants=self.check_invariants,
        )


def parse_sggp_components(text: str) -> list[tuple[float, float]]:
    """``"1:0,1:0.4"`` -> ``[(1.0, 0.0), (1.0, 0.4)]``."""
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        try:
            th, d = part.split(":")
            out.append((float(th), float(d)))
        except ValueError:
            raise UsageError(f"bad SGGP component {part!r}; expected theta:d") from None
    if not out:
        raise UsageError("sggp base needs --sggp-components")
    return out


def build_base(cfg: RunConfig) -> LevySpec:
    if cfg.base == "gamma":
        return LevySpec.gamma(cfg.theta)
    if cfg.base == "ggp":
        return LevySpec.ggp(cfg.d, cfg.theta)
    if cfg.base == "sggp":
        return LevySpec.sggp(parse_sggp_components(cfg.sggp_components))
    raise UsageError(f"unknown base family {cfg.base!r}")


def build_object(cfg: RunConfig) -> LevySpec:
    if cfg.object == "gamma":
        return LevySpec.gamma()
    if cfg.object == "ggp":
        return LevySpec.ggp(cfg.object_d)
    raise UsageError(f"unknown object family {cfg.object!r}")


def load_corpus(cfg: RunConfig) -> Corpus:
    if cfg.synth_topics > 0:
        corpus, _ = synth_corpus(cfg.synth_topics, cfg.synth_vocab, cfg.synth_docs,
                                 cfg.synth_doc_len, cfg.synth_alpha, cfg.synth_eta,
                                 cfg.synth_seed)
    elif cfg.docword:
        if not Path(cfg.docword).exists():
            raise UsageError(f"corpus file not found: {cfg.docword}")
        if cfg.vocab and not Path(cfg.vocab).exists():
            raise UsageError(f"vocabulary file not found: {cfg.vocab}")
        corpus = load_uci_bow(cfg.docword, cfg.vocab or None)
    else:
        raise UsageError("no corpus: set docword or synth_topics")
    return split_train_test(corpus, cfg.p_train, cfg.seed)


# --------------------------------------------------------------------------
# config files


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return json.dumps(str(v))


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {_toml_value(getattr(cfg, f.name))}\n" for f in fields(cfg))


def read_config(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


_FLAG_KEYS = {
    "seed": int, "iterations": int, "burn_in": int, "thin": int, "base": str, "object": str,
    "d": float, "theta": float, "sggp_components": str, "p_train": float, "docword": str,
    "vocab": str, "table_prior": str, "h_method": str, "eta": float, "synth_topics": int,
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    values = asdict(RunConfig())
    if getattr(args, "config", None):
        values.update(read_config(args.config))
    for key in _FLAG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if values["docword"]:
        values["docword"] = str(Path(values["docword"]).resolve())
    if values["vocab"]:
        values["vocab"] = str(Path(values["vocab"]).resolve())
    cfg = RunConfig(**values)
    try:
        cfg.sampler_config()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


# --------------------------------------------------------------------------
# subcommands


def fit(cfg: RunConfig, out: Path) -> Path:
    """Run one chain and write its provenance, progress log, checkpoint and summaries."""
    corpus = load_corpus(cfg)
    base, obj = build_base(cfg), build_object(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_config(cfg))
    scfg = cfg.sampler_config()
    state = FranchiseState(list(corpus.docs), corpus.W, HierarchyModel(base, obj, corpus.D),
                           scfg, train=list(corpus.flags()))
    state.initialize()
    acc = SummaryAccumulator(corpus.D, corpus.W, scfg.eta)
    with open(out / "progress.jsonl", "w") as prog:
        prog.write(json.dumps(progress_record(state)) + "\n")
        if cfg.iterations == 0:
            state.save(out / "checkpoint.json")
            return out

        def on_iteration(s: FranchiseState) -> None:
            if s.iteration % cfg.record_every == 0 or s.iteration == cfg.iterations:
                prog.write(json.dumps(progress_record(s)) + "\n")

        run_chain(state, on_sample=acc.add_state, on_iteration=on_iteration)
    state.save(out / "checkpoint.json")
    summary = acc.summary()
    write_summary_csv(summary, out)
    write_top_words(summary, corpus.words(), out / "top_words.txt", cfg.top_n)
    return out


def evaluate(run_dirs: Sequence[Path]) -> list[tuple[float, str, float]]:
    rows = []
    for run in run_dirs:
        if not (run / "config.toml").exists():
            raise UsageError(f"{run} has no config.toml")
        cfg = RunConfig(**read_config(run / "config.toml"))
        try:
            summary = read_summary_csv(run)
        except FileNotFoundError as exc:
            raise UsageError(f"missing summary: {exc}") from None
        corpus = load_corpus(cfg)
        ids, words = corpus.test_tokens()
        if ids.size == 0:
            raise UsageError(f"{run}: split leaves no test tokens")
        rows.append((cfg.p_train, f"hcrm-{cfg.base}", perplexity(ids, words, summary)))
        rows.append((cfg.p_train, "unigram",
                     unigram_perplexity(corpus.train_words(), words, corpus.W, cfg.eta)))
    return rows


def write_eval_csv(rows, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p_train", "model", "perplexity"])
        for p, model, ppl in rows:
            w.writerow([f"{p:g}", model, f"{ppl:.12g}"])


def cmd_fit(args) -> int:
    cfg = resolve_config(args)
    if not args.out:
        raise UsageError("fit needs --out")
    fit(cfg, Path(args.out))
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.runs:
        runs = [Path(r) for r in args.runs]
    else:
        if not args.config and not args.synth_topics and not args.docword:
            raise UsageError("eval needs --runs, or a corpus config to fit over --grid")
        if not args.out:
            raise UsageError("eval needs --out")
        base_cfg = resolve_config(args)
        runs = []
        for p in [float(x) for x in args.grid.split(",")]:
            run = Path(args.out) / f"p_train_{p:g}"
            fit(RunConfig(**{**asdict(base_cfg), "p_train": p}), run)
            runs.append(run)
    rows = evaluate(runs)
    target = Path(args.csv) if args.csv else Path(args.out or ".") / "perplexity.csv"
    write_eval_csv(rows, target)
    for p, model, ppl in rows:
        print(f"{p:g}\t{model}\t{ppl:.6f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import checks
    from .oracle import BudgetExhaustedError

    if args.fault:
        crm_core.FAULTS.add(args.fault)
    try:
        results = checks.run_all(budget=args.budget, quick=args.quick)
    except BudgetExhaustedError as exc:
        print(f"verification aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        crm_core.FAULTS.discard(args.fault)
    for r in results:
        print(r.line())
    if args.json:
        Path(args.json).write_text(json.dumps(
            [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results],
            indent=2, default=float))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("FAILED: " + ", ".join(failed))
        return EXIT_CHECK_FAILED
    print("all checks passed")
    return EXIT_OK


def parse_matrix(text: str) -> np.ndarray:
    """Rows separated by ``;``, entries by ``,`` or spaces; empty text is the empty matrix."""
    text = text.strip()
    if not text:
        return np.zeros((1, 0), dtype=np.int64)
    rows = [r.replace(",", " ").split() for r in text.split(";")]
    if len({len(r) for r in rows}) != 1:
        raise UsageError("matrix rows have different lengths")
    try:
        return np.array([[int(x) for x in r] for r in rows], dtype=np.int64)
    except ValueError:
        raise UsageError(f"matrix entries must be integers: {text!r}") from None


def cmd_pmf(args) -> int:
    if args.csv:
        text = ";".join(ln for ln in Path(args.csv).read_text().splitlines() if ln.strip())
    else:
        text = args.matrix or ""
    mat = parse_matrix(text)
    cfg = resolve_config(args)
    base = build_base(cfg)
    if args.kind == "eq5":
        if len(base.components) == 1:
            v = distributions.crm_poisson_log_pmf(base.mass, base.unit(), args.n, mat)
        else:
            v = distributions.crm_poisson_log_pmf(1.0, base, args.n, mat)
    elif args.kind == "conditional":
        v = distributions.ccrm_poisson_log_pmf(base, args.n, mat.shape[1], mat)
    else:
        if mat.shape[0] != 1:
            raise UsageError("restaurant pmf takes a single row of table sizes")
        v = distributions.restaurant_counts_log_pmf(base, build_object(cfg), mat[0])
    print(f"{v:.15g}")
    return EXIT_OK


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--base", choices=["gamma", "ggp", "sggp"])
    p.add_argument("--object", choices=["gamma", "ggp"])
    p.add_argument("--d", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--sggp-components", dest="sggp_components")
    p.add_argument("--p-train", dest="p_train", type=float)
    p.add_argument("--docword")
    p.add_argument("--vocab")
    p.add_argument("--synth-topics", dest="synth_topics", type=int)
    p.add_argument("--table-prior", dest="table_prior", choices=["joint", "paper"])
    p.add_argument("--h-method", dest="h_method", choices=["series", "mixture"])
    p.add_argument("--eta", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hcrm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="run a Gibbs chain on a corpus")
    _add_model_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="perplexity of fitted runs against a unigram baseline")
    _add_model_flags(p)
    p.add_argument("--runs", nargs="+")
    p.add_argument("--grid", default="0.3,0.4,0.5,0.6,0.7")
    p.add_argument("--out")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the numerical and Monte Carlo checks")
    p.add_argument("--budget", type=int, default=50_000,
                   help="accepted draws for the conditional oracle")
    p.add_argument("--quick", action="store_true", help="tenfold smaller Monte Carlo sizes")
    p.add_argument("--fault", choices=["psi_sign_flip"], help="inject a fault (self-test)")
    p.add_argument("--json")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("pmf", help="evaluate a count-matrix log pmf")
    _add_model_flags(p)
    p.add_argument("--kind", choices=["eq5", "conditional", "restaurant"], default="eq5")
    p.add_argument("--n", type=float, default=1.0, help="evaluation point of psi")
    p.add_argument("--matrix", help='e.g. "1,0;0,2"')
    p.add_argument("--csv")
    p.set_defaults(func=cmd_pmf)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusFormatError, distributions.InvalidMatrixError, crm_core.DomainError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
