"""
Experiment runner: mechanisms on streams, reductions on gadgets, gadget dumps, error-bound
calibration and norm queries. Every subcommand writes versioned CSV and is deterministic given
its configuration and seed.

    python -m dpstream.main run-mechanism --mechanism matching --stream edges.txt --eps 1
    python -m dpstream.main run-reduction --gadget matching --oracle exact --d 5
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError, model_validator

from dpstream.config import DPSTREAM_SEED, LOG_LEVEL, RESULTS_DIR, TRIAL_WORKERS
from dpstream.core import (
    DPStreamError,
    NoiseMode,
    ParameterError,
    PrivacyBudget,
    RandomSource,
    StreamFormatError,
    StreamKind,
    UpdateStream,
)
from dpstream.counting import (
    HistogramMechanism,
    TreeCounter,
    append_golden_rows,
    calibrate_rows,
    load_golden_bounds,
)
from dpstream.graph_mechanisms import DegreeHistogramMechanism, GraphStatistic, LadderMechanism
from dpstream.graphs import DynamicGraph, degree_histogram
from dpstream.metrics import write_metrics
from dpstream.sne import BoostedSne, SneState, eval_norm, parse_norm, topk_all
from dpstream.streamio import random_insertions, read_stream
from dpstream.tables import read_csv, write_csv
from harness.dump import dump_gadget
from harness.gadgets import GADGET_BUILDERS, GadgetInstance, GadgetProblem
from harness.instances import InnerProductInstance, MarginalsInstance
from harness.msf import MsfProblem, build_msf_stream
from harness.oracles import BiasedOracle, ExactOracle
from harness.reductions import (
    check_round_trip,
    mechanism_alpha,
    private_mechanism,
    run_inc_reduction,
)

logger = logging.getLogger(__name__)

LADDER_STATISTICS = {
    "matching": GraphStatistic.MATCHING,
    "core_number": GraphStatistic.CORE_NUMBER,
    "components": GraphStatistic.COMPONENTS,
}
GRAPH_MECHANISMS = set(LADDER_STATISTICS) | {"deghist"}
ELEMENT_MECHANISMS = {"counter", "histogram"}
ORACLES = ("exact", "biased")


class ExperimentConfig(BaseModel):
    """Validated parameters of one CLI invocation."""

    command: str
    mechanism: Optional[str] = None
    gadget: Optional[str] = None
    family: Optional[str] = None
    oracle: Optional[str] = None
    stream: Optional[str] = None
    kind: Optional[StreamKind] = None
    n: Optional[int] = Field(default=None, ge=1)
    horizon: Optional[int] = Field(default=None, ge=1)
    d: Optional[int] = Field(default=None, ge=1)
    psi: int = Field(default=1, ge=1)
    epsilon: float = Field(default=1.0, gt=0)
    delta: float = Field(default=0.0, ge=0, lt=1)
    beta: float = Field(default=0.1, gt=0, lt=1)
    zeta: float = Field(default=0.5, gt=0, le=0.5)
    seed: int = Field(default=DPSTREAM_SEED, ge=0)
    trials: int = Field(default=1, ge=1)
    workers: int = Field(default=TRIAL_WORKERS, ge=1)
    noise: NoiseMode = NoiseMode.STANDARD
    vertex: int = Field(default=0, ge=0)
    k: Optional[int] = Field(default=None, ge=1)
    norm: str = "l1"
    batch: bool = False
    boosted: bool = False
    alpha: Optional[float] = Field(default=None, ge=0)
    bias: float = 3.0
    paths: Optional[int] = Field(default=None, ge=1)
    output: Optional[str] = None
    summary: Optional[str] = None
    timetable: Optional[str] = None
    metrics_out: Optional[str] = None

    @model_validator(mode="after")
    def check_command(self) -> "ExperimentConfig":
        has_source = self.stream is not None or (self.n is not None and self.horizon is not None)
        if self.command == "run-mechanism":
            if self.mechanism not in GRAPH_MECHANISMS | ELEMENT_MECHANISMS:
                raise ValueError(f"unknown mechanism {self.mechanism!r}")
            if not has_source:
                raise ValueError("give --stream or both --n and --T")
            if self.kind is not None and self.kind != self.stream_kind:
                raise ValueError(
                    f"{self.mechanism} runs on {self.stream_kind.value} streams, "
                    f"not {self.kind.value}"
                )
        elif self.command in ("run-reduction", "gen-gadget"):
            if self.gadget not in {problem.value for problem in GadgetProblem}:
                raise ValueError(f"unknown gadget {self.gadget!r}")
            if self.d is None:
                raise ValueError("--d is required")
            if self.gadget == GadgetProblem.MSF.value and (self.family is None or self.n is None):
                raise ValueError("marginals streams need --family and --n")
            if self.oracle is not None and self.oracle not in ORACLES:
                raise ValueError(f"unknown oracle {self.oracle!r}")
            if self.command == "gen-gadget" and self.output is None:
                raise ValueError("gen-gadget needs --output")
        elif self.command == "calibrate":
            if self.n is None or self.horizon is None:
                raise ValueError("calibrate needs --n and --T")
        elif self.command == "sne-query":
            if not has_source:
                raise ValueError("give --stream or both --n and --T")
            parse_norm(self.norm)
            if self.kind not in (None, StreamKind.ELEMENTS):
                raise ValueError("norm estimation runs on element streams")
        else:
            raise ValueError(f"unknown command {self.command!r}")
        return self

    @property
    def stream_kind(self) -> StreamKind:
        if self.mechanism in GRAPH_MECHANISMS:
            return StreamKind.GRAPH
        return StreamKind.ELEMENTS

    @classmethod
    def from_namespace(cls, namespace: argparse.Namespace) -> "ExperimentConfig":
        values = {key: value for key, value in vars(namespace).items() if value is not None}
        try:
            return cls(**values)
        except ValidationError as e:
            raise ParameterError(f"invalid configuration: {str(e)}") from e

    def budget(self) -> PrivacyBudget:
        return PrivacyBudget.create(
            epsilon=self.epsilon, delta=self.delta, beta=self.beta, noise_mode=self.noise
        )

    def trial_seeds(self) -> List[int]:
        return [self.seed + trial for trial in range(self.trials)]


def run_trials(function: Callable, tasks: Sequence, workers: int) -> List:
    """Map `function` over tasks, in a process pool when asked; results keep task order."""
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(function, tasks))
    return [function(task) for task in tasks]


def _load_stream(config: ExperimentConfig, kind: StreamKind) -> UpdateStream:
    if config.stream is not None:
        stream = read_stream(config.stream)
    else:
        stream = random_insertions(kind, config.n, config.horizon, config.seed)
    if stream.kind != kind:
        raise ParameterError(
            f"{config.mechanism or 'norm estimator'} needs a {kind.value} stream, "
            f"got {stream.kind.value}"
        )
    return stream


def _scalar_rows(trial: int, rows: List[Tuple[int, float, float]]) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=["t", "true", "released"])
    frame["abs_error"] = (frame["true"] - frame["released"]).abs()
    frame.insert(0, "trial", trial)
    return frame


def _vector_rows(trial: int, rows: List[Tuple[int, np.ndarray, np.ndarray]]) -> pd.DataFrame:
    frames = []
    for t, true, released in rows:
        frames.append(
            pd.DataFrame(
                {
                    "t": t,
                    "index": np.arange(true.size),
                    "true": true.astype(np.float64),
                    "released": released,
                }
            )
        )
    frame = pd.concat(frames, ignore_index=True)
    frame["abs_error"] = (frame["true"] - frame["released"]).abs()
    frame.insert(0, "trial", trial)
    return frame


def mechanism_trace(task: Tuple[ExperimentConfig, UpdateStream, int, int]) -> pd.DataFrame:
    """Per-step true and released values of one mechanism run."""
    config, stream, trial, seed = task
    budget = config.budget()
    rng = RandomSource(seed)
    name = config.mechanism

    if name == "counter":
        counter = TreeCounter(stream.horizon, budget, rng)
        total, rows = 0, []
        for t, update in enumerate(stream, start=1):
            total += update.sign
            rows.append((t, total, counter.step(update.sign)))
        return _scalar_rows(trial, rows)

    if name == "histogram":
        histogram = HistogramMechanism(stream.universe, stream.horizon, budget, rng)
        frequencies = np.zeros(stream.universe, dtype=np.int64)
        rows = []
        for t, update in enumerate(stream, start=1):
            if update.is_noop:
                released = histogram.step(0, 0)
            else:
                frequencies[update.item] += update.sign
                released = histogram.step(update.item, update.sign)
            rows.append((t, frequencies.copy(), released))
        return _vector_rows(trial, rows)

    if name == "deghist":
        mechanism = DegreeHistogramMechanism(stream.universe, stream.horizon, budget, rng)
        graph = DynamicGraph(stream.universe)
        rows = []
        for t, update in enumerate(stream, start=1):
            released = mechanism.step(update)
            graph.apply(update)
            rows.append((t, degree_histogram(graph), released))
        return _vector_rows(trial, rows)

    ladder = LadderMechanism(
        LADDER_STATISTICS[name],
        stream.universe,
        stream.horizon,
        budget,
        rng,
        k=config.k,
        vertex=config.vertex,
    )
    rows = []
    for t, update in enumerate(stream, start=1):
        released = ladder.step(update)
        rows.append((t, ladder.last_true, released))
    return _scalar_rows(trial, rows)


def cmd_run_mechanism(config: ExperimentConfig):
    stream = _load_stream(config, config.stream_kind)
    tasks = [(config, stream, trial, seed) for trial, seed in enumerate(config.trial_seeds())]
    frames = run_trials(mechanism_trace, tasks, config.workers)
    trace = pd.concat(frames, ignore_index=True)
    schema = "trace" if "index" not in trace.columns else "vector_trace"
    output = config.output or os.path.join(RESULTS_DIR, f"{config.mechanism}_trace.csv")
    write_csv(trace, output, schema)
    logger.info(
        f"{config.mechanism}: max abs error {trace['abs_error'].max():.3f} over "
        f"{config.trials} trial(s)"
    )


def build_instance(config: ExperimentConfig, seed: int) -> GadgetInstance:
    if config.gadget == GadgetProblem.MSF.value:
        marginals = MarginalsInstance.random(config.n, config.d, seed)
        return build_msf_stream(MsfProblem.parse(config.family), marginals)
    secret = InnerProductInstance.random(config.d, seed, config.psi)
    return GADGET_BUILDERS[GadgetProblem(config.gadget)](config.d, secret)


def reduction_trial(task: Tuple[ExperimentConfig, int, int]) -> Tuple[pd.DataFrame, Dict]:
    config, trial, seed = task
    instance = build_instance(config, seed)
    if config.oracle == "exact":
        mechanism = ExactOracle.for_instance(instance)
    elif config.oracle == "biased":
        mechanism = BiasedOracle.for_instance(instance, config.bias)
    else:
        mechanism = private_mechanism(instance, config.budget(), RandomSource(seed), config.zeta)
    alpha = config.alpha if config.alpha is not None else mechanism_alpha(mechanism)

    result = run_inc_reduction(instance, mechanism, alpha)
    if config.oracle == "exact":
        check_round_trip(result)

    frame = result.to_frame()
    frame.insert(0, "trial", trial)
    summary = {
        "trial": trial,
        "seed": seed,
        "gadget": config.gadget,
        "mechanism": config.oracle or "private",
        "epsilon": config.epsilon,
        **result.summary(),
        "alpha": alpha,
    }
    return frame, summary


def cmd_run_reduction(config: ExperimentConfig):
    tasks = [(config, trial, seed) for trial, seed in enumerate(config.trial_seeds())]
    results = run_trials(reduction_trial, tasks, config.workers)
    per_query = pd.concat([frame for frame, _ in results], ignore_index=True)
    summary = pd.DataFrame([row for _, row in results])

    if config.output:
        write_csv(per_query, config.output, "reduction")
    summary_path = config.summary or os.path.join(RESULTS_DIR, "reduction_summary.csv")
    if os.path.exists(summary_path):
        summary = pd.concat([read_csv(summary_path), summary], ignore_index=True)
    write_csv(summary, summary_path, "reduction_summary")
    logger.info(
        f"{config.gadget} reduction: max error {per_query['error'].abs().max():.3f}, "
        f"summary in {summary_path}"
    )


def cmd_gen_gadget(config: ExperimentConfig):
    instance = build_instance(config, config.seed)
    if instance.stream.horizon > instance.step_budget:
        raise DPStreamError(
            f"{instance.label} has {instance.stream.horizon} steps, budget {instance.step_budget}"
        )
    timetable = config.timetable or f"{config.output}.timetable.jsonl"
    dump_gadget(instance, config.output, timetable)


def cmd_calibrate(config: ExperimentConfig):
    rows = calibrate_rows(
        [(config.n, config.horizon, config.epsilon, config.beta)], paths=config.paths
    )
    path = append_golden_rows(rows, config.output)
    logger.info(
        f"Calibrated E={rows['E'].iloc[0]:.4f}; {len(load_golden_bounds(path))} rows in {path}"
    )


def sne_trace(task: Tuple[ExperimentConfig, UpdateStream, int, int]) -> pd.DataFrame:
    """Per-step norm estimates of single or boosted SNE against the true norms."""
    config, stream, trial, seed = task
    rng = RandomSource(seed)
    budget = config.budget()
    if config.boosted:
        estimator = BoostedSne(stream.universe, stream.horizon, budget, config.zeta, rng)
    else:
        estimator = SneState(stream.universe, stream.horizon, budget, config.zeta, rng)
    spec = parse_norm(config.norm)
    frequencies = np.zeros(stream.universe, dtype=np.int64)
    frames = []
    rows = []
    for t, update in enumerate(stream, start=1):
        estimator.step(update)
        if not update.is_noop:
            frequencies[update.item] += 1
        if config.batch:
            curves = [topk_all(vector) for vector in np.atleast_2d(estimator.release())]
            frames.append(
                pd.DataFrame(
                    {
                        "t": t,
                        "k": np.arange(1, stream.universe + 1),
                        "estimate": np.median(curves, axis=0),
                        "true": topk_all(frequencies),
                    }
                )
            )
        else:
            rows.append((t, config.norm, estimator.query(spec), eval_norm(spec, frequencies)))
    if config.batch:
        frame = pd.concat(frames, ignore_index=True)
    else:
        frame = pd.DataFrame(rows, columns=["t", "norm", "estimate", "true"])
    frame.insert(0, "trial", trial)
    return frame


def cmd_sne_query(config: ExperimentConfig):
    stream = _load_stream(config, StreamKind.ELEMENTS)
    tasks = [(config, stream, trial, seed) for trial, seed in enumerate(config.trial_seeds())]
    frame = pd.concat(run_trials(sne_trace, tasks, config.workers), ignore_index=True)
    output = config.output or os.path.join(RESULTS_DIR, "sne_query.csv")
    write_csv(frame, output, "sne_batch" if config.batch else "sne_query")


COMMANDS = {
    "run-mechanism": cmd_run_mechanism,
    "run-reduction": cmd_run_reduction,
    "gen-gadget": cmd_gen_gadget,
    "calibrate": cmd_calibrate,
    "sne-query": cmd_sne_query,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mechanism", help="counter, histogram, matching, core_number, components or deghist")
    common.add_argument("--gadget", help="matching, kcore, deghist, topk or msf")
    common.add_argument("--family", help="marginals family, e.g. st_mincut or deg_at_least:3")
    common.add_argument("--oracle", choices=ORACLES)
    common.add_argument("--stream", help="stream file")
    common.add_argument(
        "--kind",
        choices=[kind.value for kind in StreamKind],
        help="expected stream kind; rejected when the mechanism needs the other kind",
    )
    common.add_argument("--n", type=int)
    common.add_argument("--T", dest="horizon", type=int)
    common.add_argument("--d", type=int)
    common.add_argument("--psi", type=int)
    common.add_argument("--eps", dest="epsilon", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--zeta", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--noise", choices=[mode.value for mode in NoiseMode])
    common.add_argument("--vertex", type=int)
    common.add_argument("--k", type=int, help="ladder rung spacing")
    common.add_argument("--norm", help="l1, l2, linf, lp:<p> or topk:<k>")
    common.add_argument("--batch", action="store_true", default=None)
    common.add_argument("--boosted", action="store_true", default=None)
    common.add_argument("--alpha", type=float, help="decoder slack, default the mechanism's advertised accuracy")
    common.add_argument("--bias", type=float)
    common.add_argument("--paths", type=int)
    common.add_argument("--output")
    common.add_argument("--summary")
    common.add_argument("--timetable")
    common.add_argument("--metrics-out", dest="metrics_out")

    parser = argparse.ArgumentParser(prog="dpstream", description=__doc__.splitlines()[1])
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=LOG_LEVEL, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    try:
        config = ExperimentConfig.from_namespace(args)
        COMMANDS[config.command](config)
    except (ParameterError, StreamFormatError, FileNotFoundError) as e:
        logger.error(f"Invalid configuration or input: {str(e)}")
        return 2
    except DPStreamError as e:
        logger.error(f"Run failed: {str(e)}")
        return 1
    if config.metrics_out:
        write_metrics(config.metrics_out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
