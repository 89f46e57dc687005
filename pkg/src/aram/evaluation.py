"""Fixture-driven QA evaluation: EM/F1 scoring, retrieval-prior interaction
categorization, context-quality stratification, and NFE accounting.

Every example is decoded once with contexts withheld (the no-retrieval
baseline) and once per requested method; interaction categories compare each
method's correctness bit against the baseline's. Examples are independent,
so the harness may fan them out over a bounded thread pool; aggregation runs
over stored per-example records and is order-independent.
"""

from __future__ import annotations

import enum
import json
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import InvalidInputError
from .engine import Backend, DecodeResult, SamplerConfig, UnmaskPolicy, decode
from .guidance import GuidanceConfig, Policy

_ARTICLES = {"a", "an", "the"}
_PUNCT = set(string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, strip ASCII punctuation, drop articles, collapse spaces."""
    lowered = text.lower()
    no_punct = "".join(ch for ch in lowered if ch not in _PUNCT)
    tokens = [t for t in no_punct.split() if t not in _ARTICLES]
    return " ".join(tokens)


def exact_match(prediction: str, answers) -> int:
    if not answers:
        raise InvalidInputError("answers must be non-empty")
    norm = normalize_answer(prediction)
    return int(any(norm == normalize_answer(a) for a in answers))


def _f1_single(prediction_tokens: list[str], answer_tokens: list[str]) -> float:
    if not prediction_tokens and not answer_tokens:
        return 1.0
    if not prediction_tokens or not answer_tokens:
        return 0.0
    overlap = sum((Counter(prediction_tokens) & Counter(answer_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(prediction_tokens)
    recall = overlap / len(answer_tokens)
    return 2 * precision * recall / (precision + recall)


def f1_score(prediction: str, answers) -> float:
    """Token-level multiset F1 on normalized text; max over references."""
    if not answers:
        raise InvalidInputError("answers must be non-empty")
    pred_tokens = normalize_answer(prediction).split()
    return max(_f1_single(pred_tokens, normalize_answer(a).split()) for a in answers)


class InteractionCategory(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    CONSISTENTLY_CORRECT = "consistently_correct"
    CONSISTENTLY_WRONG = "consistently_wrong"


def categorize_interaction(no_retrieval_correct: bool, retrieval_correct: bool) -> InteractionCategory:
    if retrieval_correct:
        return InteractionCategory.CONSISTENTLY_CORRECT if no_retrieval_correct else InteractionCategory.POSITIVE
    return InteractionCategory.NEGATIVE if no_retrieval_correct else InteractionCategory.CONSISTENTLY_WRONG


class QualityLabel(str, enum.Enum):
    GOLD = "gold"
    NON_GOLD = "non_gold"


@dataclass(frozen=True)
class ContextQuality:
    label: QualityLabel
    sublabel: str | None = None  # "non_answering" | "irrelevant", externally supplied


@dataclass(frozen=True)
class QAExample:
    id: str
    question: str
    answers: tuple[str, ...]
    contexts: tuple[str, ...] = ()
    quality_sublabel: str | None = None
    source: str | None = None

    def __post_init__(self):
        if not self.answers:
            raise InvalidInputError(f"example {self.id!r} has no reference answers")


def stratify_context_quality(example: QAExample) -> ContextQuality:
    """Gold iff any normalized answer appears inside a normalized passage."""
    if not example.contexts:
        return ContextQuality(QualityLabel.NON_GOLD, "irrelevant")
    norm_passages = [normalize_answer(p) for p in example.contexts]
    for answer in example.answers:
        needle = normalize_answer(answer)
        if needle and any(needle in passage for passage in norm_passages):
            return ContextQuality(QualityLabel.GOLD, None)
    return ContextQuality(QualityLabel.NON_GOLD, example.quality_sublabel)


def load_fixtures(path) -> list[QAExample]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                examples.append(
                    QAExample(
                        id=str(raw["id"]),
                        question=raw["question"],
                        answers=tuple(raw["answers"]),
                        contexts=tuple(raw.get("contexts") or ()),
                        quality_sublabel=raw.get("quality_sublabel"),
                        source=raw.get("source"),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidInputError(f"bad fixture line {lineno}: {exc}") from exc
    return examples


# ---------------------------------------------------------------------------
# Evaluation driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MethodSpec:
    """A named guidance configuration evaluated with retrieved contexts."""

    name: str
    guidance: GuidanceConfig


_POLICY_BY_NAME = {
    "aram": Policy.ARAM,
    "static": Policy.STATIC_CFG,
    "cad": Policy.CAD,
    "adacad": Policy.ADACAD_JSD,
    "none": Policy.NO_GUIDANCE,
}


def method_spec(name: str, **overrides) -> MethodSpec:
    try:
        policy = _POLICY_BY_NAME[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown method {name!r}; expected one of {sorted(_POLICY_BY_NAME)}"
        ) from None
    return MethodSpec(name=name, guidance=GuidanceConfig(policy=policy, **overrides))


@dataclass(frozen=True)
class ExampleRecord:
    example_id: str
    em: int
    f1: float
    quality: ContextQuality
    category: InteractionCategory | None
    nfe: int
    wall_time_s: float


@dataclass
class MethodReport:
    name: str
    n: int = 0
    failures: int = 0
    em: float = 0.0
    f1: float = 0.0
    interaction_rates: dict = field(default_factory=dict)
    per_quality: dict = field(default_factory=dict)
    nfe_total: int = 0
    nfe_per_example: float = 0.0
    latency_mean_s: float | None = None


def _score(prediction: str, example: QAExample) -> tuple[int, float]:
    return exact_match(prediction, example.answers), f1_score(prediction, example.answers)


def _prediction_text(backend: Backend, result: DecodeResult) -> str:
    to_text = getattr(backend, "decode_tokens", None)
    if to_text is not None:
        return " ".join(to_text(result.tokens))
    return " ".join(str(t) for t in result.tokens)


def _aggregate(name: str, records: list[ExampleRecord], failures: int, timing: bool) -> MethodReport:
    report = MethodReport(name=name, failures=failures, n=len(records))
    if not records:
        return report
    report.em = sum(r.em for r in records) / len(records)
    report.f1 = sum(r.f1 for r in records) / len(records)
    report.nfe_total = sum(r.nfe for r in records)
    report.nfe_per_example = report.nfe_total / len(records)
    if timing:
        report.latency_mean_s = sum(r.wall_time_s for r in records) / len(records)

    if any(r.category is not None for r in records):
        counts = Counter(r.category for r in records if r.category is not None)
        total = sum(counts.values())
        report.interaction_rates = {
            cat.value: counts.get(cat, 0) / total for cat in InteractionCategory
        }

    strata: dict[str, list[ExampleRecord]] = {}
    for r in records:
        key = r.quality.label.value
        if r.quality.sublabel:
            strata.setdefault(f"{key}/{r.quality.sublabel}", []).append(r)
        strata.setdefault(key, []).append(r)
    report.per_quality = {
        key: {
            "n": len(group),
            "em": sum(g.em for g in group) / len(group),
            "f1": sum(g.f1 for g in group) / len(group),
        }
        for key, group in sorted(strata.items())
    }
    return report


@dataclass
class EvalReport:
    n_examples: int
    baseline: MethodReport
    methods: list[MethodReport]

    def to_dict(self) -> dict:
        def method_block(m: MethodReport) -> dict:
            block = {
                "n": m.n,
                "failures": m.failures,
                "em": m.em,
                "f1": m.f1,
                "interaction_rates": m.interaction_rates,
                "per_quality": m.per_quality,
                "nfe_total": m.nfe_total,
                "nfe_per_example": m.nfe_per_example,
            }
            if m.latency_mean_s is not None:
                block["latency_mean_s"] = m.latency_mean_s
            return block

        return {
            "n_examples": self.n_examples,
            "baseline": method_block(self.baseline),
            "methods": {m.name: method_block(m) for m in self.methods},
        }


def write_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


_BASELINE_GUIDANCE = GuidanceConfig(policy=Policy.NO_GUIDANCE)


def run_eval(
    examples,
    methods,
    backend: Backend,
    *,
    sampler: SamplerConfig = SamplerConfig(),
    length: int = 1,
    steps: int = 1,
    unmask_policy: UnmaskPolicy = UnmaskPolicy.LOW_CONFIDENCE,
    timing: bool = False,
    max_workers: int = 1,
) -> EvalReport:
    """Decode and score every example under the baseline and every method.

    Per-example decode failures are counted and excluded from the means.
    With ``timing`` false the report omits wall-clock aggregates so repeated
    runs with equal seeds serialize byte-identically.
    """
    examples = list(examples)
    if not examples:
        raise InvalidInputError("no examples to evaluate")
    methods = list(methods)

    def evaluate_one(example: QAExample):
        quality = stratify_context_quality(example)
        rows = {}
        try:
            base = decode(
                example.question, (), backend, _BASELINE_GUIDANCE,
                sampler, unmask_policy, length, steps,
            )
            base_em, base_f1 = _score(_prediction_text(backend, base), example)
        except Exception as exc:
            return {"__baseline__": exc, **{m.name: exc for m in methods}}
        rows["__baseline__"] = ExampleRecord(
            example.id, base_em, base_f1, quality, None, base.nfe_count, base.wall_time_s
        )
        for m in methods:
            try:
                result = decode(
                    example.question, example.contexts, backend, m.guidance,
                    sampler, unmask_policy, length, steps,
                )
                em, f1 = _score(_prediction_text(backend, result), example)
                rows[m.name] = ExampleRecord(
                    example.id, em, f1, quality,
                    categorize_interaction(bool(base_em), bool(em)),
                    result.nfe_count, result.wall_time_s,
                )
            except Exception as exc:
                rows[m.name] = exc
        return rows

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            all_rows = list(pool.map(evaluate_one, examples))
    else:
        all_rows = [evaluate_one(e) for e in examples]

    def collect(name: str) -> MethodReport:
        records = [r[name] for r in all_rows if isinstance(r.get(name), ExampleRecord)]
        failures = sum(1 for r in all_rows if not isinstance(r.get(name), ExampleRecord))
        return _aggregate(name, records, failures, timing)

    return EvalReport(
        n_examples=len(examples),
        baseline=collect("__baseline__"),
        methods=[collect(m.name) for m in methods],
    )
