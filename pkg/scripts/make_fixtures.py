#!/usr/bin/env python3
"""Regenerate the committed fixtures under fixtures/.

Everything here is deterministic; golden files (trace, heatmap, bridge
request/response logs) are frozen outputs of this script, reviewed once and
then guarded by tests. Rerun only when a deliberate contract change makes
the goldens stale, and re-review the diff.

The QA fixture family is constructed so the outcome of every example is
known in advance under the count backend (context_weight 0.9, answer
length 1, temperature 0):

  baseline (no contexts)        -> always "paris" (most frequent token)
  gold-context examples         -> conditional argmax = gold; both static
                                   CFG(1) and adaptive guidance flip to it
  junk-context examples         -> conditional argmax = junk token, so
                                   static CFG(1) goes wrong, while the
                                   flat conditional keeps the adaptive
                                   scale small and the prior answer wins
"""

from __future__ import annotations

import json
from pathlib import Path

from aram.analysis import build_heatmap, load_trace, write_heatmap_json
from aram.backends import ToyModelSpec, count_backend, save_toy_spec, table_backend
from aram.bridge_client import encode_request
from aram.engine import (
    BackendRequest,
    SamplerConfig,
    UnmaskPolicy,
    decode,
    write_trace,
)
from aram.guidance import GuidanceConfig

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

ANSWERS = ["berlin", "cairo", "delhi", "lima", "oslo", "quito", "rome", "tokyo"]
JUNK = ["cloud", "dune", "ember", "frost", "maple", "moss", "river", "stone"]
JUNK_PASSAGE = " ".join(JUNK)


def write_qa_corpus() -> Path:
    lines = []
    for _ in range(5):
        lines.append(" ".join(["paris"] * 10))  # 50 occurrences
    for token in ANSWERS:
        for _ in range(4):
            lines.append(" ".join([token] * 10))  # 40 each
    for token in JUNK:
        lines.append(" ".join([token] * 10))  # 10 each
    path = FIXTURES / "qa_corpus.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_qa_fixture() -> Path:
    examples = []

    def add(example_id, question, answer, contexts, sublabel=None):
        examples.append(
            {
                "id": example_id,
                "question": question,
                "answers": [answer],
                "contexts": contexts,
                "quality_sublabel": sublabel,
            }
        )

    # Gold contexts on questions the prior gets wrong: positive interactions.
    for i, token in enumerate(ANSWERS, start=1):
        add(f"pos-{i}", f"which city is landmark {i} in?", token, [" ".join([token] * 3)])

    # Junk contexts on questions the prior gets right: static guidance is
    # dragged to the junk argmax, adaptive guidance should stay with the prior.
    for i in range(1, 7):
        add(f"neg-{i}", f"which city hosts festival {i}?", "paris", [JUNK_PASSAGE], "irrelevant")

    # Gold contexts agreeing with the prior: consistently correct.
    for i in range(1, 4):
        add(f"cc-{i}", f"which city prints journal {i}?", "paris", ["paris paris paris"])

    # Contexts about a different city (on-topic, answer absent) or junk on a
    # question the prior also misses: consistently wrong.
    add("cw-1", "which city is landmark 9 in?", "tokyo", ["berlin berlin berlin"], "non_answering")
    add("cw-2", "which city is landmark 10 in?", "cairo", ["berlin berlin berlin"], "non_answering")
    add("cw-3", "which city hosts festival 7?", "rome", [JUNK_PASSAGE], "irrelevant")

    path = FIXTURES / "qa_fixture.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex) + "\n")
    return path


def write_table_spec() -> Path:
    # All logit values are dyadic rationals, exactly representable in
    # float32, so a JSON round trip through the bridge cannot perturb them.
    spec = ToyModelSpec(
        vocab=("alpha", "bravo", "carol", "delta", "echo"),
        mode="position",
        tables={
            "cond": {
                "0": [2.5, 0.25, -1.0, 0.5, -0.75],
                "1": [-0.5, 1.75, 0.125, -1.25, 0.375],
                "2": [0.0, -0.375, 2.25, 0.625, -1.5],
                "3": [0.75, 0.5, -0.25, 1.625, 0.125],
            },
            "prior": {
                "0": [0.5, 1.25, -0.5, 0.25, -0.375],
                "1": [0.25, 0.375, 0.75, -0.5, 1.125],
                "2": [-0.25, 0.625, 0.5, 1.375, -0.125],
                "3": [1.25, -0.75, 0.375, 0.25, 0.875],
            },
        },
        default_logits=(0.0, 0.0, 0.0, 0.0, 0.0),
    )
    path = FIXTURES / "toy_table_spec.json"
    save_toy_spec(spec, path)
    return path


GOLDEN_QUERY = "which call sign follows?"
GOLDEN_CONTEXTS = ("Passage about call signs.",)
GOLDEN_RUN_ID = "golden-toy-run"


def write_golden_trace(spec_path: Path) -> Path:
    from aram.backends import load_toy_spec

    backend = table_backend(load_toy_spec(spec_path))
    result = decode(
        GOLDEN_QUERY,
        GOLDEN_CONTEXTS,
        backend,
        GuidanceConfig(),
        SamplerConfig(temperature=0.0, top_p=0.9, seed=0),
        UnmaskPolicy.LOW_CONFIDENCE,
        length=4,
        steps=4,
    )
    trace_path = FIXTURES / "golden_trace.jsonl"
    write_trace(trace_path, GOLDEN_RUN_ID, result.steps)
    heatmap_path = FIXTURES / "golden_heatmap.json"
    write_heatmap_json(build_heatmap(load_trace(trace_path)), heatmap_path)
    tokens_path = FIXTURES / "golden_tokens.json"
    tokens_path.write_text(
        json.dumps({"tokens": list(result.tokens), "nfe": result.nfe_count}) + "\n",
        encoding="utf-8",
    )
    return trace_path


def write_bridge_goldens(spec_path: Path) -> None:
    """Record the request/response wire traffic of a short decode.

    The stub bridge must reproduce these responses byte-for-byte (it pins
    latency_ms to 0.0 for that reason).
    """
    from aram.backends import load_toy_spec

    spec = load_toy_spec(spec_path)
    backend = table_backend(spec)
    requests_log: list[bytes] = []
    responses_log: list[dict] = []

    class RecordingBackend:
        model_id = "stub-table"
        vocab_size = spec.vocab_size
        logit_kind = "raw"

        def fetch_logits(self, request: BackendRequest):
            response = backend.fetch_logits(request)
            requests_log.append(encode_request(request))
            responses_log.append(
                {
                    "logits": [[float(x) for x in vec.logits] for vec in response.logits],
                    "model_id": "stub-table",
                    "latency_ms": 0.0,
                }
            )
            return response

    decode(
        "bridge fixture query",
        ("Passage one.", "Passage two."),
        RecordingBackend(),
        GuidanceConfig(),
        SamplerConfig(temperature=0.0, top_p=0.9, seed=0),
        UnmaskPolicy.LOW_CONFIDENCE,
        length=2,
        steps=2,
    )

    bridge_dir = FIXTURES / "bridge"
    bridge_dir.mkdir(exist_ok=True)
    with open(bridge_dir / "golden_requests.jsonl", "wb") as fh:
        for body in requests_log:
            fh.write(body + b"\n")
    with open(bridge_dir / "golden_responses.jsonl", "w", encoding="utf-8") as fh:
        for payload in responses_log:
            fh.write(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    corpus = write_qa_corpus()
    fixture = write_qa_fixture()
    spec_path = write_table_spec()
    trace = write_golden_trace(spec_path)
    write_bridge_goldens(spec_path)
    print(f"wrote {corpus}")
    print(f"wrote {fixture}")
    print(f"wrote {spec_path}")
    print(f"wrote {trace} (+ heatmap, tokens)")
    print(f"wrote {FIXTURES / 'bridge'}/golden_requests.jsonl and golden_responses.jsonl")


if __name__ == "__main__":
    main()
