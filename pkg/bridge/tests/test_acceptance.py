"""Acceptance gate for the bridge: protocol conformance plus decode parity.

One printed pass/fail line. The end-to-end half drives the decoding engine
through a live stub server and requires token-for-token agreement with the
in-process table backend on the shared toy fixture.
"""

import json

from aram.backends import load_toy_spec, table_backend
from aram.bridge_client import BridgeBackend, BridgeEndpoint
from aram.engine import SamplerConfig, UnmaskPolicy, decode
from aram.guidance import GuidanceConfig

from conftest import TOY_SPEC


def check(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


GOLDEN_QUERY = "which call sign follows?"
GOLDEN_CONTEXTS = ("Passage about call signs.",)


def golden_decode(backend):
    return decode(
        GOLDEN_QUERY,
        GOLDEN_CONTEXTS,
        backend,
        GuidanceConfig(),
        SamplerConfig(temperature=0.0, top_p=0.9, seed=0),
        UnmaskPolicy.LOW_CONFIDENCE,
        length=4,
        steps=4,
    )


class TestProtocolConformance:
    def test_golden_suite_and_end_to_end_parity(self, stub_client, live_stub, fixtures_dir):
        requests = (fixtures_dir / "bridge" / "golden_requests.jsonl").read_bytes().splitlines()
        responses = (fixtures_dir / "bridge" / "golden_responses.jsonl").read_bytes().splitlines()
        assert len(requests) == len(responses) and requests
        mismatches = 0
        for request_bytes, response_bytes in zip(requests, responses):
            reply = stub_client.post("/v1/logits", content=request_bytes)
            if reply.status_code != 200 or reply.content != response_bytes:
                mismatches += 1

        remote = BridgeBackend(BridgeEndpoint(base_url=live_stub))
        try:
            over_wire = golden_decode(remote)
        finally:
            remote.close()
        in_process = golden_decode(table_backend(load_toy_spec(TOY_SPEC)))
        golden = json.loads((fixtures_dir / "golden_tokens.json").read_text())

        ok = (
            mismatches == 0
            and over_wire.tokens == in_process.tokens
            and list(over_wire.tokens) == golden["tokens"]
            and over_wire.nfe_count == in_process.nfe_count == golden["nfe"]
        )
        check(
            "protocol-conformance",
            ok,
            f"golden lines {len(requests) - mismatches}/{len(requests)} byte-exact, "
            f"bridge decode tokens {list(over_wire.tokens)} vs in-process "
            f"{list(in_process.tokens)}, nfe {over_wire.nfe_count}",
        )
