import json
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from leakage_audit.annotations import (
    AnnotationRecord,
    append_verdict,
    effective_state,
    read_verdict_log,
)
from leakage_audit.errors import ValidationError
from leakage_audit.matcher import MatchResult, write_match_file
from leakage_audit.service import (
    ImageRoots,
    ReviewSession,
    SessionFilters,
    make_server,
)


def ts(hour, minute=0):
    return f"2024-03-01T{hour:02d}:{minute:02d}:00+00:00"


def record(pair_id, verdict="same", duplicate=False, hour=12, annotator="a1"):
    return AnnotationRecord(pair_id, verdict, duplicate, annotator, ts(hour))


def write_matches(path, sims):
    results = [
        [MatchResult(f"p{i}", 1, f"g{i}", f"f{i}", sim)] for i, sim in enumerate(sims)
    ]
    write_match_file(results, path)
    return [f"p{i}|g{i}" for i in range(len(sims))]


class TestAnnotationLog:
    def test_append_and_reload(self, tmp_path):
        path = tmp_path / "v.tsv"
        append_verdict(path, record("a|b", "same", True))
        append_verdict(path, record("c|d", "different"))
        log = read_verdict_log(path)
        assert len(log.records) == 2
        assert log.discarded_partial == 0
        assert log.records[0].duplicate is True

    def test_duplicate_flag_requires_same(self):
        with pytest.raises(ValidationError, match="duplicate=true requires"):
            AnnotationRecord("a|b", "different", True, "x", ts(1))

    def test_truncated_final_line_recovered(self, tmp_path):
        path = tmp_path / "v.tsv"
        append_verdict(path, record("a|b"))
        append_verdict(path, record("c|d"))
        raw = path.read_bytes()
        path.write_bytes(raw + b"e|f\tsame\ttru")  # no newline, cut mid-field
        log = read_verdict_log(path)
        assert len(log.records) == 2
        assert log.discarded_partial == 1

    def test_malformed_interior_line_is_fatal(self, tmp_path):
        path = tmp_path / "v.tsv"
        path.write_text("broken line\n" + record("a|b").to_line() + "\n")
        with pytest.raises(Exception, match="malformed"):
            read_verdict_log(path)

    def test_effective_state_last_timestamp_wins(self):
        records = [
            record("a|b", "same", hour=10),
            record("a|b", "different", hour=12),
            record("a|b", "unsure", hour=11),
        ]
        state = effective_state(records)
        assert state["a|b"].verdict == "different"

    def test_effective_state_tie_broken_by_file_order(self):
        records = [
            record("a|b", "same", hour=10, annotator="first"),
            record("a|b", "different", hour=10, annotator="second"),
        ]
        state = effective_state(records)
        assert state["a|b"].annotator == "second"

    def test_missing_file_is_empty_log(self, tmp_path):
        log = read_verdict_log(tmp_path / "nope.tsv")
        assert log.records == [] and log.discarded_partial == 0


class TestReviewSession:
    def test_queue_order_descending_similarity(self, tmp_path):
        match_file = tmp_path / "m.tsv"
        write_matches(match_file, [0.2, 0.9, 0.5, 0.7])
        session = ReviewSession(match_file, tmp_path / "v.tsv")
        served = []
        while True:
            pair = session.next_pair()
            if pair is None:
                break
            served.append(pair.similarity)
            session.record_verdict(record(pair.pair_id, "different", hour=len(served)))
        assert served == sorted([0.2, 0.9, 0.5, 0.7], reverse=True)

    def test_served_order_matches_sort_oracle_with_interleaving(self, tmp_path):
        rng = np.random.default_rng(10)
        sims = [round(float(s), 6) for s in rng.uniform(-1, 1, 40)]
        match_file = tmp_path / "m.tsv"
        pair_ids = write_matches(match_file, sims)
        session = ReviewSession(match_file, tmp_path / "v.tsv")
        served = []
        hour = 0
        while True:
            pair = session.next_pair()
            if pair is None:
                break
            # idempotent until a verdict arrives
            assert session.next_pair().pair_id == pair.pair_id
            served.append(pair.pair_id)
            session.record_verdict(record(pair.pair_id, "same", hour=hour % 24))
            hour += 1
        oracle = [
            pid for _, pid in sorted(zip(sims, pair_ids), key=lambda x: -x[0])
        ]
        assert served == oracle

    def test_band_filter_defines_universe(self, tmp_path):
        match_file = tmp_path / "m.tsv"
        write_matches(match_file, [0.1, 0.45, 0.62, 0.79, 0.95])
        session = ReviewSession(
            match_file, tmp_path / "v.tsv", filters=SessionFilters(band=(0.4, 0.8))
        )
        assert session.progress()["total"] == 3
        first = session.next_pair()
        assert first.similarity == 0.79

    def test_unannotated_only_queue_shrinks(self, tmp_path):
        match_file = tmp_path / "m.tsv"
        pair_ids = write_matches(match_file, [round(0.1 * i, 2) for i in range(10)])
        verdicts = tmp_path / "v.tsv"
        for pid in pair_ids[:4]:
            append_verdict(verdicts, record(pid, "different"))
        session = ReviewSession(match_file, verdicts)
        progress = session.progress()
        assert progress == {
            "annotated": 4,
            "total": 10,
            "verdicts": {"same": 0, "different": 4, "unsure": 0},
            "discarded_partial": 0,
        }
        remaining = set()
        while (pair := session.next_pair()) is not None:
            remaining.add(pair.pair_id)
            session.record_verdict(record(pair.pair_id, "same"))
        assert remaining == set(pair_ids[4:])

    def test_unknown_pair_rejected(self, tmp_path):
        match_file = tmp_path / "m.tsv"
        write_matches(match_file, [0.5])
        session = ReviewSession(match_file, tmp_path / "v.tsv")
        with pytest.raises(KeyError):
            session.record_verdict(record("x|y"))

    def test_acknowledged_verdict_survives_restart(self, tmp_path):
        match_file = tmp_path / "m.tsv"
        write_matches(match_file, [0.5, 0.6])
        verdicts = tmp_path / "v.tsv"
        session = ReviewSession(match_file, verdicts)
        session.record_verdict(record("p0|g0", "same", True))
        reloaded = ReviewSession(match_file, verdicts)
        assert reloaded.progress()["annotated"] == 1
        assert reloaded.next_pair().pair_id == "p1|g1"


@pytest.fixture
def live_server(tmp_path):
    match_file = tmp_path / "m.tsv"
    write_matches(match_file, [0.3, 0.85, 0.6])
    images = tmp_path / "imgs"
    (images / "sub").mkdir(parents=True)
    (images / "p0.png").write_bytes(b"\x89PNG-p0")
    (images / "sub" / "g1.jpg").write_bytes(b"JPEG-g1")
    session = ReviewSession(
        match_file,
        tmp_path / "v.tsv",
        image_roots=ImageRoots({"probe": images, "gallery": images}),
    )
    server = make_server(session, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    yield base, session, tmp_path
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)


def http(method, url, payload=None):
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(url, data=data, method=method)
    if data:
        req.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(req) as resp:
            body = resp.read()
            return resp.status, json.loads(body) if body else None
    except urllib.error.HTTPError as exc:
        body = exc.read()
        return exc.code, json.loads(body) if body else None


class TestHttpApi:
    def test_next_progress_verdict_flow(self, live_server):
        base, _, tmp_path = live_server
        status, descriptor = http("GET", f"{base}/api/queue/next")
        assert status == 200
        assert descriptor["pair_id"] == "p1|g1"
        assert descriptor["similarity"] == 0.85
        assert descriptor["probe_image"] == "/images/probe/p1"
        assert descriptor["current_verdict"] is None

        status, stored = http(
            "POST",
            f"{base}/api/verdict",
            {"pair_id": "p1|g1", "verdict": "same", "duplicate": False, "annotator": "t"},
        )
        assert status == 201
        assert stored["pair_id"] == "p1|g1"
        # durable before the ack
        assert "p1|g1\tsame" in (tmp_path / "v.tsv").read_text()

        status, progress = http("GET", f"{base}/api/progress")
        assert status == 200
        assert progress["annotated"] == 1 and progress["total"] == 3

        status, nxt = http("GET", f"{base}/api/queue/next")
        assert status == 200 and nxt["pair_id"] == "p2|g2"

    def test_band_query_parameter(self, live_server):
        base, _, _ = live_server
        status, descriptor = http("GET", f"{base}/api/queue/next?band=0.4,0.7")
        assert status == 200
        assert descriptor["pair_id"] == "p2|g2"

    def test_exhausted_queue_is_204(self, live_server):
        base, _, _ = live_server
        for pid in ("p0|g0", "p1|g1", "p2|g2"):
            status, _ = http("POST", f"{base}/api/verdict", {"pair_id": pid, "verdict": "unsure"})
            assert status == 201
        status, _ = http("GET", f"{base}/api/queue/next")
        assert status == 204

    def test_rule_violation_is_409(self, live_server):
        base, _, tmp_path = live_server
        status, body = http(
            "POST",
            f"{base}/api/verdict",
            {"pair_id": "p0|g0", "verdict": "different", "duplicate": True},
        )
        assert status == 409
        assert "duplicate" in body["error"]
        assert not (tmp_path / "v.tsv").exists()  # nothing written

    def test_unknown_pair_is_404(self, live_server):
        base, _, _ = live_server
        status, _ = http("POST", f"{base}/api/verdict", {"pair_id": "zz|qq", "verdict": "same"})
        assert status == 404

    def test_image_routes(self, live_server):
        base, _, _ = live_server
        with urllib.request.urlopen(f"{base}/images/probe/p0") as resp:
            assert resp.status == 200
            assert resp.read() == b"\x89PNG-p0"
            assert resp.headers["Content-Type"] == "image/png"
        # nested directories are indexed too
        with urllib.request.urlopen(f"{base}/images/gallery/g1") as resp:
            assert resp.read() == b"JPEG-g1"
        status, _ = http("GET", f"{base}/images/probe/missing")
        assert status == 404
        status, _ = http("GET", f"{base}/images/unknown_ds/p0")
        assert status == 404

    def test_progress_matches_log_recount(self, live_server):
        base, _, tmp_path = live_server
        http("POST", f"{base}/api/verdict", {"pair_id": "p0|g0", "verdict": "same"})
        http("POST", f"{base}/api/verdict", {"pair_id": "p2|g2", "verdict": "different"})
        http("POST", f"{base}/api/verdict", {"pair_id": "p0|g0", "verdict": "unsure"})
        _, progress = http("GET", f"{base}/api/progress")
        log = read_verdict_log(tmp_path / "v.tsv")
        state = effective_state(log.records)
        assert progress["annotated"] == len(state)
        counts = {"same": 0, "different": 0, "unsure": 0}
        for rec in state.values():
            counts[rec.verdict] += 1
        assert progress["verdicts"] == counts
