"""Human review queue over HTTP, backed by the append-only verdict log.

A session is opened over a match file and a verdict file. The queue holds
the pairs inside the configured similarity band, served in descending
similarity order (ties by match-file order); a pair leaves the queue once
it has a verdict. Verdict writes are serialized through a single lock and
acknowledged only after the record is flushed to disk, so an acknowledged
verdict survives restarts.

Endpoints (JSON bodies):

* ``GET /api/queue/next[?band=LO,HI&unannotated=true]`` - next pair
  descriptor, or 204 when the queue is exhausted.
* ``POST /api/verdict`` - append an annotation record; 201 on success,
  409 on a rule violation, 404 for an unknown pair.
* ``GET /api/progress`` - annotated/total plus per-verdict counts.
* ``GET /images/{dataset_id}/{image_id}`` - image bytes from the
  configured read-only roots.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, unquote, urlparse

from .annotations import (
    AnnotationRecord,
    VERDICTS,
    append_verdict,
    effective_state,
    make_pair_id,
    now_utc,
    parse_timestamp,
    read_verdict_log,
)
from .errors import ValidationError
from .matcher import MatchResult, read_match_file
from .overlap import ThresholdPolicy

_IMAGE_TYPES = {
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".png": "image/png",
    ".bmp": "image/bmp",
    ".gif": "image/gif",
}


@dataclass
class QueuedPair:
    pair_id: str
    probe_id: str
    gallery_id: str
    gallery_label: str
    similarity: float
    file_order: int


@dataclass
class SessionFilters:
    band: tuple[float, float] | None = None  # inclusive similarity band
    unannotated_only: bool = True


@dataclass
class ImageRoots:
    """dataset_id -> directory; files are looked up by image-id stem."""

    roots: dict[str, Path] = field(default_factory=dict)
    _index: dict[str, dict[str, Path]] = field(default_factory=dict, repr=False)

    def locate(self, dataset_id: str, image_id: str) -> Path | None:
        root = self.roots.get(dataset_id)
        if root is None:
            return None
        index = self._index.get(dataset_id)
        if index is None:
            index = {}
            for p in sorted(root.rglob("*")):
                if p.is_file():
                    index.setdefault(p.stem, p)
            self._index[dataset_id] = index
        return index.get(image_id)


class ReviewSession:
    """Queue state over a match file and a durable verdict log."""

    def __init__(
        self,
        match_file: str | Path,
        verdict_file: str | Path,
        filters: SessionFilters | None = None,
        policy: ThresholdPolicy | None = None,
        probe_dataset: str = "probe",
        gallery_dataset: str = "gallery",
        image_roots: ImageRoots | None = None,
    ) -> None:
        self.verdict_path = Path(verdict_file)
        self.filters = filters or SessionFilters()
        self.policy = policy or ThresholdPolicy()
        self.probe_dataset = probe_dataset
        self.gallery_dataset = gallery_dataset
        self.image_roots = image_roots or ImageRoots()
        self._lock = threading.Lock()

        matches = read_match_file(match_file)
        self._pairs = self._build_queue(matches, self.filters.band)
        self._by_id = {p.pair_id: p for p in self._pairs}
        log = read_verdict_log(self.verdict_path)
        self.discarded_partial = log.discarded_partial
        self._state = effective_state(
            [r for r in log.records if r.pair_id in self._by_id]
        )

    @staticmethod
    def _build_queue(
        matches: list[MatchResult], band: tuple[float, float] | None
    ) -> list[QueuedPair]:
        pairs = []
        for order, m in enumerate(matches):
            if band is not None and not (band[0] <= m.similarity <= band[1]):
                continue
            pairs.append(
                QueuedPair(
                    pair_id=make_pair_id(m.probe_id, m.gallery_id),
                    probe_id=m.probe_id,
                    gallery_id=m.gallery_id,
                    gallery_label=m.gallery_label,
                    similarity=m.similarity,
                    file_order=order,
                )
            )
        pairs.sort(key=lambda p: (-p.similarity, p.file_order))
        return pairs

    def next_pair(
        self,
        band: tuple[float, float] | None = None,
        unannotated_only: bool | None = None,
    ) -> QueuedPair | None:
        """Highest-priority queued pair; idempotent until a verdict arrives."""
        if unannotated_only is None:
            unannotated_only = self.filters.unannotated_only
        with self._lock:
            for pair in self._pairs:
                if band is not None and not (band[0] <= pair.similarity <= band[1]):
                    continue
                if unannotated_only and pair.pair_id in self._state:
                    continue
                return pair
        return None

    def record_verdict(self, record: AnnotationRecord) -> AnnotationRecord:
        """Durably append a verdict; the ack happens after the flush."""
        with self._lock:
            if record.pair_id not in self._by_id:
                raise KeyError(record.pair_id)
            append_verdict(self.verdict_path, record)
            current = self._state.get(record.pair_id)
            if current is None or parse_timestamp(record.timestamp) >= parse_timestamp(
                current.timestamp
            ):
                self._state[record.pair_id] = record
        return record

    def progress(self) -> dict:
        with self._lock:
            counts = {v: 0 for v in VERDICTS}
            for record in self._state.values():
                counts[record.verdict] += 1
            return {
                "annotated": len(self._state),
                "total": len(self._pairs),
                "verdicts": counts,
                "discarded_partial": self.discarded_partial,
            }

    def describe(self, pair: QueuedPair) -> dict:
        with self._lock:
            current = self._state.get(pair.pair_id)
        return {
            "pair_id": pair.pair_id,
            "probe_id": pair.probe_id,
            "gallery_id": pair.gallery_id,
            "gallery_label": pair.gallery_label,
            "similarity": pair.similarity,
            "probe_image": f"/images/{self.probe_dataset}/{pair.probe_id}",
            "gallery_image": f"/images/{self.gallery_dataset}/{pair.gallery_id}",
            "in_review_band": bool(
                self.policy.review_low <= pair.similarity <= self.policy.review_high
            ),
            "auto_duplicate_band": bool(pair.similarity >= self.policy.tau_dup),
            "current_verdict": None
            if current is None
            else {
                "verdict": current.verdict,
                "duplicate": current.duplicate,
                "annotator": current.annotator,
                "timestamp": current.timestamp,
            },
        }


def parse_band(value: str) -> tuple[float, float]:
    parts = value.split(",")
    if len(parts) != 2:
        raise ValidationError(f"band must be LO,HI, got {value!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise ValidationError(f"band must be numeric, got {value!r}") from exc
    if lo > hi:
        raise ValidationError(f"band lower bound {lo} exceeds upper bound {hi}")
    return lo, hi


class _Handler(BaseHTTPRequestHandler):
    session: ReviewSession  # set by make_server
    ui_root: Path | None = None

    # quiet by default; tests and the CLI decide about logging
    def log_message(self, fmt: str, *args) -> None:
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        url = urlparse(self.path)
        if url.path == "/api/queue/next":
            self._handle_next(parse_qs(url.query))
        elif url.path == "/api/progress":
            self._send_json(200, self.session.progress())
        elif url.path.startswith("/images/"):
            self._handle_image(url.path)
        elif self.ui_root is not None:
            self._handle_static(url.path)
        else:
            self._send_json(404, {"error": "unknown path"})

    def _handle_next(self, query: dict) -> None:
        band = None
        if "band" in query:
            try:
                band = parse_band(query["band"][0])
            except ValidationError as exc:
                self._send_json(400, {"error": str(exc)})
                return
        unannotated = None
        if "unannotated" in query:
            unannotated = query["unannotated"][0].lower() != "false"
        pair = self.session.next_pair(band=band, unannotated_only=unannotated)
        if pair is None:
            self.send_response(204)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        self._send_json(200, self.session.describe(pair))

    def _handle_image(self, path: str) -> None:
        parts = [unquote(p) for p in path.split("/") if p]
        if len(parts) != 3:
            self._send_json(404, {"error": "expected /images/{dataset_id}/{image_id}"})
            return
        _, dataset_id, image_id = parts
        if "/" in image_id or image_id in (".", ".."):
            self._send_json(404, {"error": "bad image id"})
            return
        located = self.session.image_roots.locate(dataset_id, image_id)
        if located is None:
            self._send_json(404, {"error": f"no image {image_id!r} in dataset {dataset_id!r}"})
            return
        data = located.read_bytes()
        self.send_response(200)
        ctype = _IMAGE_TYPES.get(located.suffix.lower(), "application/octet-stream")
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _handle_static(self, path: str) -> None:
        assert self.ui_root is not None
        rel = unquote(path).lstrip("/") or "index.html"
        target = (self.ui_root / rel).resolve()
        if not str(target).startswith(str(self.ui_root.resolve())) or not target.is_file():
            self._send_json(404, {"error": "unknown path"})
            return
        data = target.read_bytes()
        ctype = {
            ".html": "text/html; charset=utf-8",
            ".js": "text/javascript; charset=utf-8",
            ".css": "text/css; charset=utf-8",
        }.get(target.suffix.lower(), "application/octet-stream")
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self) -> None:  # noqa: N802
        url = urlparse(self.path)
        if url.path != "/api/verdict":
            self._send_json(404, {"error": "unknown path"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            payload = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            self._send_json(400, {"error": "body must be JSON"})
            return
        try:
            record = AnnotationRecord(
                pair_id=str(payload["pair_id"]),
                verdict=str(payload["verdict"]),
                duplicate=bool(payload.get("duplicate", False)),
                annotator=str(payload.get("annotator", "anonymous")),
                timestamp=str(payload.get("timestamp") or now_utc()),
            )
        except KeyError as exc:
            self._send_json(400, {"error": f"missing field {exc.args[0]!r}"})
            return
        except ValidationError as exc:
            self._send_json(409, {"error": str(exc)})
            return
        try:
            stored = self.session.record_verdict(record)
        except KeyError:
            self._send_json(404, {"error": f"unknown pair_id {record.pair_id!r}"})
            return
        self._send_json(
            201,
            {
                "pair_id": stored.pair_id,
                "verdict": stored.verdict,
                "duplicate": stored.duplicate,
                "annotator": stored.annotator,
                "timestamp": stored.timestamp,
            },
        )


def make_server(
    session: ReviewSession,
    host: str = "127.0.0.1",
    port: int = 0,
    ui_root: str | Path | None = None,
) -> ThreadingHTTPServer:
    """Bind (but do not run) the review server; port 0 picks a free port."""
    handler = type("SessionHandler", (_Handler,), {
        "session": session,
        "ui_root": Path(ui_root) if ui_root is not None else None,
    })
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(server: ThreadingHTTPServer) -> None:
    host, port = server.server_address[:2]
    print(f"annotation service listening on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
