"""HTTP prediction service.

``POST /predict`` takes the candidate answers of one question and returns a
probability and predicted rank for each; ``GET /health`` reports the loaded
model. Loaded artifacts are never mutated, so handlers share them freely.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Mapping

from bestanswer.dataset import dataset_from_groups, feature_names, needs_reputation, needs_score
from bestanswer.discretise import FeatureRow
from bestanswer.ingest import parse_timestamp
from bestanswer.model import TrainedModel, save_model
from bestanswer.textfeat import BackgroundModel, compute_features, segment, strip_markup

log = logging.getLogger(__name__)


class RequestRejected(ValueError):
    """Invalid prediction request (reported as HTTP 422)."""

    status = HTTPStatus.UNPROCESSABLE_ENTITY


def _answer_rows(answers: list[Any], model: TrainedModel, bg: BackgroundModel, keep_code: bool, max_body_chars: int):
    want_rep = needs_reputation(model.case)
    want_score = needs_score(model.case)
    rows = []
    for i, answer in enumerate(answers):
        if not isinstance(answer, Mapping):
            raise RequestRejected(f"answers[{i}] must be an object")
        body = answer.get("body")
        if not isinstance(body, str):
            raise RequestRejected(f"answers[{i}].body is required and must be a string")
        if len(body) > max_body_chars:
            raise RequestRejected(f"answers[{i}].body exceeds {max_body_chars} characters")
        try:
            created = parse_timestamp(answer["creation_date"])
        except KeyError:
            raise RequestRejected(f"answers[{i}].creation_date is required") from None
        except (TypeError, ValueError, AttributeError):
            raise RequestRejected(f"answers[{i}].creation_date is not an ISO-8601 timestamp") from None
        extra = {}
        for key, wanted in (("score", want_score), ("owner_reputation", want_rep)):
            value = answer.get(key)
            if value is None:
                if wanted:
                    raise RequestRejected(f"answers[{i}].{key} is required by case {int(model.case)} models")
                value = 0
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise RequestRejected(f"answers[{i}].{key} must be a number")
            extra[key] = float(value)
        values = compute_features(segment(strip_markup(body, keep_code=keep_code)), bg).as_dict()
        values["answer_count"] = float(len(answers))
        values["creation_epoch"] = created.timestamp()
        values["reputation"] = extra["owner_reputation"]
        values["score"] = extra["score"]
        rows.append(FeatureRow(i, created, values))
    return rows


def handle_predict(
    request: Any,
    model: TrainedModel,
    bg: BackgroundModel,
    keep_code: bool = False,
    max_body_chars: int = 100_000,
) -> dict:
    """Score the candidate answers of one question.

    Rank features are computed within the request using the direction
    profile stored in the model, so no corpus access is needed.
    """
    if not isinstance(request, Mapping) or not isinstance(request.get("answers"), list):
        raise RequestRejected("request must be an object with an 'answers' list")
    answers = request["answers"]
    if not answers:
        raise RequestRejected("'answers' must contain at least one answer")
    rows = _answer_rows(answers, model, bg, keep_code, max_body_chars)
    dataset = dataset_from_groups([rows], [0], model.case, model.direction_profile)
    probs = model.predict_matrix(dataset.matrix())
    order = sorted(range(len(rows)), key=lambda i: (-probs[i], i))
    ranks = {idx: pos for pos, idx in enumerate(order, start=1)}
    return {
        "answers": [
            {"index": i, "probability": float(probs[i]), "rank": ranks[i]} for i in range(len(rows))
        ],
        "model": {"case": int(model.case), "format_version": model.format_version, "kind": model.kind},
    }


@dataclass
class PredictionService:
    model: TrainedModel | None
    bg: BackgroundModel | None
    keep_code: bool = False
    max_body_chars: int = 100_000
    max_request_bytes: int = 5_000_000
    started: float = field(default_factory=time.monotonic)
    model_digest: str | None = field(init=False, default=None)

    def __post_init__(self):
        if self.model is not None:
            if feature_names(self.model.case) != list(self.model.feature_order):
                raise ValueError("model feature order does not match its case")
            if self.bg is None:
                raise ValueError("a background model is required alongside the model")
            if self.bg.digest() != self.model.background_model_digest:
                raise ValueError("background model does not match the one the model was trained with")
            self.model_digest = hashlib.sha256(save_model(self.model)).hexdigest()

    def predict(self, request: Any) -> dict:
        if self.model is None or self.bg is None:
            raise RuntimeError("no model loaded")
        response = handle_predict(request, self.model, self.bg, self.keep_code, self.max_body_chars)
        response["model"]["digest"] = self.model_digest
        return response

    def health(self) -> dict:
        return handle_health(self)


def handle_health(service: PredictionService | None) -> dict:
    if service is None or service.model is None:
        return {"status": "degraded", "reason": "no model loaded", "model_digest": None, "case": None}
    return {
        "status": "ok",
        "case": int(service.model.case),
        "model_digest": service.model_digest,
        "uptime_seconds": round(time.monotonic() - service.started, 3),
    }


class _Handler(BaseHTTPRequestHandler):
    service: PredictionService  # set on the subclass built by make_server
    protocol_version = "HTTP/1.1"

    def _send(self, status: int, doc: dict):
        body = json.dumps(doc, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path.split("?")[0] != "/health":
            self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
            return
        doc = handle_health(self.service)
        self._send(HTTPStatus.OK if doc["status"] == "ok" else HTTPStatus.SERVICE_UNAVAILABLE, doc)

    def do_POST(self):
        if self.path.split("?")[0] != "/predict":
            self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", ""))
        except ValueError:
            self._send(HTTPStatus.LENGTH_REQUIRED, {"error": "Content-Length required"})
            return
        if length > self.service.max_request_bytes:
            self.close_connection = True
            self._send(HTTPStatus.REQUEST_ENTITY_TOO_LARGE, {"error": "request body too large"})
            return
        raw = self.rfile.read(length)
        if self.service.model is None:
            self._send(HTTPStatus.SERVICE_UNAVAILABLE, {"error": "no model loaded"})
            return
        try:
            request = json.loads(raw.decode("utf-8"))
            self._send(HTTPStatus.OK, self.service.predict(request))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._send(HTTPStatus.BAD_REQUEST, {"error": "body is not valid JSON"})
        except RequestRejected as exc:
            self._send(exc.status, {"error": str(exc)})

    def log_message(self, format, *args):
        log.info("%s - %s", self.address_string(), format % args)


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    # the socketserver default backlog of 5 resets bursts of concurrent clients
    request_queue_size = 128


def make_server(service: PredictionService, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    handler = type("PredictHandler", (_Handler,), {"service": service})
    return _Server((host, port), handler)
