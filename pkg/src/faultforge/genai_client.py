"""Clients for the offline generative backends plus the fidelity gate.

Remote backends speak JSON over HTTP:

* ``POST {ldm}/v1/synthesize`` ``{image_b64, prompt, strength}`` -> ``{image_b64}``
* ``POST {clip}/v1/score`` ``{image_b64, text}`` -> ``{score}``
* ``POST {llm}/v1/generate`` ``{prompt}`` -> ``{text}`` (pipe-text scenario lines)

Images travel as base64 PNG.  :class:`LocalStub` answers the same calls
offline and deterministically.
"""

from __future__ import annotations

import base64
import logging
import os
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import httpx

from .degrade import DegradationSpec, apply_fault, degradation_magnitude
from .errors import BackendError, DecodeError, TransportError
from .image import ImageBuffer, decode_png, encode_png
from .scenario import FaultScenario, parse_scenario_file

log = logging.getLogger(__name__)

DEFAULT_GATE_THRESHOLD = 0.25
BACKOFF_BASE_S = 0.25
MAX_RETRIES_LIMIT = 5
STUB_MAGNITUDE_PER_STRENGTH = 0.4  # stub calibration only

ENV_LLM_URL = "FAULTFORGE_LLM_URL"
ENV_LDM_URL = "FAULTFORGE_LDM_URL"
ENV_CLIP_URL = "FAULTFORGE_CLIP_URL"
ENV_TOKEN = "FAULTFORGE_TOKEN"


@dataclass(frozen=True)
class BackendEndpoint:
    base_url: str
    auth_token: Optional[str] = None
    timeout_ms: int = 30_000
    max_retries: int = 2

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if not 0 <= self.max_retries <= MAX_RETRIES_LIMIT:
            raise ValueError(f"max_retries must be in [0, {MAX_RETRIES_LIMIT}]")


def endpoints_from_env(env=None, timeout_ms: int = 30_000, max_retries: int = 2) -> Dict[str, BackendEndpoint]:
    """Endpoints configured through ``FAULTFORGE_*`` variables, keyed ``llm``/``ldm``/``clip``."""
    env = os.environ if env is None else env
    token = env.get(ENV_TOKEN) or None
    out = {}
    for key, var in (("llm", ENV_LLM_URL), ("ldm", ENV_LDM_URL), ("clip", ENV_CLIP_URL)):
        url = env.get(var)
        if url:
            out[key] = BackendEndpoint(url.rstrip("/"), token, timeout_ms, max_retries)
    return out


@dataclass(frozen=True)
class FidelityScore:
    scenario_id: str
    score: float
    threshold: float
    accepted: bool


def gate(scores: Sequence[Tuple[str, float]], threshold: float = DEFAULT_GATE_THRESHOLD):
    """Split scored items into accepted and rejected, keeping input order.

    Acceptance is non-strict: a score equal to the threshold passes.
    """
    if not -1.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [-1, 1]")
    accepted: List[FidelityScore] = []
    rejected: List[FidelityScore] = []
    for scenario_id, score in scores:
        ok = score >= threshold
        (accepted if ok else rejected).append(FidelityScore(scenario_id, score, threshold, ok))
    return accepted, rejected


def _b64(image: ImageBuffer) -> str:
    return base64.b64encode(encode_png(image)).decode("ascii")


def _unb64(payload) -> ImageBuffer:
    if not isinstance(payload, str):
        raise DecodeError("image_b64 missing from response")
    try:
        raw = base64.b64decode(payload, validate=True)
    except ValueError as exc:
        raise DecodeError(f"bad base64 image payload: {exc}") from None
    return decode_png(raw)


class RemoteClient:
    """JSON-over-HTTP client with bounded retries and exponential backoff.

    Transport failures and 5xx responses are retried up to ``max_retries``
    times (sleeping 250 ms * 2**attempt in between) before TransportError;
    other non-2xx statuses raise BackendError immediately.
    """

    def __init__(
        self,
        endpoint: BackendEndpoint,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self._sleep = sleep
        headers = {"Accept": "application/json"}
        if endpoint.auth_token:
            headers["Authorization"] = f"Bearer {endpoint.auth_token}"
        self._http = httpx.Client(
            base_url=endpoint.base_url,
            headers=headers,
            timeout=endpoint.timeout_ms / 1000.0,
            transport=transport,
        )

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def post(self, path: str, payload: dict) -> dict:
        last = None
        for attempt in range(self.endpoint.max_retries + 1):
            if attempt:
                self._sleep(BACKOFF_BASE_S * 2 ** (attempt - 1))
            try:
                resp = self._http.post(path, json=payload)
            except httpx.TransportError as exc:  # includes timeouts
                last = f"{type(exc).__name__}: {exc}"
                log.warning("%s%s attempt %d failed: %s", self.endpoint.base_url, path, attempt + 1, last)
                continue
            if resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                log.warning("%s%s attempt %d failed: %s", self.endpoint.base_url, path, attempt + 1, last)
                continue
            if resp.status_code >= 400:
                raise BackendError(resp.status_code, resp.text[:200])
            try:
                body = resp.json()
            except ValueError:
                raise DecodeError(f"{path}: response is not JSON") from None
            if not isinstance(body, dict):
                raise DecodeError(f"{path}: expected a JSON object")
            return body
        raise TransportError(f"{path}: giving up after {self.endpoint.max_retries + 1} attempts ({last})")

    def synth_image(self, base: ImageBuffer, scenario: FaultScenario) -> ImageBuffer:
        body = self.post(
            "/v1/synthesize",
            {"image_b64": _b64(base), "prompt": scenario.prompt, "strength": scenario.strength},
        )
        return _unb64(body.get("image_b64"))

    def score_fidelity(self, image: ImageBuffer, description: str, image_id: Optional[str] = None) -> float:
        if not description:
            raise ValueError("description must be nonempty")
        body = self.post("/v1/score", {"image_b64": _b64(image), "text": description})
        score = body.get("score")
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise DecodeError("score missing from response")
        return float(score)

    def generate_scenarios(self, prompt: str) -> List[FaultScenario]:
        body = self.post("/v1/generate", {"prompt": prompt})
        text = body.get("text")
        if not isinstance(text, str):
            raise DecodeError("text missing from response")
        return parse_scenario_file(text.encode("utf-8"), "pipe_text")


class LocalStub:
    """Offline stand-in for the synthesis and scoring backends.

    Synthesis is :func:`apply_fault`.  Scoring compares the observed
    degradation against ``0.4 * strength`` for a base frame registered under
    the image id; unregistered images score 0.
    """

    def __init__(self):
        self._bases: Dict[str, Tuple[ImageBuffer, float]] = {}

    def register_base(self, image_id: str, base: ImageBuffer, strength: float) -> None:
        self._bases[image_id] = (base, strength)

    def synth_image(self, base: ImageBuffer, scenario: FaultScenario) -> ImageBuffer:
        return apply_fault(base, DegradationSpec.from_scenario(scenario))

    def score_fidelity(self, image: ImageBuffer, description: str, image_id: Optional[str] = None) -> float:
        if not description:
            raise ValueError("description must be nonempty")
        registered = self._bases.get(image_id) if image_id is not None else None
        if registered is None:
            return 0.0
        base, strength = registered
        expected = STUB_MAGNITUDE_PER_STRENGTH * strength
        return 1.0 - abs(expected - degradation_magnitude(base, image))
