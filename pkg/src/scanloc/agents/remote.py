"""OpenAI-compatible chat-completion backend for real scanner and locator models.

Images travel as base64 PNG data URLs. A prompt may place images inline with
``<Image1>``, ``<Image2>``... markers; otherwise all images precede the text.
Images above ``max_pixels`` are downscaled before sending and the locator's
coordinates are mapped back to the payload frame.
"""

from __future__ import annotations

import base64
import io
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

import httpx
from PIL import Image

from scanloc.agents.base import BackendError, ConfigurationError, ImagePayload, LocatorError
from scanloc.geometry import PointPx, clamp_point
from scanloc.protocol import LOCATOR_STYLES, ParseError, PromptKind, parse_point_detailed, render_prompt

log = logging.getLogger(__name__)

_RETRYABLE = frozenset({408, 425, 429, 500, 502, 503, 504})
_MARKER = re.compile(r"<Image(\d+)>")


@dataclass(frozen=True)
class BackendConfig:
    """Connection and decoding settings for one remote model.

    Attributes:
        endpoint: Full chat-completions URL.
        model: Model identifier sent in the request body.
        api_key_env: Name of the environment variable holding the API key.
        temperature: Sampling temperature.
        top_p: Nucleus sampling mass.
        max_retries: Extra attempts after the first on 5xx, 429 or transport errors.
        timeout_s: Per-attempt timeout; a call never outlives ``timeout_s * (max_retries + 1)``.
        rate_per_s: Request-rate cap shared by all threads using this backend, or None.
        backoff_s: First retry delay; doubles per attempt.
        max_pixels: Downscale images whose pixel count exceeds this, or None.
        coordinate_scale: If set, the locator answers on a 0..scale grid instead of pixels.
        prompt_style: Locator prompt family (``os_atlas``, ``uground``, ``uground_v1``).
        max_tokens: Completion length cap, or None for the server default.
    """

    endpoint: str = "https://openrouter.ai/api/v1/chat/completions"
    model: str = ""
    api_key_env: str = "OPENROUTER_API_KEY"
    temperature: float = 0.7
    top_p: float = 0.95
    max_retries: int = 3
    timeout_s: float = 60.0
    rate_per_s: float | None = None
    backoff_s: float = 1.0
    max_pixels: int | None = None
    coordinate_scale: int | None = None
    prompt_style: str = "os_atlas"
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")
        if self.timeout_s <= 0:
            raise ConfigurationError("timeout_s must be > 0")
        if self.rate_per_s is not None and self.rate_per_s <= 0:
            raise ConfigurationError("rate_per_s must be > 0")
        if self.max_pixels is not None and self.max_pixels < 1:
            raise ConfigurationError("max_pixels must be >= 1")
        if self.prompt_style not in LOCATOR_STYLES:
            raise ConfigurationError(f"unknown prompt_style {self.prompt_style!r}")

    @classmethod
    def scanner(cls, **overrides: Any) -> BackendConfig:
        return cls(**{"temperature": 0.7, "top_p": 0.95, **overrides})

    @classmethod
    def locator(cls, **overrides: Any) -> BackendConfig:
        return cls(**{"temperature": 0.0, "top_p": 1.0, **overrides})


class TokenBucket:
    """Thread-safe token bucket: ``rate`` tokens per second, burst of ``capacity``."""

    def __init__(
        self,
        rate: float,
        capacity: float | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._stamp = clock()
        self._lock = threading.Lock()

    def acquire(self, deadline: float | None = None) -> None:
        """Take one token, waiting as needed.

        Raises:
            BackendError: if the wait would run past ``deadline``.
        """
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            if deadline is not None and now + wait > deadline:
                raise BackendError("rate cap wait exceeds call deadline")
            self._sleep(wait)


def encode_image(image: Image.Image, max_pixels: int | None) -> tuple[str, tuple[int, int]]:
    """PNG data URL of ``image``, downscaled to at most ``max_pixels``; returns the sent size."""
    w, h = image.size
    if max_pixels is not None and w * h > max_pixels:
        ratio = math.sqrt(max_pixels / (w * h))
        size = (max(1, math.floor(w * ratio)), max(1, math.floor(h * ratio)))
        image = image.resize(size, Image.Resampling.LANCZOS)
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii"), image.size


def build_content(prompt: str, image_urls: Sequence[str]) -> list[dict]:
    """Interleave text and images at ``<ImageN>`` markers; unmarked images go first."""
    parts: list[dict] = []
    used: set[int] = set()
    pos = 0
    for match in _MARKER.finditer(prompt):
        n = int(match.group(1))
        if not 1 <= n <= len(image_urls):
            continue
        parts.append({"type": "text", "text": prompt[pos:match.end()]})
        parts.append({"type": "image_url", "image_url": {"url": image_urls[n - 1]}})
        used.add(n)
        pos = match.end()
    leading = [
        {"type": "image_url", "image_url": {"url": url}}
        for i, url in enumerate(image_urls, start=1) if i not in used
    ]
    tail = prompt[pos:]
    if tail or not parts:
        parts.append({"type": "text", "text": tail})
    return leading + parts


def _reply_text(body: Any) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise BackendError("response has no choices[0].message.content", 200) from None
    if isinstance(content, list):
        content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
    if not isinstance(content, str):
        raise BackendError("response content is not text", 200)
    return content


class ChatClient:
    """Retrying, rate-capped HTTP client for one backend."""

    def __init__(
        self,
        config: BackendConfig,
        transport: httpx.BaseTransport | None = None,
        env: Mapping[str, str] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        env = os.environ if env is None else env
        key = env.get(config.api_key_env, "")
        if not key:
            raise ConfigurationError(f"environment variable {config.api_key_env} is not set")
        if not config.model:
            raise ConfigurationError("backend model identifier is empty")
        self.config = config
        self._headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        self._client = httpx.Client(transport=transport, timeout=config.timeout_s)
        self._sleep = sleep
        self._bucket = TokenBucket(config.rate_per_s, sleep=sleep) if config.rate_per_s else None

    def close(self) -> None:
        self._client.close()

    def chat(self, content: list[dict]) -> str:
        cfg = self.config
        payload: dict[str, Any] = {
            "model": cfg.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
        }
        if cfg.max_tokens is not None:
            payload["max_tokens"] = cfg.max_tokens
        deadline = time.monotonic() + cfg.timeout_s * (cfg.max_retries + 1)
        last_status: int | None = None
        last_error = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            if self._bucket is not None:
                self._bucket.acquire(deadline)
            try:
                resp = self._client.post(
                    cfg.endpoint, json=payload, headers=self._headers,
                    timeout=min(cfg.timeout_s, remaining),
                )
            except httpx.TransportError as exc:
                last_status, last_error = None, f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        return _reply_text(resp.json())
                    except ValueError:
                        raise BackendError("response body is not JSON", 200) from None
                last_status, last_error = resp.status_code, f"HTTP {resp.status_code}: {resp.text[:200]}"
                if resp.status_code not in _RETRYABLE:
                    raise BackendError(last_error, last_status)
            log.warning("attempt %d/%d failed: %s", attempt + 1, cfg.max_retries + 1, last_error)
            if attempt < cfg.max_retries:
                delay = min(cfg.backoff_s * 2 ** attempt, max(0.0, deadline - time.monotonic()))
                self._sleep(delay)
        raise BackendError(f"gave up: {last_error}", last_status)


class RemoteScanner:
    """Scanner backed by a chat-completion model."""

    def __init__(self, config: BackendConfig, **client_kwargs: Any) -> None:
        self.client = ChatClient(config, **client_kwargs)
        self.calls = 0

    def complete(self, prompt: str, images: Sequence[ImagePayload]) -> str:
        urls = [encode_image(im.render(), self.client.config.max_pixels)[0] for im in images]
        self.calls += 1
        return self.client.chat(build_content(prompt, urls))


class RemoteLocator:
    """Locator backed by a chat-completion grounding model.

    The reply is read with :func:`parse_point_detailed`; coordinates are
    mapped from the sent image (or the ``coordinate_scale`` grid) back to the
    payload frame and clamped.
    """

    def __init__(self, config: BackendConfig, **client_kwargs: Any) -> None:
        self.client = ChatClient(config, **client_kwargs)
        self.calls = 0
        self.last_warnings: tuple[str, ...] = ()

    def ground(self, instruction: str, image: ImagePayload) -> PointPx:
        cfg = self.client.config
        prompt = render_prompt(PromptKind("locator_ground", cfg.prompt_style), {"instruction": instruction})
        url, (sw, sh) = encode_image(image.render(), cfg.max_pixels)
        self.calls += 1
        reply = self.client.chat(build_content(prompt, [url]))
        try:
            parsed = parse_point_detailed(reply)
        except ParseError as exc:
            raise LocatorError(f"{exc}: {reply[:120]!r}") from None
        self.last_warnings = parsed.warnings
        w, h = image.size.width, image.size.height
        if cfg.coordinate_scale:
            fx, fy = w / cfg.coordinate_scale, h / cfg.coordinate_scale
        else:
            fx, fy = w / sw, h / sh
        p = PointPx(math.floor(parsed.point.x * fx), math.floor(parsed.point.y * fy))
        return clamp_point(p, image.frame)
