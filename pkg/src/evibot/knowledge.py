"""Key-knowledge extraction from tweet text via a text-generation endpoint.

The heavy language model stays outside the package: this module only
builds the prompt, performs the call (or reads an offline fixture), and
parses the five labeled lines of the reply.  Any failure degrades to an
empty `KeyKnowledge` with a logged warning; extraction must never take
the pipeline down.
"""

from __future__ import annotations

import json
import logging
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

FIELDS = ("concepts", "actions", "objects", "emotions", "keywords")


@dataclass(frozen=True)
class KeyKnowledge:
    concepts: list[str] = field(default_factory=list)
    actions: list[str] = field(default_factory=list)
    objects: list[str] = field(default_factory=list)
    emotions: list[str] = field(default_factory=list)
    keywords: list[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not any(getattr(self, f) for f in FIELDS)


def default_template() -> str:
    return resources.files("evibot").joinpath("prompt_template.txt").read_text("utf-8")


def build_prompt(tweets: list[str], template: str | None = None) -> str:
    """Wrap the user's tweets, in posting order, in the prompt template."""
    template = default_template() if template is None else template
    if "{TWEETS}" not in template:
        raise ConfigError("prompt template lacks the {TWEETS} placeholder")
    return template.replace("{TWEETS}", "\n".join(tweets))


def parse_key_knowledge(text: str) -> KeyKnowledge:
    """Parse `field: a, b, c` lines; unknown lines are ignored.

    Fields that never appear stay empty; a warning is logged so silent
    endpoint drift is visible in run logs.
    """
    found: dict[str, list[str]] = {}
    for line in text.splitlines():
        if ":" not in line:
            continue
        name, _, rest = line.partition(":")
        name = name.strip().lower()
        if name in FIELDS and name not in found:
            found[name] = [item.strip() for item in rest.split(",") if item.strip()]
    missing = [f for f in FIELDS if f not in found]
    if missing:
        log.warning("key-knowledge reply missing fields %s; using empty lists", missing)
    return KeyKnowledge(**{f: found.get(f, []) for f in FIELDS})


class HttpTextClient:
    """Minimal text-generation endpoint client.

    Request body: {"prompt": str, "max_tokens": int}; reply: {"text": str}.
    """

    def __init__(self, base_url: str, *, timeout: float = 10.0,
                 max_retries: int = 2, max_tokens: int = 256):
        if not base_url:
            raise ConfigError("text endpoint base_url is empty")
        self.base_url = base_url
        self.timeout = timeout
        self.max_retries = max_retries
        self.max_tokens = max_tokens

    def generate(self, prompt: str, user_id=None) -> str:
        body = json.dumps({"prompt": prompt, "max_tokens": self.max_tokens}).encode()
        req = urllib.request.Request(
            self.base_url, data=body, headers={"Content-Type": "application/json"}
        )
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
                return payload["text"]
            except (urllib.error.URLError, TimeoutError, KeyError, ValueError) as e:
                last = e
                if attempt < self.max_retries:
                    time.sleep(0.05 * (attempt + 1))
        raise DataError(f"text endpoint failed after {self.max_retries + 1} attempts") from last


class StubTextClient:
    """Offline client reading canned replies from `<dir>/<user_id>.txt`."""

    def __init__(self, fixtures_dir):
        self.fixtures_dir = Path(fixtures_dir)
        if not self.fixtures_dir.is_dir():
            raise ConfigError(f"stub fixtures directory not found: {fixtures_dir}")

    def generate(self, prompt: str, user_id=None) -> str:
        path = self.fixtures_dir / f"{user_id}.txt"
        if not path.is_file():
            raise DataError(f"no stub fixture for user {user_id!r} at {path}")
        return path.read_text("utf-8")


def extract_key_knowledge(
    tweets: list[str], client, user_id=None, template: str | None = None
) -> KeyKnowledge:
    """Distill one user's tweets into the five key-knowledge fields.

    An empty tweet list short-circuits to an empty result without
    contacting the endpoint.  Endpoint or parse failures degrade to an
    empty result with a warning.
    """
    if not tweets:
        return KeyKnowledge()
    prompt = build_prompt(tweets, template)
    try:
        reply = client.generate(prompt, user_id=user_id)
    except Exception as e:
        log.warning("key-knowledge extraction failed for user %r: %s", user_id, e)
        return KeyKnowledge()
    return parse_key_knowledge(reply)


def extract_key_knowledge_batch(
    tweets_by_user: dict, client, *, max_workers: int = 4, template: str | None = None
) -> dict:
    """Extract for many users; calls run concurrently up to `max_workers`."""
    if max_workers < 1:
        raise ConfigError(f"max_workers must be >= 1, got {max_workers}")
    ids = list(tweets_by_user)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = pool.map(
            lambda uid: extract_key_knowledge(
                tweets_by_user[uid], client, user_id=uid, template=template
            ),
            ids,
        )
    return dict(zip(ids, results))
