"""PrefLib strict-order (SOC) ingestion and the async download client."""

from __future__ import annotations

import hashlib
import logging
import re
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import httpx
import numpy as np

from semantic_loss.data import SPLITS, Dataset, read_utf8, split_tags
from semantic_loss.errors import PrefLibDownloadError, PrefLibFormatError

logger = logging.getLogger(__name__)

_DEFAULT_TIMEOUT = httpx.Timeout(60.0)

FEATURE_ITEMS = (1, 2, 3, 5, 7, 8)
LABEL_ITEMS = (4, 6, 9, 10)

_ALTERNATIVES_RE = re.compile(r"^#\s*NUMBER ALTERNATIVES:\s*(\d+)\s*$", re.IGNORECASE)


def _parse_order(line_no: int, cells: Sequence[str], num_items: int) -> tuple[int, ...]:
    if any(c.strip().startswith("{") or c.strip().endswith("}") for c in cells):
        raise PrefLibFormatError(line_no, "ties are not allowed in a strict order")
    try:
        order = tuple(int(c) for c in cells)
    except ValueError as exc:
        raise PrefLibFormatError(line_no, f"non-integer item id in {','.join(cells)!r}") from exc
    unknown = [i for i in order if not 1 <= i <= num_items]
    if unknown:
        raise PrefLibFormatError(line_no, f"unknown item id {unknown[0]}")
    if len(order) != num_items or len(set(order)) != num_items:
        raise PrefLibFormatError(
            line_no, f"incomplete order: expected all {num_items} items exactly once"
        )
    return order


def _parse_count(line_no: int, text: str) -> int:
    try:
        count = int(text)
    except ValueError as exc:
        raise PrefLibFormatError(line_no, f"invalid voter count {text!r}") from exc
    if count < 1:
        raise PrefLibFormatError(line_no, f"voter count must be positive, got {count}")
    return count


def _parse_header_layout(lines: list[str]) -> tuple[int, list[tuple[int, ...]]]:
    num_items: int | None = None
    rankings: list[tuple[int, ...]] = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            match = _ALTERNATIVES_RE.match(line)
            if match:
                num_items = int(match.group(1))
            continue
        if num_items is None:
            raise PrefLibFormatError(line_no, "order before '# NUMBER ALTERNATIVES' header")
        count_text, sep, body = line.partition(":")
        if not sep:
            raise PrefLibFormatError(line_no, "expected '<count>: <o1>,<o2>,...'")
        count = _parse_count(line_no, count_text.strip())
        order = _parse_order(line_no, body.split(","), num_items)
        rankings.extend([order] * count)
    if num_items is None:
        raise PrefLibFormatError(1, "missing '# NUMBER ALTERNATIVES' header")
    return num_items, rankings


def _parse_legacy_layout(lines: list[str]) -> tuple[int, list[tuple[int, ...]]]:
    numbered = [(i, line.strip()) for i, line in enumerate(lines, start=1) if line.strip()]
    if not numbered:
        raise PrefLibFormatError(1, "empty file")
    line_no, first = numbered[0]
    try:
        num_items = int(first)
    except ValueError as exc:
        raise PrefLibFormatError(line_no, f"expected the item count, got {first!r}") from exc
    if len(numbered) < num_items + 2:
        raise PrefLibFormatError(numbered[-1][0], "truncated file")
    summary_no, summary = numbered[num_items + 1]
    if len(summary.split(",")) != 3:
        raise PrefLibFormatError(summary_no, "expected '<voters>,<sum>,<unique>'")
    rankings: list[tuple[int, ...]] = []
    for line_no, line in numbered[num_items + 2 :]:
        cells = line.split(",")
        count = _parse_count(line_no, cells[0].strip())
        rankings.extend([_parse_order(line_no, cells[1:], num_items)] * count)
    return num_items, rankings


def parse_soc(text: str) -> tuple[int, list[tuple[int, ...]]]:
    """Item count and one full ranking (best first) per individual."""
    lines = text.splitlines()
    first = next((line.strip() for line in lines if line.strip()), "")
    if first.startswith("#"):
        return _parse_header_layout(lines)
    return _parse_legacy_layout(lines)


def permutation_bits(order: Sequence[int], items: Sequence[int]) -> list[int]:
    """Row-major X_ij over ``items``: item i sits at position j of the restricted order."""
    restricted = [i for i in order if i in items]
    index = {item: k for k, item in enumerate(items)}
    n = len(items)
    bits = [0] * (n * n)
    for position, item in enumerate(restricted):
        bits[index[item] * n + position] = 1
    return bits


def load_preflib_soc(
    path: str | Path,
    seed: int = 0,
    feature_items: Sequence[int] = FEATURE_ITEMS,
    label_items: Sequence[int] = LABEL_ITEMS,
) -> Dataset:
    """Rankings restricted to the feature items become inputs, to the label items targets."""
    source = Path(path)
    num_items, rankings = parse_soc(read_utf8(source))
    needed = max([*feature_items, *label_items])
    if needed > num_items:
        raise PrefLibFormatError(1, f"file ranks {num_items} items but item {needed} is required")
    features = np.asarray([permutation_bits(r, feature_items) for r in rankings], dtype=np.int64)
    labels = np.asarray([permutation_bits(r, label_items) for r in rankings], dtype=np.int64)
    rng = np.random.default_rng(seed)
    tags = np.empty(len(rankings), dtype=f"<U{max(map(len, SPLITS))}")
    order = rng.permutation(len(rankings))
    tags[order] = split_tags(len(rankings))
    meta: dict[str, Any] = {
        "task": "pref",
        "source": source.name,
        "sha256": hashlib.sha256(raw).hexdigest(),
        "seed": seed,
        "feature_items": list(feature_items),
        "label_items": list(label_items),
    }
    logger.info("Loaded %d rankings over %d items from %s", len(rankings), num_items, source)
    return Dataset(features, labels, tags, np.ones(len(rankings), dtype=bool), meta)


# ---------------------------------------------------------------------------
# Download
# ---------------------------------------------------------------------------


class PrefLibClient:
    """Async client that fetches PrefLib data files."""

    def __init__(self, timeout: httpx.Timeout = _DEFAULT_TIMEOUT) -> None:
        self._client = httpx.AsyncClient(timeout=timeout, follow_redirects=True)

    async def __aenter__(self) -> PrefLibClient:
        return self

    async def __aexit__(self, *args: Any) -> None:
        await self._client.aclose()

    async def fetch(self, url: str) -> bytes:
        logger.debug("GET %s", url)
        resp = await self._client.get(url)
        if resp.status_code >= 400:
            raise PrefLibDownloadError(resp.status_code, resp.text[:500])
        return resp.content


async def download_preflib(url: str, dest: str | Path, sha256: str = "") -> Path:
    """Download ``url`` to ``dest``; an expected SHA-256, when given, must match."""
    target = Path(dest)
    async with PrefLibClient() as client:
        payload = await client.fetch(url)
    digest = hashlib.sha256(payload).hexdigest()
    if sha256 and digest != sha256.lower():
        raise PrefLibDownloadError(200, f"checksum mismatch: expected {sha256}, got {digest}")
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(payload)
    logger.info("Downloaded %s (%d bytes, sha256 %s)", target, len(payload), digest[:12])
    return target
