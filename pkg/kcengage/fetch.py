"""
Download of the PEEKC train/test files with a sha256 record next to them.
"""

import asyncio
import dataclasses
import hashlib
import json
import logging
from pathlib import Path

import aiofiles
import aiofiles.os
import aiohttp

from . import settings
from .models import ChecksumMismatchError, DataError, NetworkError

logger = logging.getLogger(__name__)


@dataclasses.dataclass(slots=True)
class FetchResult:
    dest: Path
    downloaded: list[Path] = dataclasses.field(default_factory=list)
    skipped: list[Path] = dataclasses.field(default_factory=list)
    checksums: dict[str, str] = dataclasses.field(default_factory=dict)


async def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    async with aiofiles.open(path, "rb") as f:
        while chunk := await f.read(settings.fetch.chunk_size):
            digest.update(chunk)
    return digest.hexdigest()


async def read_checksums(dest: Path) -> dict[str, str]:
    path = dest / settings.fetch.checksum_file
    if not await aiofiles.os.path.exists(path):
        return {}
    async with aiofiles.open(path, encoding="utf-8") as f:
        text = await f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        msg = f"{path} is not JSON: {e}"
        raise DataError(msg) from e
    if not isinstance(data, dict):
        msg = f"{path} must map file names to sha256 digests"
        raise DataError(msg)
    return {str(k): str(v) for k, v in data.items()}


async def write_checksums(dest: Path, checksums: dict[str, str]) -> None:
    path = dest / settings.fetch.checksum_file
    async with aiofiles.open(path, "w", encoding="utf-8") as f:
        await f.write(json.dumps(dict(sorted(checksums.items())), indent=2) + "\n")


async def _download(session: aiohttp.ClientSession, url: str, path: Path) -> str:
    partial = path.with_name(path.name + ".part")
    digest = hashlib.sha256()
    logger.info("downloading %s", url)
    try:
        async with session.get(url) as resp:
            resp.raise_for_status()
            async with aiofiles.open(partial, "wb") as f:
                async for chunk in resp.content.iter_chunked(
                    settings.fetch.chunk_size
                ):
                    digest.update(chunk)
                    await f.write(chunk)
    except (aiohttp.ClientError, TimeoutError) as e:
        if await aiofiles.os.path.exists(partial):
            await aiofiles.os.remove(partial)
        msg = f"cannot download {url}: {e}"
        raise NetworkError(msg) from e
    await aiofiles.os.replace(partial, path)
    return digest.hexdigest()


async def _verify(path: Path, expected: str) -> None:
    if (actual := await file_sha256(path)) != expected:
        msg = (
            f"{path} has sha256 {actual[:12]}..., recorded {expected[:12]}...;"
            " re-fetch it with `kcengage fetch --force`"
        )
        raise ChecksumMismatchError(msg)


async def fetch_dataset(
    dest: Path | None = None,
    url: str | None = None,
    *,
    offline: bool = False,
    force: bool = False,
) -> FetchResult:
    """Make sure train and test files are present and match their checksums.

    Files with a recorded checksum are verified and kept; missing ones are
    downloaded unless ``offline``. ``force`` downloads everything again.
    """
    dest = dest or settings.app.data_dir
    url = (url or settings.fetch.url).rstrip("/")
    await aiofiles.os.makedirs(dest, exist_ok=True)
    recorded = {} if force else await read_checksums(dest)
    result = FetchResult(dest, checksums=dict(recorded))
    names = [settings.fetch.train_file, settings.fetch.test_file]
    missing: list[str] = []
    for name in names:
        path = dest / name
        if force or not await aiofiles.os.path.exists(path):
            missing.append(name)
        elif (expected := recorded.get(name)) is not None:
            await _verify(path, expected)
            logger.info("%s matches its checksum, skipped", path)
            result.skipped.append(path)
        else:
            logger.warning("%s has no recorded checksum, recording it", path)
            result.checksums[name] = await file_sha256(path)
            result.skipped.append(path)
    if missing and offline:
        msg = f"offline and missing {', '.join(missing)} in {dest}"
        raise DataError(msg)
    if missing:
        timeout = aiohttp.ClientTimeout(total=settings.fetch.timeout)
        async with aiohttp.ClientSession(timeout=timeout) as session:
            digests = await asyncio.gather(*(
                _download(session, f"{url}/{name}", dest / name) for name in missing
            ))
        for name, digest in zip(missing, digests, strict=True):
            result.checksums[name] = digest
            result.downloaded.append(dest / name)
    if result.checksums != recorded:
        await write_checksums(dest, result.checksums)
    return result
