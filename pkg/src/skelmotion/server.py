"""Newline-delimited TCP endpoint: capture lines in, pose lines out.

Each connection owns one Retargeter, so sessions never share state. A
``{"cmd":"reset"}`` line restarts the session's state. Any line that fails to
parse or validate gets one ``{"error": ...}`` reply and the connection closes.
"""

from __future__ import annotations

import asyncio
import json
import logging

from .errors import DegenerateBone, MocapError, ParseError
from .io_formats import RigDefinition, parse_capture_line, write_pose_line
from .retarget import RetargetConfig, Retargeter

logger = logging.getLogger(__name__)


def _is_reset(line: str) -> bool:
    try:
        doc = json.loads(line)
    except ValueError:
        return False
    return doc == {"cmd": "reset"}


class Session:
    """Protocol state for one connection, independent of the transport."""

    def __init__(self, rig: RigDefinition, config: RetargetConfig, mirror_x: bool = False):
        self.driver = Retargeter(rig, config)
        self.mirror_x = mirror_x
        self.line_no = 0

    def feed(self, line: str) -> list[str]:
        """Replies for one input line (without newlines). Raises MocapError on bad input."""
        self.line_no += 1
        try:
            frame = parse_capture_line(line, self.mirror_x)
        except ParseError:
            if _is_reset(line):
                self.driver.reset()
                return []
            raise
        except DegenerateBone as exc:
            if not self.driver.config.skip_bad_frames:
                raise
            logger.warning("dropping line %d: %s", self.line_no, exc.message)
            return []
        return [write_pose_line(pose, pos) for pose, pos in self.driver.push(frame)]

    def close(self) -> None:
        self.driver.finish()


def _error_line(exc: Exception) -> bytes:
    return (json.dumps({"error": str(exc)}) + "\n").encode()


async def _handle(reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                  rig: RigDefinition, config: RetargetConfig, mirror_x: bool) -> None:
    session = Session(rig, config, mirror_x)
    peer = writer.get_extra_info("peername")
    logger.info("session opened %s", peer)
    try:
        while True:
            try:
                raw = await reader.readline()
            except ValueError as exc:
                err = ParseError("line exceeds the size limit")
                err.line = session.line_no + 1
                raise err from exc
            if not raw:
                session.close()
                break
            if raw.endswith(b"\n"):
                raw = raw[:-1]
            try:
                replies = session.feed(raw.decode("utf-8"))
            except UnicodeDecodeError as exc:
                err = ParseError(f"input is not UTF-8: {exc.reason}")
                err.line = session.line_no
                raise err from exc
            except MocapError as exc:
                exc.line = session.line_no
                raise
            if replies:
                writer.write(("\n".join(replies) + "\n").encode())
                await writer.drain()
    except MocapError as exc:
        logger.info("session %s rejected input: %s", peer, exc)
        writer.write(_error_line(exc))
    except (ConnectionError, asyncio.IncompleteReadError):
        logger.info("session %s dropped", peer)
    finally:
        try:
            await writer.drain()
            writer.close()
            await writer.wait_closed()
        except ConnectionError:
            pass
    logger.info("session closed %s", peer)


async def start_server(rig: RigDefinition, config: RetargetConfig = RetargetConfig(),
                       host: str = "127.0.0.1", port: int = 0, mirror_x: bool = False) -> asyncio.AbstractServer:
    """Bind and start accepting; port 0 picks a free port. Raises OSError if the port is taken."""

    async def handler(reader, writer):
        await _handle(reader, writer, rig, config, mirror_x)

    # Lines of a capture frame run to ~1 KB; allow generous slack before rejecting.
    return await asyncio.start_server(handler, host, port, limit=1 << 20)


async def serve_forever(rig: RigDefinition, config: RetargetConfig = RetargetConfig(),
                        host: str = "127.0.0.1", port: int = 8765, mirror_x: bool = False) -> None:
    server = await start_server(rig, config, host, port, mirror_x)
    addrs = ", ".join(str(s.getsockname()) for s in server.sockets)
    logger.info("serving on %s", addrs)
    async with server:
        await server.serve_forever()
