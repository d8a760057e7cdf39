"""Run an external planner process over line-delimited JSON on stdin/stdout.

Session::

    harness -> {"type": "init", ...}         plugin -> {"type": "ready"}
    harness -> {"type": "obs", "tick": k, ...} plugin -> {"type": "cmd", "v": .., "omega": ..}
    harness -> {"type": "shutdown"}

One JSON object per '\\n'-terminated UTF-8 line. Unknown fields are
ignored. Replies may echo "tick"; replies to ticks that already timed out
are discarded.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
from collections import deque
from typing import Sequence

from ..geometry import Twist
from .base import Observation, Planner, PlannerCommand, PlannerContext, PlannerError, PlannerTimeout

HANDSHAKE_TIMEOUT = 10.0
TICK_DEADLINE = 0.25
_EOF = object()


def encode(msg: dict) -> str:
    return json.dumps(msg, separators=(",", ":"), allow_nan=False) + "\n"


def parse_command(line: str) -> tuple[dict, Twist]:
    """Validate one reply line from the plugin."""
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as e:
        raise PlannerError(f"malformed line from plugin: {line[:200]!r}") from e
    if not isinstance(msg, dict) or msg.get("type") != "cmd":
        raise PlannerError(f"expected a cmd message, got {line[:200]!r}")
    v, w = msg.get("v"), msg.get("omega")
    for name, val in (("v", v), ("omega", w)):
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise PlannerError(f"cmd field {name}={val!r} is not a finite number")
    return msg, Twist(float(v), float(w))


class PluginPlanner(Planner):
    """Planner backed by a subprocess speaking the wire protocol."""

    name = "plugin"

    def __init__(self, command: Sequence[str], planner_id: str = "plugin",
                 deadline: float = TICK_DEADLINE, handshake_timeout: float = HANDSHAKE_TIMEOUT,
                 **params):
        super().__init__(**params)
        self.command = list(command)
        self.planner_id = planner_id
        self.deadline = deadline
        self.handshake_timeout = handshake_timeout
        self.proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._stderr: deque = deque(maxlen=20)
        self._tick = 0
        self._stale = 0
        self._threads: list[threading.Thread] = []

    def _read_stdout(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def _read_stderr(self):
        for line in self.proc.stderr:
            self._stderr.append(line.rstrip())

    def _send(self, msg: dict) -> None:
        try:
            self.proc.stdin.write(encode(msg))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as e:
            raise PlannerError(f"plugin stdin closed: {self._stderr_tail()}") from e

    def _stderr_tail(self) -> str:
        return " | ".join(self._stderr) or "<no stderr>"

    def _next_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise PlannerTimeout(f"no reply within {timeout} s") from None
        if line is _EOF:
            raise PlannerError(f"plugin exited: {self._stderr_tail()}")
        return line

    def init(self, ctx: PlannerContext) -> None:
        super().init(ctx)
        try:
            self.proc = subprocess.Popen(self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                         stderr=subprocess.PIPE, text=True, encoding="utf-8",
                                         bufsize=1)
        except OSError as e:
            raise PlannerError(f"cannot start plugin {self.command}: {e}") from e
        self._threads = [threading.Thread(target=self._read_stdout, daemon=True),
                         threading.Thread(target=self._read_stderr, daemon=True)]
        for t in self._threads:
            t.start()
        try:
            self._handshake(ctx)
        except PlannerError:
            self.shutdown()
            raise

    def _handshake(self, ctx: PlannerContext) -> None:
        msg = ctx.to_wire(self.planner_id)
        msg["params"] = {**self.params, **ctx.params}
        self._send(msg)
        try:
            line = self._next_line(self.handshake_timeout)
        except PlannerTimeout as e:
            raise PlannerError("plugin did not answer the init handshake") from e
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as e:
            raise PlannerError(f"malformed handshake line: {line[:200]!r}") from e
        if not isinstance(reply, dict) or reply.get("type") != "ready":
            raise PlannerError(f"expected ready, got {line[:200]!r}")

    def compute(self, obs: Observation) -> PlannerCommand:
        tick = self._tick
        self._tick += 1
        self._send(obs.to_wire(tick))
        while True:
            try:
                line = self._next_line(self.deadline)
            except PlannerTimeout:
                self._stale += 1  # the late reply must not answer a later tick
                raise
            msg, twist = parse_command(line)
            reply_tick = msg.get("tick")
            if isinstance(reply_tick, int) and not isinstance(reply_tick, bool):
                if reply_tick < tick:
                    continue
                self._stale = 0
            elif self._stale:
                self._stale -= 1
                continue
            return PlannerCommand(twist)

    def shutdown(self) -> None:
        if self.proc is None:
            return
        try:
            if self.proc.poll() is None:
                self._send({"type": "shutdown"})
                self.proc.stdin.close()
                self.proc.wait(timeout=2.0)
        except (PlannerError, subprocess.TimeoutExpired, OSError):
            pass
        finally:
            if self.proc.poll() is None:
                self.proc.kill()
                self.proc.wait()
            for t in self._threads:
                t.join(timeout=1.0)
            for stream in (self.proc.stdin, self.proc.stdout, self.proc.stderr):
                try:
                    stream.close()
                except OSError:
                    pass
            self.proc = None
