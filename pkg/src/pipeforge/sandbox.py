"""Isolated execution of generated code; the only place such code ever runs.

Isolation is process-level: each execution gets a disposable scratch
directory under the system temp root, a strict environment allow-list, and
its own process group so timeouts can kill the whole tree. Input data is
copied into the scratch (never exposed by orchestrator path), and when the
orchestrator runs as root the child drops to an unprivileged uid, so files
sealed with mode 000 stay unreadable from inside.
"""

from __future__ import annotations

import os
import re
import shlex
import shutil
import signal
import stat
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from . import canonical
from .errors import InterpreterMissing
from .types import ExecutionResult, ParsedTraceback, TracebackFrame

TAIL_BYTES = 16 * 1024
DEFAULT_STAGE_TIMEOUT = 600.0

_NOBODY_UID = 65534
_NOBODY_GID = 65534


@dataclass(frozen=True)
class ExecutionLimits:
    timeout_s: float = DEFAULT_STAGE_TIMEOUT
    max_output_bytes: int = TAIL_BYTES


class Budget:
    """Cumulative wall-clock budget shared by every sandbox execution of a run."""

    def __init__(self, total_s: float):
        self.total_s = total_s
        self._spent = 0.0
        self._lock = threading.Lock()

    def remaining(self) -> float:
        with self._lock:
            return self.total_s - self._spent

    def consume(self, seconds: float) -> None:
        with self._lock:
            self._spent += seconds

    @property
    def spent(self) -> float:
        with self._lock:
            return self._spent


def _chmod_tree(root: Path, dir_mode: int, file_mode: int) -> None:
    os.chmod(root, dir_mode)
    for dirpath, dirnames, filenames in os.walk(root):
        for d in dirnames:
            os.chmod(os.path.join(dirpath, d), dir_mode)
        for f in filenames:
            p = os.path.join(dirpath, f)
            if not os.path.islink(p):
                os.chmod(p, file_mode)


class Workspace:
    """One execution's scratch directory. Disjoint per execution by design."""

    def __init__(self, root: Path):
        self.root = root

    def path(self, rel: str) -> Path:
        return self.root / rel

    def add_file(self, rel: str, text: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        os.chmod(p, 0o644)
        return p

    def mount_dir(self, rel: str, src: Path, writable: bool = False) -> Path:
        """Copy a directory into the scratch so the child never touches src."""
        dst = self.root / rel
        if src is not None and Path(src).is_dir():
            shutil.copytree(src, dst)
        else:
            dst.mkdir(parents=True, exist_ok=True)
        _chmod_tree(dst, 0o777 if writable else 0o755, 0o666 if writable else 0o644)
        return dst

    def collect_dir(self, rel: str, dst: Path) -> None:
        """Copy a scratch directory back out, replacing the destination."""
        src = self.root / rel
        if dst.exists():
            shutil.rmtree(dst)
        if src.is_dir():
            shutil.copytree(src, dst)
        else:
            dst.mkdir(parents=True, exist_ok=True)

    def cleanup(self) -> None:
        shutil.rmtree(self.root, ignore_errors=True)


class Sandbox:
    """Runs scripts as child processes under timeouts and a global budget."""

    def __init__(
        self,
        interpreter: str = "python3",
        budget: Budget | None = None,
        max_concurrency: int = 3,
        seed: int = 0,
        drop_privileges: str = "auto",  # auto | never
        keep_scratch: bool = False,
        record_dir: Path | None = None,
        scratch_base: Path | None = None,
    ):
        self.interpreter_argv = shlex.split(interpreter)
        if not self.interpreter_argv or shutil.which(self.interpreter_argv[0]) is None:
            raise InterpreterMissing(f"interpreter not resolvable: {interpreter!r}")
        self.budget = budget
        self.seed = seed
        self.keep_scratch = keep_scratch
        self.record_dir = record_dir
        self.scratch_base = scratch_base
        self._semaphore = threading.Semaphore(max_concurrency)
        self._counter = 0
        self._counter_lock = threading.Lock()
        self._drop = drop_privileges == "auto" and os.geteuid() == 0

    def workspace(self) -> Workspace:
        with self._counter_lock:
            self._counter += 1
            n = self._counter
        base = str(self.scratch_base) if self.scratch_base else None
        root = Path(tempfile.mkdtemp(prefix=f"pipeforge-exec-{os.getpid()}-{n}-", dir=base))
        os.chmod(root, 0o777)
        return Workspace(root)

    def _child_env(self, cwd: Path) -> dict[str, str]:
        env = {
            "HOME": str(cwd),
            "TMPDIR": str(cwd),
            "MPLCONFIGDIR": str(cwd),
            "PYTHONDONTWRITEBYTECODE": "1",
            "PYTHONHASHSEED": str(self.seed),
            "SANDBOX_SEED": str(self.seed),
        }
        for key in ("PATH", "LANG", "LC_ALL", "PYTHONPATH"):
            if key in os.environ:
                env[key] = os.environ[key]
        return env

    def _preexec(self):
        if not self._drop:
            return None

        def drop():
            os.setgroups([])
            os.setgid(_NOBODY_GID)
            os.setuid(_NOBODY_UID)

        return drop

    def execute(
        self,
        script_path: Path,
        args: tuple[str, ...] = (),
        limits: ExecutionLimits | None = None,
        workspace: Workspace | None = None,
    ) -> ExecutionResult:
        """Run one script to completion, terminating the whole tree on timeout.

        Script failures are data in the ExecutionResult; only a missing
        interpreter raises (it is a pre-flight infrastructure error).
        """
        owns_workspace = workspace is None
        if owns_workspace:
            workspace = self.workspace()
            target = workspace.root / Path(script_path).name
            shutil.copy(script_path, target)
            os.chmod(target, 0o644)
            script_path = target
        argv = [*self.interpreter_argv, str(script_path), *args]
        return self._run(argv, limits, workspace, owns_workspace)

    def execute_argv(
        self,
        argv: list[str],
        limits: ExecutionLimits | None = None,
        workspace: Workspace | None = None,
    ) -> ExecutionResult:
        """Run an explicit command line (e.g. the runner shim) in a workspace."""
        owns_workspace = workspace is None
        if owns_workspace:
            workspace = self.workspace()
        return self._run(list(argv), limits, workspace, owns_workspace)

    def _run(
        self,
        argv: list[str],
        limits: ExecutionLimits | None,
        workspace: Workspace,
        owns_workspace: bool,
    ) -> ExecutionResult:
        limits = limits or ExecutionLimits()
        cwd = workspace.root

        effective_timeout = limits.timeout_s
        if self.budget is not None:
            remaining = self.budget.remaining()
            if remaining <= 0:
                return self._finish(
                    workspace,
                    owns_workspace,
                    ExecutionResult(
                        exit_status=-1,
                        wall_time=0.0,
                        stderr_tail="BUDGET_EXHAUSTED: global time budget spent before launch",
                        timed_out=True,
                    ),
                )
            effective_timeout = min(effective_timeout, remaining)

        stdout_path = cwd / "stdout.txt"
        stderr_path = cwd / "stderr.txt"
        timed_out = False
        with self._semaphore:
            started = time.monotonic()
            with open(stdout_path, "wb") as out_fh, open(stderr_path, "wb") as err_fh:
                proc = subprocess.Popen(
                    argv,
                    cwd=str(cwd),
                    env=self._child_env(cwd),
                    stdout=out_fh,
                    stderr=err_fh,
                    stdin=subprocess.DEVNULL,
                    start_new_session=True,
                    preexec_fn=self._preexec(),
                )
                try:
                    exit_status = proc.wait(timeout=effective_timeout)
                except subprocess.TimeoutExpired:
                    timed_out = True
                    self._kill_tree(proc)
                    exit_status = proc.wait()
            wall = time.monotonic() - started
        if self.budget is not None:
            self.budget.consume(wall)

        stdout_tail = _tail(stdout_path, limits.max_output_bytes)
        stderr_tail = _tail(stderr_path, limits.max_output_bytes)
        tb = parse_traceback(stderr_tail)
        result = ExecutionResult(
            exit_status=exit_status if not (timed_out and exit_status == 0) else -9,
            wall_time=wall,
            stdout_tail=stdout_tail,
            stderr_tail=stderr_tail,
            traceback=tb if tb.frames else None,
            timed_out=timed_out,
        )
        return self._finish(workspace, owns_workspace, result)

    def _finish(
        self, workspace: Workspace, owns_workspace: bool, result: ExecutionResult
    ) -> ExecutionResult:
        record = {k: v for k, v in result.to_dict().items() if k != "artifact_report"}
        try:
            canonical.dump_path(record, workspace.root / "result.json")
        except OSError:
            pass
        if self.record_dir is not None:
            self.record_dir.mkdir(parents=True, exist_ok=True)
            for name in ("stdout.txt", "stderr.txt", "result.json"):
                src = workspace.root / name
                if src.exists():
                    shutil.copy(src, self.record_dir / name)
        if owns_workspace and not self.keep_scratch:
            workspace.cleanup()
        return result

    @staticmethod
    def _kill_tree(proc: subprocess.Popen) -> None:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            proc.kill()


def _tail(path: Path, max_bytes: int) -> str:
    try:
        size = path.stat().st_size
        with open(path, "rb") as fh:
            if size > max_bytes:
                fh.seek(size - max_bytes)
            return fh.read().decode("utf-8", errors="replace")
    except OSError:
        return ""


def seal_file(path: Path) -> None:
    """Remove all permission bits; pairs with the sandbox privilege drop."""
    os.chmod(path, 0o000)


def unseal_read(path: Path) -> str:
    """Orchestrator-side read of a sealed file (restores no permissions)."""
    mode = stat.S_IMODE(os.lstat(path).st_mode)
    os.chmod(path, 0o600)
    try:
        return Path(path).read_text(encoding="utf-8")
    finally:
        os.chmod(path, mode)


_SENTINEL = "Traceback (most recent call last):"
_FRAME_RE = re.compile(r'^\s*File "(?P<file>[^"]+)", line (?P<line>\d+), in (?P<func>.+)$')
_ERROR_RE = re.compile(r"^(?P<type>[A-Za-z_][A-Za-z0-9_.]*)(?::\s?(?P<msg>.*))?$")


def parse_traceback(stderr_text: str) -> ParsedTraceback:
    """Extract frames from the interpreter's standard traceback layout.

    Only the last traceback block is parsed (with chained exceptions that is
    the operative one); log noise between frame lines is ignored. Returns an
    empty frame tuple when no traceback is present.
    """
    if not stderr_text:
        return ParsedTraceback(frames=())
    text = stderr_text
    idx = text.rfind(_SENTINEL)
    if idx >= 0:
        text = text[idx + len(_SENTINEL):]
    lines = text.splitlines()
    frames: list[TracebackFrame] = []
    last_frame_line = -1
    for i, line in enumerate(lines):
        m = _FRAME_RE.match(line)
        if not m:
            continue
        source = ""
        if i + 1 < len(lines):
            nxt = lines[i + 1]
            if nxt.startswith((" ", "\t")) and not _FRAME_RE.match(nxt):
                source = nxt.strip()
        frames.append(
            TracebackFrame(
                file=m.group("file"),
                line=int(m.group("line")),
                function=m.group("func").strip(),
                text=source,
            )
        )
        last_frame_line = i
    if not frames:
        return ParsedTraceback(frames=())
    error_type = ""
    error_message = ""
    for line in lines[last_frame_line + 1:]:
        if not line.strip() or line.startswith((" ", "\t")):
            continue
        m = _ERROR_RE.match(line.strip())
        if m:
            error_type = m.group("type")
            error_message = m.group("msg") or ""
            break
    return ParsedTraceback(
        frames=tuple(frames), error_type=error_type, error_message=error_message
    )
