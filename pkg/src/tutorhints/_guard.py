# Bootstrap run inside the child interpreter: installs an audit hook that
# denies sockets and filesystem mutation outside the working directory, then
# runs the student program as __main__.
# Usage: _guard.py MEMORY_CAP_BYTES PROGRAM [ARGS...]
import os
import runpy
import sys

_ROOT = os.path.realpath(os.getcwd())
_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_APPEND | os.O_TRUNC
_MUTATING = {
    "os.remove", "os.rename", "os.rmdir", "os.mkdir", "os.chmod", "os.chown",
    "os.symlink", "os.link", "os.truncate", "os.utime", "shutil.rmtree",
}


def _inside(path):
    if isinstance(path, int):
        return True
    try:
        p = os.fsdecode(path)
    except TypeError:
        return True
    real = os.path.realpath(os.path.join(_ROOT, p))
    return real == _ROOT or real.startswith(_ROOT + os.sep)


def _hook(event, args):
    if event.startswith("socket.") or event in ("os.system", "subprocess.Popen", "os.exec",
                                               "os.posix_spawn", "os.fork", "os.forkpty"):
        raise PermissionError(f"sandbox: {event} is not permitted")
    if event == "open":
        path, mode, flags = args
        writing = (mode is not None and any(c in mode for c in "wax+")) or bool(
            flags and flags & _WRITE_FLAGS
        )
        if writing and path is not None and not _inside(path):
            raise PermissionError(f"sandbox: write outside working directory: {path}")
    elif event in _MUTATING:
        for a in args[:2]:
            if isinstance(a, (str, bytes, os.PathLike)) and not _inside(a):
                raise PermissionError(f"sandbox: {event} outside working directory")


def _cap_memory(limit):
    try:
        import resource
    except ImportError:
        return
    for which, value in ((resource.RLIMIT_AS, limit), (resource.RLIMIT_CORE, 0)):
        try:
            resource.setrlimit(which, (value, value))
        except (ValueError, OSError):
            pass


def main():
    _cap_memory(int(sys.argv[1]))
    program = sys.argv[2]
    sys.argv = sys.argv[2:]
    sys.path.insert(0, _ROOT)
    sys.addaudithook(_hook)
    runpy.run_path(program, run_name="__main__")


if __name__ == "__main__":
    main()
