__version_info__ = (0, 1, 0)
__version__ = ".".join(map(str, __version_info__))


def git_revision():
    """Returns ``(short hash, commit date)`` of the source checkout, or ``(None, None)``."""
    import os.path
    import subprocess

    root = os.path.join(os.path.dirname(__file__), os.pardir)
    if not os.path.exists(os.path.join(root, ".git")):
        return None, None
    try:
        result = subprocess.run(
            ["git", "log", "-1", "--format=%h %cs"],
            capture_output=True,
            cwd=root,
            check=False,
        )
    except FileNotFoundError:
        return None, None
    if result.returncode != 0:
        return None, None
    parts = result.stdout.decode("utf-8").split()
    if len(parts) != 2:
        return None, None
    return parts[0], parts[1]


_hash, _date = git_revision()

__git_revision__ = None if _hash is None else f"{_hash} [{_date}]"
