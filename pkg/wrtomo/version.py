__version_info__ = (0, 1, 0)
__version__ = ".".join(map(str, __version_info__))


def git_version():
    """Returns ``(hash, date)`` of the checkout containing the package,
    or ``(None, None)`` outside a git work tree."""
    import subprocess
    from pathlib import Path

    package_dir = Path(__file__).resolve().parent
    if not (package_dir.parent / ".git").exists():
        return None, None
    try:
        result = subprocess.run(
            ["git", "log", "-1", "--format=%H %cs"],
            capture_output=True,
            cwd=package_dir,
            text=True,
        )
    except FileNotFoundError:
        return None, None
    if result.returncode != 0 or not result.stdout.strip():
        return None, None
    git_hash, git_date = result.stdout.split()
    return git_hash, git_date


git_hash, git_date = git_version()

__git_revision__ = None
if git_hash is not None:
    __git_revision__ = f"{git_hash[:7]} [{git_date}]"
