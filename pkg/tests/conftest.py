import shutil
import subprocess
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
DEMO = FIXTURES / "demo-c-repo"

needs_cc = pytest.mark.skipif(shutil.which("cc") is None or shutil.which("make") is None,
                              reason="C toolchain not available")


@pytest.fixture
def demo_repo(tmp_path):
    """Unbuilt copy of the demo repository."""
    dest = tmp_path / "demo-c-repo"
    shutil.copytree(DEMO, dest, ignore=shutil.ignore_patterns("main_app", "tool"))
    return dest


@pytest.fixture(scope="session")
def built_demo(tmp_path_factory):
    """Demo repository built once per session; treat as read-only."""
    dest = tmp_path_factory.mktemp("built") / "demo-c-repo"
    shutil.copytree(DEMO, dest, ignore=shutil.ignore_patterns("main_app", "tool"))
    subprocess.run(["make", "-s"], cwd=dest, check=True, capture_output=True)
    return dest


def git(*args, cwd=None):
    return subprocess.run(["git", *args], cwd=cwd, check=True, capture_output=True, text=True)


@pytest.fixture
def bare_repo(tmp_path):
    """A bare git repository with two commits and a ``v1`` tag on the first."""
    work = tmp_path / "seed"
    work.mkdir()
    git("init", "-q", "-b", "main", cwd=work)
    git("config", "user.email", "t@example.com", cwd=work)
    git("config", "user.name", "t", cwd=work)
    (work / "a.c").write_text("int one(void){return 1;}\n")
    git("add", ".", cwd=work)
    git("commit", "-q", "-m", "one", cwd=work)
    git("tag", "v1", cwd=work)
    (work / "b.c").write_text("int two(void){return 2;}\n")
    git("add", ".", cwd=work)
    git("commit", "-q", "-m", "two", cwd=work)
    bare = tmp_path / "srv" / "repo.git"
    git("clone", "-q", "--bare", str(work), str(bare))
    return bare


# acceptance criteria outcomes, reported after the run: (number, title, passed, detail)
ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {title}"
                                    + (f" ({detail})" if detail else ""))
