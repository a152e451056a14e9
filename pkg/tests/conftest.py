import pytest

from forage import golden
from forage.env import DocumentEnv


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        return p
    return _write


@pytest.fixture
def env():
    return DocumentEnv()


@pytest.fixture(scope="session")
def golden_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("golden")
    golden.write_document(d)
    return d


@pytest.fixture
def golden_env(golden_dir):
    e = DocumentEnv()
    e.register_document(golden_dir / golden.DOC_NAME)
    return e


# acceptance criteria report one line each at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
