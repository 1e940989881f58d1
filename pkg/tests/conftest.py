import shutil
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from paperfixture import drive_case_study, store_driver  # noqa: E402


@pytest.fixture(scope="session")
def case_study(tmp_path_factory):
    """The 152-study case study driven once through a SessionStore."""
    path = tmp_path_factory.mktemp("case-study") / "session.json"
    do, box = store_driver(path)
    artifacts = drive_case_study(do)
    return {"path": path, "store": box[0], "artifacts": artifacts}


@pytest.fixture
def case_study_copy(case_study, tmp_path):
    """A private, mutable copy of the finished case-study store."""
    src = case_study["path"]
    dst = tmp_path / "session.json"
    shutil.copy(src, dst)
    shutil.copy(src.with_name(src.name + ".audit"), dst.with_name(dst.name + ".audit"))
    return dst
