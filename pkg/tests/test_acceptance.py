"""The acceptance criteria, each at its stated tolerance.

One test per criterion.  Every test prints a single ``[PASS]``/``[FAIL]``
line (visible with ``-s``); the lines are also collected into the
"acceptance criteria" section of the terminal summary.
"""

import pytest

from conftest import ACCEPTANCE_LINES
from pmeshrink.acceptance import CRITERIA


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"C{fn.number:02d}" for fn in CRITERIA])
def test_criterion(criterion, ctx):
    res = criterion(ctx)
    line = res.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert res.passed, line
