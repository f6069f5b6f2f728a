"""Acceptance criteria, each at its stated tolerance.

One ``[PASS]``/``[FAIL]`` line is printed per criterion (with output capture
disabled, so it shows in a plain ``pytest`` run). The same checks run from
``floquet-readout validate``.
"""

import pytest

from floquet_readout.acceptance import CRITERIA


@pytest.mark.acceptance
@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{c.number}" for c in CRITERIA])
def test_criterion(criterion, capsys):
    res = criterion()
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.detail
