import textwrap

import pytest

SMALL_CONFIG = """
[system]
dimension = 1
epsilon = 1/16
potential = double_well
initial = double_well_pair

[bath]
modes = 50
xi = 1.6

[grid]
p_min = -1
p_max = 1
q_min = -1
q_max = 1
dp = 1/4
dq = 1/4
x_min = -1.5
x_max = 1.5
dx = 1/8

[time]
t_final = 0.2
dt = 1/100

[dyson]
nbar = 2
rank = 3

[output]
directory = {outdir}
name = small

[execution]
workers = 1
chunk_size = 7
"""


@pytest.fixture
def small_config(tmp_path):
    """Path of a seconds-scale bath run (81 trajectories, 20 steps, nbar 2, rank 3)."""
    path = tmp_path / "small.ini"
    path.write_text(textwrap.dedent(SMALL_CONFIG.format(outdir=tmp_path / "out")))
    return path


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
