import sys
from fractions import Fraction
from pathlib import Path

from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))


@st.composite
def flows(draw, dims=(2, 3, 4), repeats=True):
    d = draw(st.sampled_from(dims))
    pool = st.fractions(min_value=-3, max_value=3, max_denominator=4)
    if repeats:
        base = draw(st.lists(pool, min_size=1, max_size=d - 1))
        head = [draw(st.sampled_from(base)) for _ in range(d - 1)]
    else:
        head = draw(st.lists(pool, min_size=d - 1, max_size=d - 1, unique=True))
    alpha = [Fraction(x) for x in head] + [-sum(Fraction(x) for x in head)]
    from cusplab import DiagonalFlow
    return DiagonalFlow(d, tuple(alpha))


@st.composite
def lattices(draw, dims=(2, 3)):
    """Upper-triangular rational unimodular lattices with moderate shape."""
    d = draw(st.sampled_from(dims))
    diag = [Fraction(draw(st.sampled_from([1, 2, 3])), draw(st.sampled_from([1, 2, 3]))) for _ in range(d - 1)]
    prod = Fraction(1)
    for x in diag:
        prod *= x
    diag.append(1 / prod)
    off = st.fractions(min_value=-1, max_value=1, max_denominator=4)
    rows = [[Fraction(0)] * d for _ in range(d)]
    for i in range(d):
        rows[i][i] = diag[i]
        for j in range(i + 1, d):
            rows[i][j] = Fraction(draw(off))
    from cusplab.lattice import Lattice
    return Lattice(d, tuple(tuple(r) for r in rows))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
