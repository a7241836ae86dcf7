import pytest

from idnc import cliques


@pytest.fixture(autouse=True)
def _validate_solver_outputs():
    # every solver call re-checks its output is a clique while tests run
    old = cliques.VALIDATE
    cliques.VALIDATE = True
    yield
    cliques.VALIDATE = old
