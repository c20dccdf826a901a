import numpy as np
import pytest

from wavc.case import Branch, Bus, Generator, GridCase, LoadParams, load_case


@pytest.fixture(scope="session")
def case3():
    return load_case("case3")


@pytest.fixture(scope="session")
def case39():
    return load_case("case39")


def two_bus(x=0.1, r=0.0, in_service=True, p=0.5, q=0.2, sigma=0.0, tau=(2.0, 1.5)):
    """Generator at bus 1 feeding one dynamic load at bus 2."""
    ld = LoadParams(tau_theta=tau[0], tau_v=tau[1], p=p, q=q, sigma_p=sigma, sigma_q=sigma)
    return GridCase(
        buses=[Bus(1, "generator"), Bus(2, "dynamic_load", load=ld)],
        branches=[Branch(1, 2, r, x, in_service=in_service)],
        generators=[Generator(1, 1.0, reference=True)],
        name="two_bus",
    )


def rel_fro(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = {}


def record(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
