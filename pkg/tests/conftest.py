import numpy as np
import pytest


class BitString:
    """Writer that records the emitted bits as a '0'/'1' string."""

    def __init__(self) -> None:
        self.bits = ""

    @property
    def bits_written(self) -> int:
        return len(self.bits)

    def write_bits(self, value: int, n: int) -> None:
        if n:
            self.bits += format(value, f"0{n}b")

    def write_flag(self, b) -> None:
        self.write_bits(int(bool(b)), 1)

    def write_ue(self, v: int) -> None:
        code = v + 1
        k = code.bit_length() - 1
        self.write_bits(0, k)
        self.write_bits(code, k + 1)

    def write_se(self, v: int) -> None:
        self.write_ue(2 * v - 1 if v > 0 else -2 * v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_lines():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
