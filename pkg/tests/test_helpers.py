import asyncio
import math

import pytest

from Utils.helpers import batch_process, derive_seeds, format_duration, format_number, round_significant, run_batches


@pytest.mark.parametrize(
    "value, expected",
    [(1 / 3, "0.333333"), (True, "true"), (12, "12"), (0.0, "0"), (math.nan, "nan"), (-math.inf, "-inf"), (None, "")],
)
def test_format_number(value, expected):
    assert format_number(value) == expected


def test_round_significant():
    assert round_significant(123.456789) == 123.457
    assert round_significant(0.0) == 0.0


def test_format_duration():
    assert format_duration(0.5) == "500ms"
    assert format_duration(2.34) == "2.3s"
    assert format_duration(75) == "1m 15s"


def test_run_batches_keeps_order():
    assert run_batches(range(10), lambda x: x * x, workers=3) == [x * x for x in range(10)]
    assert run_batches(range(3), lambda x: -x) == [0, -1, -2]


def test_batch_process_reraises_first_failure():
    def fail_on_three(x):
        if x == 3:
            raise ValueError("three")
        return x

    with pytest.raises(ValueError, match="three"):
        asyncio.run(batch_process(list(range(6)), fail_on_three, batch_size=2))


def test_derive_seeds_are_reproducible():
    first = [s.generate_state(1)[0] for s in derive_seeds(42, 3)]
    second = [s.generate_state(1)[0] for s in derive_seeds(42, 3)]
    assert first == second
    assert len(set(first)) == 3
    with pytest.raises(ValueError):
        derive_seeds(42, 0)
