import math
from decimal import Decimal

import pytest

from ..utils import canonical_json, expand_range, r_squared, stable_hash


def test_canonical_json_sorts_keys():
    assert canonical_json({'b': 1, 'a': [1.5, 'x']}) == '{"a":[1.5,"x"],"b":1}'


def test_canonical_json_rejects_nan():
    with pytest.raises(ValueError):
        canonical_json({'a': math.nan})


def test_stable_hash_ignores_key_order():
    assert stable_hash({'a': 1, 'b': {'c': 2, 'd': 3}}) == stable_hash({'b': {'d': 3, 'c': 2}, 'a': 1})
    assert stable_hash({'a': 1}) != stable_hash({'a': 2})


def test_r_squared():
    assert r_squared([1, 2, 3], [1, 2, 3]) == 1.0
    assert r_squared([2, 2, 2], [2, 2, 2]) == 1.0
    assert r_squared([2, 2, 2], [1, 2, 3]) == 0.0
    assert r_squared([1, 2, 3], [2, 2, 2]) == pytest.approx(0.0)


def test_expand_range_inclusive_stop():
    values = expand_range('0:150:5')
    assert len(values) == 31
    assert values[0] == '0'
    assert values[-1] == '150'


def test_expand_range_decimal_steps():
    values = expand_range('1.95:2.05:0.002')
    assert len(values) == 51
    assert Decimal('1.980') in [Decimal(v) for v in values]
    assert float(values[15]) == 1.98


@pytest.mark.parametrize(
    "text,expected",
    [
        ('100,200,400', ['100', '200', '400']),
        (' 10 , 20 ', ['10', '20']),
        ('7', ['7']),
        (5, ['5']),
    ],
)
def test_expand_range_lists(text, expected):
    assert expand_range(text) == expected


@pytest.mark.parametrize("text", ['1:0:1', '0:1:0', '0:1', 'a:b:c', '0:1:-1'])
def test_expand_range_rejects(text):
    with pytest.raises(ValueError):
        expand_range(text)
