#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains tests for the cellular automaton engine
"""

import itertools
from collections import Counter

import numpy as np
import pytest
from scipy.special import comb

from facsca import ca_engine, facs_codec
from facsca.ca_engine import CellularSpace, RuleMatrix, DependencyMask
from facsca.exceptions import InvalidCellError


def _single(row, col):
    cells = [[0, 0, 0], [0, 0, 0], [0, 0, 0]]
    cells[row][col] = 1
    return cells


def test_rule_number_of_single_dependencies():
    assert ca_engine.rule_number(_single(1, 1)) == 1
    assert ca_engine.rule_number([[0] * 3] * 3) == 0
    assert ca_engine.rule_number(_single(1, 2)) == 2
    assert ca_engine.rule_number(_single(2, 1)) == 8
    assert ca_engine.rule_number(_single(1, 0)) == 32
    assert ca_engine.rule_number(_single(0, 1)) == 128


def test_rule_number_round_trip():
    for number in range(ca_engine.RULE_COUNT):
        assert ca_engine.rule_number(ca_engine.mask_of(number)) == number


def test_mask_of_rejects_out_of_range():
    with pytest.raises(ValueError):
        ca_engine.mask_of(512)


def test_enumerate_rules():
    rules = ca_engine.enumerate_rules()
    assert len(rules) == 512
    counts = Counter(mask.active_count() for mask in rules)
    for k in range(10):
        assert counts[k] == comb(9, k, exact=True)
    assert ca_engine.mask_of(1) in rules
    assert ca_engine.mask_of(256) in rules


def test_single_dependency_rules():
    rules = ca_engine.single_dependency_rules()
    assert [mask.rule_number for mask in rules] == [1, 2, 4, 8, 16, 32, 64, 128, 256]
    assert all(mask.active_count() == 1 for mask in rules)


def test_transpose_rule():
    assert ca_engine.transpose_rule(ca_engine.mask_of(1)).rule_number == 1
    assert ca_engine.transpose_rule(ca_engine.mask_of(4)).rule_number == 4
    assert ca_engine.transpose_rule(ca_engine.mask_of(16)).rule_number == 256
    assert ca_engine.transpose_rule(ca_engine.mask_of(2)).rule_number == 8
    assert ca_engine.transpose_rule(ca_engine.mask_of(64)).rule_number == 64


def test_transpose_is_involution_fixing_symmetric_masks():
    for mask in ca_engine.enumerate_rules():
        transposed = ca_engine.transpose_rule(mask)
        assert ca_engine.transpose_rule(transposed) == mask
        assert (transposed == mask) == mask.is_symmetric()


def test_rule_table():
    lines = ca_engine.rule_table()
    assert len(lines) == 512
    assert lines[0] == '0: 000/000/000'
    assert lines[1] == '1: 000/010/000'


def test_cellular_space():
    space = CellularSpace(3)
    assert space.neighborhood_size == 5
    with pytest.raises(ValueError):
        CellularSpace(7)
    with pytest.raises(ValueError):
        CellularSpace(0)


def test_rule_column_vector():
    assert ca_engine.rule_column_vector(RuleMatrix.from_active(3, [(1, 1)])) == (0, 0, 0, 0, 1, 0, 0, 0, 0)
    assert ca_engine.rule_column_vector(RuleMatrix.from_active(3, [(0, 0)])) == (1, 0, 0, 0, 0, 0, 0, 0, 0)
    assert ca_engine.rule_column_vector(RuleMatrix.from_active(1, [(0, 0)])) == (1,)


def test_diagonal_bits():
    assert ca_engine.diagonal_bits(RuleMatrix.from_active(3, [(1, 1)])) == (0, 1, 0)
    assert ca_engine.diagonal_bits(RuleMatrix.empty(3)) == (0, 0, 0)
    assert ca_engine.diagonal_bits(RuleMatrix.from_active(6, [(0, 0)])) == (1, 0, 0, 0, 0, 0)


def test_neighborhood_state():
    space = CellularSpace(3)
    assert ca_engine.neighborhood_state(space, RuleMatrix.empty(3), (1, 1)) == (0, 0, 0, 0, 0)
    assert ca_engine.neighborhood_state(space, RuleMatrix.from_active(3, [(0, 0)]), (0, 0)) == (1, 0, 0, 0, 0)
    assert ca_engine.neighborhood_state(space, RuleMatrix.from_active(3, [(0, 1)]), (1, 1)) == (0, 1, 0, 0, 0)


def test_neighborhood_state_invalid_cell():
    with pytest.raises(InvalidCellError):
        ca_engine.neighborhood_state(CellularSpace(3), RuleMatrix.empty(3), (3, 0))


def test_step_examples():
    space = CellularSpace(3)
    assert ca_engine.step(space, RuleMatrix.from_active(3, [(1, 1)])) == RuleMatrix.from_active(3, [(0, 2)])
    assert ca_engine.step(space, RuleMatrix.empty(3)) == RuleMatrix.empty(3)
    one = CellularSpace(1)
    assert ca_engine.step(one, RuleMatrix.from_active(1, [(0, 0)])) == RuleMatrix.from_active(1, [(0, 0)])


def test_step_falls_back_to_southwest():
    space = CellularSpace(3)
    # (0, 2) has no northeast neighbor
    assert ca_engine.step(space, RuleMatrix.from_active(3, [(0, 2)])) == RuleMatrix.from_active(3, [(1, 1)])


def _reference_step(cells):
    dim = cells.shape[0]
    padded = np.zeros((dim + 2, dim + 2), dtype=np.uint8)
    padded[1:-1, 1:-1] = cells
    out = np.zeros_like(cells)
    for row in range(dim):
        for col in range(dim):
            if not cells[row, col]:
                continue
            north, west = padded[row, col + 1], padded[row + 1, col]
            south, east = padded[row + 2, col + 1], padded[row + 1, col + 2]
            if (north == 0 and west == 0) or (south == 0 and east == 0):
                if row - 1 >= 0 and col + 1 < dim:
                    out[row - 1, col + 1] = 1
                elif row + 1 < dim and col - 1 >= 0:
                    out[row + 1, col - 1] = 1
                else:
                    out[row, col] = 1
            else:
                out[row, col] = 1
    return out


def test_step_matches_two_buffer_reference():
    random_state = np.random.RandomState(7)
    for dim in range(1, 7):
        space = CellularSpace(dim)
        for _ in range(40):
            cells = (random_state.rand(dim, dim) < 0.4).astype(np.uint8)
            lattice = RuleMatrix(cells)
            stepped = ca_engine.step(space, lattice)
            assert np.array_equal(stepped.cells, _reference_step(cells))
            assert stepped.active_count() <= lattice.active_count()


def test_evolve_history():
    space = CellularSpace(3)
    history = ca_engine.evolve(space, RuleMatrix.from_active(3, [(2, 0)]), generations=3)
    assert len(history) == 4
    assert history[1] == RuleMatrix.from_active(3, [(1, 1)])
    assert history[2] == RuleMatrix.from_active(3, [(0, 2)])
    assert history[3] == RuleMatrix.from_active(3, [(1, 1)])


def test_region_rule_matrices_are_one_hot_on_the_diagonal():
    for region in facs_codec.REGIONS:
        for au in region.au_list:
            bits = ca_engine.diagonal_bits(facs_codec.au_rule_matrix(region, au))
            assert sum(bits) == 1


def test_dependency_mask_text():
    mask = DependencyMask(_single(0, 2))
    assert mask.rule_number == 256
    assert mask.to_text() == '001/000/000'
    assert list(itertools.chain.from_iterable(mask.cells)).count(1) == 1
