#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains the 2D deterministic cellular automaton engine: lattices, 3x3 dependency rule numbering and
the southwest/northeast evolution rule
"""

from __future__ import print_function, division, absolute_import

import logging
from collections import namedtuple

import numpy as np

from facsca.exceptions import InvalidCellError

logger = logging.getLogger('facsca')

STATES = (0, 1)
VON_NEUMANN_5 = 'VonNeumann5'
NULL_BOUNDARY = 'Null'

# (row, column) offsets in neighborhood state order: self, north, west, south, east
NEIGHBOR_OFFSETS = ((0, 0), (-1, 0), (0, -1), (1, 0), (0, 1))

# Power of two of each 3x3 mask position. Center is rule 1, east 2, south 8, west 32, north 128
RULE_POWERS = (
    (6, 7, 8),
    (5, 0, 1),
    (4, 3, 2),
)

RULE_COUNT = 512


class CellularSpace(namedtuple('CellularSpace', ['dim', 'states', 'neighborhood', 'boundary'])):
    """
    Cellular space (Z, S, N) of an M x M lattice. Transition function lives in step()
    """

    __slots__ = ()

    def __new__(cls, dim, states=STATES, neighborhood=VON_NEUMANN_5, boundary=NULL_BOUNDARY):
        dim = int(dim)
        if not 1 <= dim <= 6:
            raise ValueError('Lattice dimension must be in 1..6, got {}'.format(dim))
        if tuple(states) != STATES:
            raise ValueError('Only binary states {} are supported'.format(STATES))
        if neighborhood != VON_NEUMANN_5:
            raise ValueError('Unsupported neighborhood "{}"'.format(neighborhood))
        if boundary != NULL_BOUNDARY:
            raise ValueError('Unsupported boundary "{}"'.format(boundary))

        return super(CellularSpace, cls).__new__(cls, dim, tuple(states), neighborhood, boundary)

    @property
    def neighborhood_size(self):
        return len(NEIGHBOR_OFFSETS)


class RuleMatrix(object):
    """
    Immutable M x M binary lattice. Holds one generation of a facial region automaton
    """

    __slots__ = ('_cells',)

    def __init__(self, cells):
        cells = np.array(cells, dtype=np.uint8)
        if cells.ndim != 2 or cells.shape[0] != cells.shape[1] or cells.shape[0] < 1:
            raise ValueError('Rule matrix must be a non-empty square grid, got shape {}'.format(cells.shape))
        if np.any(cells > 1):
            raise ValueError('Rule matrix cells must be 0 or 1')
        cells.setflags(write=False)
        self._cells = cells

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((dim, dim), dtype=np.uint8))

    @classmethod
    def from_active(cls, dim, positions):
        """
        Creates a lattice with only the given cells active

        :param int dim: lattice dimension M
        :param iterable positions: (row, column) tuples of active cells
        :return: new rule matrix
        :rtype: RuleMatrix
        """

        cells = np.zeros((dim, dim), dtype=np.uint8)
        for row, col in positions:
            cells[row, col] = 1

        return cls(cells)

    @property
    def dim(self):
        return self._cells.shape[0]

    @property
    def cells(self):
        return self._cells

    def active_cells(self):
        return [tuple(int(v) for v in pos) for pos in np.argwhere(self._cells == 1)]

    def active_count(self):
        return int(self._cells.sum())

    def __getitem__(self, position):
        return int(self._cells[position])

    def __eq__(self, other):
        return isinstance(other, RuleMatrix) and np.array_equal(self._cells, other._cells)

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash((self.dim, self._cells.tobytes()))

    def __repr__(self):
        rows = '/'.join(''.join(str(v) for v in row) for row in self._cells)
        return 'RuleMatrix({})'.format(rows)


class DependencyMask(object):
    """
    3x3 binary grid of neighbor dependencies of the central cell. Identified by its rule number 0..511
    """

    __slots__ = ('_cells',)

    def __init__(self, cells):
        cells = tuple(tuple(int(v) for v in row) for row in cells)
        if len(cells) != 3 or any(len(row) != 3 for row in cells):
            raise ValueError('Dependency mask must be a 3x3 grid')
        if any(v not in STATES for row in cells for v in row):
            raise ValueError('Dependency mask cells must be 0 or 1')
        self._cells = cells

    @property
    def cells(self):
        return self._cells

    @property
    def rule_number(self):
        return rule_number(self._cells)

    def active_count(self):
        return sum(sum(row) for row in self._cells)

    def is_symmetric(self):
        return all(self._cells[i][j] == self._cells[j][i] for i in range(3) for j in range(3))

    def to_text(self):
        return '/'.join(''.join(str(v) for v in row) for row in self._cells)

    def __eq__(self, other):
        return isinstance(other, DependencyMask) and self._cells == other._cells

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash(self._cells)

    def __repr__(self):
        return 'DependencyMask({}: {})'.format(self.rule_number, self.to_text())


# =================================================================================================================
# RULE NUMBERING
# =================================================================================================================

def rule_number(mask):
    """
    Returns the rule number of a 3x3 dependency mask: sum of 2^p over its active positions

    :param DependencyMask or list(list(int)) mask: 3x3 binary grid
    :return: rule number in 0..511
    :rtype: int
    """

    cells = mask.cells if isinstance(mask, DependencyMask) else mask
    number = 0
    for row in range(3):
        for col in range(3):
            if cells[row][col]:
                number += 1 << RULE_POWERS[row][col]

    return number


def mask_of(number):
    """
    Returns the dependency mask identified by the given rule number

    :param int number: rule number in 0..511
    :return: dependency mask
    :rtype: DependencyMask
    """

    number = int(number)
    if not 0 <= number < RULE_COUNT:
        raise ValueError('Rule number must be in 0..{}, got {}'.format(RULE_COUNT - 1, number))

    return DependencyMask([[(number >> RULE_POWERS[row][col]) & 1 for col in range(3)] for row in range(3)])


def enumerate_rules():
    """
    Returns the full rule space: every 3x3 dependency mask, 9C0 + 9C1 + ... + 9C9 of them

    :return: set of all 512 dependency masks
    :rtype: set(DependencyMask)
    """

    return set(mask_of(number) for number in range(RULE_COUNT))


def single_dependency_rules():
    """
    Returns the nine rules with exactly one dependency, sorted by rule number (1, 2, 4, ..., 256)

    :return: list of dependency masks
    :rtype: list(DependencyMask)
    """

    return [mask_of(1 << power) for power in range(9)]


def transpose_rule(mask):
    """
    Returns the transpose of a dependency mask: positions (i, j) and (j, i) swapped

    :param DependencyMask mask: dependency mask
    :return: transposed dependency mask
    :rtype: DependencyMask
    """

    cells = mask.cells
    return DependencyMask([[cells[col][row] for col in range(3)] for row in range(3)])


def rule_table():
    """
    Returns the text dump of the rule space, one "rule_number: mask" line per rule in ascending order

    :return: list of 512 lines
    :rtype: list(str)
    """

    return ['{}: {}'.format(number, mask_of(number).to_text()) for number in range(RULE_COUNT)]


# =================================================================================================================
# LATTICE OPERATIONS
# =================================================================================================================

def rule_column_vector(rule_matrix):
    """
    Returns the row-major flattening of the given lattice

    :param RuleMatrix rule_matrix: lattice
    :return: bit vector of length M*M
    :rtype: tuple(int)
    """

    return tuple(int(v) for v in rule_matrix.cells.ravel())


def diagonal_bits(rule_matrix):
    """
    Returns the main diagonal of the given lattice, the only part of a rule matrix kept in the rule database

    :param RuleMatrix rule_matrix: lattice
    :return: bit vector of length M
    :rtype: tuple(int)
    """

    return tuple(int(v) for v in np.diagonal(rule_matrix.cells))


def _read(cells, row, col):
    dim = cells.shape[0]
    if 0 <= row < dim and 0 <= col < dim:
        return int(cells[row, col])

    # Null boundary
    return 0


def neighborhood_state(space, lattice, cell):
    """
    Returns the state of the von Neumann neighborhood of a cell

    :param CellularSpace space: cellular space the lattice belongs to
    :param RuleMatrix lattice: lattice at time t
    :param tuple(int, int) cell: (row, column) address of the cell
    :return: (self, north, west, south, east) bits. Out of bounds neighbors read as dead
    :rtype: tuple(int)
    """

    if lattice.dim != space.dim:
        raise InvalidCellError('Lattice dimension {} does not match space dimension {}'.format(lattice.dim, space.dim))
    row, col = cell
    if not (0 <= row < space.dim and 0 <= col < space.dim):
        raise InvalidCellError('Cell ({}, {}) is outside of the {}x{} lattice'.format(row, col, space.dim, space.dim))

    cells = lattice.cells
    return tuple(_read(cells, row + d_row, col + d_col) for d_row, d_col in NEIGHBOR_OFFSETS)


def fires(state):
    """
    Returns whether an active cell with the given neighborhood state transitions

    An active cell fires when its four axial neighbors are dead, or its {north, west} pair is dead, or its
    {south, east} pair is dead.

    :param tuple(int) state: (self, north, west, south, east) bits
    :return: True if the cell dies and activates a diagonal neighbor; False otherwise.
    :rtype: bool
    """

    center, north, west, south, east = state
    if not center:
        return False

    all_dead = not (north or west or south or east)
    return all_dead or not (north or west) or not (south or east)


def diagonal_target(dim, cell):
    """
    Returns the diagonal neighbor activated by a firing cell: northeast when inside the lattice, else southwest

    :param int dim: lattice dimension
    :param tuple(int, int) cell: (row, column) of the firing cell
    :return: target cell or None if the cell has no diagonal neighbor inside the lattice
    :rtype: tuple(int, int) or None
    """

    row, col = cell
    for target_row, target_col in ((row - 1, col + 1), (row + 1, col - 1)):
        if 0 <= target_row < dim and 0 <= target_col < dim:
            return target_row, target_col

    return None


def step(space, lattice):
    """
    Computes the next generation of the lattice. All cells are updated simultaneously from the time t lattice

    A firing cell dies and its diagonal target becomes active. Targets shared by several firing cells become active
    once. A firing cell without any diagonal neighbor inside the lattice stays active.

    :param CellularSpace space: cellular space
    :param RuleMatrix lattice: lattice at time t
    :return: lattice at time t + 1
    :rtype: RuleMatrix
    """

    if lattice.dim != space.dim:
        raise InvalidCellError('Lattice dimension {} does not match space dimension {}'.format(lattice.dim, space.dim))

    dim = space.dim
    next_cells = np.zeros((dim, dim), dtype=np.uint8)
    for cell in lattice.active_cells():
        target = None
        if fires(neighborhood_state(space, lattice, cell)):
            target = diagonal_target(dim, cell)
        next_cells[target if target is not None else cell] = 1

    return RuleMatrix(next_cells)


def evolve(space, lattice, generations=1):
    """
    Applies step() the given number of generations

    :param CellularSpace space: cellular space
    :param RuleMatrix lattice: initial lattice
    :param int generations: number of generations to compute
    :return: list with the initial lattice followed by each computed generation
    :rtype: list(RuleMatrix)
    """

    history = [lattice]
    for _ in range(int(generations)):
        history.append(step(space, history[-1]))

    return history
