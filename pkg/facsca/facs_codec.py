#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains the FACS codec: Action Units of each facial region encoded as cellular automata rule
matrices, $ separated rule patterns and the expression knowledge base used to classify Action Unit sets
"""

from __future__ import print_function, division, absolute_import

import io
import re
import logging
import itertools
from collections import namedtuple, OrderedDict

from facsca import ca_engine
from facsca.exceptions import UnknownActionUnitError, PatternParseError

logger = logging.getLogger('facsca')

SEPARATOR = '$'

CANONICAL = 'canonical'
PAPER_COMPAT = 'paper_compat'
RENDER_MODES = (CANONICAL, PAPER_COMPAT)

EYE_LIDS = 'EyeLids'
EYE_BROWS = 'EyeBrows'
EYES = 'Eyes'
CHEEKS = 'Cheeks'
LIP_PART1 = 'LipPart1'
LIP_PART2 = 'LipPart2'

NEUTRAL = 'Neutral'
UNKNOWN = 'Unknown'


class RegionSpec(namedtuple('RegionSpec', ['name', 'au_list', 'dim'])):
    """
    Facial region with its ordered Action Units. Lattice dimension M equals the number of Action Units
    """

    __slots__ = ()

    @property
    def space(self):
        return ca_engine.CellularSpace(self.dim)


# Canonical pattern order follows the state diagram: eye lids, eye brows, eyes, cheeks, lip part 1, lip part 2
REGIONS = (
    RegionSpec(EYE_LIDS, (5, 7), 2),
    RegionSpec(EYE_BROWS, (1, 2, 4), 3),
    RegionSpec(EYES, (43, 61, 63, 64), 4),
    RegionSpec(CHEEKS, (6,), 1),
    RegionSpec(LIP_PART1, (10, 16, 25, 26, 27), 5),
    RegionSpec(LIP_PART2, (12, 15, 20, 23, 24, 28), 6),
)
REGION_NAMES = tuple(region.name for region in REGIONS)
REGIONS_BY_NAME = OrderedDict((region.name, region) for region in REGIONS)

AU_REGION = OrderedDict((au, region.name) for region in REGIONS for au in region.au_list)
ALL_AUS = tuple(sorted(AU_REGION))
AU_BIT = dict((au, index) for index, au in enumerate(ALL_AUS))

# Distinctive combinations of Action Units per expression. Braced groups are alternatives: at least one of them
TABLE_1 = OrderedDict([
    ('Happiness', '6 + {12+16+25+26}'),
    ('Sadness', '{1+4}+7+{15+25+28}+63'),
    ('Angry', '{2+4}+7+{16+23+24+25+26}'),
    ('Disgust', '10+61'),
    ('Fear', '{1+4}+{5+7}+{20+25+26}'),
    ('Surprise', '{1+2}+5+{26+27}'),
    ('Contempt', '4+6+{10+24}'),
    ('Frustration', '2+28+{43+64}'),
    ('Confusion', '1+5+25'),
    (NEUTRAL, ''),
])


class ExpressionDef(namedtuple('ExpressionDef', ['name', 'mandatory', 'alt_groups'])):
    """
    Expression template: every mandatory Action Unit plus at least one Action Unit of each alternative group
    """

    __slots__ = ()

    @property
    def universe(self):
        aus = set(self.mandatory)
        for group in self.alt_groups:
            aus.update(group)
        return frozenset(aus)


Classification = namedtuple('Classification', ['label', 'pattern'])


class RulePattern(object):
    """
    Expression signature: ordered per region diagonal bit segments
    """

    __slots__ = ('_segments',)

    def __init__(self, segments):
        segments = tuple((name, tuple(int(bit) for bit in bits)) for name, bits in segments)
        if tuple(name for name, _ in segments) != REGION_NAMES:
            raise ValueError('Rule pattern segments must follow the canonical region order {}'.format(REGION_NAMES))
        for name, bits in segments:
            region = REGIONS_BY_NAME[name]
            if len(bits) != region.dim:
                raise ValueError('Segment {} must have {} bits, got {}'.format(name, region.dim, len(bits)))
            if any(bit not in (0, 1) for bit in bits):
                raise ValueError('Segment {} must only contain bits'.format(name))
        self._segments = segments

    @property
    def segments(self):
        return self._segments

    def segment(self, region_name):
        return dict(self._segments)[region_name]

    def active_aus(self):
        """
        Returns the Action Units encoded by the pattern

        :return: set of Action Unit codes
        :rtype: frozenset(int)
        """

        aus = set()
        for name, bits in self._segments:
            au_list = REGIONS_BY_NAME[name].au_list
            aus.update(au_list[index] for index, bit in enumerate(bits) if bit)

        return frozenset(aus)

    def bits(self):
        return tuple(bit for _, bits in self._segments for bit in bits)

    def set_bit_count(self):
        return sum(self.bits())

    def __eq__(self, other):
        return isinstance(other, RulePattern) and self._segments == other._segments

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash(self._segments)

    def __repr__(self):
        return 'RulePattern({})'.format(render_pattern(self))


# =================================================================================================================
# KNOWLEDGE BASE
# =================================================================================================================

def parse_au_formula(text):
    """
    Parses a distinctive Action Unit combination such as "{1+4}+7+{15+25+28}+63"

    :param str text: formula. Unbraced terms are mandatory, each braced group is one alternative group
    :return: mandatory Action Units and alternative groups
    :rtype: tuple(frozenset(int), tuple(frozenset(int)))
    """

    mandatory = set()
    alt_groups = list()
    for group, term in re.findall(r'\{([^}]*)\}|(\d+)', text or ''):
        if term:
            mandatory.add(int(term))
        else:
            alt_groups.append(frozenset(int(au) for au in re.findall(r'\d+', group)))

    return frozenset(mandatory), tuple(alt_groups)


def _build_expressions():
    expressions = OrderedDict()
    for name, formula in TABLE_1.items():
        mandatory, alt_groups = parse_au_formula(formula)
        expressions[name] = ExpressionDef(name, mandatory, alt_groups)

    return expressions


EXPRESSIONS = _build_expressions()
EXPRESSION_NAMES = tuple(EXPRESSIONS)
LABELS = EXPRESSION_NAMES + (UNKNOWN,)


def get_expression(name):
    try:
        return EXPRESSIONS[name]
    except KeyError:
        raise ValueError('Unknown expression "{}". Valid expressions: {}'.format(name, ', '.join(EXPRESSION_NAMES)))


def _check_aus(aus, valid=None):
    valid = AU_REGION if valid is None else valid
    unknown = sorted(set(aus) - set(valid))
    if unknown:
        raise UnknownActionUnitError(
            'Unknown Action Unit(s) {}. Valid codes: {}'.format(
                ', '.join(str(au) for au in unknown), ', '.join(str(au) for au in sorted(valid))))


def au_mask(aus):
    """
    Returns the bitmask of an Action Unit set, bit i standing for ALL_AUS[i]

    :param iterable(int) aus: Action Unit codes
    :return: bitmask
    :rtype: int
    """

    aus = set(aus)
    _check_aus(aus)
    mask = 0
    for au in aus:
        mask |= 1 << AU_BIT[au]

    return mask


def aus_of_mask(mask):
    return frozenset(au for au in ALL_AUS if mask >> AU_BIT[au] & 1)


# =================================================================================================================
# RULE MATRICES AND PATTERNS
# =================================================================================================================

def au_rule_matrix(region, au):
    """
    Returns the rule matrix of one Action Unit: the cell (k, k) active, k being the Action Unit index in the region

    :param RegionSpec region: facial region
    :param int au: Action Unit code
    :return: M x M rule matrix
    :rtype: ca_engine.RuleMatrix
    """

    if au not in region.au_list:
        raise UnknownActionUnitError(
            'Action Unit {} does not belong to region {} (valid: {})'.format(
                au, region.name, ', '.join(str(code) for code in region.au_list)))
    index = region.au_list.index(au)

    return ca_engine.RuleMatrix.from_active(region.dim, [(index, index)])


def region_segment(region, active_aus):
    """
    Returns the diagonal bit segment of a facial region for the given active Action Units

    :param RegionSpec region: facial region
    :param iterable(int) active_aus: active Action Units of the region. Empty means neutral region
    :return: bit vector of length M
    :rtype: tuple(int)
    """

    active_aus = set(active_aus)
    _check_aus(active_aus, valid=region.au_list)
    bits = [0] * region.dim
    for au in active_aus:
        for index, bit in enumerate(ca_engine.diagonal_bits(au_rule_matrix(region, au))):
            bits[index] |= bit

    return tuple(bits)


def synthesize_pattern(active_aus):
    """
    Returns the rule pattern of an Action Unit set, one segment per facial region in canonical order

    :param iterable(int) active_aus: observed Action Units
    :return: rule pattern
    :rtype: RulePattern
    """

    active_aus = set(active_aus)
    _check_aus(active_aus)
    segments = list()
    for region in REGIONS:
        segments.append((region.name, region_segment(region, active_aus.intersection(region.au_list))))

    return RulePattern(segments)


def _bits_text(bits):
    return ''.join(str(bit) for bit in bits)


def render_pattern(pattern, mode=CANONICAL):
    """
    Renders a rule pattern as text

    Canonical mode writes all six segments followed by $. The paper_compat mode writes eye lids, eye brows, eyes and
    cheeks followed only by the non zero lip segments (lip part 1 zero segment when both lips are neutral).

    :param RulePattern pattern: rule pattern
    :param str mode: canonical or paper_compat
    :return: $ separated bit segments
    :rtype: str
    """

    if mode not in RENDER_MODES:
        raise ValueError('Unknown render mode "{}". Valid modes: {}'.format(mode, ', '.join(RENDER_MODES)))

    segments = OrderedDict(pattern.segments)
    names = list(REGION_NAMES)
    if mode == PAPER_COMPAT:
        names = [EYE_LIDS, EYE_BROWS, EYES, CHEEKS]
        lips = [name for name in (LIP_PART1, LIP_PART2) if any(segments[name])]
        names.extend(lips or [LIP_PART1])

    return ''.join(_bits_text(segments[name]) + SEPARATOR for name in names)


def parse_pattern(text):
    """
    Parses a rendered rule pattern. Accepts the canonical form and the short paper_compat form, in which the lip
    segments are assigned by length. Trailing separator is optional

    :param str text: $ separated bit segments
    :return: canonical rule pattern
    :rtype: RulePattern
    """

    for offset, char in enumerate(text):
        if char not in '01' + SEPARATOR:
            raise PatternParseError('Invalid character "{}" in rule pattern'.format(char), offset=offset)

    body = text[:-1] if text.endswith(SEPARATOR) else text
    raw_segments = body.split(SEPARATOR)
    starts = list()
    offset = 0
    for raw in raw_segments:
        starts.append(offset)
        offset += len(raw) + 1

    segments = OrderedDict((region.name, (0,) * region.dim) for region in REGIONS)
    if len(raw_segments) == len(REGIONS):
        names = list(REGION_NAMES)
    elif len(raw_segments) == len(REGIONS) - 1:
        names = [EYE_LIDS, EYE_BROWS, EYES, CHEEKS]
        lip_raw = raw_segments[-1]
        names.append(LIP_PART1 if len(lip_raw) == REGIONS_BY_NAME[LIP_PART1].dim else LIP_PART2)
    else:
        raise PatternParseError(
            'Rule pattern must have {} segments, got {}'.format(len(REGIONS), len(raw_segments)), offset=len(text))

    for name, raw, start in zip(names, raw_segments, starts):
        expected = REGIONS_BY_NAME[name].dim
        if len(raw) != expected:
            raise PatternParseError(
                'Segment {} must have {} bits, got {}'.format(name, expected, len(raw)), offset=start)
        segments[name] = tuple(int(char) for char in raw)

    return RulePattern(segments.items())


def hamming_distance(pattern_a, pattern_b):
    return sum(a != b for a, b in zip(pattern_a.bits(), pattern_b.bits()))


# =================================================================================================================
# EXPRESSIONS
# =================================================================================================================

def _non_empty_subsets(group):
    members = sorted(group)
    for size in range(1, len(members) + 1):
        for subset in itertools.combinations(members, size):
            yield frozenset(subset)


def expand_expression(expression):
    """
    Returns every Action Unit set matching an expression template: the mandatory Action Units plus one non empty
    subset of each alternative group

    :param ExpressionDef expression: expression template
    :return: set of Action Unit sets
    :rtype: set(frozenset(int))
    """

    expanded = set()
    choices = [list(_non_empty_subsets(group)) for group in expression.alt_groups]
    for combination in itertools.product(*choices):
        aus = set(expression.mandatory)
        for subset in combination:
            aus.update(subset)
        expanded.add(frozenset(aus))

    return expanded


def _build_templates():
    templates = list()
    for expression in EXPRESSIONS.values():
        if expression.name == NEUTRAL:
            continue
        templates.append((
            expression.name,
            au_mask(expression.mandatory),
            tuple(au_mask(group) for group in expression.alt_groups),
            au_mask(expression.universe)))

    return tuple(templates)


_TEMPLATES = _build_templates()


def _popcount(value):
    return bin(value).count('1')


def classify_au_mask(mask):
    """
    Returns the expression label of an Action Unit bitmask (see au_mask)

    A template matches when all its mandatory Action Units are observed and every alternative group intersects the
    observation. Among matches the template sharing the most Action Units with the observation wins; ties go to the
    template listed first.

    :param int mask: Action Unit bitmask
    :return: expression label, Neutral for the empty set and Unknown when nothing matches
    :rtype: str
    """

    if not mask:
        return NEUTRAL

    best_label = UNKNOWN
    best_score = -1
    for name, mandatory, alt_groups, universe in _TEMPLATES:
        if mask & mandatory != mandatory:
            continue
        if not all(mask & group for group in alt_groups):
            continue
        score = _popcount(mask & universe)
        if score > best_score:
            best_label, best_score = name, score

    return best_label


def classify_au_set(observed):
    """
    Classifies an observed Action Unit set into one of the expressions

    :param iterable(int) observed: observed Action Unit codes
    :return: expression label and the rule pattern of the observation
    :rtype: Classification
    """

    observed = frozenset(observed)
    label = classify_au_mask(au_mask(observed))

    return Classification(label, synthesize_pattern(observed))


# =================================================================================================================
# PATTERN DATABASE
# =================================================================================================================

def pattern_database():
    """
    Returns the expression pattern database: every expansion of every expression as canonical pattern

    :return: (expression name, canonical pattern) rows sorted by name and pattern
    :rtype: list(tuple(str, str))
    """

    rows = set()
    for expression in EXPRESSIONS.values():
        for aus in expand_expression(expression):
            rows.add((expression.name, render_pattern(synthesize_pattern(aus))))

    return sorted(rows)


def write_pattern_database(path, rows=None):
    """
    Writes the pattern database as UTF-8 text, one "name<TAB>pattern" record per line

    :param str path: output file path
    :param list(tuple(str, str)) or None rows: rows to write. Defaults to pattern_database()
    :return: number of written records
    :rtype: int
    """

    rows = pattern_database() if rows is None else rows
    with io.open(path, 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(format_pattern_database(rows))
    logger.info('Written {} expression patterns to: {}'.format(len(rows), path))

    return len(rows)


def format_pattern_database(rows):
    return ''.join('{}\t{}\n'.format(name, pattern) for name, pattern in rows)


def read_pattern_database(path):
    """
    Reads a pattern database file

    :param str path: database file path
    :return: (expression name, rule pattern) records in file order
    :rtype: list(tuple(str, RulePattern))
    """

    with io.open(path, 'rb') as fh:
        data = fh.read()
    try:
        contents = data.decode('utf-8')
    except UnicodeDecodeError as exc:
        raise PatternParseError('Pattern database "{}" is not valid UTF-8'.format(path), offset=exc.start)

    records = list()
    for line in contents.split('\n'):
        if not line:
            continue
        name, _, text = line.partition('\t')
        get_expression(name)
        records.append((name, parse_pattern(text)))

    return records
