#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains the classified shot index: persistence, query by expression and retrieval metrics
"""

from __future__ import print_function, division, absolute_import

import os
import io
import json
import logging
from collections import namedtuple, OrderedDict

from facsca import facs_codec, pipeline, vision
from facsca.config import Config
from facsca.imageio import Image
from facsca.exceptions import IndexIntegrityError, IndexVersionError, UnknownShotError, ModelNotFittedError

logger = logging.getLogger('facsca')

INDEX_VERSION = 1

QueryHit = namedtuple('QueryHit', ['shot_id', 'score', 'shot_expression', 'frame_range'])


class QueryResult(namedtuple('QueryResult', ['label', 'pattern', 'hits'])):
    """
    Ranked shots answering an expression query
    """

    __slots__ = ()

    @property
    def shot_ids(self):
        return [hit.shot_id for hit in self.hits]

    def render(self):
        """
        Returns the result as text: one "shot_id<TAB>score<TAB>expression<TAB>first-last" line per hit

        :return: result text
        :rtype: str
        """

        lines = ['{}\t{}\t{}\t{}-{}'.format(
            hit.shot_id, hit.score, hit.shot_expression, hit.frame_range[0], hit.frame_range[1]) for hit in self.hits]

        return ''.join(line + '\n' for line in lines)


class ShotIndex(object):
    """
    Versioned index of classified shots. Every successfully classified shot lives in the expression pool of its
    shot expression
    """

    def __init__(self, records=None, patterns=None, version=INDEX_VERSION):
        super(ShotIndex, self).__init__()

        self._version = int(version)
        self._records = tuple(records or ())
        self._patterns = tuple((name, pattern) for name, pattern in (patterns or ()))
        self._by_id = OrderedDict((record.shot_id, record) for record in self._records)
        if len(self._by_id) != len(self._records):
            raise IndexIntegrityError('Index holds duplicated shot ids')

        self._pools = OrderedDict()
        for record in self._records:
            if record.ok:
                self._pools.setdefault(record.shot_expression, list()).append(record.shot_id)

    @property
    def version(self):
        return self._version

    @property
    def records(self):
        return self._records

    @property
    def patterns(self):
        return self._patterns

    @property
    def pools(self):
        return OrderedDict((label, list(ids)) for label, ids in self._pools.items())

    def pool(self, label):
        return [self._by_id[shot_id] for shot_id in self._pools.get(label, ())]

    def get(self, shot_id):
        return self._by_id.get(shot_id)

    def __len__(self):
        return len(self._records)

    def __eq__(self, other):
        return (isinstance(other, ShotIndex) and self._version == other._version and
                self._records == other._records and self._patterns == other._patterns)

    def __ne__(self, other):
        return not self.__eq__(other)

    def to_dict(self):
        return OrderedDict([
            ('version', self._version),
            ('patterns', [list(row) for row in self._patterns]),
            ('pools', self.pools),
            ('records', [record.to_dict() for record in self._records]),
        ])


def build_index(records, patterns=None):
    """
    Builds the shot index of ingested records

    :param list(pipeline.ShotRecord) records: ingested records
    :param list(tuple(str, str)) or None patterns: expression pattern database. Defaults to the built-in one
    :return: shot index
    :rtype: ShotIndex
    """

    patterns = facs_codec.pattern_database() if patterns is None else patterns
    index = ShotIndex(records, patterns)
    logger.info('Indexed {} shot(s) into {} expression pool(s)'.format(len(index), len(index.pools)))

    return index


def dumps_index(index):
    return json.dumps(index.to_dict(), sort_keys=True, indent=2, separators=(',', ': ')) + '\n'


def save_index(index, path):
    """
    Writes the index as JSON with sorted keys so equal indices give identical bytes

    :param ShotIndex index: index to save
    :param str path: output file path
    """

    with io.open(path, 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(dumps_index(index))
    logger.debug('Written index with {} shot(s) to: {}'.format(len(index), path))


def loads_index(text, source='<string>'):
    """
    Decodes index JSON

    :param str or bytes text: index file contents. Bytes are decoded as UTF-8
    :param str source: name used in error messages
    :return: shot index
    :rtype: ShotIndex
    """

    if isinstance(text, bytes):
        try:
            text = text.decode('utf-8')
        except UnicodeDecodeError as exc:
            raise IndexIntegrityError(
                'Corrupt index file {}: invalid UTF-8 data'.format(source), offset=exc.start)

    try:
        data = json.loads(text)
    except ValueError as exc:
        raise IndexIntegrityError('Corrupt index file {}: {}'.format(source, exc), offset=getattr(exc, 'pos', None))

    if not isinstance(data, dict) or not isinstance(data.get('version'), int):
        raise IndexIntegrityError('Index file {} has no version field'.format(source))
    if data['version'] > INDEX_VERSION:
        raise IndexVersionError('Index file {} has version {} but only versions up to {} are supported'.format(
            source, data['version'], INDEX_VERSION))

    try:
        records = [pipeline.ShotRecord.from_dict(item) for item in data['records']]
        patterns = [(name, pattern) for name, pattern in data['patterns']]
        index = ShotIndex(records, patterns, version=data['version'])
    except (KeyError, TypeError, ValueError) as exc:
        raise IndexIntegrityError('Index file {} has an invalid layout: {}'.format(source, exc))

    if data.get('pools') != dict(index.pools):
        raise IndexIntegrityError('Index file {} has expression pools that do not match its records'.format(source))

    return index


def load_index(path):
    """
    Loads an index written by save_index

    :param str path: index file path
    :return: shot index
    :rtype: ShotIndex
    """

    if not os.path.isfile(path):
        raise IndexIntegrityError('Index file does not exist: "{}"'.format(path))
    with io.open(path, 'rb') as fh:
        return loads_index(fh.read(), source=path)


# =================================================================================================================
# QUERY
# =================================================================================================================

def longest_run(labels, label):
    """
    Returns the length of the longest run of consecutive items equal to label

    :param list(str) labels: sequence of labels
    :param str label: label to look for
    :return: longest run length
    :rtype: int
    """

    best = current = 0
    for item in labels:
        current = current + 1 if item == label else 0
        best = max(best, current)

    return best


def _matching_labels(index, label, pattern, radius):
    labels = [label]
    if radius <= 0 or pattern is None:
        return labels
    for name, text in index.patterns:
        if name not in labels and facs_codec.hamming_distance(pattern, facs_codec.parse_pattern(text)) <= radius:
            labels.append(name)
    logger.debug('Fuzzy match within {} bit(s) of {}: {}'.format(radius, label, labels))

    return labels


def query_label(index, label, pattern=None, radius=0):
    """
    Returns the shots of an expression pool ranked by their longest run of key faces showing that expression

    :param ShotIndex index: shot index
    :param str label: expression label
    :param facs_codec.RulePattern or None pattern: rule pattern of the probe, used by fuzzy matching
    :param int radius: Hamming radius of fuzzy matching. 0 keeps the exact label only
    :return: ranked result; ties keep shot id order
    :rtype: QueryResult
    """

    records = list()
    for name in _matching_labels(index, label, pattern, radius):
        records.extend(index.pool(name))

    hits = [
        QueryHit(record.shot_id, longest_run(record.key_face_labels(), label), record.shot_expression,
                 tuple(record.frame_range)) for record in records]
    hits.sort(key=lambda hit: (-hit.score, hit.shot_id))

    return QueryResult(label, pattern, tuple(hits))


def query(index, probe, models=None, config=None):
    """
    Answers a query by expression. The probe is an Action Unit set or a frame (image or image path) that is analyzed
    with the given models; its expression selects the pool to rank

    :param ShotIndex index: shot index
    :param iterable(int) or Image or str probe: query probe
    :param pipeline.ModelSet or None models: fitted models, needed by frame probes
    :param Config or None config: retrieval parameters
    :return: ranked result
    :rtype: QueryResult
    """

    config = config or (models.config if models is not None else Config())
    if isinstance(probe, str) or isinstance(probe, Image):
        if models is None:
            raise ModelNotFittedError('Querying by frame needs trained models')
        image = vision.load_image(probe) if isinstance(probe, str) else probe
        analysis = pipeline.analyze_frame(image, models)
        label, pattern = analysis.label, analysis.pattern
    else:
        classification = facs_codec.classify_au_set(probe)
        label, pattern = classification.label, classification.pattern
    logger.debug('Query expression: {} ({})'.format(label, facs_codec.render_pattern(pattern)))

    return query_label(index, label, pattern=pattern, radius=config['retrieval.hamming_radius'])


# =================================================================================================================
# METRICS
# =================================================================================================================

class Metrics(namedtuple('Metrics', [
        'label', 'tp', 'fp', 'fn', 'tn', 'precision', 'recall', 'f_measure', 'accuracy', 'undefined'])):
    """
    Retrieval metrics of a query. Undefined holds the names of metrics whose denominator was zero
    """

    __slots__ = ()

    def to_dict(self):
        data = OrderedDict(zip(self._fields, self))
        data['undefined'] = list(self.undefined)
        return data


def f_measure(precision, recall, beta=1.0):
    """
    Returns the weighted harmonic mean of precision and recall

    :param float precision: precision
    :param float recall: recall
    :param float beta: recall weight; 1.0 gives the harmonic mean
    :return: F-measure. 0.0 when precision and recall are both 0
    :rtype: float
    """

    beta2 = beta * beta
    denominator = beta2 * precision + recall
    if denominator == 0:
        return 0.0

    return (1.0 + beta2) * precision * recall / denominator


def _truth_dict(truth):
    if isinstance(truth, pipeline.ShotManifest):
        return truth.truth()
    return OrderedDict(truth)


def _ratio(numerator, denominator, name, undefined):
    if denominator == 0:
        undefined.append(name)
        return 0.0
    return numerator / denominator


def evaluate(result, truth, beta=1.0):
    """
    Evaluates a query result against ground truth labels

    :param QueryResult result: query result
    :param pipeline.ShotManifest or dict truth: labelled manifest or shot id to label mapping
    :param float beta: F-measure weight
    :return: metrics of the query label
    :rtype: Metrics
    """

    truth = _truth_dict(truth)
    retrieved = set()
    for shot_id in result.shot_ids:
        if shot_id not in truth:
            raise UnknownShotError('Retrieved shot "{}" has no ground truth label'.format(shot_id))
        retrieved.add(shot_id)
    relevant = set(shot_id for shot_id, label in truth.items() if label == result.label)

    tp = len(retrieved & relevant)
    fp = len(retrieved - relevant)
    fn = len(relevant - retrieved)
    tn = len(truth) - tp - fp - fn

    undefined = list()
    precision = _ratio(tp, tp + fp, 'precision', undefined)
    recall = _ratio(tp, tp + fn, 'recall', undefined)
    f_value = f_measure(precision, recall, beta)
    if precision == 0 and recall == 0:
        undefined.append('f_measure')
    accuracy = _ratio(tp + tn, len(truth), 'accuracy', undefined)

    return Metrics(result.label, tp, fp, fn, tn, precision, recall, f_value, accuracy, tuple(undefined))


class EvaluationReport(object):
    """
    Per expression metrics and their macro averages
    """

    FIELDS = ('precision', 'recall', 'f_measure', 'accuracy')

    def __init__(self, metrics, beta=1.0):
        super(EvaluationReport, self).__init__()

        self.metrics = list(metrics)
        self.beta = float(beta)

    @property
    def macro(self):
        macro = OrderedDict()
        for field in self.FIELDS:
            values = [getattr(metric, field) for metric in self.metrics]
            macro[field] = sum(values) / len(values) if values else 0.0
        return macro

    def to_dict(self):
        return OrderedDict([
            ('beta', self.beta),
            ('labels', [metric.to_dict() for metric in self.metrics]),
            ('macro', self.macro),
        ])

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + '\n'

    def to_text(self):
        """
        Returns the report as aligned columns followed by a macro average line

        :return: report text
        :rtype: str
        """

        width = max([len('label')] + [len(metric.label) for metric in self.metrics])
        lines = ['{:<{w}}  {:>4}  {:>4}  {:>4}  {:>4}  {:>9}  {:>9}  {:>9}  {:>9}'.format(
            'label', 'tp', 'fp', 'fn', 'tn', 'precision', 'recall', 'f_measure', 'accuracy', w=width)]
        for metric in self.metrics:
            lines.append('{:<{w}}  {:>4}  {:>4}  {:>4}  {:>4}  {:>9.4f}  {:>9.4f}  {:>9.4f}  {:>9.4f}'.format(
                metric.label, metric.tp, metric.fp, metric.fn, metric.tn, metric.precision, metric.recall,
                metric.f_measure, metric.accuracy, w=width))
        lines.append('macro: ' + ' '.join('{}={:.4f}'.format(key, value) for key, value in self.macro.items()))

        return '\n'.join(lines) + '\n'


def evaluate_all(index, truth, beta=1.0):
    """
    Queries every expression present in the ground truth and evaluates each result

    :param ShotIndex index: shot index
    :param pipeline.ShotManifest or dict truth: labelled manifest or shot id to label mapping
    :param float beta: F-measure weight
    :return: evaluation report, labels in knowledge base order
    :rtype: EvaluationReport
    """

    truth = _truth_dict(truth)
    present = set(truth.values())
    metrics = list()
    for label in facs_codec.EXPRESSION_NAMES:
        if label not in present:
            continue
        metrics.append(evaluate(query_label(index, label), truth, beta=beta))

    return EvaluationReport(metrics, beta=beta)
