#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains the PIFE binary container used to store fitted feature models

Layout (little-endian):
    b'PIFE' | version: uint8 | kind: uint8 length + ASCII
    meta: uint32 length + UTF-8 JSON
    matrix count: uint32
    per matrix: name (uint16 length + UTF-8) | ndim: uint8 | ndim x uint32 dims | float64 data
"""

from __future__ import print_function, division, absolute_import

import io
import json
import struct
import logging
from collections import OrderedDict

import numpy as np

from facsca.exceptions import ModelFormatError

logger = logging.getLogger('facsca')

MAGIC = b'PIFE'
VERSION = 1


class _Writer(object):
    def __init__(self):
        self._parts = list()

    def pack(self, fmt, *values):
        self._parts.append(struct.pack('<' + fmt, *values))

    def raw(self, data):
        self._parts.append(data)

    def text(self, value, length_fmt):
        data = value.encode('utf-8')
        self.pack(length_fmt, len(data))
        self.raw(data)

    def getvalue(self):
        return b''.join(self._parts)


class _Reader(object):
    def __init__(self, buffer):
        self._buffer = buffer
        self._offset = 0

    @property
    def offset(self):
        return self._offset

    def take(self, size, what):
        if self._offset + size > len(self._buffer):
            raise ModelFormatError('Truncated model file while reading {}'.format(what), offset=self._offset)
        data = self._buffer[self._offset:self._offset + size]
        self._offset += size
        return data

    def unpack(self, fmt, what):
        fmt = '<' + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def text(self, length_fmt, what):
        length, = self.unpack(length_fmt, what)
        start = self._offset
        try:
            return self.take(length, what).decode('utf-8')
        except UnicodeDecodeError:
            raise ModelFormatError('Invalid UTF-8 in {}'.format(what), offset=start)


def encode_container(kind, matrices, meta=None):
    """
    Encodes named float64 matrices and JSON metadata into PIFE bytes

    :param str kind: model kind stored in the header (eigen, twodpca, fld, ...)
    :param OrderedDict matrices: name to array mapping
    :param dict or None meta: JSON serializable metadata
    :return: container bytes
    :rtype: bytes
    """

    writer = _Writer()
    writer.raw(MAGIC)
    writer.pack('B', VERSION)
    writer.text(kind, 'B')
    writer.text(json.dumps(meta or dict(), sort_keys=True), 'I')
    writer.pack('I', len(matrices))
    for name, matrix in matrices.items():
        matrix = np.asarray(matrix, dtype='<f8')
        writer.text(name, 'H')
        writer.pack('B', matrix.ndim)
        for dim in matrix.shape:
            writer.pack('I', dim)
        writer.raw(np.ascontiguousarray(matrix).tobytes())

    return writer.getvalue()


def decode_container(buffer, expected_kind=None):
    """
    Decodes PIFE bytes

    :param bytes buffer: container bytes
    :param str or None expected_kind: if given, the kind stored in the header must match
    :return: kind, matrices and metadata
    :rtype: tuple(str, OrderedDict, dict)
    """

    reader = _Reader(buffer)
    if reader.take(len(MAGIC), 'magic') != MAGIC:
        raise ModelFormatError('Not a PIFE model file', offset=0)
    version, = reader.unpack('B', 'version')
    if version > VERSION:
        raise ModelFormatError(
            'Model file version {} is newer than supported version {}'.format(version, VERSION), offset=len(MAGIC))
    kind = reader.text('B', 'kind')
    if expected_kind and kind != expected_kind:
        raise ModelFormatError('Expected a "{}" model, found "{}"'.format(expected_kind, kind), offset=len(MAGIC) + 1)
    meta_offset = reader.offset
    try:
        meta = json.loads(reader.text('I', 'metadata'))
    except ValueError:
        raise ModelFormatError('Invalid model metadata', offset=meta_offset)

    matrices = OrderedDict()
    count, = reader.unpack('I', 'matrix count')
    for _ in range(count):
        name = reader.text('H', 'matrix name')
        ndim, = reader.unpack('B', 'matrix rank')
        shape = reader.unpack('I' * ndim, 'matrix shape') if ndim else tuple()
        size = int(np.prod(shape)) if ndim else 1
        data = reader.take(size * 8, 'matrix "{}"'.format(name))
        matrices[name] = np.frombuffer(data, dtype='<f8').astype(np.float64).reshape(shape)
    if reader.offset != len(buffer):
        raise ModelFormatError('Unexpected trailing bytes in model file', offset=reader.offset)

    return kind, matrices, meta


def write_container(path, kind, matrices, meta=None):
    with io.open(path, 'wb') as fh:
        fh.write(encode_container(kind, matrices, meta))
    logger.debug('Written "{}" model to: {}'.format(kind, path))


def read_container(path, expected_kind=None):
    with io.open(path, 'rb') as fh:
        buffer = fh.read()
    try:
        return decode_container(buffer, expected_kind=expected_kind)
    except ModelFormatError as exc:
        raise ModelFormatError('{}: {}'.format(path, exc.message), offset=exc.offset)
