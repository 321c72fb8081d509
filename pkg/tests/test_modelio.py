#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains tests for the feature model container
"""

import struct
from collections import OrderedDict

import numpy as np
import pytest

from facsca import modelio
from facsca.exceptions import ModelFormatError


def _sample():
    return OrderedDict([('mean', np.arange(6.0).reshape(2, 3)), ('values', np.array([0.5, -1.25]))])


def test_container_round_trip():
    data = modelio.encode_container('eigen', _sample(), meta={'phi': 1.5, 'identities': ['a', 'b']})
    kind, matrices, meta = modelio.decode_container(data, expected_kind='eigen')
    assert kind == 'eigen'
    assert list(matrices) == ['mean', 'values']
    assert np.array_equal(matrices['mean'], _sample()['mean'])
    assert meta == {'phi': 1.5, 'identities': ['a', 'b']}


def test_container_header():
    data = modelio.encode_container('fld', OrderedDict())
    assert data[:4] == b'PIFE'
    assert data[4:5] == struct.pack('<B', modelio.VERSION)
    assert data[5:9] == b'\x03fld'


def test_wrong_kind_is_rejected():
    data = modelio.encode_container('eigen', _sample())
    with pytest.raises(ModelFormatError):
        modelio.decode_container(data, expected_kind='fld')


def test_bad_magic_and_newer_versions_are_rejected():
    data = modelio.encode_container('eigen', _sample())
    with pytest.raises(ModelFormatError) as exc_info:
        modelio.decode_container(b'XXXX' + data[4:])
    assert exc_info.value.offset == 0
    with pytest.raises(ModelFormatError):
        modelio.decode_container(data[:4] + struct.pack('<B', modelio.VERSION + 1) + data[5:])


def test_truncated_and_padded_containers_are_rejected():
    data = modelio.encode_container('eigen', _sample())
    with pytest.raises(ModelFormatError):
        modelio.decode_container(data[:-3])
    with pytest.raises(ModelFormatError):
        modelio.decode_container(data + b'\x00')


def test_read_container_names_the_file(tmp_path):
    path = tmp_path / 'model.pife'
    path.write_bytes(b'PIFE')
    with pytest.raises(ModelFormatError) as exc_info:
        modelio.read_container(str(path))
    assert str(path) in str(exc_info.value)


def test_write_and_read_container(tmp_path):
    path = str(tmp_path / 'model.pife')
    modelio.write_container(path, 'twodpca', _sample())
    kind, matrices, meta = modelio.read_container(path)
    assert kind == 'twodpca'
    assert meta == {}
    assert np.array_equal(matrices['values'], [0.5, -1.25])
