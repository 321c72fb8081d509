#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains binary netpbm (PGM P5 / PPM P6) image reader and writer
"""

from __future__ import print_function, division, absolute_import

import io
import logging

import numpy as np

from facsca.exceptions import ImageFormatError

logger = logging.getLogger('facsca')

GRAY8 = 'Gray8'
RGB8 = 'RGB8'

MAGIC_CHANNELS = {
    b'P5': (GRAY8, 1),
    b'P6': (RGB8, 3),
}
CHANNEL_MAGIC = {GRAY8: b'P5', RGB8: b'P6'}
MAX_VALUE = 255

WHITESPACE = b' \t\r\n\x0b\x0c'


class Image(object):
    """
    Immutable 8-bit image. Gray8 data has shape (height, width) and RGB8 data (height, width, 3)
    """

    __slots__ = ('_data', '_channels')

    def __init__(self, data, channels=None):
        data = np.array(data, dtype=np.uint8)
        if channels is None:
            channels = GRAY8 if data.ndim == 2 else RGB8
        if channels == GRAY8 and data.ndim != 2:
            raise ValueError('Gray8 image data must have 2 dimensions, got shape {}'.format(data.shape))
        if channels == RGB8 and (data.ndim != 3 or data.shape[2] != 3):
            raise ValueError('RGB8 image data must have shape (height, width, 3), got {}'.format(data.shape))
        if channels not in CHANNEL_MAGIC:
            raise ValueError('Unknown channel layout "{}"'.format(channels))
        data.setflags(write=False)
        self._data = data
        self._channels = channels

    @property
    def data(self):
        return self._data

    @property
    def channels(self):
        return self._channels

    @property
    def channel_count(self):
        return 1 if self._channels == GRAY8 else 3

    @property
    def width(self):
        return self._data.shape[1]

    @property
    def height(self):
        return self._data.shape[0]

    @property
    def shape(self):
        return self._data.shape

    def __eq__(self, other):
        return (isinstance(other, Image) and self._channels == other._channels and
                np.array_equal(self._data, other._data))

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return 'Image({}x{} {})'.format(self.width, self.height, self._channels)


class NetpbmParser(object):
    """
    Class that defines a binary netpbm parser working over a bytes buffer
    """

    def __init__(self, buffer):
        super(NetpbmParser, self).__init__()

        self._buffer = buffer
        self._offset = 0

    @property
    def offset(self):
        return self._offset

    def parse(self):
        """
        Parses header and pixel payload

        :return: decoded image
        :rtype: Image
        """

        magic = self._buffer[:2]
        if magic not in MAGIC_CHANNELS:
            raise ImageFormatError(
                'Unsupported netpbm magic number {!r}. Only binary P5 and P6 files are supported'.format(magic),
                offset=0)
        self._offset = 2
        channels, channel_count = MAGIC_CHANNELS[magic]

        width = self._next_int('width')
        height = self._next_int('height')
        max_value = self._next_int('maximum value')
        if max_value != MAX_VALUE:
            raise ImageFormatError(
                'Only 8-bit images with maximum value {} are supported, got {}'.format(MAX_VALUE, max_value),
                offset=self._offset)
        if width < 1 or height < 1:
            raise ImageFormatError('Invalid image size {}x{}'.format(width, height), offset=self._offset)

        # Exactly one whitespace character separates the header from the raster
        if self._offset >= len(self._buffer) or self._buffer[self._offset:self._offset + 1] not in WHITESPACE:
            raise ImageFormatError('Missing whitespace after image header', offset=self._offset)
        self._offset += 1

        size = width * height * channel_count
        payload = self._buffer[self._offset:self._offset + size]
        if len(payload) < size:
            raise ImageFormatError(
                'Truncated pixel data: expected {} bytes, found {}'.format(size, len(payload)), offset=self._offset)

        data = np.frombuffer(payload, dtype=np.uint8)
        if channel_count == 1:
            data = data.reshape((height, width))
        else:
            data = data.reshape((height, width, channel_count))

        return Image(data, channels)

    def _skip_whitespace_and_comments(self):
        while self._offset < len(self._buffer):
            char = self._buffer[self._offset:self._offset + 1]
            if char == b'#':
                end = self._buffer.find(b'\n', self._offset)
                self._offset = len(self._buffer) if end < 0 else end + 1
            elif char in WHITESPACE:
                self._offset += 1
            else:
                break

    def _next_int(self, name):
        self._skip_whitespace_and_comments()
        start = self._offset
        while self._offset < len(self._buffer) and self._buffer[self._offset:self._offset + 1].isdigit():
            self._offset += 1
        token = self._buffer[start:self._offset]
        if not token:
            raise ImageFormatError('Expected {} in image header'.format(name), offset=start)

        return int(token)


def decode(buffer):
    """
    Decodes the bytes of a binary PGM or PPM file

    :param bytes buffer: file contents
    :return: decoded image
    :rtype: Image
    """

    return NetpbmParser(bytes(buffer)).parse()


def encode(image):
    """
    Encodes an image as binary PGM (Gray8) or PPM (RGB8)

    :param Image image: image to encode
    :return: file contents
    :rtype: bytes
    """

    header = b'%s\n%d %d\n%d\n' % (CHANNEL_MAGIC[image.channels], image.width, image.height, MAX_VALUE)

    return header + np.ascontiguousarray(image.data, dtype=np.uint8).tobytes()


def read_image(path):
    """
    Loads a PGM or PPM file from disk

    :param str path: image file path
    :return: decoded image
    :rtype: Image
    """

    with io.open(path, 'rb') as fh:
        buffer = fh.read()
    try:
        return decode(buffer)
    except ImageFormatError as exc:
        raise ImageFormatError('{}: {}'.format(path, exc.message), offset=exc.offset)


def write_image(image, path):
    """
    Writes an image to disk as PGM or PPM depending on its channels

    :param Image image: image to write
    :param str path: output file path
    """

    with io.open(path, 'wb') as fh:
        fh.write(encode(image))
    logger.debug('Written {} to: {}'.format(image, path))
