#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains facsca exception classes
"""

from __future__ import print_function, division, absolute_import


class FacscaError(Exception):
    """
    Base class of every error raised by facsca. Each subclass exposes a stable code used by the command line
    """

    code = 'FACSCA_ERROR'

    def __init__(self, message, offset=None):
        super(FacscaError, self).__init__(message)

        self.message = message
        self.offset = offset

    def __str__(self):
        if self.offset is None:
            return self.message
        return '{} (at byte offset {})'.format(self.message, self.offset)


class InvalidCellError(FacscaError):
    code = 'INVALID_CELL'


class UnknownActionUnitError(FacscaError):
    code = 'UNKNOWN_AU'


class PatternParseError(FacscaError):
    code = 'PATTERN_PARSE'

    def __str__(self):
        return '{} (at offset {})'.format(self.message, self.offset)


class ImageFormatError(FacscaError):
    code = 'IMAGE_FORMAT'


class ChannelError(FacscaError):
    code = 'IMAGE_CHANNELS'


class ChipSizeError(FacscaError):
    code = 'CHIP_SIZE'


class DimensionMismatchError(FacscaError):
    code = 'DIMENSION_MISMATCH'


class ModelNotFittedError(FacscaError):
    code = 'MODEL_NOT_FITTED'


class ModelFormatError(FacscaError):
    code = 'MODEL_FORMAT'


class ClassCountError(FacscaError):
    code = 'CLASS_COUNT'


class GalleryError(FacscaError):
    code = 'GALLERY'


class ManifestError(FacscaError):
    code = 'MANIFEST'


class IndexIntegrityError(FacscaError):
    code = 'INDEX_INTEGRITY'


class IndexVersionError(FacscaError):
    code = 'INDEX_VERSION'


class UnknownShotError(FacscaError):
    code = 'UNKNOWN_SHOT'


class ConfigError(FacscaError):
    code = 'CONFIG'
