#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains facsca flat key = value configuration
"""

from __future__ import print_function, division, absolute_import

import os
import io
import logging
from collections import OrderedDict

from facsca.exceptions import ConfigError

logger = logging.getLogger('facsca')

CONFIG_ENV_VAR = 'FACSCA_CONFIG'

# Value types. 'auto' means an optional float that is derived from data when left empty
INT = 'int'
FLOAT = 'float'
AUTO_FLOAT = 'auto'
CHOICE = 'choice'

# key: (type, default, choices, description)
DEFAULTS = OrderedDict([
    ('skin.rgb.r_min', (INT, 95, None, 'RGB rule: red must be greater than this value')),
    ('skin.rgb.g_min', (INT, 40, None, 'RGB rule: green must be greater than this value')),
    ('skin.rgb.b_min', (INT, 20, None, 'RGB rule: blue must be greater than this value')),
    ('skin.rgb.spread_min', (INT, 15, None, 'RGB rule: max(R,G,B) - min(R,G,B) must be greater than this value')),
    ('skin.rgb.rg_diff_min', (INT, 15, None, 'RGB rule: |R - G| must be greater than this value')),
    ('skin.ycbcr.cb_min', (FLOAT, 77.0, None, 'YCbCr rule: lower Cb bound (inclusive)')),
    ('skin.ycbcr.cb_max', (FLOAT, 127.0, None, 'YCbCr rule: upper Cb bound (inclusive)')),
    ('skin.ycbcr.cr_min', (FLOAT, 133.0, None, 'YCbCr rule: lower Cr bound (inclusive)')),
    ('skin.ycbcr.cr_max', (FLOAT, 173.0, None, 'YCbCr rule: upper Cr bound (inclusive)')),
    ('skin.hsi.h_low_max', (FLOAT, 50.0, None, 'HSI rule: hue accepted in [0, h_low_max] degrees')),
    ('skin.hsi.h_high_min', (FLOAT, 340.0, None, 'HSI rule: hue accepted in [h_high_min, 360] degrees')),
    ('skin.hsi.s_min', (FLOAT, 0.10, None, 'HSI rule: lower saturation bound (inclusive)')),
    ('skin.hsi.s_max', (FLOAT, 0.70, None, 'HSI rule: upper saturation bound (inclusive)')),
    ('skin.hsi.i_min', (FLOAT, 40.0, None, 'HSI rule: intensity must be greater than this value / 255')),
    ('detect.min_area_fraction', (FLOAT, 0.002, None, 'minimum skin component area as fraction of the image')),
    ('detect.aspect_min', (FLOAT, 0.8, None, 'minimum face box height / width')),
    ('detect.aspect_max', (FLOAT, 2.2, None, 'maximum face box height / width')),
    ('detect.threshold_min', (INT, 30, None, 'lower clamp of the Otsu dark-feature threshold')),
    ('detect.threshold_max', (INT, 120, None, 'upper clamp of the Otsu dark-feature threshold')),
    ('detect.min_blob_area', (INT, 2, None, 'minimum pixel count of an eye or mouth candidate blob')),
    ('chip.size', (INT, 64, None, 'side of the square normalized grayscale face chip')),
    ('eigen.components', (INT, 8, None, 'number M of eigenfaces kept (clamped to the gallery size)')),
    ('eigen.phi', (AUTO_FLOAT, None, None, 'recognition threshold; empty derives it from the gallery')),
    ('eigen.phi_factor', (FLOAT, 0.8, None, 'auto phi = factor * median pairwise gallery distance')),
    ('eigen.tau_factor', (FLOAT, 0.5, None, 'key face novelty threshold tau = factor * phi')),
    ('twodpca.components', (INT, 4, None, 'number d of 2DPCA projection axes')),
    ('gabor.scales', (INT, 5, None, 'number of Gabor scales')),
    ('gabor.orientations', (INT, 8, None, 'number of Gabor orientations')),
    ('gabor.kernel_size', (INT, 21, None, 'side of the square Gabor kernels')),
    ('gabor.min_wavelength', (FLOAT, 4.0, None, 'wavelength of the finest scale, in pixels')),
    ('fld.lambda', (FLOAT, 1e-6, None, 'ridge added to the within-class scatter matrix')),
    ('recognition.features', (CHOICE, 'fused', ('fused', 'eigen'), 'feature space used for identity recognition')),
    ('metrics.beta', (FLOAT, 1.0, None, 'beta of the F-measure (1.0 is the harmonic mean)')),
    ('retrieval.hamming_radius', (INT, 0, None, 'fuzzy pattern match radius; 0 means exact label match only')),
    ('pipeline.workers', (INT, 4, None, 'number of shots analyzed concurrently')),
])


class Config(object):
    """
    Class that holds the effective facsca configuration
    """

    def __init__(self, values=None, source=None):
        super(Config, self).__init__()

        self._values = OrderedDict((key, data[1]) for key, data in DEFAULTS.items())
        self._source = source
        for key, value in (values or dict()).items():
            self.set(key, value)

    def __getitem__(self, key):
        return self.get(key)

    def __eq__(self, other):
        return isinstance(other, Config) and self._values == other._values

    def __ne__(self, other):
        return not self.__eq__(other)

    @property
    def source(self):
        return self._source

    def get(self, key):
        """
        Returns the effective value of the given key

        :param str key: configuration key
        :return: typed value
        :rtype: int or float or str or None
        """

        if key not in self._values:
            raise ConfigError('Unknown configuration key "{}"'.format(key))

        return self._values[key]

    def set(self, key, value):
        """
        Sets the value of the given key, converting it to the key type

        :param str key: configuration key
        :param object value: new value. Strings are parsed using the key type
        """

        if key not in DEFAULTS:
            raise ConfigError('Unknown configuration key "{}"'.format(key))

        self._values[key] = _convert(key, value)

    def items(self):
        return list(self._values.items())

    def echo(self):
        """
        Returns the effective configuration as key = value lines, sorted by key

        :return: configuration text
        :rtype: str
        """

        lines = list()
        for key in sorted(self._values):
            value = self._values[key]
            lines.append('{} = {}'.format(key, '' if value is None else value))

        return '\n'.join(lines) + '\n'

    def describe(self):
        """
        Returns a documentation line per key with its default value

        :return: list of description lines
        :rtype: list(str)
        """

        lines = list()
        for key, (_, default, _, doc) in DEFAULTS.items():
            lines.append('{} (default: {}): {}'.format(key, 'auto' if default is None else default, doc))

        return lines


def _convert(key, value):
    value_type, _, choices, _ = DEFAULTS[key]
    if value_type == AUTO_FLOAT:
        if value is None or (isinstance(value, str) and not value.strip()):
            return None
        return float(value)
    if value_type == INT:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError('Configuration key "{}" expects an integer, got {}'.format(key, value))
        return int(value)
    if value_type == FLOAT:
        return float(value)
    value = str(value).strip()
    if value not in choices:
        raise ConfigError(
            'Configuration key "{}" must be one of {}, got "{}"'.format(key, ', '.join(choices), value))

    return value


def parse_config_text(text, source='<string>'):
    """
    Parses flat key = value configuration text

    :param str text: configuration text
    :param str source: name used in error messages
    :return: configuration with the parsed values applied over the defaults
    :rtype: Config
    """

    config = Config(source=source)
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep:
            raise ConfigError('{}:{}: expected "key = value", got "{}"'.format(source, line_number, line))
        key = key.strip()
        try:
            config.set(key, value.strip())
        except ConfigError as exc:
            raise ConfigError('{}:{}: {}'.format(source, line_number, exc.message))
        except ValueError:
            raise ConfigError('{}:{}: invalid value "{}" for "{}"'.format(source, line_number, value.strip(), key))

    return config


def load_config(path=None):
    """
    Loads configuration from the given path, from FACSCA_CONFIG environment variable or from defaults

    :param str or None path: configuration file path
    :return: effective configuration
    :rtype: Config
    """

    if not path:
        path = os.environ.get(CONFIG_ENV_VAR, None)
    if not path:
        logger.debug('No configuration file given. Using defaults')
        return Config(source='<defaults>')

    if not os.path.isfile(path):
        raise ConfigError('Configuration file does not exist: "{}"'.format(path))

    logger.debug('Loading configuration from: {}'.format(path))
    with io.open(path, 'rb') as fh:
        data = fh.read()
    try:
        text = data.decode('utf-8')
    except UnicodeDecodeError as exc:
        raise ConfigError('{}: invalid UTF-8 data'.format(path), offset=exc.start)

    return parse_config_text(text, source=path)
