#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Version module for facsca
"""

from __future__ import print_function, division, absolute_import

__version__ = '0.1.0'


def get_version():
    return __version__
