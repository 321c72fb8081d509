#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Initialization module for facsca
"""

from __future__ import print_function, division, absolute_import

from facsca.__version__ import get_version

__version__ = get_version()
