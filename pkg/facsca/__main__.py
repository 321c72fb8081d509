#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Allows running facsca command line as python -m facsca
"""

from __future__ import print_function, division, absolute_import

import sys

from facsca import cli

if __name__ == '__main__':
    sys.exit(cli.main())
