#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains facsca utils functions
"""

from __future__ import print_function, division, absolute_import

import os
import time
import logging
import functools

logger = logging.getLogger('facsca')


def timestamp(fn):
    """
    Decorator that logs the time a function takes to execute

    :param callable fn: function to wrap
    :return: wrapped function
    :rtype: callable
    """

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        start_time = time.time()
        res = fn(*args, **kwargs)
        logger.debug('<{}> Elapsed time: {:.3f} seconds'.format(fn.__name__, time.time() - start_time))
        return res

    return wrapper


def clean_path(path):
    """
    Returns a cleaned path to make sure that we do not have problems with path slashes

    :param str path: path we want to clean
    :return: clean path
    :rtype: str
    """

    path = os.path.expanduser(str(path)).strip()
    path = path.replace('\\', '/')
    while '//' in path:
        path = path.replace('//', '/')
    if len(path) > 1:
        path = path.rstrip('/')

    return path


def resolve_path(base_dir, path):
    """
    Returns given path resolved against the given base directory when it is a relative one

    :param str base_dir: directory relative paths are resolved from
    :param str path: absolute or relative path
    :return: cleaned absolute or base relative path
    :rtype: str
    """

    path = clean_path(path)
    if os.path.isabs(path) or not base_dir:
        return path

    return clean_path(os.path.join(base_dir, path))


def parse_int_list(text):
    """
    Parses a comma separated list of integers such as "6,12"

    :param str text: comma separated integers. Empty string means an empty list
    :return: parsed integers, in the given order
    :rtype: list(int)
    """

    text = (text or '').strip()
    if not text:
        return list()

    values = list()
    for token in text.split(','):
        token = token.strip()
        if not token:
            continue
        values.append(int(token))

    return values
