#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains image ingestion, combined RGB + YCbCr + HSI skin color face detection and facial region
cropping of grayscale face chips
"""

from __future__ import print_function, division, absolute_import

import logging
from collections import namedtuple, OrderedDict

import numpy as np
from scipy import ndimage
from skimage import filters, transform

from facsca import imageio, facs_codec
from facsca.config import Config
from facsca.imageio import Image, GRAY8, RGB8
from facsca.exceptions import ChannelError, ChipSizeError

logger = logging.getLogger('facsca')

MIN_CHIP_SIZE = 24

# Row band (percent of chip height) and column bands (percent of chip width) of each facial region.
# Column bands of the same region are stored side by side
REGION_LAYOUT = OrderedDict([
    (facs_codec.EYE_BROWS, ((10, 25), ((0, 100),))),
    (facs_codec.EYE_LIDS, ((25, 35), ((0, 100),))),
    (facs_codec.EYES, ((30, 45), ((0, 100),))),
    (facs_codec.CHEEKS, ((45, 65), ((0, 40), (60, 100)))),
    (facs_codec.LIP_PART1, ((65, 80), ((0, 100),))),
    (facs_codec.LIP_PART2, ((75, 95), ((0, 100),))),
])


class FaceBox(namedtuple('FaceBox', ['x', 'y', 'w', 'h', 'score'])):
    """
    Face bounding box in pixels with the fraction of skin pixels it contains
    """

    __slots__ = ()

    @property
    def slices(self):
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)

    def translated(self, dx, dy):
        return self._replace(x=self.x + dx, y=self.y + dy)


class RegionChips(object):
    """
    Grayscale chips of the six facial regions cropped from the same face chip
    """

    def __init__(self, chips):
        super(RegionChips, self).__init__()

        self._chips = OrderedDict((name, chips[name]) for name in facs_codec.REGION_NAMES)

    def __getitem__(self, region_name):
        return self._chips[region_name]

    def __iter__(self):
        return iter(self._chips.items())

    def __len__(self):
        return len(self._chips)

    def __eq__(self, other):
        return isinstance(other, RegionChips) and all(
            np.array_equal(chip, other[name]) for name, chip in self._chips.items())

    def __ne__(self, other):
        return not self.__eq__(other)


# =================================================================================================================
# IO
# =================================================================================================================

def load_image(path):
    """
    Loads a binary PGM (P5) or PPM (P6) image keeping its samples untouched

    :param str path: image file path
    :return: loaded image
    :rtype: Image
    """

    return imageio.read_image(path)


def save_image(image, path):
    """
    Saves an image as binary PGM or PPM depending on its channels

    :param Image image: image to save
    :param str path: output file path
    """

    imageio.write_image(image, path)


def _require_rgb(image):
    if image.channels != RGB8:
        raise ChannelError('Skin detection requires an RGB8 image, got {}'.format(image.channels))

    return image.data.astype(np.float64)


# =================================================================================================================
# SKIN DETECTION
# =================================================================================================================

def skin_mask_rgb(image, config=None):
    """
    Returns the skin pixels of an image under the RGB explicit rule

    :param Image image: RGB8 image
    :param Config or None config: thresholds. Defaults are used when not given
    :return: boolean mask with the image dimensions
    :rtype: numpy.ndarray
    """

    config = config or Config()
    rgb = _require_rgb(image)
    red, green, blue = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    spread = rgb.max(axis=2) - rgb.min(axis=2)

    return ((red > config['skin.rgb.r_min']) & (green > config['skin.rgb.g_min']) &
            (blue > config['skin.rgb.b_min']) & (spread > config['skin.rgb.spread_min']) &
            (np.abs(red - green) > config['skin.rgb.rg_diff_min']) & (red > green) & (red > blue))


def rgb_to_ycbcr(rgb):
    """
    Converts RGB samples to full range YCbCr using BT.601 coefficients

    :param numpy.ndarray rgb: float array with a last axis of size 3
    :return: Y, Cb and Cr arrays
    :rtype: tuple(numpy.ndarray)
    """

    red, green, blue = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    luma = 0.299 * red + 0.587 * green + 0.114 * blue
    cb = 128.0 - 0.168736 * red - 0.331264 * green + 0.5 * blue
    cr = 128.0 + 0.5 * red - 0.418688 * green - 0.081312 * blue

    return luma, cb, cr


def skin_mask_ycbcr(image, config=None):
    """
    Returns the skin pixels of an image under the YCbCr chrominance bounds

    :param Image image: RGB8 image
    :param Config or None config: thresholds. Defaults are used when not given
    :return: boolean mask with the image dimensions
    :rtype: numpy.ndarray
    """

    config = config or Config()
    _, cb, cr = rgb_to_ycbcr(_require_rgb(image))

    return ((cb >= config['skin.ycbcr.cb_min']) & (cb <= config['skin.ycbcr.cb_max']) &
            (cr >= config['skin.ycbcr.cr_min']) & (cr <= config['skin.ycbcr.cr_max']))


def rgb_to_hsi(rgb):
    """
    Converts RGB samples to hue (degrees), saturation (0..1) and intensity (0..1)

    :param numpy.ndarray rgb: float array with a last axis of size 3, samples in 0..255
    :return: H, S and I arrays
    :rtype: tuple(numpy.ndarray)
    """

    red, green, blue = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    total = red + green + blue
    intensity = total / (3.0 * 255.0)
    saturation = np.where(total > 0, 1.0 - 3.0 * rgb.min(axis=2) / np.where(total > 0, total, 1.0), 0.0)

    numerator = 0.5 * ((red - green) + (red - blue))
    denominator = np.sqrt((red - green) ** 2 + (red - blue) * (green - blue))
    ratio = np.where(denominator > 0, numerator / np.where(denominator > 0, denominator, 1.0), 1.0)
    theta = np.degrees(np.arccos(np.clip(ratio, -1.0, 1.0)))
    hue = np.where(blue <= green, theta, 360.0 - theta)
    hue = np.where(denominator > 0, hue, 0.0)

    return hue, saturation, intensity


def skin_mask_hsi(image, config=None):
    """
    Returns the skin pixels of an image under the HSI bounds

    :param Image image: RGB8 image
    :param Config or None config: thresholds. Defaults are used when not given
    :return: boolean mask with the image dimensions
    :rtype: numpy.ndarray
    """

    config = config or Config()
    hue, saturation, intensity = rgb_to_hsi(_require_rgb(image))
    hue_ok = (hue <= config['skin.hsi.h_low_max']) | (hue >= config['skin.hsi.h_high_min'])

    return (hue_ok & (saturation >= config['skin.hsi.s_min']) & (saturation <= config['skin.hsi.s_max']) &
            (intensity > config['skin.hsi.i_min'] / 255.0))


def skin_mask_combined(image, config=None):
    """
    Returns the pixels detected as skin by one or more of the RGB, YCbCr and HSI rules

    :param Image image: RGB8 image
    :param Config or None config: thresholds. Defaults are used when not given
    :return: boolean mask with the image dimensions
    :rtype: numpy.ndarray
    """

    return skin_mask_rgb(image, config) | skin_mask_ycbcr(image, config) | skin_mask_hsi(image, config)


# =================================================================================================================
# GRAY LEVEL FEATURES
# =================================================================================================================

def to_gray(image):
    """
    Returns the luminance image round(0.299 R + 0.587 G + 0.114 B). Gray8 images are returned untouched

    :param Image image: image to convert
    :return: Gray8 image
    :rtype: Image
    """

    if image.channels == GRAY8:
        return image

    rgb = image.data.astype(np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]

    return Image(np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8), GRAY8)


def binarize(image, threshold):
    """
    Marks as feature pixels the ones darker than the given threshold

    :param Image or numpy.ndarray image: Gray8 image or gray level array
    :param float threshold: gray level threshold
    :return: boolean mask, True for feature pixels
    :rtype: numpy.ndarray
    """

    data = image.data if isinstance(image, Image) else np.asarray(image)
    if data.ndim != 2:
        raise ChannelError('Binarize requires a Gray8 image')

    return data < threshold


def dark_feature_threshold(gray, config=None):
    """
    Returns the Otsu threshold of the given gray levels clamped to the configured range

    :param numpy.ndarray gray: gray levels
    :param Config or None config: clamp range. Defaults are used when not given
    :return: threshold
    :rtype: float
    """

    config = config or Config()
    gray = np.asarray(gray)
    if gray.min() == gray.max():
        threshold = float(gray.min())
    else:
        threshold = float(filters.threshold_otsu(gray))

    return float(np.clip(threshold, config['detect.threshold_min'], config['detect.threshold_max']))


def _count_blobs(mask, min_area):
    if not mask.any():
        return 0
    labels, count = ndimage.label(mask)
    areas = ndimage.sum(mask, labels, index=np.arange(1, count + 1))

    return int(np.sum(np.asarray(areas) >= min_area))


def has_facial_features(gray_box, component, config=None):
    """
    Returns whether a skin component holds two dark eye candidates in its upper half and a dark mouth candidate in
    its lower half. Candidates are dark holes of the component

    :param numpy.ndarray gray_box: gray levels inside the component bounding box
    :param numpy.ndarray component: boolean mask of the component inside its bounding box
    :param Config or None config: thresholds. Defaults are used when not given
    :return: True if eyes and mouth candidates are found; False otherwise.
    :rtype: bool
    """

    config = config or Config()
    holes = ndimage.binary_fill_holes(component) & ~component
    dark = binarize(gray_box, dark_feature_threshold(gray_box, config)) & holes
    half = gray_box.shape[0] // 2
    min_area = config['detect.min_blob_area']
    eyes = _count_blobs(dark[:half], min_area)
    mouth = _count_blobs(dark[half:], min_area)
    logger.debug('Facial feature candidates: {} eye(s), {} mouth(s)'.format(eyes, mouth))

    return eyes >= 2 and mouth >= 1


def detect_faces(image, config=None):
    """
    Detects faces as 4-connected components of the combined skin mask that pass area, aspect ratio and dark
    facial feature checks

    :param Image image: RGB8 frame
    :param Config or None config: thresholds. Defaults are used when not given
    :return: face boxes sorted by descending skin score
    :rtype: list(FaceBox)
    """

    config = config or Config()
    mask = skin_mask_combined(image, config)
    if not mask.any():
        return list()

    gray = to_gray(image).data
    labels, count = ndimage.label(mask)
    min_area = config['detect.min_area_fraction'] * image.width * image.height

    boxes = list()
    for index, slices in enumerate(ndimage.find_objects(labels), start=1):
        if slices is None:
            continue
        component = labels[slices] == index
        area = int(component.sum())
        if area < min_area:
            continue
        rows, cols = slices
        y, h = rows.start, rows.stop - rows.start
        x, w = cols.start, cols.stop - cols.start
        aspect = h / float(w)
        if not config['detect.aspect_min'] <= aspect <= config['detect.aspect_max']:
            logger.debug('Skin component at ({}, {}) rejected by aspect ratio {:.2f}'.format(x, y, aspect))
            continue
        if not has_facial_features(gray[slices], component, config):
            logger.debug('Skin component at ({}, {}) rejected: no eyes and mouth found'.format(x, y))
            continue
        boxes.append(FaceBox(x, y, w, h, float(mask[slices].mean())))

    boxes.sort(key=lambda box: (-box.score, box.y, box.x))
    logger.debug('Detected {} face(s) out of {} skin component(s)'.format(len(boxes), count))

    return boxes


# =================================================================================================================
# FACE CHIPS
# =================================================================================================================

def normalize_chip(gray, box, size):
    """
    Crops a face box out of a gray image and resizes it to a square face chip

    :param Image gray: Gray8 frame
    :param FaceBox box: face bounding box
    :param int size: chip side
    :return: Gray8 face chip
    :rtype: Image
    """

    gray = to_gray(gray)
    crop = gray.data[box.slices].astype(np.float64)
    resized = transform.resize(crop, (size, size), order=1, mode='edge', preserve_range=True, anti_aliasing=False)

    return Image(np.clip(np.floor(resized + 0.5), 0, 255).astype(np.uint8), GRAY8)


def region_rectangles(height, width):
    """
    Returns the pixel rectangles of each facial region for a chip of the given size

    :param int height: chip height
    :param int width: chip width
    :return: region name to list of (row_start, row_stop, col_start, col_stop) rectangles
    :rtype: OrderedDict
    """

    rectangles = OrderedDict()
    for name, ((row_from, row_to), columns) in REGION_LAYOUT.items():
        row_start, row_stop = height * row_from // 100, height * row_to // 100
        rectangles[name] = [
            (row_start, row_stop, width * col_from // 100, width * col_to // 100) for col_from, col_to in columns]

    return rectangles


def crop_regions(face_chip):
    """
    Crops the six facial regions out of a normalized face chip

    :param Image face_chip: Gray8 face chip of at least 24x24 pixels
    :return: facial region chips
    :rtype: RegionChips
    """

    face_chip = to_gray(face_chip)
    height, width = face_chip.shape
    if height < MIN_CHIP_SIZE or width < MIN_CHIP_SIZE:
        raise ChipSizeError(
            'Face chip must be at least {0}x{0} pixels, got {1}x{2}'.format(MIN_CHIP_SIZE, width, height))

    chips = dict()
    for name, rectangles in region_rectangles(height, width).items():
        parts = [face_chip.data[r0:r1, c0:c1] for r0, r1, c0, c1 in rectangles]
        chip = np.hstack(parts)
        chip.setflags(write=False)
        chips[name] = chip

    return RegionChips(chips)
