#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains synthetic data builders: face frames, training galleries and Action Unit annotated shot corpora
"""

from __future__ import print_function, division, absolute_import

import os
import logging
from collections import OrderedDict

import numpy as np

from facsca import vision, facs_codec, pipeline
from facsca.imageio import Image, GRAY8, RGB8
from facsca.exceptions import GalleryError

logger = logging.getLogger('facsca')

BACKGROUND = (40, 40, 40)
SKIN_TONES = ((220, 160, 130), (200, 140, 110), (235, 180, 150), (210, 150, 120))
FEATURE_COLOR = (0, 0, 0)

CANVAS_SIZE = (160, 120)
FACE_RADII = (20, 26)


def _make_dirs(path):
    if not os.path.isdir(path):
        os.makedirs(path)
    return path


def draw_face(canvas, center, radii=FACE_RADII, skin=SKIN_TONES[0], eye_dx=8, mouth_half=8):
    """
    Draws a skin colored ellipse with two dark eye dots and a dark mouth bar into an RGB canvas

    :param numpy.ndarray canvas: (height, width, 3) uint8 array, modified in place
    :param tuple(int, int) center: (x, y) ellipse center
    :param tuple(int, int) radii: (horizontal, vertical) ellipse radii
    :param tuple(int, int, int) skin: skin color
    :param int eye_dx: horizontal distance of each eye to the center
    :param int mouth_half: half width of the mouth bar
    :return: expected face box with a 0.0 score
    :rtype: vision.FaceBox
    """

    cx, cy = center
    rx, ry = radii
    rows, cols = np.mgrid[0:canvas.shape[0], 0:canvas.shape[1]]
    ellipse = ((cols - cx) / float(rx)) ** 2 + ((rows - cy) / float(ry)) ** 2 <= 1.0
    canvas[ellipse] = skin

    eye_y = cy - ry // 3
    for eye_x in (cx - eye_dx, cx + eye_dx):
        canvas[eye_y - 1:eye_y + 2, eye_x - 1:eye_x + 2] = FEATURE_COLOR
    mouth_y = cy + ry // 2
    canvas[mouth_y:mouth_y + 3, cx - mouth_half:cx + mouth_half + 1] = FEATURE_COLOR

    return vision.FaceBox(cx - rx, cy - ry, 2 * rx + 1, 2 * ry + 1, 0.0)


def synthetic_face_image(centers=None, size=CANVAS_SIZE, **kwargs):
    """
    Returns an RGB frame holding synthetic faces over a dark background

    :param list(tuple(int, int)) or None centers: face centers. Defaults to a single centered face
    :param tuple(int, int) size: (width, height) of the frame
    :return: frame and the expected face boxes
    :rtype: tuple(Image, list(vision.FaceBox))
    """

    width, height = size
    centers = centers or [(width // 2, height // 2)]
    canvas = np.empty((height, width, 3), dtype=np.uint8)
    canvas[...] = BACKGROUND
    boxes = [draw_face(canvas, center, **kwargs) for center in centers]

    return Image(canvas, RGB8), boxes


def identity_frame(identity_index, variant=0):
    """
    Returns the frame of a synthetic identity. Identities differ in skin tone and eye distance, variants of the same
    identity in mouth width

    :param int identity_index: identity number
    :param int variant: sample number of the identity
    :return: RGB frame
    :rtype: Image
    """

    skin = SKIN_TONES[identity_index % len(SKIN_TONES)]
    eye_dx = 7 + 2 * (identity_index // len(SKIN_TONES)) + identity_index % 2
    image, _ = synthetic_face_image(skin=skin, eye_dx=eye_dx, mouth_half=8 - 2 * variant)

    return image


def face_chip_of(image, size=64):
    """
    Returns the normalized chip of the first face detected in a frame

    :param Image image: RGB frame
    :param int size: chip side
    :return: Gray8 face chip or None if no face is detected
    :rtype: Image or None
    """

    boxes = vision.detect_faces(image)
    if not boxes:
        return None

    return vision.normalize_chip(vision.to_gray(image), boxes[0], size)


def au_template_chip(region, code, shape):
    """
    Returns a distinctive deterministic texture standing for an Action Unit of a region

    :param facs_codec.RegionSpec region: facial region
    :param int code: Action Unit code
    :param tuple(int, int) shape: region chip shape
    :return: gray levels
    :rtype: numpy.ndarray
    """

    random_state = np.random.RandomState(1000 * (facs_codec.REGION_NAMES.index(region.name) + 1) + code)

    return random_state.randint(0, 256, size=shape).astype(np.uint8)


def write_gallery(gallery_dir, identities=3, chips_per_identity=2, size=64):
    """
    Writes a training gallery: faces/<identity>/<n>.pgm chips, au/<region>_<au>.pgm and au/<region>_neutral.pgm
    templates and the source frames under frames/<identity>_<n>.ppm. Neutral templates are cropped from the first
    identity

    :param str gallery_dir: output folder
    :param int identities: number of identities
    :param int chips_per_identity: samples per identity
    :param int size: chip side
    :return: identity name to list of frame paths
    :rtype: OrderedDict
    """

    faces_dir = _make_dirs(os.path.join(gallery_dir, pipeline.FACES_FOLDER))
    au_dir = _make_dirs(os.path.join(gallery_dir, pipeline.AU_FOLDER))
    frames_dir = _make_dirs(os.path.join(gallery_dir, 'frames'))

    frames = OrderedDict()
    first_chip = None
    for identity_index in range(identities):
        name = 'person{:02d}'.format(identity_index)
        identity_dir = _make_dirs(os.path.join(faces_dir, name))
        frames[name] = list()
        for variant in range(chips_per_identity):
            frame = identity_frame(identity_index, variant)
            chip = face_chip_of(frame, size)
            if chip is None:
                raise GalleryError('Synthetic face of {} was not detected'.format(name))
            if first_chip is None:
                first_chip = chip
            vision.save_image(chip, os.path.join(identity_dir, '{:02d}.pgm'.format(variant)))
            frame_path = os.path.join(frames_dir, '{}_{:02d}.ppm'.format(name, variant))
            vision.save_image(frame, frame_path)
            frames[name].append(frame_path)

    neutral_regions = vision.crop_regions(first_chip)
    for region in facs_codec.REGIONS:
        shape = neutral_regions[region.name].shape
        vision.save_image(
            Image(neutral_regions[region.name], GRAY8),
            os.path.join(au_dir, '{}_{}.pgm'.format(region.name, pipeline.NEUTRAL_TEMPLATE)))
        for code in region.au_list:
            vision.save_image(
                Image(au_template_chip(region, code, shape), GRAY8),
                os.path.join(au_dir, '{}_{}.pgm'.format(region.name, code)))
    logger.info('Written gallery of {} identities to: {}'.format(identities, gallery_dir))

    return frames


def reachable_expansions(name):
    """
    Returns the expansions of an expression that classify back to it, smallest first

    :param str name: expression name
    :return: list of Action Unit sets
    :rtype: list(frozenset(int))
    """

    expansions = facs_codec.expand_expression(facs_codec.get_expression(name))
    expansions = [aus for aus in expansions if facs_codec.classify_au_set(aus).label == name]

    return sorted(expansions, key=lambda aus: (len(aus), sorted(aus)))


def corpus_labels():
    """
    Returns the expressions an annotated corpus can hold: the ones with at least one expansion classified back
    to them

    :return: expression names in knowledge base order
    :rtype: list(str)
    """

    return [name for name in facs_codec.EXPRESSION_NAMES if reachable_expansions(name)]


def write_placeholder(path):
    """
    Writes the 2x2 gray frame used by Action Unit annotated shots, whose frames are only checked for existence

    :param str path: output file path
    :return: written path
    :rtype: str
    """

    vision.save_image(Image(np.full((2, 2), 128, dtype=np.uint8), GRAY8), path)

    return path


def write_bypass_corpus(out_dir, shots=20, frames_per_shot=10):
    """
    Writes a corpus of Action Unit annotated shots with placeholder frames and its manifest. Shots cycle over the
    corpus labels and frames cycle over the expansions of their shot label

    :param str out_dir: output folder
    :param int shots: number of shots
    :param int frames_per_shot: frames of every shot
    :return: manifest path
    :rtype: str
    """

    labels = corpus_labels()
    entries = list()
    for shot_index in range(shots):
        label = labels[shot_index % len(labels)]
        expansions = reachable_expansions(label)
        shot_id = 'shot{:03d}'.format(shot_index)
        shot_dir = _make_dirs(os.path.join(out_dir, 'frames', shot_id))
        frames = list()
        aus = list()
        for frame_index in range(frames_per_shot):
            frame_path = os.path.join(shot_dir, '{:04d}.pgm'.format(frame_index))
            write_placeholder(frame_path)
            frames.append(os.path.relpath(frame_path, out_dir).replace('\\', '/'))
            aus.append(expansions[frame_index % len(expansions)])
        entries.append(pipeline.ShotEntry(shot_id, tuple(frames), label, tuple(aus)))

    manifest_path = os.path.join(_make_dirs(out_dir), 'manifest.json')
    pipeline.write_manifest(pipeline.ShotManifest(entries), manifest_path)
    logger.info('Written corpus of {} shot(s) to: {}'.format(shots, out_dir))

    return manifest_path

