#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains the expression analysis pipeline: per frame analysis (detection, recognition, Action Unit
extraction, rule pattern and expression), shot aggregation and concurrent manifest ingestion
"""

from __future__ import print_function, division, absolute_import

import os
import io
import glob
import json
import logging
from collections import namedtuple, OrderedDict
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from skimage import transform

from facsca import utils, vision, features, facs_codec
from facsca.config import Config
from facsca.facs_codec import NEUTRAL
from facsca.features import UNKNOWN_IDENTITY
from facsca.exceptions import FacscaError, ManifestError, ModelNotFittedError, GalleryError, ClassCountError

logger = logging.getLogger('facsca')

STATUS_OK = 'ok'
STATUS_FAILED = 'failed'

FACES_FOLDER = 'faces'
AU_FOLDER = 'au'
NEUTRAL_TEMPLATE = 'neutral'

EIGEN_FILE = 'eigen.pife'
TWODPCA_FACE_FILE = 'twodpca_face.pife'
TWODPCA_REGION_FILE = 'twodpca_{}.pife'
FLD_2DPCA_FILE = 'fld_2dpca.pife'
FLD_GABOR_FILE = 'fld_gabor.pife'
FUSED_GALLERY_FILE = 'fused_gallery.pife'
AU_GALLERY_FILE = 'au_gallery.pife'


class FaceResult(namedtuple('FaceResult', ['box', 'identity', 'aus', 'pattern', 'label'])):
    """
    Analysis of a single face. Box and identity are None for Action Units given by annotation
    """

    __slots__ = ()


class FrameAnalysis(object):
    """
    Analysis of a frame: its faces, first face first, and one annotation bit per face
    """

    def __init__(self, frame_index, faces=None, key_chip=None):
        super(FrameAnalysis, self).__init__()

        self.frame_index = int(frame_index)
        self.faces = tuple(faces or ())
        self.key_chip = key_chip

    @property
    def annotation_bits(self):
        if not self.faces:
            return tuple()
        first = self.faces[0].label
        return tuple(1 if face.label == first else 0 for face in self.faces)

    @property
    def label(self):
        return self.faces[0].label if self.faces else NEUTRAL

    @property
    def pattern(self):
        return self.faces[0].pattern if self.faces else facs_codec.synthesize_pattern(())

    def __repr__(self):
        return 'FrameAnalysis(frame={}, labels={})'.format(self.frame_index, [face.label for face in self.faces])


class ShotRecord(namedtuple('ShotRecord', [
        'shot_id', 'frame_range', 'key_face_refs', 'frame_labels', 'frame_patterns', 'shot_expression',
        'or_annotation', 'status', 'error'])):
    """
    Classified and annotated shot
    """

    __slots__ = ()

    @property
    def ok(self):
        return self.status == STATUS_OK

    @property
    def frame_count(self):
        return len(self.frame_labels)

    def key_face_labels(self):
        """
        Returns the labels of the key face frames, in frame order

        :return: list of expression labels
        :rtype: list(str)
        """

        start = self.frame_range[0] if self.frame_range else 0
        return [self.frame_labels[ref - start] for ref in self.key_face_refs]

    def to_dict(self):
        return OrderedDict([
            ('shot_id', self.shot_id),
            ('frame_range', list(self.frame_range)),
            ('key_face_refs', list(self.key_face_refs)),
            ('frame_labels', list(self.frame_labels)),
            ('frame_patterns', list(self.frame_patterns)),
            ('shot_expression', self.shot_expression),
            ('or_annotation', self.or_annotation),
            ('status', self.status),
            ('error', self.error),
        ])

    @classmethod
    def from_dict(cls, data):
        return cls(
            shot_id=data['shot_id'],
            frame_range=tuple(data['frame_range']),
            key_face_refs=tuple(data['key_face_refs']),
            frame_labels=tuple(data['frame_labels']),
            frame_patterns=tuple(data['frame_patterns']),
            shot_expression=data['shot_expression'],
            or_annotation=int(data['or_annotation']),
            status=data['status'],
            error=data.get('error'))

    @classmethod
    def failed(cls, shot_id, frame_count, error):
        return cls(
            shot_id=shot_id, frame_range=(0, max(frame_count - 1, 0)), key_face_refs=(), frame_labels=(),
            frame_patterns=(), shot_expression=None, or_annotation=0, status=STATUS_FAILED, error=error)


def records_to_jsonl(records):
    """
    Serializes shot records as JSON lines with sorted keys

    :param list(ShotRecord) records: records to serialize
    :return: one JSON document per line
    :rtype: str
    """

    return ''.join(json.dumps(record.to_dict(), sort_keys=True) + '\n' for record in records)


# =================================================================================================================
# MANIFEST
# =================================================================================================================

class ShotEntry(namedtuple('ShotEntry', ['shot_id', 'frames', 'label', 'aus'])):
    """
    Manifest entry: ordered frame paths, optional ground truth label and optional per frame Action Units
    """

    __slots__ = ()

    @property
    def bypass(self):
        return self.aus is not None


class ShotManifest(object):
    """
    Ordered list of shots to ingest
    """

    def __init__(self, entries=None, path=None):
        super(ShotManifest, self).__init__()

        self._entries = list(entries or list())
        self._path = path

        seen = set()
        for entry in self._entries:
            if entry.shot_id in seen:
                raise ManifestError('Duplicated shot id "{}"'.format(entry.shot_id))
            seen.add(entry.shot_id)

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    @property
    def path(self):
        return self._path

    @property
    def entries(self):
        return list(self._entries)

    def truth(self):
        """
        Returns the ground truth label of every labelled shot

        :return: shot id to expression label
        :rtype: OrderedDict
        """

        return OrderedDict((entry.shot_id, entry.label) for entry in self._entries if entry.label is not None)

    def to_list(self):
        out = list()
        for entry in self._entries:
            data = OrderedDict([('shot_id', entry.shot_id), ('frames', list(entry.frames))])
            if entry.label is not None:
                data['label'] = entry.label
            if entry.aus is not None:
                data['aus'] = [sorted(aus) for aus in entry.aus]
            out.append(data)
        return out


def _parse_entry(data, position, base_dir):
    if not isinstance(data, dict):
        raise ManifestError('Manifest entry {} is not an object'.format(position))
    shot_id = data.get('shot_id')
    if not isinstance(shot_id, str) or not shot_id:
        raise ManifestError('Manifest entry {} has no valid "shot_id"'.format(position))
    frames = data.get('frames')
    if not isinstance(frames, list) or not all(isinstance(frame, str) for frame in frames):
        raise ManifestError('Shot "{}" must define "frames" as a list of paths'.format(shot_id))
    frames = tuple(utils.resolve_path(base_dir, frame) for frame in frames)

    label = data.get('label')
    if label is not None and label not in facs_codec.EXPRESSION_NAMES:
        raise ManifestError('Shot "{}" has unknown label "{}"'.format(shot_id, label))

    aus = data.get('aus')
    if aus is not None:
        if not isinstance(aus, list) or len(aus) != len(frames):
            raise ManifestError('Shot "{}" must give one Action Unit list per frame'.format(shot_id))
        parsed = list()
        for frame_aus in aus:
            if not isinstance(frame_aus, list):
                raise ManifestError('Shot "{}" has an invalid Action Unit list: {}'.format(shot_id, frame_aus))
            invalid = [au for au in frame_aus if isinstance(au, bool) or not isinstance(au, int)]
            if invalid:
                raise ManifestError('Shot "{}" has non integer Action Units: {}'.format(shot_id, invalid))
            unknown = [au for au in frame_aus if au not in facs_codec.AU_REGION]
            if unknown:
                raise ManifestError('Shot "{}" uses unknown Action Units: {}'.format(shot_id, unknown))
            parsed.append(frozenset(frame_aus))
        aus = tuple(parsed)

    return ShotEntry(shot_id, frames, label, aus)


def parse_manifest(data, base_dir=None, path=None):
    """
    Validates manifest data

    :param list data: decoded manifest JSON
    :param str or None base_dir: directory relative frame paths are resolved from
    :param str or None path: manifest path used in error messages
    :return: shot manifest
    :rtype: ShotManifest
    """

    if not isinstance(data, list):
        raise ManifestError('Manifest must be a list of shots')

    return ShotManifest([_parse_entry(item, position, base_dir) for position, item in enumerate(data)], path=path)


def load_manifest(path):
    """
    Loads a JSON shot manifest. Frame paths are resolved relative to the manifest folder

    :param str path: manifest file path
    :return: shot manifest
    :rtype: ShotManifest
    """

    if not os.path.isfile(path):
        raise ManifestError('Manifest file does not exist: "{}"'.format(path))
    with io.open(path, 'rb') as fh:
        raw = fh.read()
    try:
        data = json.loads(raw.decode('utf-8'))
    except UnicodeDecodeError as exc:
        raise ManifestError('Manifest "{}" is not valid UTF-8'.format(path), offset=exc.start)
    except ValueError as exc:
        raise ManifestError('Manifest "{}" is not valid JSON: {}'.format(path, exc))

    return parse_manifest(data, base_dir=os.path.dirname(os.path.abspath(path)), path=path)


def write_manifest(manifest, path):
    with io.open(path, 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(json.dumps(manifest.to_list(), indent=2, sort_keys=True) + '\n')


# =================================================================================================================
# MODELS
# =================================================================================================================

def _fit_shape(data, shape):
    data = np.asarray(data, dtype=np.float64)
    if data.shape == tuple(shape):
        return data
    logger.debug('Resizing chip from {} to {}'.format(data.shape, shape))
    return transform.resize(data, shape, order=1, mode='edge', preserve_range=True, anti_aliasing=False)


def _face_chip(image, size):
    gray = vision.to_gray(image)
    if gray.shape == (size, size):
        return gray
    return vision.normalize_chip(gray, vision.FaceBox(0, 0, gray.width, gray.height, 1.0), size)


def _can_fit_fld(identities):
    counts = OrderedDict()
    for identity in identities:
        counts[identity] = counts.get(identity, 0) + 1
    return len(counts) >= 2 and all(count >= 2 for count in counts.values())


class ModelSet(object):
    """
    Fitted models used by frame analysis: face space, optional fused recognizer, per region 2DPCA models and the
    Action Unit template gallery
    """

    def __init__(self, eigen, region_models, au_gallery, recognizer=None, config=None):
        super(ModelSet, self).__init__()

        self.eigen = eigen
        self.region_models = OrderedDict(region_models)
        self.au_gallery = au_gallery
        self.recognizer = recognizer
        self.config = config or Config()

    @property
    def chip_size(self):
        return self.eigen.shape[0]

    @property
    def tau(self):
        return self.config['eigen.tau_factor'] * self.eigen.phi

    def recognize(self, chip):
        """
        Recognizes the identity of a face chip with the fused recognizer, or in face space when there is none

        :param Image or numpy.ndarray chip: gray face chip
        :return: recognition result
        :rtype: features.Recognition
        """

        if self.recognizer is not None:
            return self.recognizer.recognize(chip)

        return features.recognize(self.eigen, chip)

    def region_features(self, region_name, chip):
        return features.features_2dpca(self.region_models[region_name], chip).ravel()

    @classmethod
    @utils.timestamp
    def train(cls, gallery_dir, config=None):
        """
        Trains every model from a gallery folder holding faces/<identity>/*.pgm face chips and
        au/<region>_<au>.pgm, au/<region>_neutral.pgm region templates

        :param str gallery_dir: gallery folder
        :param Config or None config: model parameters
        :return: fitted models
        :rtype: ModelSet
        """

        config = config or Config()
        size = config['chip.size']
        faces_dir = os.path.join(gallery_dir, FACES_FOLDER)
        if not os.path.isdir(faces_dir):
            raise GalleryError('Gallery has no "{}" folder: {}'.format(FACES_FOLDER, gallery_dir))

        chips = list()
        identities = list()
        for identity in sorted(os.listdir(faces_dir)):
            identity_dir = os.path.join(faces_dir, identity)
            if not os.path.isdir(identity_dir):
                continue
            for chip_path in sorted(glob.glob(os.path.join(identity_dir, '*.pgm'))):
                chips.append(_face_chip(vision.load_image(chip_path), size))
                identities.append(identity)
        logger.info('Loaded {} face chips of {} identities'.format(len(chips), len(set(identities))))

        eigen = features.fit_eigenmodel(
            chips, config['eigen.components'], identities=identities, phi=config['eigen.phi'],
            phi_factor=config['eigen.phi_factor'])

        recognizer = None
        if config['recognition.features'] == 'fused':
            if _can_fit_fld(identities):
                try:
                    recognizer = features.fit_fused_recognizer(
                        chips, identities, config['twodpca.components'], features.GaborBank.from_config(config),
                        reg=config['fld.lambda'], phi=config['eigen.phi'], phi_factor=config['eigen.phi_factor'])
                except ClassCountError as exc:
                    logger.warning('Fused recognition not available: {}. Using eigenfaces'.format(exc))
            else:
                logger.warning(
                    'Fused recognition needs at least 2 identities with 2 chips each. Using eigenfaces')

        region_models, au_gallery = cls._train_regions(gallery_dir, chips, config)

        return cls(eigen, region_models, au_gallery, recognizer=recognizer, config=config)

    @staticmethod
    def _train_regions(gallery_dir, chips, config):
        au_dir = os.path.join(gallery_dir, AU_FOLDER)
        if not os.path.isdir(au_dir):
            raise GalleryError('Gallery has no "{}" folder: {}'.format(AU_FOLDER, gallery_dir))

        face_regions = [vision.crop_regions(chip) for chip in chips]
        region_models = OrderedDict()
        template_chips = OrderedDict()
        for region in facs_codec.REGIONS:
            shape = face_regions[0][region.name].shape
            templates = OrderedDict()
            for code in tuple(region.au_list) + (NEUTRAL,):
                file_code = NEUTRAL_TEMPLATE if code == NEUTRAL else str(code)
                template_path = os.path.join(au_dir, '{}_{}.pgm'.format(region.name, file_code))
                if not os.path.isfile(template_path):
                    raise GalleryError('Missing Action Unit template: {}'.format(template_path))
                template = vision.to_gray(vision.load_image(template_path)).data
                templates[(region.name, code)] = _fit_shape(template, shape)

            training = [regions[region.name] for regions in face_regions] + list(templates.values())
            region_models[region.name] = features.fit_2dpca(training, config['twodpca.components'])
            template_chips.update(templates)

        return region_models, features.build_au_gallery(template_chips, region_models)

    def save(self, models_dir):
        """
        Writes every model into the given folder

        :param str models_dir: output folder. Created if it does not exist
        """

        if not os.path.isdir(models_dir):
            os.makedirs(models_dir)
        self.eigen.save(os.path.join(models_dir, EIGEN_FILE))
        for region_name, model in self.region_models.items():
            model.save(os.path.join(models_dir, TWODPCA_REGION_FILE.format(region_name)))
        self.au_gallery.save(os.path.join(models_dir, AU_GALLERY_FILE))
        if self.recognizer is not None:
            self.recognizer.twodpca.save(os.path.join(models_dir, TWODPCA_FACE_FILE))
            self.recognizer.fld_2dpca.save(os.path.join(models_dir, FLD_2DPCA_FILE))
            self.recognizer.fld_gabor.save(os.path.join(models_dir, FLD_GABOR_FILE))
            self.recognizer.save(os.path.join(models_dir, FUSED_GALLERY_FILE))
        logger.info('Models saved to: {}'.format(models_dir))

    @classmethod
    def load(cls, models_dir, config=None):
        """
        Loads models written by save

        :param str models_dir: models folder
        :param Config or None config: runtime parameters
        :return: fitted models
        :rtype: ModelSet
        """

        eigen_path = os.path.join(models_dir, EIGEN_FILE)
        if not os.path.isfile(eigen_path):
            raise ModelNotFittedError('No trained models found in: "{}"'.format(models_dir))

        eigen = features.EigenModel.load(eigen_path)
        region_models = OrderedDict(
            (name, features.TwoDPcaModel.load(os.path.join(models_dir, TWODPCA_REGION_FILE.format(name))))
            for name in facs_codec.REGION_NAMES)
        au_gallery = features.AuTemplateGallery.load(os.path.join(models_dir, AU_GALLERY_FILE))

        recognizer = None
        fused_path = os.path.join(models_dir, FUSED_GALLERY_FILE)
        if os.path.isfile(fused_path):
            recognizer = features.FusedRecognizer.load(
                fused_path,
                features.TwoDPcaModel.load(os.path.join(models_dir, TWODPCA_FACE_FILE)),
                features.FldModel.load(os.path.join(models_dir, FLD_2DPCA_FILE)),
                features.FldModel.load(os.path.join(models_dir, FLD_GABOR_FILE)))

        return cls(eigen, region_models, au_gallery, recognizer=recognizer, config=config)


# =================================================================================================================
# ANALYSIS
# =================================================================================================================

def _classified_face(aus, box=None, identity=None):
    classification = facs_codec.classify_au_set(aus)
    return FaceResult(box, identity, frozenset(aus), classification.pattern, classification.label)


def analyze_frame(image, models=None, gallery=None, frame_index=0, aus=None):
    """
    Analyzes the faces of a frame

    Every detected face is recognized; faces of unknown identities are ignored. Known faces are split into facial
    regions, each region is matched against the Action Unit templates and the resulting Action Unit set is encoded
    and classified. When Action Units are given the vision stages are skipped and the frame holds a single face.

    :param Image or None image: RGB8 frame. Not used when Action Units are given
    :param ModelSet or None models: fitted models
    :param features.AuTemplateGallery or None gallery: templates. Defaults to the templates of the models
    :param int frame_index: index of the frame inside its shot
    :param iterable(int) or None aus: annotated Action Units of the frame
    :return: frame analysis
    :rtype: FrameAnalysis
    """

    if aus is not None:
        return FrameAnalysis(frame_index, [_classified_face(aus)])

    if models is None:
        raise ModelNotFittedError('Frame analysis needs trained models')
    gallery = gallery or models.au_gallery

    gray = vision.to_gray(image)
    faces = list()
    key_chip = None
    for box in vision.detect_faces(image, models.config):
        chip = vision.normalize_chip(gray, box, models.chip_size)
        logger.debug('Face at ({}, {}) is {:.3f} away from face space'.format(
            box.x, box.y, features.face_space_distance(models.eigen, chip)))
        recognition = models.recognize(chip)
        if recognition.identity == UNKNOWN_IDENTITY:
            logger.debug('Face at ({}, {}) does not belong to the gallery (distance {:.3f}). Ignored'.format(
                box.x, box.y, recognition.distance))
            continue

        regions = vision.crop_regions(chip)
        found = set()
        for region in facs_codec.REGIONS:
            code = features.match_au(region, models.region_features(region.name, regions[region.name]), gallery)
            if code != NEUTRAL:
                found.add(code)
        if key_chip is None:
            key_chip = chip
        faces.append(_classified_face(found, box=box, identity=recognition.identity))

    return FrameAnalysis(frame_index, faces, key_chip=key_chip)


def aggregate_shot(analyses, shot_id=None, key_face_refs=None):
    """
    Concludes the shot expression as the majority of the frame labels and its annotation as the OR of every
    frame annotation bit

    :param list(FrameAnalysis) analyses: frame analyses in frame order
    :param str or None shot_id: shot identifier
    :param list(int) or None key_face_refs: key face frame indices. Defaults to every frame
    :return: shot record
    :rtype: ShotRecord
    """

    if not analyses:
        raise ValueError('Cannot aggregate a shot without frames')

    labels = [analysis.label for analysis in analyses]
    counts = OrderedDict()
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    # Equal counts keep the label that occurs first
    shot_expression = max(counts, key=lambda label: (counts[label], -labels.index(label)))

    or_annotation = int(any(bit for analysis in analyses for bit in analysis.annotation_bits))
    if key_face_refs is None:
        key_face_refs = [analysis.frame_index for analysis in analyses]

    return ShotRecord(
        shot_id=shot_id,
        frame_range=(analyses[0].frame_index, analyses[-1].frame_index),
        key_face_refs=tuple(key_face_refs),
        frame_labels=tuple(labels),
        frame_patterns=tuple(facs_codec.render_pattern(analysis.pattern) for analysis in analyses),
        shot_expression=shot_expression,
        or_annotation=or_annotation,
        status=STATUS_OK,
        error=None)


# =================================================================================================================
# INGESTION
# =================================================================================================================

class ShotWorker(object):
    """
    Analyzes every frame of a single shot
    """

    def __init__(self, entry, models=None, gallery=None):
        super(ShotWorker, self).__init__()

        self._entry = entry
        self._models = models
        self._gallery = gallery

    def run(self):
        entry = self._entry
        try:
            record = self._analyze()
        except (FacscaError, EnvironmentError) as exc:
            logger.error('Shot "{}" failed: {}'.format(entry.shot_id, exc))
            return ShotRecord.failed(entry.shot_id, len(entry.frames), str(exc))

        logger.debug('Shot "{}" classified as {}'.format(entry.shot_id, record.shot_expression))
        return record

    def _analyze(self):
        entry = self._entry
        if not entry.frames:
            raise ManifestError('Shot "{}" has no frames'.format(entry.shot_id))

        analyses = list()
        for frame_index, frame_path in enumerate(entry.frames):
            if not os.path.isfile(frame_path):
                raise ManifestError('Frame file does not exist: "{}"'.format(frame_path))
            if entry.bypass:
                analyses.append(analyze_frame(None, frame_index=frame_index, aus=entry.aus[frame_index]))
            else:
                image = vision.load_image(frame_path)
                analyses.append(analyze_frame(image, self._models, self._gallery, frame_index=frame_index))

        key_face_refs = None
        if not entry.bypass:
            candidates = [analysis for analysis in analyses if analysis.key_chip is not None]
            keys = features.extract_key_faces(
                [analysis.key_chip for analysis in candidates], self._models.eigen, tau=self._models.tau)
            key_face_refs = [candidates[index].frame_index for index in keys]

        return aggregate_shot(analyses, shot_id=entry.shot_id, key_face_refs=key_face_refs)


class ShotWorkerPool(object):
    """
    Runs shot workers concurrently and returns their records in submission order
    """

    def __init__(self, max_thread_count=1):
        super(ShotWorkerPool, self).__init__()

        self._max_thread_count = max(1, int(max_thread_count))

    def start(self, workers):
        workers = list(workers)
        if not workers:
            return list()
        if self._max_thread_count == 1 or len(workers) == 1:
            return [worker.run() for worker in workers]

        with ThreadPoolExecutor(max_workers=self._max_thread_count) as executor:
            futures = [executor.submit(worker.run) for worker in workers]
            return [future.result() for future in futures]


@utils.timestamp
def ingest(manifest, models=None, gallery=None, workers=None):
    """
    Classifies every shot of a manifest. A failing shot is recorded as failed without affecting the others

    :param ShotManifest manifest: shots to ingest
    :param ModelSet or None models: fitted models. Only needed by shots without Action Unit annotations
    :param features.AuTemplateGallery or None gallery: templates. Defaults to the templates of the models
    :param int or None workers: number of shots analyzed concurrently. Defaults to pipeline.workers
    :return: one record per shot, in manifest order
    :rtype: list(ShotRecord)
    """

    entries = list(manifest)
    if any(not entry.bypass for entry in entries) and models is None:
        raise ModelNotFittedError('Manifest has shots without Action Unit annotations but no models were given')
    if workers is None:
        workers = models.config['pipeline.workers'] if models is not None else Config()['pipeline.workers']

    pool = ShotWorkerPool(max_thread_count=workers)
    records = pool.start([ShotWorker(entry, models=models, gallery=gallery) for entry in entries])
    failed = sum(1 for record in records if not record.ok)
    logger.info('Ingested {} shot(s), {} failed'.format(len(records), failed))

    return records
