#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains the linear feature models: eigenfaces, 2DPCA, Gabor filter bank and Fisher linear
discriminant fusion, plus Action Unit template matching per facial region
"""

from __future__ import print_function, division, absolute_import

import logging
from collections import namedtuple, OrderedDict

import numpy as np
import scipy.linalg
from scipy import signal
from scipy.spatial.distance import pdist

from facsca import modelio
from facsca.imageio import Image
from facsca.facs_codec import NEUTRAL
from facsca.exceptions import (
    DimensionMismatchError, ModelNotFittedError, ClassCountError, ChipSizeError, GalleryError)

logger = logging.getLogger('facsca')

UNKNOWN_IDENTITY = 'Unknown'

DEFAULT_PHI_FACTOR = 0.8
DEFAULT_TAU_FACTOR = 0.5

# Relative eigenvalue below which a component is considered null
EIGEN_TOLERANCE = 1e-10

Recognition = namedtuple('Recognition', ['identity', 'distance', 'index'])


def as_matrix(chip):
    """
    Returns a chip as a 2D float64 array

    :param Image or numpy.ndarray chip: gray chip
    :return: gray levels
    :rtype: numpy.ndarray
    """

    data = chip.data if isinstance(chip, Image) else chip
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DimensionMismatchError('Expected a 2D gray chip, got shape {}'.format(data.shape))

    return data


def _stack_chips(chips):
    matrices = [as_matrix(chip) for chip in chips]
    shape = matrices[0].shape
    for index, matrix in enumerate(matrices):
        if matrix.shape != shape:
            raise DimensionMismatchError(
                'Chip {} has shape {} but the first chip has shape {}'.format(index, matrix.shape, shape))

    return np.stack(matrices)


def fix_signs(vectors):
    """
    Flips each row so that its largest magnitude component is positive

    :param numpy.ndarray vectors: one vector per row
    :return: sign normalized copy
    :rtype: numpy.ndarray
    """

    vectors = np.array(vectors, dtype=np.float64)
    for row in vectors:
        if row.size and row[np.argmax(np.abs(row))] < 0:
            row *= -1.0

    return vectors


def _descending_eigh(matrix, other=None):
    if other is None:
        values, vectors = scipy.linalg.eigh(matrix)
    else:
        values, vectors = scipy.linalg.eigh(matrix, other)
    order = np.argsort(values, kind='stable')[::-1]

    return values[order], vectors[:, order]


def auto_threshold(vectors, factor=DEFAULT_PHI_FACTOR):
    """
    Returns factor times the median pairwise Euclidean distance between the given vectors

    :param numpy.ndarray vectors: one vector per row
    :param float factor: multiplier
    :return: threshold. 0.0 when fewer than two vectors are given
    :rtype: float
    """

    vectors = np.asarray(vectors, dtype=np.float64)
    if len(vectors) < 2:
        return 0.0

    return float(factor * np.median(pdist(vectors)))


def _nearest(vectors, query):
    distances = np.linalg.norm(np.asarray(vectors) - query, axis=1)
    index = int(np.argmin(distances))

    return index, float(distances[index])


# =================================================================================================================
# EIGENFACES
# =================================================================================================================

class EigenModel(object):
    """
    Eigenfaces face space with the gallery projections of the known identities
    """

    KIND = 'eigen'

    def __init__(self, mean_face, eigenfaces, eigenvalues, gallery_weights, identities, phi, shape):
        super(EigenModel, self).__init__()

        self.mean_face = np.asarray(mean_face, dtype=np.float64)
        self.eigenfaces = np.asarray(eigenfaces, dtype=np.float64)
        self.eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
        self.gallery_weights = np.asarray(gallery_weights, dtype=np.float64)
        self.identities = list(identities)
        self.phi = float(phi)
        self.shape = tuple(int(v) for v in shape)

    @property
    def components(self):
        return self.eigenfaces.shape[0]

    def save(self, path):
        modelio.write_container(
            path, self.KIND,
            OrderedDict([
                ('mean_face', self.mean_face), ('eigenfaces', self.eigenfaces), ('eigenvalues', self.eigenvalues),
                ('gallery_weights', self.gallery_weights)]),
            meta={'identities': self.identities, 'phi': self.phi, 'shape': list(self.shape)})

    @classmethod
    def load(cls, path):
        _, matrices, meta = modelio.read_container(path, expected_kind=cls.KIND)
        return cls(
            matrices['mean_face'], matrices['eigenfaces'], matrices['eigenvalues'], matrices['gallery_weights'],
            meta['identities'], meta['phi'], meta['shape'])


def fit_eigenmodel(training_faces, components, identities=None, phi=None, phi_factor=DEFAULT_PHI_FACTOR):
    """
    Computes the eigenfaces of a training set, keeping the M eigenfaces with the highest eigenvalues

    When there are fewer images than pixels the eigenvectors are obtained from the small N x N Gram matrix.
    Components with null eigenvalue are completed with an orthonormal basis of the remaining space.

    :param list(Image or numpy.ndarray) training_faces: gray chips of identical dimensions
    :param int components: number M of eigenfaces. Clamped to the number of images
    :param list(str) or None identities: identity of each training face. Defaults to the face index
    :param float or None phi: recognition threshold. Derived from the gallery when not given
    :param float phi_factor: auto threshold factor applied to the median pairwise gallery distance
    :return: fitted model
    :rtype: EigenModel
    """

    if len(training_faces) < 2:
        raise GalleryError('At least 2 training faces are needed, got {}'.format(len(training_faces)))
    stack = _stack_chips(training_faces)
    count, shape = stack.shape[0], stack.shape[1:]
    data = stack.reshape(count, -1)
    pixels = data.shape[1]

    components = int(components)
    if components < 1:
        raise ValueError('At least one eigenface must be kept, got {}'.format(components))
    if components > count:
        logger.warning('Requested {} eigenfaces but only {} training faces given. Using {}'.format(
            components, count, count))
        components = count

    mean_face = data.mean(axis=0)
    centered = data - mean_face

    basis = list()
    eigenvalues = list()
    if count < pixels:
        values, vectors = _descending_eigh(centered.dot(centered.T) / count)
        tolerance = EIGEN_TOLERANCE * max(values[0], 0.0)
        for index in range(components):
            if values[index] <= tolerance or values[index] <= 0.0:
                break
            face = centered.T.dot(vectors[:, index])
            basis.append(face / np.linalg.norm(face))
            eigenvalues.append(float(values[index]))
    else:
        values, vectors = _descending_eigh(centered.T.dot(centered) / count)
        for index in range(components):
            basis.append(vectors[:, index])
            eigenvalues.append(float(max(values[index], 0.0)))

    missing = components - len(basis)
    if missing:
        complement = scipy.linalg.null_space(np.array(basis)) if basis else np.eye(pixels)
        for index in range(missing):
            basis.append(complement[:, index])
            eigenvalues.append(0.0)

    eigenfaces = fix_signs(np.array(basis))
    gallery_weights = centered.dot(eigenfaces.T)
    if identities is None:
        identities = [str(index) for index in range(count)]
    if len(identities) != count:
        raise GalleryError('Got {} identities for {} training faces'.format(len(identities), count))
    if phi is None:
        phi = auto_threshold(gallery_weights, phi_factor)
    logger.info('Eigen model fitted: {} faces, {} eigenfaces, phi={:.4f}'.format(count, components, phi))

    return EigenModel(mean_face, eigenfaces, eigenvalues, gallery_weights, identities, phi, shape)


def _check_probe(model, probe):
    probe = as_matrix(probe)
    if probe.shape != model.shape:
        raise DimensionMismatchError(
            'Probe shape {} does not match the model shape {}'.format(probe.shape, model.shape))

    return probe.ravel()


def project(model, probe):
    """
    Projects a chip onto the face space

    :param EigenModel model: fitted model
    :param Image or numpy.ndarray probe: gray chip with the training dimensions
    :return: weights, one per eigenface
    :rtype: numpy.ndarray
    """

    return (_check_probe(model, probe) - model.mean_face).dot(model.eigenfaces.T)


def reconstruct(model, weights):
    return model.mean_face + np.asarray(weights).dot(model.eigenfaces)


def face_space_distance(model, probe):
    """
    Returns the distance between a chip and its reconstruction from the face space

    :param EigenModel model: fitted model
    :param Image or numpy.ndarray probe: gray chip with the training dimensions
    :return: reconstruction distance, small for faces
    :rtype: float
    """

    vector = _check_probe(model, probe)

    return float(np.linalg.norm(vector - reconstruct(model, project(model, probe))))


def recognize(model, probe):
    """
    Recognizes the identity of a chip: nearest gallery projection, accepted when closer than phi

    :param EigenModel model: fitted model
    :param Image or numpy.ndarray probe: gray chip with the training dimensions
    :return: identity (Unknown when the minimum distance is not below phi), minimum distance and gallery index
    :rtype: Recognition
    """

    index, distance = _nearest(model.gallery_weights, project(model, probe))
    if distance < model.phi:
        return Recognition(model.identities[index], distance, index)

    return Recognition(UNKNOWN_IDENTITY, distance, index)


def extract_key_faces(faces, model, tau=None):
    """
    Selects key faces: the first face, then every face whose face space distance to all the key faces selected so
    far exceeds tau

    :param list(Image or numpy.ndarray) faces: ordered face chips
    :param EigenModel model: fitted model
    :param float or None tau: novelty threshold. Defaults to half the recognition threshold
    :return: indices of the key faces, in input order
    :rtype: list(int)
    """

    if not faces:
        return list()
    if tau is None:
        tau = DEFAULT_TAU_FACTOR * model.phi

    keys = [0]
    key_weights = [project(model, faces[0])]
    for index in range(1, len(faces)):
        weights = project(model, faces[index])
        if all(np.linalg.norm(weights - key) > tau for key in key_weights):
            keys.append(index)
            key_weights.append(weights)

    return keys


# =================================================================================================================
# 2DPCA
# =================================================================================================================

class TwoDPcaModel(object):
    """
    2DPCA model: projection axes are the top eigenvectors of the image covariance matrix
    """

    KIND = 'twodpca'

    def __init__(self, mean_image, axes, eigenvalues, covariance):
        super(TwoDPcaModel, self).__init__()

        self.mean_image = np.asarray(mean_image, dtype=np.float64)
        self.axes = np.asarray(axes, dtype=np.float64)
        self.eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
        self.covariance = np.asarray(covariance, dtype=np.float64)

    @property
    def d(self):
        return self.axes.shape[1]

    @property
    def shape(self):
        return self.mean_image.shape

    def save(self, path):
        modelio.write_container(path, self.KIND, OrderedDict([
            ('mean_image', self.mean_image), ('axes', self.axes), ('eigenvalues', self.eigenvalues),
            ('covariance', self.covariance)]))

    @classmethod
    def load(cls, path):
        _, matrices, _ = modelio.read_container(path, expected_kind=cls.KIND)
        return cls(matrices['mean_image'], matrices['axes'], matrices['eigenvalues'], matrices['covariance'])


def image_covariance(chips):
    """
    Returns the 2DPCA image covariance G = 1/N sum (A_i - mean)^T (A_i - mean)

    :param list(Image or numpy.ndarray) chips: gray chips of identical dimensions
    :return: mean image and covariance matrix (columns x columns)
    :rtype: tuple(numpy.ndarray, numpy.ndarray)
    """

    stack = _stack_chips(chips)
    mean_image = stack.mean(axis=0)
    centered = stack - mean_image
    covariance = np.einsum('nij,nik->jk', centered, centered) / stack.shape[0]

    return mean_image, 0.5 * (covariance + covariance.T)


def fit_2dpca(chips, d):
    """
    Fits a 2DPCA model

    :param list(Image or numpy.ndarray) chips: gray chips of identical dimensions
    :param int d: number of projection axes. Clamped to the number of chip columns
    :return: fitted model
    :rtype: TwoDPcaModel
    """

    if not chips:
        raise GalleryError('No chips given to fit 2DPCA')
    mean_image, covariance = image_covariance(chips)
    columns = covariance.shape[0]
    d = int(d)
    if d < 1:
        raise ValueError('2DPCA needs at least one axis, got {}'.format(d))
    if d > columns:
        logger.warning('Requested {} 2DPCA axes but chips only have {} columns. Using {}'.format(d, columns, columns))
        d = columns

    values, vectors = _descending_eigh(covariance)
    axes = fix_signs(vectors[:, :d].T).T

    return TwoDPcaModel(mean_image, axes, values[:d], covariance)


def features_2dpca(model, chip):
    """
    Returns the 2DPCA feature matrix (A - mean) . axes of a chip

    :param TwoDPcaModel model: fitted model
    :param Image or numpy.ndarray chip: gray chip with the training dimensions
    :return: feature matrix (rows x d)
    :rtype: numpy.ndarray
    """

    if model is None:
        raise ModelNotFittedError('2DPCA model is not fitted')
    chip = as_matrix(chip)
    if chip.shape != model.shape:
        raise DimensionMismatchError('Chip shape {} does not match 2DPCA shape {}'.format(chip.shape, model.shape))

    return (chip - model.mean_image).dot(model.axes)


# =================================================================================================================
# GABOR
# =================================================================================================================

class GaborBank(object):
    """
    Complex Gabor filters at several scales and orientations. Real parts are DC free
    """

    def __init__(self, scales=5, orientations=8, kernel_size=21, min_wavelength=4.0, aspect=0.5):
        super(GaborBank, self).__init__()

        self.scales = int(scales)
        self.orientations = int(orientations)
        self.kernel_size = int(kernel_size)
        self.min_wavelength = float(min_wavelength)
        self.aspect = float(aspect)

        self.wavelengths = [self.min_wavelength * np.sqrt(2.0) ** scale for scale in range(self.scales)]
        self.thetas = [np.pi * orientation / self.orientations for orientation in range(self.orientations)]
        self.kernels = [
            gabor_kernel(wavelength, theta, self.kernel_size, self.aspect)
            for wavelength in self.wavelengths for theta in self.thetas]

    @classmethod
    def from_config(cls, config):
        return cls(
            scales=config['gabor.scales'], orientations=config['gabor.orientations'],
            kernel_size=config['gabor.kernel_size'], min_wavelength=config['gabor.min_wavelength'])

    @property
    def feature_length(self):
        return 2 * len(self.kernels)

    def params(self):
        return {
            'scales': self.scales, 'orientations': self.orientations, 'kernel_size': self.kernel_size,
            'min_wavelength': self.min_wavelength, 'aspect': self.aspect}

    def filter_index(self, scale, orientation):
        return scale * self.orientations + orientation


def gabor_kernel(wavelength, theta, size, aspect=0.5):
    """
    Returns a complex Gabor kernel with a DC compensated real part

    :param float wavelength: carrier wavelength in pixels
    :param float theta: carrier orientation in radians
    :param int size: kernel side
    :param float aspect: spatial aspect ratio of the Gaussian envelope
    :return: complex kernel (size x size)
    :rtype: numpy.ndarray
    """

    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    y, x = np.meshgrid(coords, coords, indexing='ij')
    x_theta = x * np.cos(theta) + y * np.sin(theta)
    y_theta = -x * np.sin(theta) + y * np.cos(theta)
    sigma = 0.56 * wavelength

    envelope = np.exp(-(x_theta ** 2 + (aspect * y_theta) ** 2) / (2.0 * sigma ** 2))
    phase = 2.0 * np.pi * x_theta / wavelength
    dc = np.sum(envelope * np.cos(phase)) / np.sum(envelope)
    real = envelope * (np.cos(phase) - dc)
    imag = envelope * np.sin(phase)
    imag -= imag.mean()

    return (real + 1j * imag) / np.sum(envelope)


def gabor_features(bank, chip):
    """
    Returns mean and standard deviation of the response magnitude of every filter of the bank

    The chip is mean centered and zero padded before filtering.

    :param GaborBank bank: filter bank
    :param Image or numpy.ndarray chip: gray chip at least as large as the kernels
    :return: feature vector of length 2 * scales * orientations
    :rtype: numpy.ndarray
    """

    chip = as_matrix(chip)
    if chip.shape[0] < bank.kernel_size or chip.shape[1] < bank.kernel_size:
        raise ChipSizeError('Chip {}x{} is smaller than the {}x{} Gabor kernels'.format(
            chip.shape[1], chip.shape[0], bank.kernel_size, bank.kernel_size))

    centered = chip - chip.mean()
    features = list()
    for kernel in bank.kernels:
        magnitude = np.abs(signal.fftconvolve(centered, kernel, mode='same'))
        features.extend([magnitude.mean(), magnitude.std()])

    return np.array(features)


# =================================================================================================================
# FISHER LINEAR DISCRIMINANT
# =================================================================================================================

class FldModel(object):
    """
    Fisher linear discriminant: axes maximizing between-class over within-class scatter
    """

    KIND = 'fld'

    def __init__(self, mean, class_means, classes, within_scatter, between_scatter, axes, ratios):
        super(FldModel, self).__init__()

        self.mean = np.asarray(mean, dtype=np.float64)
        self.class_means = np.asarray(class_means, dtype=np.float64)
        self.classes = list(classes)
        self.within_scatter = np.asarray(within_scatter, dtype=np.float64)
        self.between_scatter = np.asarray(between_scatter, dtype=np.float64)
        self.axes = np.asarray(axes, dtype=np.float64)
        self.ratios = np.asarray(ratios, dtype=np.float64)

    @property
    def dimensions(self):
        return self.axes.shape[1]

    def save(self, path):
        modelio.write_container(path, self.KIND, OrderedDict([
            ('mean', self.mean), ('class_means', self.class_means), ('within_scatter', self.within_scatter),
            ('between_scatter', self.between_scatter), ('axes', self.axes), ('ratios', self.ratios)]),
            meta={'classes': self.classes})

    @classmethod
    def load(cls, path):
        _, matrices, meta = modelio.read_container(path, expected_kind=cls.KIND)
        return cls(
            matrices['mean'], matrices['class_means'], meta['classes'], matrices['within_scatter'],
            matrices['between_scatter'], matrices['axes'], matrices['ratios'])


def _as_samples(features):
    samples = np.asarray(features, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples.reshape(-1, 1)

    return samples


def scatter_matrices(features, labels):
    """
    Returns within-class and between-class scatter matrices

    :param numpy.ndarray features: one sample per row
    :param list labels: class of each sample
    :return: global mean, ordered classes, class means, within scatter and between scatter
    :rtype: tuple
    """

    samples = _as_samples(features)
    labels = list(labels)
    if len(labels) != len(samples):
        raise DimensionMismatchError('Got {} labels for {} samples'.format(len(labels), len(samples)))

    classes = sorted(set(labels), key=str)
    mean = samples.mean(axis=0)
    dims = samples.shape[1]
    within = np.zeros((dims, dims))
    between = np.zeros((dims, dims))
    class_means = list()
    label_array = np.array([str(label) for label in labels])
    for cls in classes:
        members = samples[label_array == str(cls)]
        class_mean = members.mean(axis=0)
        class_means.append(class_mean)
        centered = members - class_mean
        within += centered.T.dot(centered)
        diff = (class_mean - mean).reshape(-1, 1)
        between += len(members) * diff.dot(diff.T)

    return mean, classes, np.array(class_means), within, between


def fit_fld(features, labels, reg=1e-6):
    """
    Fits a Fisher linear discriminant solving the generalized eigenproblem Sb w = l (Sw + reg I) w

    :param numpy.ndarray features: one sample per row
    :param list labels: class of each sample. At least 2 classes with 2 samples each
    :param float reg: ridge added to the within-class scatter
    :return: fitted model with at most classes - 1 unit length axes, by descending Fisher ratio
    :rtype: FldModel
    """

    labels = list(labels)
    classes = sorted(set(labels), key=str)
    if len(classes) < 2:
        raise ClassCountError('Fisher discriminant needs at least 2 classes, got {}'.format(len(classes)))
    for cls in classes:
        count = labels.count(cls)
        if count < 2:
            raise ClassCountError('Class "{}" has {} sample(s); at least 2 are needed'.format(cls, count))

    mean, classes, class_means, within, between = scatter_matrices(features, labels)
    dims = within.shape[0]
    try:
        values, vectors = _descending_eigh(between, within + reg * np.eye(dims))
    except np.linalg.LinAlgError:
        # Rounding made the regularized within-class scatter indefinite
        scaled = reg * max(1.0, np.trace(within) / dims)
        logger.warning('Within-class scatter is ill conditioned. Using ridge {:.3g} instead of {:.3g}'.format(
            scaled, reg))
        values, vectors = _descending_eigh(between, within + scaled * np.eye(dims))
    count = min(len(classes) - 1, dims)
    axes = vectors[:, :count]
    axes = axes / np.linalg.norm(axes, axis=0)
    axes = fix_signs(axes.T).T

    return FldModel(mean, class_means, classes, within, between, axes, values[:count])


def project_fld(model, vector):
    """
    Projects centered features onto the discriminant axes

    :param FldModel model: fitted model
    :param numpy.ndarray vector: feature vector, or one vector per row
    :return: projection
    :rtype: numpy.ndarray
    """

    if model is None:
        raise ModelNotFittedError('Fisher discriminant model is not fitted')
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape[-1] != model.mean.shape[0]:
        raise DimensionMismatchError(
            'Feature length {} does not match discriminant length {}'.format(vector.shape[-1], model.mean.shape[0]))

    return (vector - model.mean).dot(model.axes)


def fisher_ratio(features, labels, direction):
    """
    Returns the Fisher ratio w^T Sb w / w^T Sw w of a projection direction

    :param numpy.ndarray features: one sample per row
    :param list labels: class of each sample
    :param numpy.ndarray direction: projection direction
    :return: Fisher ratio
    :rtype: float
    """

    _, _, _, within, between = scatter_matrices(features, labels)
    direction = np.asarray(direction, dtype=np.float64).ravel()

    return float(direction.dot(between).dot(direction) / direction.dot(within).dot(direction))


def fuse_features(f_2dpca, f_gabor, fld_pair):
    """
    Fuses 2DPCA and Gabor features: each one projected by its discriminant and concatenated

    :param numpy.ndarray f_2dpca: flattened 2DPCA features
    :param numpy.ndarray f_gabor: Gabor feature vector
    :param tuple(FldModel, FldModel) fld_pair: discriminants of the 2DPCA and Gabor features
    :return: fused vector
    :rtype: numpy.ndarray
    """

    fld_2dpca, fld_gabor = fld_pair
    if not isinstance(fld_2dpca, FldModel) or not isinstance(fld_gabor, FldModel):
        raise ModelNotFittedError('Feature fusion needs both Fisher discriminant models fitted')

    return np.concatenate([
        project_fld(fld_2dpca, np.ravel(f_2dpca)), project_fld(fld_gabor, np.ravel(f_gabor))])


class FusedRecognizer(object):
    """
    Identity recognition in the fused 2DPCA + Gabor discriminant space
    """

    KIND = 'fused'

    def __init__(self, twodpca, bank, fld_2dpca, fld_gabor, gallery_vectors, identities, phi):
        super(FusedRecognizer, self).__init__()

        self.twodpca = twodpca
        self.bank = bank
        self.fld_2dpca = fld_2dpca
        self.fld_gabor = fld_gabor
        self.gallery_vectors = np.asarray(gallery_vectors, dtype=np.float64)
        self.identities = list(identities)
        self.phi = float(phi)

    def fused_vector(self, chip):
        return fuse_features(
            features_2dpca(self.twodpca, chip).ravel(), gabor_features(self.bank, chip),
            (self.fld_2dpca, self.fld_gabor))

    def recognize(self, probe):
        """
        Recognizes the identity of a chip: nearest gallery vector, accepted when closer than phi

        :param Image or numpy.ndarray probe: gray face chip
        :return: identity, minimum distance and gallery index
        :rtype: Recognition
        """

        index, distance = _nearest(self.gallery_vectors, self.fused_vector(probe))
        if distance < self.phi:
            return Recognition(self.identities[index], distance, index)

        return Recognition(UNKNOWN_IDENTITY, distance, index)

    def save(self, path):
        """
        Saves the fused gallery and the Gabor bank parameters. Component models are saved on their own files
        """

        modelio.write_container(
            path, self.KIND, OrderedDict([('gallery_vectors', self.gallery_vectors)]),
            meta={'identities': self.identities, 'phi': self.phi, 'gabor': self.bank.params()})

    @classmethod
    def load(cls, path, twodpca, fld_2dpca, fld_gabor):
        _, matrices, meta = modelio.read_container(path, expected_kind=cls.KIND)
        bank = GaborBank(**meta['gabor'])
        return cls(twodpca, bank, fld_2dpca, fld_gabor, matrices['gallery_vectors'], meta['identities'], meta['phi'])


def fit_fused_recognizer(chips, identities, d, bank, reg=1e-6, phi=None, phi_factor=DEFAULT_PHI_FACTOR):
    """
    Fits the face level 2DPCA model and both discriminants on a labelled face gallery

    :param list(Image or numpy.ndarray) chips: gray face chips
    :param list(str) identities: identity of each chip
    :param int d: number of 2DPCA axes
    :param GaborBank bank: Gabor filter bank
    :param float reg: within-class scatter ridge
    :param float or None phi: recognition threshold. Derived from the gallery when not given
    :param float phi_factor: auto threshold factor
    :return: fitted recognizer
    :rtype: FusedRecognizer
    """

    twodpca = fit_2dpca(chips, d)
    f_2dpca = np.array([features_2dpca(twodpca, chip).ravel() for chip in chips])
    f_gabor = np.array([gabor_features(bank, chip) for chip in chips])
    fld_2dpca = fit_fld(f_2dpca, identities, reg=reg)
    fld_gabor = fit_fld(f_gabor, identities, reg=reg)
    vectors = np.array([
        fuse_features(a, b, (fld_2dpca, fld_gabor)) for a, b in zip(f_2dpca, f_gabor)])
    if phi is None:
        phi = auto_threshold(vectors, phi_factor)
    logger.info('Fused recognizer fitted: {} faces, {} dimensions, phi={:.4f}'.format(
        len(chips), vectors.shape[1], phi))

    return FusedRecognizer(twodpca, bank, fld_2dpca, fld_gabor, vectors, identities, phi)


# =================================================================================================================
# ACTION UNIT TEMPLATES
# =================================================================================================================

class AuTemplateGallery(object):
    """
    Feature vector of an example chip per (region, Action Unit) plus one neutral template per region
    """

    KIND = 'au_gallery'

    def __init__(self, templates=None):
        super(AuTemplateGallery, self).__init__()

        self._templates = OrderedDict()
        for (region_name, code), vector in (templates or dict()).items():
            self.add(region_name, code, vector)

    def add(self, region_name, code, vector):
        self._templates[(region_name, code)] = np.asarray(vector, dtype=np.float64).ravel()

    def get(self, region_name, code):
        return self._templates[(region_name, code)]

    def keys(self):
        return list(self._templates)

    def region_entries(self, region):
        """
        Returns the templates of a region

        :param RegionSpec region: facial region
        :return: (code, vector) list with every Action Unit of the region followed by the neutral template
        :rtype: list(tuple)
        """

        entries = list()
        missing = list()
        for code in tuple(region.au_list) + (NEUTRAL,):
            vector = self._templates.get((region.name, code))
            if vector is None:
                missing.append(str(code))
            else:
                entries.append((code, vector))
        if missing:
            raise GalleryError('Template gallery misses {} entries: {}'.format(region.name, ', '.join(missing)))

        return entries

    def save(self, path):
        matrices = OrderedDict()
        for (region_name, code), vector in self._templates.items():
            matrices['{}_{}'.format(region_name, code)] = vector
        modelio.write_container(path, self.KIND, matrices)

    @classmethod
    def load(cls, path):
        _, matrices, _ = modelio.read_container(path, expected_kind=cls.KIND)
        gallery = cls()
        for name, vector in matrices.items():
            region_name, _, code = name.partition('_')
            gallery.add(region_name, code if code == NEUTRAL else int(code), vector)
        return gallery


def build_au_gallery(template_chips, region_models):
    """
    Computes the 2DPCA features of the Action Unit example chips

    :param dict template_chips: (region name, Action Unit code or Neutral) to gray chip
    :param dict region_models: region name to fitted TwoDPcaModel
    :return: template gallery
    :rtype: AuTemplateGallery
    """

    gallery = AuTemplateGallery()
    for (region_name, code), chip in sorted(template_chips.items(), key=lambda item: (item[0][0], str(item[0][1]))):
        gallery.add(region_name, code, features_2dpca(region_models[region_name], chip).ravel())

    return gallery


def _code_rank(code):
    # Neutral ranks before every Action Unit on distance ties
    return 0 if code == NEUTRAL else int(code)


def match_au(region, chip_features, gallery):
    """
    Returns the Action Unit whose template is nearest to the region features, or Neutral

    :param RegionSpec region: facial region
    :param numpy.ndarray chip_features: region features (flattened 2DPCA features)
    :param AuTemplateGallery gallery: template gallery covering the region
    :return: Action Unit code or Neutral. Ties go to the lowest code
    :rtype: int or str
    """

    features = np.asarray(chip_features, dtype=np.float64).ravel()
    best = None
    for code, vector in gallery.region_entries(region):
        if vector.shape != features.shape:
            raise DimensionMismatchError('Features of length {} do not match {} template of length {}'.format(
                features.shape[0], region.name, vector.shape[0]))
        key = (float(np.linalg.norm(features - vector)), _code_rank(code))
        if best is None or key < best[0]:
            best = (key, code)

    return best[1]
