#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains tests for eigenfaces, 2DPCA, Gabor and Fisher discriminant feature models
"""

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from facsca import features, facs_codec
from facsca.facs_codec import NEUTRAL
from facsca.features import UNKNOWN_IDENTITY
from facsca.exceptions import (
    ClassCountError, ChipSizeError, DimensionMismatchError, GalleryError, ModelNotFittedError, ModelFormatError)


def _random_chips(count, shape, seed):
    random_state = np.random.RandomState(seed)
    return [random_state.randint(0, 256, size=shape).astype(np.float64) for _ in range(count)]


def _labelled_clusters(seed, classes=3, per_class=6, dims=5, spread=0.3):
    random_state = np.random.RandomState(seed)
    centers = random_state.normal(scale=3.0, size=(classes, dims))
    samples = list()
    labels = list()
    for cls in range(classes):
        samples.append(centers[cls] + random_state.normal(scale=spread, size=(per_class, dims)))
        labels.extend(['c{}'.format(cls)] * per_class)
    return np.vstack(samples), labels


# =================================================================================================================
# EIGENFACES
# =================================================================================================================

def test_eigenfaces_span_the_covariance_eigenspace():
    random_state = np.random.RandomState(0)
    for trial in range(5):
        count = random_state.randint(3, 8)
        chips = _random_chips(count, (4, 4), seed=trial)
        data = np.array([chip.ravel() for chip in chips])
        centered = data - data.mean(axis=0)
        values, vectors = np.linalg.eigh(centered.T.dot(centered) / count)
        reference = vectors[:, np.argsort(values)[::-1][:2]]

        model = features.fit_eigenmodel(chips, 2)
        assert model.components == 2
        assert np.allclose(np.linalg.norm(model.eigenfaces, axis=1), 1.0)
        assert np.max(subspace_angles(model.eigenfaces.T, reference)) < 1e-8
        assert np.all(np.diff(model.eigenvalues) <= 1e-12)


def test_gram_path_matches_direct_path():
    chips = _random_chips(6, (5, 5), seed=3)
    small = features.fit_eigenmodel(chips, 3)
    data = np.array([chip.ravel() for chip in chips])
    centered = data - data.mean(axis=0)
    values, vectors = np.linalg.eigh(centered.T.dot(centered) / 6)
    order = np.argsort(values)[::-1][:3]
    assert np.allclose(small.eigenvalues, values[order])
    for face, vector in zip(small.eigenfaces, vectors[:, order].T):
        assert np.isclose(abs(face.dot(vector)), 1.0)


def test_reconstruction_error_does_not_grow_with_components():
    chips = _random_chips(8, (6, 6), seed=4)
    probe = _random_chips(1, (6, 6), seed=99)[0]
    errors = [features.face_space_distance(features.fit_eigenmodel(chips, m), probe) for m in range(1, 9)]
    assert all(later <= earlier + 1e-9 for earlier, later in zip(errors, errors[1:]))


def test_training_faces_are_recognized():
    for trial in range(5):
        chips = _random_chips(5, (4, 4), seed=50 + trial)
        identities = ['id{}'.format(index) for index in range(5)]
        model = features.fit_eigenmodel(chips, 4, identities=identities)
        assert model.phi > 0
        for index, chip in enumerate(chips):
            recognition = features.recognize(model, chip)
            assert recognition.identity == identities[index]
            assert recognition.distance < 1e-9
            assert recognition.index == index


def test_recognition_threshold_rejects_strangers():
    chips = _random_chips(4, (8, 8), seed=6)
    model = features.fit_eigenmodel(chips, 3, phi=1e-3)
    stranger = _random_chips(1, (8, 8), seed=60)[0]
    assert features.recognize(model, stranger).identity == UNKNOWN_IDENTITY


def test_identical_chips_give_null_components():
    chip = _random_chips(1, (4, 4), seed=7)[0]
    model = features.fit_eigenmodel([chip, chip, chip], 2)
    assert model.components == 2
    assert np.allclose(model.eigenvalues, 0.0)
    assert np.allclose(model.eigenfaces.dot(model.eigenfaces.T), np.eye(2))
    assert features.recognize(model, chip).distance == pytest.approx(0.0)


def test_components_are_clamped_to_the_gallery():
    model = features.fit_eigenmodel(_random_chips(3, (4, 4), seed=8), 10)
    assert model.components == 3


def test_fit_eigenmodel_errors():
    with pytest.raises(GalleryError):
        features.fit_eigenmodel(_random_chips(1, (4, 4), seed=9), 1)
    with pytest.raises(ValueError):
        features.fit_eigenmodel(_random_chips(3, (4, 4), seed=9), 0)
    with pytest.raises(DimensionMismatchError):
        features.fit_eigenmodel(_random_chips(1, (4, 4), seed=9) + _random_chips(1, (5, 4), seed=9), 1)


def test_projection_rejects_other_shapes():
    model = features.fit_eigenmodel(_random_chips(3, (4, 4), seed=10), 2)
    with pytest.raises(DimensionMismatchError):
        features.project(model, np.zeros((5, 5)))


def test_extract_key_faces():
    chips = _random_chips(3, (6, 6), seed=11)
    model = features.fit_eigenmodel(chips, 3)
    sequence = [chips[0], chips[0], chips[1], chips[1], chips[0], chips[2]]
    assert features.extract_key_faces(sequence, model, tau=1.0) == [0, 2, 5]
    assert features.extract_key_faces(sequence, model, tau=1e12) == [0]
    assert features.extract_key_faces([], model) == []


def test_auto_threshold():
    assert features.auto_threshold(np.array([[0.0], [3.0], [4.0]]), factor=1.0) == pytest.approx(3.0)
    assert features.auto_threshold(np.array([[1.0, 2.0]])) == 0.0


def test_eigen_model_save_and_load(tmp_path):
    model = features.fit_eigenmodel(_random_chips(4, (4, 4), seed=12), 3, identities=['a', 'a', 'b', 'b'])
    path = str(tmp_path / 'eigen.pife')
    model.save(path)
    loaded = features.EigenModel.load(path)
    assert loaded.identities == ['a', 'a', 'b', 'b']
    assert loaded.shape == (4, 4)
    assert loaded.phi == model.phi
    assert np.array_equal(loaded.eigenfaces, model.eigenfaces)
    with pytest.raises(ModelFormatError):
        features.TwoDPcaModel.load(path)


# =================================================================================================================
# 2DPCA
# =================================================================================================================

def _unit_chip_sets():
    random_state = np.random.RandomState(13)
    for side in (2, 3):
        for _ in range(3):
            yield [random_state.rand(side, side) for _ in range(5)]


def _explicit_covariance(chips):
    mean_image = np.mean(chips, axis=0)
    expected = np.zeros((chips[0].shape[1],) * 2)
    for chip in chips:
        diff = chip - mean_image
        for row in range(diff.shape[0]):
            expected += np.outer(diff[row], diff[row])
    return mean_image, expected / len(chips)


def test_image_covariance_matches_explicit_sum():
    for chips in _unit_chip_sets():
        mean_image, covariance = features.image_covariance(chips)
        expected_mean, expected = _explicit_covariance(chips)
        assert np.max(np.abs(mean_image - expected_mean)) < 1e-10
        assert np.max(np.abs(covariance - expected)) < 1e-10
        assert np.array_equal(covariance, covariance.T)


def test_fit_2dpca_axes_match_covariance_eigenvectors():
    for chips in _unit_chip_sets():
        side = chips[0].shape[1]
        model = features.fit_2dpca(chips, side)
        _, expected = _explicit_covariance(chips)
        values, vectors = np.linalg.eigh(expected)
        order = np.argsort(values)[::-1]
        assert np.allclose(model.eigenvalues, values[order], atol=1e-10)
        for axis, vector in zip(model.axes.T, vectors[:, order].T):
            assert abs(abs(axis.dot(vector)) - 1.0) < 1e-6


def test_fit_2dpca():
    chips = _random_chips(6, (8, 5), seed=14)
    model = features.fit_2dpca(chips, 3)
    assert model.d == 3
    assert model.axes.shape == (5, 3)
    assert np.allclose(model.axes.T.dot(model.axes), np.eye(3))
    assert np.all(np.diff(model.eigenvalues) <= 1e-9)
    _, covariance = features.image_covariance(chips)
    for value, axis in zip(model.eigenvalues, model.axes.T):
        assert np.allclose(covariance.dot(axis), value * axis)
    assert features.features_2dpca(model, chips[0]).shape == (8, 3)


def test_fit_2dpca_clamps_and_rejects():
    chips = _random_chips(3, (6, 4), seed=15)
    assert features.fit_2dpca(chips, 10).d == 4
    with pytest.raises(GalleryError):
        features.fit_2dpca([], 2)
    with pytest.raises(ValueError):
        features.fit_2dpca(chips, 0)


def test_features_2dpca_errors():
    with pytest.raises(ModelNotFittedError):
        features.features_2dpca(None, np.zeros((4, 4)))
    model = features.fit_2dpca(_random_chips(3, (6, 4), seed=16), 2)
    with pytest.raises(DimensionMismatchError):
        features.features_2dpca(model, np.zeros((4, 4)))


# =================================================================================================================
# GABOR
# =================================================================================================================

def test_gabor_bank_layout():
    bank = features.GaborBank()
    assert len(bank.kernels) == 40
    assert bank.feature_length == 80
    assert bank.filter_index(2, 3) == 19
    assert all(kernel.shape == (21, 21) for kernel in bank.kernels)
    assert all(abs(kernel.real.sum()) < 1e-10 for kernel in bank.kernels)


def test_gabor_features_of_constant_chip_vanish():
    bank = features.GaborBank(scales=2, orientations=4)
    vector = features.gabor_features(bank, np.full((32, 32), 117.0))
    assert vector.shape == (bank.feature_length,)
    assert np.allclose(vector, 0.0)


def test_gabor_responds_to_matching_orientation():
    bank = features.GaborBank(scales=1, orientations=4, kernel_size=15, min_wavelength=8.0)
    columns = np.arange(48)
    # intensity changes along x: carrier oriented at theta 0
    stripes = np.tile(128.0 + 100.0 * np.cos(2.0 * np.pi * columns / 8.0), (48, 1))
    vector = features.gabor_features(bank, stripes)
    means = vector[0::2]
    assert int(np.argmax(means)) == bank.filter_index(0, 0)
    assert means[bank.filter_index(0, 0)] > 5 * means[bank.filter_index(0, 2)]


def test_gabor_rejects_small_chips():
    with pytest.raises(ChipSizeError):
        features.gabor_features(features.GaborBank(), np.zeros((10, 40)))


# =================================================================================================================
# FISHER LINEAR DISCRIMINANT
# =================================================================================================================

def test_fld_axes_beat_random_directions():
    samples, labels = _labelled_clusters(seed=17)
    model = features.fit_fld(samples, labels)
    assert model.dimensions == 2
    assert np.allclose(np.linalg.norm(model.axes, axis=0), 1.0)
    best = features.fisher_ratio(samples, labels, model.axes[:, 0])
    random_state = np.random.RandomState(18)
    for _ in range(100):
        direction = random_state.normal(size=samples.shape[1])
        assert features.fisher_ratio(samples, labels, direction) <= best * (1.0 + 1e-6)


def test_fld_separates_clusters():
    samples, labels = _labelled_clusters(seed=19)
    model = features.fit_fld(samples, labels)
    projected = features.project_fld(model, samples)
    class_means = [projected[np.array(labels) == cls].mean(axis=0) for cls in model.classes]
    for row, label in zip(projected, labels):
        distances = [np.linalg.norm(row - mean) for mean in class_means]
        assert model.classes[int(np.argmin(distances))] == label


def test_scatter_matrices_decompose_total_scatter():
    samples, labels = _labelled_clusters(seed=20)
    mean, classes, class_means, within, between = features.scatter_matrices(samples, labels)
    centered = samples - mean
    assert classes == ['c0', 'c1', 'c2']
    assert class_means.shape == (3, 5)
    assert np.allclose(within + between, centered.T.dot(centered))


def test_fld_needs_two_classes_with_two_samples():
    with pytest.raises(ClassCountError):
        features.fit_fld(np.zeros((4, 3)), ['a'] * 4)
    with pytest.raises(ClassCountError):
        features.fit_fld(np.arange(9.0).reshape(3, 3), ['a', 'a', 'b'])


def test_fld_handles_singular_within_scatter():
    samples, labels = _labelled_clusters(seed=21, dims=30, per_class=3)
    model = features.fit_fld(samples, labels)
    assert model.dimensions == 2
    assert np.all(np.isfinite(model.axes))


def test_project_fld_errors():
    samples, labels = _labelled_clusters(seed=22)
    model = features.fit_fld(samples, labels)
    with pytest.raises(ModelNotFittedError):
        features.project_fld(None, samples[0])
    with pytest.raises(DimensionMismatchError):
        features.project_fld(model, np.zeros(4))


def test_fld_save_and_load(tmp_path):
    samples, labels = _labelled_clusters(seed=23)
    model = features.fit_fld(samples, labels)
    path = str(tmp_path / 'fld.pife')
    model.save(path)
    loaded = features.FldModel.load(path)
    assert loaded.classes == model.classes
    assert np.array_equal(loaded.axes, model.axes)
    assert np.allclose(features.project_fld(loaded, samples), features.project_fld(model, samples))


# =================================================================================================================
# FUSION
# =================================================================================================================

def test_fuse_features():
    samples_a, labels = _labelled_clusters(seed=24, dims=6)
    samples_b, _ = _labelled_clusters(seed=25, dims=4)
    fld_a = features.fit_fld(samples_a, labels)
    fld_b = features.fit_fld(samples_b, labels)
    fused = features.fuse_features(samples_a[0], samples_b[0], (fld_a, fld_b))
    assert fused.shape == (fld_a.dimensions + fld_b.dimensions,)
    assert np.allclose(fused[:fld_a.dimensions], features.project_fld(fld_a, samples_a[0]))
    with pytest.raises(ModelNotFittedError):
        features.fuse_features(samples_a[0], samples_b[0], (fld_a, None))


def _identity_chips():
    random_state = np.random.RandomState(26)
    bases = [random_state.randint(0, 256, size=(24, 24)).astype(np.float64) for _ in range(3)]
    chips = list()
    identities = list()
    for index, base in enumerate(bases):
        for _ in range(3):
            chips.append(np.clip(base + random_state.normal(scale=4.0, size=base.shape), 0, 255))
            identities.append('person{}'.format(index))
    return chips, identities


def test_fused_recognizer(tmp_path):
    chips, identities = _identity_chips()
    bank = features.GaborBank(scales=2, orientations=4, kernel_size=11)
    recognizer = features.fit_fused_recognizer(chips, identities, 3, bank)
    assert recognizer.gallery_vectors.shape == (9, 4)
    for chip, identity in zip(chips, identities):
        recognition = recognizer.recognize(chip)
        assert recognition.identity == identity
        assert recognition.distance < 1e-3 * recognizer.phi

    path = str(tmp_path / 'fused.pife')
    recognizer.save(path)
    loaded = features.FusedRecognizer.load(path, recognizer.twodpca, recognizer.fld_2dpca, recognizer.fld_gabor)
    assert loaded.bank.params() == bank.params()
    assert loaded.identities == identities
    assert np.allclose(loaded.fused_vector(chips[4]), recognizer.fused_vector(chips[4]))


# =================================================================================================================
# ACTION UNIT TEMPLATES
# =================================================================================================================

def _brows_gallery():
    brows = facs_codec.REGIONS_BY_NAME[facs_codec.EYE_BROWS]
    gallery = features.AuTemplateGallery({
        (brows.name, 1): [0.0, 10.0],
        (brows.name, 2): [10.0, 0.0],
        (brows.name, 4): [10.0, 10.0],
        (brows.name, NEUTRAL): [0.0, 0.0],
    })
    return brows, gallery


def test_match_au_picks_the_nearest_template():
    brows, gallery = _brows_gallery()
    assert features.match_au(brows, [1.0, 9.0], gallery) == 1
    assert features.match_au(brows, [9.0, 9.5], gallery) == 4
    assert features.match_au(brows, [0.5, 0.5], gallery) == NEUTRAL


def test_match_au_ties_go_to_neutral_then_lowest_code():
    brows, gallery = _brows_gallery()
    assert features.match_au(brows, [5.0, 5.0], gallery) == NEUTRAL
    assert features.match_au(brows, [5.0, 10.0], gallery) == 1

    lips = facs_codec.REGIONS_BY_NAME[facs_codec.LIP_PART1]
    templates = dict(((lips.name, code), [float(code), 0.0]) for code in lips.au_list)
    templates[(lips.name, NEUTRAL)] = [100.0, 100.0]
    lip_gallery = features.AuTemplateGallery(templates)
    assert features.match_au(lips, [25.5, 0.0], lip_gallery) == 25


def test_match_au_errors():
    brows, gallery = _brows_gallery()
    with pytest.raises(DimensionMismatchError):
        features.match_au(brows, [1.0, 2.0, 3.0], gallery)
    with pytest.raises(GalleryError):
        features.match_au(facs_codec.REGIONS_BY_NAME[facs_codec.CHEEKS], [1.0, 2.0], gallery)


def test_au_gallery_save_and_load(tmp_path):
    _, gallery = _brows_gallery()
    path = str(tmp_path / 'au_gallery.pife')
    gallery.save(path)
    loaded = features.AuTemplateGallery.load(path)
    assert sorted(loaded.keys(), key=str) == sorted(gallery.keys(), key=str)
    assert np.array_equal(loaded.get(facs_codec.EYE_BROWS, NEUTRAL), [0.0, 0.0])
    assert np.array_equal(loaded.get(facs_codec.EYE_BROWS, 4), [10.0, 10.0])


def test_build_au_gallery():
    chips = _random_chips(4, (6, 8), seed=27)
    model = features.fit_2dpca(chips, 2)
    brows = facs_codec.EYE_BROWS
    gallery = features.build_au_gallery(
        {(brows, 1): chips[0], (brows, 2): chips[1], (brows, 4): chips[2], (brows, NEUTRAL): chips[3]},
        {brows: model})
    assert gallery.get(brows, 2).shape == (12,)
    region = facs_codec.REGIONS_BY_NAME[brows]
    assert features.match_au(region, features.features_2dpca(model, chips[1]), gallery) == 2
