#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains tests for frame analysis, shot aggregation and manifest ingestion
"""

import os
import json

import pytest

from facsca import pipeline, fixtures, facs_codec, vision
from facsca.config import Config
from facsca.facs_codec import NEUTRAL
from facsca.pipeline import FrameAnalysis, ShotEntry, ShotManifest
from facsca.exceptions import ManifestError, ModelNotFittedError, GalleryError


def _face(label, aus=()):
    return pipeline.FaceResult(None, None, frozenset(aus), facs_codec.synthesize_pattern(aus), label)


def _frame(index, label):
    return FrameAnalysis(index, [_face(label)])


def _write_frames(folder, count):
    paths = list()
    for index in range(count):
        path = str(folder / '{:04d}.pgm'.format(index))
        fixtures.write_placeholder(path)
        paths.append(path)
    return paths


# =================================================================================================================
# FRAMES AND SHOTS
# =================================================================================================================

def test_analyze_annotated_frame():
    analysis = pipeline.analyze_frame(None, aus={6, 12})
    assert analysis.label == 'Happiness'
    assert analysis.annotation_bits == (1,)
    assert facs_codec.render_pattern(analysis.pattern) == '00$000$0000$1$00000$100000$'


def test_frame_without_faces_is_neutral():
    analysis = FrameAnalysis(3)
    assert analysis.label == NEUTRAL
    assert analysis.annotation_bits == ()
    assert analysis.pattern == facs_codec.synthesize_pattern(())


def test_annotation_bits_compare_faces_with_the_first_one():
    analysis = FrameAnalysis(0, [_face('Happiness', {6, 12}), _face('Sadness', {1, 7, 15, 63})])
    assert analysis.annotation_bits == (1, 0)
    assert analysis.label == 'Happiness'
    same = FrameAnalysis(0, [_face('Happiness', {6, 12}), _face('Happiness', {6, 26})])
    assert same.annotation_bits == (1, 1)


def test_analyze_frame_needs_models():
    image, _ = fixtures.synthetic_face_image()
    with pytest.raises(ModelNotFittedError):
        pipeline.analyze_frame(image)


def test_aggregate_shot_majority():
    analyses = [_frame(0, 'Happiness'), _frame(1, 'Sadness'), _frame(2, 'Happiness')]
    record = pipeline.aggregate_shot(analyses, shot_id='S1')
    assert record.shot_expression == 'Happiness'
    assert record.frame_range == (0, 2)
    assert record.key_face_refs == (0, 1, 2)
    assert record.frame_labels == ('Happiness', 'Sadness', 'Happiness')
    assert record.or_annotation == 1
    assert record.ok


def test_aggregate_shot_ties_keep_the_earliest_label():
    analyses = [_frame(0, 'Sadness'), _frame(1, 'Happiness'), _frame(2, 'Happiness'), _frame(3, 'Sadness')]
    assert pipeline.aggregate_shot(analyses).shot_expression == 'Sadness'


def test_aggregate_shot_without_faces():
    record = pipeline.aggregate_shot([FrameAnalysis(0), FrameAnalysis(1)], key_face_refs=[])
    assert record.shot_expression == NEUTRAL
    assert record.or_annotation == 0
    assert record.key_face_refs == ()


def test_aggregate_shot_rejects_empty_shots():
    with pytest.raises(ValueError):
        pipeline.aggregate_shot([])


def test_shot_record_dict_round_trip():
    record = pipeline.aggregate_shot([_frame(0, 'Happiness'), _frame(1, 'Happiness')], shot_id='S1')
    assert pipeline.ShotRecord.from_dict(json.loads(json.dumps(record.to_dict()))) == record
    failed = pipeline.ShotRecord.failed('S2', 3, 'broken')
    assert pipeline.ShotRecord.from_dict(failed.to_dict()) == failed
    assert failed.shot_expression is None
    assert not failed.ok


def test_key_face_labels():
    record = pipeline.aggregate_shot(
        [_frame(0, 'Happiness'), _frame(1, 'Sadness'), _frame(2, 'Happiness')], key_face_refs=[0, 1])
    assert record.key_face_labels() == ['Happiness', 'Sadness']


# =================================================================================================================
# MANIFEST
# =================================================================================================================

def test_parse_manifest():
    manifest = pipeline.parse_manifest([
        {'shot_id': 'S1', 'frames': ['a.pgm', 'b.pgm'], 'label': 'Happiness', 'aus': [[6, 12], [6, 26]]},
        {'shot_id': 'S2', 'frames': ['/abs/c.ppm']},
    ], base_dir='/data')
    entries = manifest.entries
    assert entries[0].frames == ('/data/a.pgm', '/data/b.pgm')
    assert entries[0].aus == (frozenset({6, 12}), frozenset({6, 26}))
    assert entries[0].bypass
    assert not entries[1].bypass
    assert entries[1].frames == ('/abs/c.ppm',)
    assert manifest.truth() == {'S1': 'Happiness'}


@pytest.mark.parametrize('data', [
    {'shots': []},
    [{'frames': []}],
    [{'shot_id': 'S1', 'frames': 'a.pgm'}],
    [{'shot_id': 'S1', 'frames': [], 'label': 'Joy'}],
    [{'shot_id': 'S1', 'frames': ['a.pgm'], 'aus': [[6], [12]]}],
    [{'shot_id': 'S1', 'frames': ['a.pgm'], 'aus': [[3]]}],
    [{'shot_id': 'S1', 'frames': ['a.pgm'], 'aus': [[True, 12]]}],
    [{'shot_id': 'S1', 'frames': ['a.pgm'], 'aus': [[[6]]]}],
    [{'shot_id': 'S1', 'frames': ['a.pgm'], 'aus': [[6.0]]}],
    [{'shot_id': 'S1', 'frames': []}, {'shot_id': 'S1', 'frames': []}],
])
def test_parse_manifest_rejects_invalid_data(data):
    with pytest.raises(ManifestError):
        pipeline.parse_manifest(data)


def test_manifest_file_round_trip(tmp_path):
    manifest = ShotManifest([
        ShotEntry('S1', (str(tmp_path / 'x.pgm'),), 'Disgust', (frozenset({10, 61}),)),
        ShotEntry('S2', (str(tmp_path / 'y.pgm'),), None, None),
    ])
    path = str(tmp_path / 'manifest.json')
    pipeline.write_manifest(manifest, path)
    loaded = pipeline.load_manifest(path)
    assert [entry.shot_id for entry in loaded] == ['S1', 'S2']
    assert loaded.entries[0].aus == (frozenset({10, 61}),)
    assert loaded.truth() == {'S1': 'Disgust'}


def test_load_manifest_errors(tmp_path):
    with pytest.raises(ManifestError):
        pipeline.load_manifest(str(tmp_path / 'missing.json'))
    path = tmp_path / 'broken.json'
    path.write_text(u'[{"shot_id": ')
    with pytest.raises(ManifestError):
        pipeline.load_manifest(str(path))
    path.write_bytes(b'[{"shot_id": "\xff"}]')
    with pytest.raises(ManifestError) as exc_info:
        pipeline.load_manifest(str(path))
    assert exc_info.value.offset == 14


# =================================================================================================================
# INGESTION
# =================================================================================================================

def test_ingest_annotated_shot(tmp_path):
    frames = _write_frames(tmp_path, 3)
    manifest = ShotManifest([ShotEntry('S1', tuple(frames), None, (frozenset({6, 12}),) * 3)])
    records = pipeline.ingest(manifest)
    assert len(records) == 1
    record = records[0]
    assert record.ok
    assert record.shot_expression == 'Happiness'
    assert record.frame_labels == ('Happiness',) * 3
    assert record.key_face_refs == (0, 1, 2)
    assert record.or_annotation == 1


def test_ingest_empty_manifest():
    assert pipeline.ingest(ShotManifest()) == []


def test_failing_shot_does_not_affect_the_others(tmp_path):
    frames = _write_frames(tmp_path, 2)
    missing = str(tmp_path / 'missing.pgm')
    manifest = ShotManifest([
        ShotEntry('S1', tuple(frames), None, (frozenset({6, 12}),) * 2),
        ShotEntry('S2', (frames[0], missing), None, (frozenset({10, 61}),) * 2),
        ShotEntry('S3', (), None, ()),
        ShotEntry('S4', tuple(frames), None, (frozenset({10, 61}),) * 2),
    ])
    records = pipeline.ingest(manifest, workers=3)
    assert [record.shot_id for record in records] == ['S1', 'S2', 'S3', 'S4']
    assert [record.status for record in records] == ['ok', 'failed', 'failed', 'ok']
    assert missing in records[1].error
    assert records[1].shot_expression is None
    assert records[3].shot_expression == 'Disgust'


def test_ingest_needs_models_for_frames_without_annotations(tmp_path):
    frames = _write_frames(tmp_path, 1)
    with pytest.raises(ModelNotFittedError):
        pipeline.ingest(ShotManifest([ShotEntry('S1', tuple(frames), None, None)]))


def test_ingest_corpus_is_deterministic(tmp_path):
    manifest_path = fixtures.write_bypass_corpus(str(tmp_path / 'corpus'), shots=20, frames_per_shot=10)
    manifest = pipeline.load_manifest(manifest_path)
    sequential = pipeline.ingest(manifest, workers=1)
    concurrent = pipeline.ingest(manifest, workers=4)
    assert sequential == concurrent
    assert pipeline.records_to_jsonl(sequential) == pipeline.records_to_jsonl(concurrent)
    truth = manifest.truth()
    for record in sequential:
        assert record.ok
        assert record.shot_expression == truth[record.shot_id]
        assert record.frame_count == 10


# =================================================================================================================
# VISION PIPELINE
# =================================================================================================================

@pytest.fixture(scope='module')
def trained(tmp_path_factory):
    gallery_dir = str(tmp_path_factory.mktemp('gallery'))
    frames = fixtures.write_gallery(gallery_dir, identities=3, chips_per_identity=2)
    models = pipeline.ModelSet.train(gallery_dir, Config())
    return gallery_dir, frames, models


def test_train_builds_every_model(trained):
    _, _, models = trained
    assert models.recognizer is not None
    assert models.chip_size == 64
    assert list(models.region_models) == list(facs_codec.REGION_NAMES)
    for region in facs_codec.REGIONS:
        assert len(models.au_gallery.region_entries(region)) == region.dim + 1


def test_gallery_face_is_recognized_with_a_neutral_expression(trained):
    _, frames, models = trained
    image = vision.load_image(frames['person00'][0])
    analysis = pipeline.analyze_frame(image, models)
    assert len(analysis.faces) == 1
    face = analysis.faces[0]
    assert face.identity == 'person00'
    assert face.aus == frozenset()
    assert face.label == NEUTRAL
    assert analysis.key_chip is not None


def test_unknown_faces_are_ignored(tmp_path):
    gallery_dir = str(tmp_path / 'gallery')
    frames = fixtures.write_gallery(gallery_dir, identities=3, chips_per_identity=2)
    config = Config({'recognition.features': 'eigen', 'eigen.phi': 1e-6})
    models = pipeline.ModelSet.train(gallery_dir, config)
    assert models.recognizer is None

    stranger = pipeline.analyze_frame(fixtures.identity_frame(3), models)
    assert stranger.faces == ()
    assert stranger.label == NEUTRAL
    known = pipeline.analyze_frame(vision.load_image(frames['person01'][0]), models)
    assert [face.identity for face in known.faces] == ['person01']


def test_models_save_and_load(trained, tmp_path):
    _, frames, models = trained
    models_dir = str(tmp_path / 'models')
    models.save(models_dir)
    loaded = pipeline.ModelSet.load(models_dir)
    assert loaded.recognizer is not None
    image = vision.load_image(frames['person02'][1])
    assert pipeline.analyze_frame(image, loaded).faces[0].identity == 'person02'
    with pytest.raises(ModelNotFittedError):
        pipeline.ModelSet.load(str(tmp_path / 'empty'))


def test_train_requires_templates(tmp_path):
    gallery_dir = str(tmp_path / 'gallery')
    fixtures.write_gallery(gallery_dir, identities=2, chips_per_identity=2)
    os.remove(os.path.join(gallery_dir, pipeline.AU_FOLDER, 'Cheeks_6.pgm'))
    with pytest.raises(GalleryError):
        pipeline.ModelSet.train(gallery_dir)


def test_ingest_frames_with_models(trained, tmp_path):
    _, frames, models = trained
    first = frames['person00'][0]
    manifest = ShotManifest([ShotEntry('S1', (first, first, frames['person00'][1]), None, None)])
    record = pipeline.ingest(manifest, models=models)[0]
    assert record.ok
    assert record.shot_expression == NEUTRAL
    assert record.key_face_refs[0] == 0
    assert 1 not in record.key_face_refs
    assert record.or_annotation == 1
