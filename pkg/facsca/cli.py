#! /usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module that contains facsca command line entry point
"""

from __future__ import print_function, division, absolute_import

import os
import io
import sys
import logging
import argparse

from facsca import utils, config as config_module
from facsca import ca_engine, facs_codec, pipeline, retrieval, fixtures, vision
from facsca.__version__ import get_version
from facsca.exceptions import FacscaError

logger = logging.getLogger('facsca')

MODES = {'canonical': facs_codec.CANONICAL, 'paper': facs_codec.PAPER_COMPAT}


def _write(text):
    sys.stdout.write(text)
    sys.stdout.flush()


# =================================================================================================================
# COMMANDS
# =================================================================================================================

def cmd_rules(args, config):
    _write(''.join(line + '\n' for line in ca_engine.rule_table()))


def cmd_build_patterns(args, config):
    rows = facs_codec.pattern_database()
    if args.out:
        facs_codec.write_pattern_database(args.out, rows)
    else:
        _write(facs_codec.format_pattern_database(rows))


def cmd_pattern(args, config):
    classification = facs_codec.classify_au_set(utils.parse_int_list(args.aus))
    _write('{}\t{}\n'.format(
        facs_codec.render_pattern(classification.pattern, MODES[args.mode]), classification.label))


def cmd_config(args, config):
    if args.describe:
        _write(''.join(line + '\n' for line in config.describe()))
    else:
        _write(config.echo())


def cmd_fixtures(args, config):
    out_dir = args.out
    if args.kind == 'face':
        if not os.path.isdir(out_dir):
            os.makedirs(out_dir)
        image, boxes = fixtures.synthetic_face_image()
        path = os.path.join(out_dir, 'face.ppm')
        vision.save_image(image, path)
        _write('{}\t{}\n'.format(path, ' '.join(str(value) for value in boxes[0][:4])))
    elif args.kind == 'gallery':
        frames = fixtures.write_gallery(
            out_dir, identities=args.identities, chips_per_identity=args.samples, size=config['chip.size'])
        for identity, paths in frames.items():
            for path in paths:
                _write('{}\t{}\n'.format(identity, path))
    else:
        _write(fixtures.write_bypass_corpus(out_dir, shots=args.shots, frames_per_shot=args.frames) + '\n')


def cmd_train(args, config):
    models = pipeline.ModelSet.train(args.gallery, config)
    models.save(args.models)
    mode = 'fused' if models.recognizer is not None else 'eigen'
    _write('Trained {} eigenfaces, {} recognition, phi={:.6f}\n'.format(
        models.eigen.components, mode, models.recognizer.phi if models.recognizer else models.eigen.phi))


def _load_models(args, config):
    if not args.models:
        return None
    return pipeline.ModelSet.load(args.models, config)


def cmd_ingest(args, config):
    manifest = pipeline.load_manifest(args.manifest)
    workers = args.workers if args.workers else config['pipeline.workers']
    records = pipeline.ingest(manifest, models=_load_models(args, config), workers=workers)
    index = retrieval.build_index(records)
    retrieval.save_index(index, args.out)
    if args.records:
        with io.open(args.records, 'w', encoding='utf-8', newline='\n') as fh:
            fh.write(pipeline.records_to_jsonl(records))
    for record in records:
        _write('{}\t{}\t{}\n'.format(record.shot_id, record.status, record.shot_expression or '-'))


def cmd_query(args, config):
    index = retrieval.load_index(args.index)
    if args.frame:
        result = retrieval.query(index, args.frame, models=_load_models(args, config), config=config)
    else:
        result = retrieval.query(index, utils.parse_int_list(args.aus), config=config)
    _write(result.render())


def cmd_eval(args, config):
    index = retrieval.load_index(args.index)
    manifest = pipeline.load_manifest(args.manifest)
    beta = args.beta if args.beta is not None else config['metrics.beta']
    report = retrieval.evaluate_all(index, manifest, beta=beta)
    _write(report.to_json() if args.format == 'json' else report.to_text())


# =================================================================================================================
# PARSER
# =================================================================================================================

def _add_command(subparsers, name, func, help_text):
    parser = subparsers.add_parser(name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.set_defaults(func=func)
    return parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog='facsca', description='FACS Action Unit rule patterns and expression based shot retrieval',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument('--version', action='version', version=get_version())
    parser.add_argument(
        '--config', default=None, help='Configuration file. Falls back to ${}'.format(config_module.CONFIG_ENV_VAR))
    parser.add_argument('-v', '--verbose', action='store_true', help='Log debug messages to standard error')
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    _add_command(subparsers, 'rules', cmd_rules, 'Print the 512 rules of the 3x3 dependency mask')

    build_patterns = _add_command(
        subparsers, 'build-patterns', cmd_build_patterns, 'Write the expression pattern database')
    build_patterns.add_argument('--out', default=None, help='Output file. Standard output when not given')

    pattern = _add_command(subparsers, 'pattern', cmd_pattern, 'Render and classify the pattern of Action Units')
    pattern.add_argument('--aus', required=True, help='Comma separated Action Units, such as 6,12')
    pattern.add_argument('--mode', choices=sorted(MODES), default='canonical', help='Pattern rendering')

    config_parser = _add_command(subparsers, 'config', cmd_config, 'Print the effective configuration')
    config_parser.add_argument('--describe', action='store_true', help='Print key documentation and defaults')

    fixtures_parser = _add_command(subparsers, 'fixtures', cmd_fixtures, 'Generate synthetic test data')
    fixtures_parser.add_argument('--out', required=True, help='Output folder')
    fixtures_parser.add_argument('--kind', choices=('face', 'gallery', 'corpus'), default='corpus', help='Data kind')
    fixtures_parser.add_argument('--identities', type=int, default=3, help='Gallery identities')
    fixtures_parser.add_argument('--samples', type=int, default=2, help='Gallery chips per identity')
    fixtures_parser.add_argument('--shots', type=int, default=20, help='Corpus shots')
    fixtures_parser.add_argument('--frames', type=int, default=10, help='Corpus frames per shot')

    train = _add_command(subparsers, 'train', cmd_train, 'Train recognition and Action Unit models')
    train.add_argument('--gallery', required=True, help='Gallery folder with faces/ and au/ subfolders')
    train.add_argument('--models', required=True, help='Output models folder')

    ingest = _add_command(subparsers, 'ingest', cmd_ingest, 'Classify the shots of a manifest into an index')
    ingest.add_argument('--manifest', required=True, help='Shot manifest (JSON)')
    ingest.add_argument('--models', default=None, help='Models folder. Not needed for annotated manifests')
    ingest.add_argument('--out', required=True, help='Output index file')
    ingest.add_argument('--records', default=None, help='Optional JSON lines dump of the shot records')
    ingest.add_argument('--workers', type=int, default=None, help='Concurrent shots. Defaults to pipeline.workers')

    query = _add_command(subparsers, 'query', cmd_query, 'Retrieve the shots showing an expression')
    query.add_argument('--index', required=True, help='Index file')
    probe = query.add_mutually_exclusive_group(required=True)
    probe.add_argument('--aus', default=None, help='Comma separated Action Units of the query')
    probe.add_argument('--frame', default=None, help='Query frame (PPM)')
    query.add_argument('--models', default=None, help='Models folder, needed by frame queries')

    evaluate = _add_command(subparsers, 'eval', cmd_eval, 'Evaluate retrieval against labelled shots')
    evaluate.add_argument('--index', required=True, help='Index file')
    evaluate.add_argument('--manifest', required=True, help='Labelled shot manifest')
    evaluate.add_argument('--beta', type=float, default=None, help='F-measure beta. Defaults to metrics.beta')
    evaluate.add_argument('--format', choices=('text', 'json'), default='text', help='Report format')

    return parser


def main(argv=None):
    """
    Runs the facsca command line

    :param list(str) or None argv: arguments. Defaults to sys.argv
    :return: exit status
    :rtype: int
    """

    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.WARNING,
        format='%(levelname)s %(name)s: %(message)s')

    try:
        config = config_module.load_config(args.config)
        args.func(args, config)
    except FacscaError as exc:
        sys.stderr.write('ERROR {}: {}\n'.format(exc.code, exc))
        return 1
    except EnvironmentError as exc:
        sys.stderr.write('ERROR IO: {}\n'.format(exc))
        return 1
    except ValueError as exc:
        sys.stderr.write('ERROR VALUE: {}\n'.format(exc))
        return 1

    return 0


if __name__ == '__main__':
    sys.exit(main())
