import sys
import os
import json

import argparse
import numpy as np
import pytest
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from src.cli.main import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main, parse_slice_range
from src.cli.manifest import MANIFEST_FILE, RunManifest
from src.pipeline.config import SEED_ENV
from src.validation.phantom import GT_BP, GT_MYO
from src.volumecore.cvol import load_mask, save_mask
from tests.conftest import SMALL_SPEC


def _manifest(directory) -> dict:
    with open(os.path.join(directory, MANIFEST_FILE)) as file:
        return json.load(file)


@pytest.fixture
def phantom_dir(tmp_path):
    spec = tmp_path / 'spec.json'
    spec.write_text(json.dumps(SMALL_SPEC))
    out = tmp_path / 'subject'
    assert main(['--log-dir', str(tmp_path / 'logs'), 'phantom', '--spec', str(spec), '--out', str(out)]) == EXIT_OK
    return out


def test_parse_slice_range():
    assert parse_slice_range('2:9') == (2, 9)
    for bad in ('9:2', 'a:b', '3', '-1:2'):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_slice_range(bad)


def test_phantom_command(phantom_dir):
    assert (phantom_dir / 'frame_000.json').exists()
    assert (phantom_dir / f'{GT_MYO}.json').exists()
    manifest = _manifest(phantom_dir)
    assert manifest['command'] == 'phantom'
    assert manifest['status'] == 'ok'
    assert manifest['config']['nx'] == 48
    assert any(key.startswith('spec') for key in manifest['input_hashes'])


def test_phantom_seed_from_environment(tmp_path, monkeypatch):
    spec = tmp_path / 'spec.json'
    spec.write_text(json.dumps(SMALL_SPEC))
    logs = str(tmp_path / 'logs')
    monkeypatch.setenv(SEED_ENV, '7')
    out = tmp_path / 'env'
    assert main(['--log-dir', logs, 'phantom', '--spec', str(spec), '--out', str(out), '--seed', '3']) == EXIT_OK
    assert _manifest(out)['seed'] == 7
    assert _manifest(out)['config']['seed'] == 7

    monkeypatch.delenv(SEED_ENV)
    out = tmp_path / 'flag'
    assert main(['--log-dir', logs, 'phantom', '--spec', str(spec), '--out', str(out), '--seed', '3']) == EXIT_OK
    assert _manifest(out)['seed'] == 3

    monkeypatch.setenv(SEED_ENV, 'seven')
    out = tmp_path / 'bad'
    assert main(['--log-dir', logs, 'phantom', '--spec', str(spec), '--out', str(out)]) == EXIT_USAGE


def test_eval_of_ground_truth(phantom_dir, tmp_path, capsys):
    pred = tmp_path / 'pred'
    save_mask(load_mask(str(phantom_dir / GT_BP)), str(pred / 'bp'))
    save_mask(load_mask(str(phantom_dir / GT_MYO)), str(pred / 'myo'))
    out = tmp_path / 'report' / 'report.json'
    code = main(['eval', '--pred', str(pred), '--gt', str(phantom_dir), '--slice-range', '0:4', '--out', str(out)])
    assert code == EXIT_OK
    with open(out) as file:
        report = json.load(file)
    assert report['structures']['bp']['all']['dice']['mean'] == pytest.approx(1.0)
    assert report['structures']['myo']['mid']['dice']['mean'] == pytest.approx(1.0)
    assert (tmp_path / 'report' / 'report.txt').exists()
    assert 'All Slices' in capsys.readouterr().out
    assert _manifest(tmp_path / 'report')['status'] == 'ok'


def test_segment_without_slice_range(phantom_dir, tmp_path, capsys):
    out = tmp_path / 'seg'
    code = main(['segment', '--atlas', str(tmp_path / 'atlas'), '--input', str(phantom_dir), '--out', str(out)])
    assert code == EXIT_USAGE
    assert 'slice_range' in capsys.readouterr().err
    manifest = _manifest(out)
    assert manifest['status'] == 'error'
    assert 'slice_range' in manifest['error']


def test_build_atlas_missing_ground_truth(phantom_dir, tmp_path, capsys):
    subject = tmp_path / 'unlabeled'
    main(['phantom', '--spec', str(tmp_path / 'spec.json'), '--out', str(subject), '--seed', '3'])
    os.remove(subject / f'{GT_MYO}.json')
    out = tmp_path / 'atlas'
    code = main(['build-atlas', '--reference', str(phantom_dir), '--subjects', str(subject), '--out', str(out)])
    assert code == EXIT_FAILURE
    assert 'unlabeled' in capsys.readouterr().err
    assert _manifest(out)['status'] == 'error'


def test_invalid_config_is_usage_error(phantom_dir, tmp_path):
    config = tmp_path / 'run.yaml'
    config.write_text('slice_range: [0, 4]\nmyo_weights: [0.6, 0.3, 0.1]\n')
    code = main(['segment', '--atlas', str(tmp_path / 'atlas'), '--input', str(phantom_dir),
                 '--config', str(config), '--out', str(tmp_path / 'seg')])
    assert code == EXIT_USAGE


@pytest.mark.slow
def test_build_and_segment(phantom_dir, tmp_path):
    atlas = tmp_path / 'atlas'
    assert main(['build-atlas', '--reference', str(phantom_dir), '--subjects', str(phantom_dir), '--out', str(atlas)]) == EXIT_OK
    assert _manifest(atlas)['details']['n_subjects'] == 1
    seg = tmp_path / 'seg'
    debug = tmp_path / 'debug'
    code = main(['segment', '--atlas', str(atlas), '--input', str(phantom_dir), '--out', str(seg),
                 '--slice-range', '0:4', '--debug-dump', str(debug)])
    assert code == EXIT_OK
    bp = load_mask(str(seg / 'bp'))
    myo = load_mask(str(seg / 'myo'))
    assert bp.dims == (48, 48, 5)
    assert not np.any(bp.array & myo.array)
    manifest = _manifest(seg)
    assert manifest['config']['slice_range'] == [0, 4]
    assert manifest['details']['order'] == [2, 1, 3, 0, 4]
    assert set(manifest['timings']) >= {'blood_pool', 'myocardium'}
    assert (debug / 'prior_initial.json').exists()


def test_manifest_hashes(tmp_path):
    (tmp_path / 'a.txt').write_text('abc')
    manifest = RunManifest(command='eval')
    manifest.hash_inputs('input', str(tmp_path))
    assert manifest.input_hashes['input/a.txt'] == 'ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad'
    path = manifest.write(str(tmp_path / 'out'))
    assert os.path.basename(path) == MANIFEST_FILE
