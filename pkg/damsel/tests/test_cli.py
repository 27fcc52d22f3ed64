# %% IMPORTS
# Built-in imports
import json
from os import path

# Package imports
import pandas as pd
import pytest

# DAMSEL imports
from damsel.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from damsel.networks import DiscriminatorSpec, SegmenterSpec
from damsel.tools import load_checkpoint, read_json

# Marks tests in this module as quick
pytestmark = pytest.mark.quick

SYNTH = {'extent': 24, 'n_source': 3, 'n_target': 2, 'lesion_radius': [2.0, 3.0]}


def write(filepath, data):
    with open(str(filepath), 'w') as f:
        json.dump(data, f)
    return str(filepath)


@pytest.fixture(scope='module')
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp('cli')
    config = write(root / 'synth.json', SYNTH)
    assert main(['gen-data', '--config', config, '--seed', '3',
                 '--out', str(root / 'data')]) == EXIT_OK
    return str(root / 'data' / 'manifest.json')


def run_config(directory, manifest, **fields):
    data = {'source_manifest': manifest, 'target_manifest': manifest,
            'segmenter_spec': SegmenterSpec.with_widths([1]*8, fused_width=2).to_dict(),
            'discriminator_spec': DiscriminatorSpec(fm_count=2).to_dict(),
            'schedule': {'e1': 1, 'e2': 2, 'refine_start': 2, 'total_epochs': 2,
                         'batches_per_epoch': 1, 'n_seg': 2, 'n_adv': 2,
                         'val_every': 0},
            'probe_samples': 4, 'probe_steps': 2}
    data.update(fields)
    return write(path.join(str(directory), 'config.json'), data)


# %% PYTEST DEFINITIONS
class TestGenData(object):
    def test_reproducible(self, tmp_path, capsys):
        config = write(tmp_path / 'synth.json', SYNTH)
        for name in ('a', 'b'):
            code = main(['gen-data', '--config', config, '--seed', '7',
                         '--out', str(tmp_path / name)])
            assert code == EXIT_OK
        out = capsys.readouterr().out.split()
        assert out == [str(tmp_path / name / 'manifest.json') for name in ('a', 'b')]
        assert read_json(str(tmp_path / 'a' / 'synth_config.json'))['seed'] == 7
        for stem in ('S000_image', 'T001_labels'):
            with open(str(tmp_path / 'a' / 'cases' / (stem + '.raw')), 'rb') as a, \
                    open(str(tmp_path / 'b' / 'cases' / (stem + '.raw')), 'rb') as b:
                assert a.read() == b.read()

    def test_output_under_a_file(self, tmp_path, capsys):
        config = write(tmp_path / 'synth.json', SYNTH)
        blocker = tmp_path / 'blocker'
        blocker.write_text('not a directory')
        target = str(blocker / 'data')
        assert main(['gen-data', '--config', config, '--out', target]) == EXIT_RUNTIME
        assert target in capsys.readouterr().err

    def test_invalid_config(self, tmp_path, capsys):
        config = write(tmp_path / 'synth.json', dict(SYNTH, extent=8, colour='red'))
        assert main(['gen-data', '--config', config]) == EXIT_CONFIG
        assert 'colour' in capsys.readouterr().err
        assert main(['gen-data', '--config', str(tmp_path / 'missing.json')]) == EXIT_CONFIG


class TestTrain(object):
    def test_source_only(self, tmp_path, dataset, capsys):
        config = run_config(tmp_path, dataset)
        out = str(tmp_path / 'run')
        code = main(['train', '--config', config, '--mode', 'source-only', '--out', out])
        assert code == EXIT_OK
        assert capsys.readouterr().out.strip() == path.join(out, 'metrics.csv')
        history = pd.read_csv(path.join(out, 'metrics.csv'))
        assert list(history['epoch']) == [1, 2]
        assert history['L_adv'].isna().all()
        assert path.isdir(path.join(out, 'checkpoints', 'final', 'segmenter'))
        assert not path.exists(path.join(out, 'checkpoints', 'final', 'discriminator'))
        assert path.isfile(path.join(out, 'train.log'))
        assert read_json(path.join(out, 'run.json'))['mode'] == 'source-only'

    def test_uda_replay(self, tmp_path, dataset):
        config = run_config(tmp_path, dataset)
        first = str(tmp_path / 'first')
        assert main(['train', '--config', config, '--taps', 'L10', '--seed', '4',
                     '--alpha-max', '0.1', '--out', first]) == EXIT_OK
        _, manifest = load_checkpoint(path.join(first, 'checkpoints', 'final',
                                                'discriminator'))
        assert manifest['tap_set'] == 'L10'
        assert manifest['tap_channels'] == 2
        run = read_json(path.join(first, 'run.json'))
        assert run['schedule']['alpha_max'] == 0.1 and run['seed'] == 4

        second = str(tmp_path / 'second')
        assert main(['train', '--config', path.join(first, 'run.json'),
                     '--out', second]) == EXIT_OK
        with open(path.join(first, 'metrics.csv')) as a, \
                open(path.join(second, 'metrics.csv')) as b:
            assert a.read() == b.read()

    def test_resume(self, tmp_path, dataset):
        config = run_config(tmp_path, dataset, mode='source-only')
        out = str(tmp_path / 'run')
        assert main(['train', '--config', config, '--out', out]) == EXIT_OK
        assert main(['train', '--config', config, '--out', out, '--resume']) == EXIT_OK
        assert len(pd.read_csv(path.join(out, 'metrics.csv'))) == 2

    def test_config_errors(self, tmp_path, dataset, capsys):
        config = run_config(tmp_path, dataset)
        out = str(tmp_path / 'run')
        assert main(['train', '--config', config, '--epochs', '1', '--out', out]) == EXIT_CONFIG
        assert 'schedule' in capsys.readouterr().err
        assert not path.exists(out)
        assert main(['train', '--config', config, '--taps', 'L12']) == EXIT_CONFIG
        assert main(['train', '--config', str(tmp_path / 'nope.json')]) == EXIT_CONFIG
        with pytest.raises(SystemExit):
            main(['train', '--mode', 'semi-supervised'])


class TestEvalProbe(object):
    @pytest.fixture
    def run_dir(self, tmp_path, dataset):
        config = run_config(tmp_path, dataset)
        out = str(tmp_path / 'run')
        assert main(['train', '--config', config, '--out', out]) == EXIT_OK
        return config, out

    def test_eval(self, run_dir, capsys):
        config, out = run_dir
        capsys.readouterr()
        assert main(['eval', '--config', config, '--out', out]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == 'case_id,dsc,recall,precision,tp,fp,fn,tn'
        assert [line.split(',')[0] for line in lines[1:]] == ['T001', 'mean', 'std']
        table = pd.read_csv(path.join(out, 'eval_T_heldout.csv'))
        assert table['dsc'].between(0, 1).all()

        assert main(['eval', '--config', config, '--out', out, '--domain', 'S',
                     '--checkpoint', path.join(out, 'checkpoints', 'final')]) == EXIT_OK
        table = pd.read_csv(path.join(out, 'eval_S_heldout.csv'))
        assert list(table['case_id']) == ['S002', 'mean', 'std']

    def test_missing_checkpoint(self, tmp_path, run_dir, capsys):
        config, out = run_dir
        missing = str(tmp_path / 'missing')
        assert main(['eval', '--config', config, '--out', out,
                     '--checkpoint', missing]) == EXIT_CONFIG
        assert missing in capsys.readouterr().err

    def test_probe(self, run_dir, capsys):
        config, out = run_dir
        capsys.readouterr()
        assert main(['probe', '--config', config, '--out', out, '--n-samples', '6']) == EXIT_OK
        accuracy = float(capsys.readouterr().out)
        assert 0 <= accuracy <= 1
        assert main(['probe', '--config', config, '--out', out, '--fresh']) == EXIT_OK
        assert main(['probe', '--config', config, '--out', out,
                     '--n-samples', '0']) == EXIT_CONFIG
        assert main(['probe', '--config', config, '--out', out,
                     '--n-samples', '3']) == EXIT_CONFIG


def test_empty_manifest(tmp_path, capsys):
    manifest = write(tmp_path / 'manifest.json', [])
    config = run_config(tmp_path, manifest, mode='source-only', target_manifest=None)
    code = main(['eval', '--config', config, '--out', str(tmp_path)])
    assert code != EXIT_OK
    assert 'no S cases' in capsys.readouterr().err


def test_untrained_probe_is_at_chance(tmp_path, capsys):
    synth = write(tmp_path / 'synth.json', dict(SYNTH, shift_enabled=False))
    assert main(['gen-data', '--config', synth, '--out', str(tmp_path / 'data')]) == EXIT_OK
    config = run_config(tmp_path, str(tmp_path / 'data' / 'manifest.json'))
    capsys.readouterr()
    accuracies = []
    for seed in ('1', '2', '3'):
        assert main(['probe', '--config', config, '--untrained', '--n-samples', '100',
                     '--seed', seed]) == EXIT_OK
        accuracies.append(float(capsys.readouterr().out))
    assert 0.3 <= sum(accuracies) / len(accuracies) <= 0.7
