"""
End-to-end tests of the command-line surface.

Test Coverage:

1. train: checkpoints at the step fractions, vocabularies and training log
   written; the same seed reproduces byte-identical checkpoints; a missing
   training file exits 1 naming the path
2. propagate: hops=0 keeps the payload, iteration equals hops, a family
   mismatch with --model is refused, --mode ep writes its own output
3. evaluate: report JSON keys and schema, candidate protocol is tail-only,
   a checkpoint read against another vocabulary order exits 1
4. sweep: one row per grid cell, header-only CSV for an empty grid,
   interrupted sweeps resume to the same file
5. verify: a passing property exits 0; a sign-flipped tail_context fails
   the inversion property
6. Argument and configuration errors: argparse exit code 2, load_config
   precedence, invalid values wrapped in ConfigError, shipped config files
"""

import csv
import json
import os
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.errors import ConfigError, VocabularyError
from src.evaluation import report_json_schema
from src.harness import cmd_evaluate, cmd_train, load_config
from src.harness.checkpoint import HEADER, read_header
from src.harness.verify import check_inversion
from src.main import main
from src.models import tail_context
from tests.test_ranking import assert_matches_schema

CONFIG_DIR = Path(__file__).resolve().parents[1] / 'config'


def write_dataset(directory: Path, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    entities = [f"e{i}" for i in range(15)]
    relations = ['r0', 'r1', 'r2']
    # every entity heads one training triplet so ids are fixed by train.txt
    lines = {'train': [f"{e}\t{relations[i % 3]}\t{entities[(i + 1) % 15]}"
                       for i, e in enumerate(entities)]}
    for split, count in (('train', 45), ('valid', 8), ('test', 8)):
        rows = lines.setdefault(split, [])
        for _ in range(count):
            h, t = rng.integers(15, size=2)
            rows.append(f"{entities[h]}\t{relations[rng.integers(3)]}\t{entities[t]}")
    for split, rows in lines.items():
        (directory / f"{split}.txt").write_text('\n'.join(rows) + '\n', encoding='utf-8')


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.data = self.root / 'data'
        self.data.mkdir()
        write_dataset(self.data)

    def tearDown(self):
        self.tmp.cleanup()

    def run_cli(self, *argv) -> int:
        return main([str(a) for a in argv] + ['--no-provenance'])

    def train(self, out: Path, model: str = 'transe') -> Path:
        code = self.run_cli('train', '--model', model, '--data', self.data, '--dim', 8,
                            '--epochs', 4, '--batch-size', 12, '--out', out)
        self.assertEqual(code, 0)
        return out / 'checkpoint-step20.bin'


class TestTrainCommand(CliTestCase):
    def test_outputs(self):
        out = self.root / 'run'
        self.train(out)
        names = {p.name for p in out.iterdir()}
        for expected in ('checkpoint-step5.bin', 'checkpoint-step10.bin', 'checkpoint-step15.bin',
                         'checkpoint-step20.bin', 'entities.tsv', 'relations.tsv',
                         'train.jsonl', 'train_report.json'):
            self.assertIn(expected, names)
        records = [json.loads(line) for line in (out / 'train.jsonl').read_text().splitlines()]
        self.assertEqual(len(records), 4)
        self.assertEqual(records[0]['event'], 'epoch')

    def test_same_seed_same_bytes(self):
        first = self.train(self.root / 'a')
        second = self.train(self.root / 'b')
        self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_missing_training_file(self):
        empty = self.root / 'empty'
        empty.mkdir()
        code = self.run_cli('train', '--model', 'transe', '--data', empty, '--out', self.root / 'x')
        self.assertEqual(code, 1)
        config = load_config(overrides={'data': empty, 'model': 'transe', 'out': self.root / 'x',
                                        'provenance': False})
        with self.assertRaises(ConfigError) as ctx:
            cmd_train(config)
        self.assertIn(str(empty / 'train'), str(ctx.exception))


class TestPropagateAndEvaluate(CliTestCase):
    def setUp(self):
        super().setUp()
        self.checkpoint = self.train(self.root / 'run')

    def propagate(self, hops, *extra) -> Path:
        out = self.root / 'prop'
        code = self.run_cli('propagate', '--checkpoint', self.checkpoint, '--data', self.data,
                            '--hops', hops, '--alpha', 0.9, '--out', out, *extra)
        self.assertEqual(code, 0)
        return out / f"propagated-rep-alpha0.9-hops{hops}.bin"

    def test_zero_hops_keeps_payload(self):
        path = self.propagate(0)
        self.assertEqual(path.read_bytes()[HEADER.size:],
                         self.checkpoint.read_bytes()[HEADER.size:])

    def test_iteration_counts_hops(self):
        self.assertEqual(read_header(self.propagate(3)).iteration, 3)
        self.assertEqual(read_header(self.checkpoint).iteration, 0)

    def test_evaluate_each_hop(self):
        self.assertTrue(self.propagate(2, '--evaluate-each-hop', '--split', 'valid').exists())

    def test_family_mismatch(self):
        code = self.run_cli('propagate', '--checkpoint', self.checkpoint, '--data', self.data,
                            '--model', 'distmult', '--out', self.root / 'prop')
        self.assertEqual(code, 1)

    def test_ep_mode(self):
        out = self.root / 'prop'
        code = self.run_cli('propagate', '--checkpoint', self.checkpoint, '--data', self.data,
                            '--hops', 2, '--alpha', 0.9, '--mode', 'ep', '--out', out)
        self.assertEqual(code, 0)
        ep = out / 'propagated-ep-alpha0.9-hops2.bin'
        self.assertEqual(read_header(ep).iteration, 2)
        self.assertNotEqual(ep.read_bytes(), self.propagate(2).read_bytes())
        self.assertEqual(self.run_cli('evaluate', '--checkpoint', ep, '--data', self.data,
                                      '--out', self.root / 'report.json'), 0)

    def test_vocabulary_mismatch(self):
        """A checkpoint without its vocabulary files, against data with another first-seen order"""
        bare = self.root / 'bare'
        bare.mkdir()
        checkpoint = bare / 'checkpoint.bin'
        checkpoint.write_bytes(self.checkpoint.read_bytes())
        reordered = self.root / 'reordered'
        reordered.mkdir()
        for split in ('train', 'valid', 'test'):
            text = (self.data / f"{split}.txt").read_text()
            if split == 'train':
                text = "e14\tr2\te13\n" + text
            (reordered / f"{split}.txt").write_text(text)

        code = self.run_cli('evaluate', '--checkpoint', checkpoint, '--data', reordered)
        self.assertEqual(code, 1)
        config = load_config(overrides={'data': reordered, 'checkpoint': checkpoint,
                                        'provenance': False})
        with self.assertRaises(VocabularyError) as ctx:
            cmd_evaluate(config)
        self.assertIn('entity vocabulary', str(ctx.exception))
        self.assertEqual(self.run_cli('evaluate', '--checkpoint', checkpoint, '--data', self.data,
                                      '--out', self.root / 'report.json'), 0)

    def test_evaluate_report(self):
        out = self.root / 'report.json'
        code = self.run_cli('evaluate', '--checkpoint', self.checkpoint, '--data', self.data,
                            '--out', out)
        self.assertEqual(code, 0)
        report = json.loads(out.read_text())
        self.assertEqual(set(report),
                         {'mrr', 'hits1', 'hits3', 'hits10', 'num_queries', 'head', 'tail'})
        self.assertEqual(report['num_queries'], 16)
        self.assertTrue(0 < report['mrr'] <= 1)
        assert_matches_schema(self, report, report_json_schema())

    def test_candidate_protocol(self):
        candidates = self.root / 'candidates.txt'
        candidates.write_text('\n'.join(['e0 e1 e2 e3'] * 8) + '\n')
        out = self.root / 'report.json'
        code = self.run_cli('evaluate', '--checkpoint', self.checkpoint, '--data', self.data,
                            '--protocol', 'candidates', '--candidate-file', candidates,
                            '--out', out)
        self.assertEqual(code, 0)
        report = json.loads(out.read_text())
        self.assertNotIn('head', report)
        self.assertEqual(report['num_queries'], 8)
        assert_matches_schema(self, report, report_json_schema())

    def test_short_candidate_file(self):
        candidates = self.root / 'candidates.txt'
        candidates.write_text('e0 e1\n')
        code = self.run_cli('evaluate', '--checkpoint', self.checkpoint, '--data', self.data,
                            '--protocol', 'candidates', '--candidate-file', candidates)
        self.assertEqual(code, 1)


class TestSweepCommand(CliTestCase):
    def setUp(self):
        super().setUp()
        self.checkpoint = self.train(self.root / 'run')
        self.out = self.root / 'sweep.csv'

    def sweep(self, alphas='0.9,0.95', hops='0,1,2'):
        return self.run_cli('sweep', '--checkpoint', self.checkpoint, '--data', self.data,
                            '--alpha', alphas, '--hops', hops, '--split', 'valid',
                            '--out', self.out)

    def test_rows_per_cell(self):
        self.assertEqual(self.sweep(), 0)
        with open(self.out, newline='') as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(len(rows), 6)
        self.assertEqual([(r['alpha'], r['hops']) for r in rows[:3]],
                         [('0.9', '0'), ('0.9', '1'), ('0.9', '2')])
        self.assertEqual(rows[0]['mrr'], rows[3]['mrr'])  # hops=0 is the same baseline

    def test_empty_grid(self):
        self.assertEqual(self.sweep(hops=''), 0)
        self.assertEqual(self.out.read_text(),
                         'checkpoint,mode,alpha,hops,mrr,hits1,hits3,hits10\n')

    def test_resume(self):
        self.assertEqual(self.sweep(), 0)
        complete = self.out.read_bytes()
        lines = complete.decode().splitlines()
        self.out.write_text('\n'.join(lines[:3]) + '\n')
        self.assertEqual(self.sweep(), 0)
        self.assertEqual(self.out.read_bytes(), complete)
        self.assertEqual(self.sweep(), 0)
        self.assertEqual(self.out.read_bytes(), complete)


class TestVerifyAndArguments(unittest.TestCase):
    def test_verify_passes(self):
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / 'verify.json'
            code = main(['verify', '--property', 'sgd-equivalence', '--property', 'inversion',
                         '--out', str(out), '--no-provenance'])
            self.assertEqual(code, 0)
            report = json.loads(out.read_text())
            self.assertTrue(report['passed'])
            self.assertEqual([p['name'] for p in report['properties']],
                             ['sgd-equivalence', 'inversion'])

    def test_inversion_detects_sign_flip(self):
        def flipped(spec, t, ops):
            return -tail_context(spec, t, ops)

        self.assertTrue(check_inversion(samples=100).passed)
        with patch('src.harness.verify.tail_context', flipped):
            result = check_inversion(samples=100)
            self.assertFalse(result.passed)
            self.assertGreater(result.value, result.tolerance)
            code = main(['verify', '--property', 'inversion', '--no-provenance'])
        self.assertEqual(code, 1)

    def test_argparse_errors(self):
        test_cases = [
            ['train', '--model', 'complex'],
            ['propagate', '--hops', 'many'],
            ['unknown-command'],
            [],
        ]
        for argv in test_cases:
            with self.subTest(argv=argv):
                with self.assertRaises(SystemExit) as ctx:
                    main(argv)
                self.assertEqual(ctx.exception.code, 2)

    def test_invalid_value_exits_1(self):
        self.assertEqual(main(['propagate', '--alpha', '1.5', '--no-provenance']), 1)


class TestLoadConfig(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'run.conf'
        self.path.write_text("# comment\nDIM=16\nlr=0.5\nsweep-hops=1,3\nmodel=rotate\n")

    def tearDown(self):
        self.tmp.cleanup()

    def test_precedence(self):
        config = load_config(self.path, {'dim': 32, 'lr': None})
        self.assertEqual(config.dim, 32)
        self.assertEqual(config.lr, 0.5)
        self.assertEqual(config.sweep_hops, (1, 3))
        self.assertEqual(config.model_spec().family, 'rotate')
        self.assertEqual(load_config().dim, 200)

    def test_errors(self):
        test_cases = [
            {'path': self.path, 'overrides': {'alpha': 1.5}},
            {'path': self.path, 'overrides': {'dim': 15}},  # odd RotatE dimension
            {'path': self.path, 'overrides': {'colour': 'blue'}},
            {'path': Path(self.tmp.name) / 'missing.conf', 'overrides': {}},
        ]
        for case in test_cases:
            with self.subTest(overrides=case['overrides']):
                with self.assertRaises(ConfigError):
                    load_config(case['path'], case['overrides'])

    def test_shipped_configs(self):
        for path in sorted(CONFIG_DIR.glob('*.conf')):
            with self.subTest(config=path.name):
                config = load_config(path)
                self.assertIsNotNone(config.data)


if __name__ == '__main__':
    unittest.main()
