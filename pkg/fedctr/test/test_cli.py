import filecmp
import os
import subprocess
import sys
import tempfile
from typing import List

import pytest

from fedctr import cli
from fedctr.evaluation import read_report

TINY_CONFIG = """\
# tiny federation
experiment = tiny
synthetic_users = 30
synthetic_topics = 4
synthetic_vocab = 60
synthetic_ads = 10
synthetic_behaviors = 4
synthetic_impressions = 4
word_dim = 8
num_heads = 2
head_dim = 4
pooling_dim = 6
id_dim = 4
max_tokens = 6
max_behaviors = 5
epochs = 0
attack_instances = 20
repeats = 1
"""


@pytest.fixture(scope="module")
def tempdir():
    tmp = tempfile.TemporaryDirectory()
    yield tmp.__enter__()
    tmp.cleanup()


@pytest.fixture(scope="module")
def config_file(tempdir):
    path = os.path.join(tempdir, "tiny.cfg")
    with open(path, "w") as f:
        f.write(TINY_CONFIG)
    return path


def run_cmd(cmd: List[str]) -> None:
    result = subprocess.run(
        cmd,
        check=True,
        capture_output=True,
        text=True,
    )
    print(result.stderr)
    print(result.stdout)


def test_cli_help():
    run_cmd([sys.executable, "-m", "fedctr", "-h"])
    run_cmd([sys.executable, "-m", "fedctr", "train", "-h"])


def test_no_args():
    with pytest.raises(subprocess.CalledProcessError):
        run_cmd([sys.executable, "-m", "fedctr"])


def test_usage_errors():
    assert cli.main(["train", "--no-such-flag"]) == 2
    assert cli.main(["ablate"]) == 2
    assert cli.main(["train", "--predictor", "linear"]) == 2
    assert cli.main(["gen-data", "-h"]) == 0


def test_parser_defaults():
    parser = cli.make_parser()
    args = parser.parse_args(["gen-data"])
    assert args.out == "data"
    assert args.func is cli.gen_data
    args = parser.parse_args(["train", "--platforms", "2,1", "--lambda-ldp", "0"])
    assert args.out == "results"
    assert args.platforms == "2,1"
    config = cli.load_config(args)
    assert config.platforms == [2, 1]
    assert config.lambda_ldp == 0.0

    # Only gen-data writes to the dataset directory by default.
    for command in (["evaluate"], ["attack"], ["gradcheck"], ["ablate", "--kind", "noise"]):
        assert parser.parse_args(command).out == "results"
    assert parser.parse_args(["gen-data", "-o", "elsewhere"]).out == "elsewhere"
    assert cli.make_parser().parse_args(["gen-data"]).out == "data"


def test_gen_data_is_deterministic(tempdir, config_file, capsys):
    first = os.path.join(tempdir, "data-1")
    second = os.path.join(tempdir, "data-2")
    for out in (first, second):
        assert cli.main(["gen-data", "--config", config_file, "--seed", "7", "-o", out]) == 0
    assert "impressions = 120" in capsys.readouterr().out
    names = sorted(os.listdir(first))
    assert "behaviors_platform_2.txt" in names
    match, _, _ = filecmp.cmpfiles(first, second, names, shallow=False)
    assert match == names


def test_train(tempdir, config_file, capsys):
    out = os.path.join(tempdir, "train")
    assert cli.main(["train", "--config", config_file, "--seed", "3", "-o", out]) == 0
    assert "auc = " in capsys.readouterr().out
    report = read_report(os.path.join(out, "tiny.txt"))
    assert report.config.seed == 3
    assert report.config.synthetic_users == 30


def test_train_on_saved_data(tempdir, config_file):
    data = os.path.join(tempdir, "data-train")
    assert cli.main(["gen-data", "--config", config_file, "-o", data]) == 0
    out = os.path.join(tempdir, "train-saved")
    argv = ["train", "--config", config_file, "--data", data, "--name", "saved", "-o", out]
    assert cli.main(argv) == 0
    assert read_report(os.path.join(out, "saved.txt")).config.data == data


def test_attack(tempdir, config_file, capsys):
    out = os.path.join(tempdir, "attack")
    argv = ["attack", "--config", config_file, "--attack-instances", "10", "-o", out]
    assert cli.main(argv) == 0
    printed = capsys.readouterr().out
    assert "local_1 = " in printed
    assert "aggregated = " in printed


def test_evaluate(tempdir, config_file):
    out = os.path.join(tempdir, "evaluate")
    assert cli.main(["evaluate", "--config", config_file, "--repeats", "2", "-o", out]) == 0
    assert sorted(os.listdir(out)) == ["tiny-1.txt", "tiny.txt", "tiny_summary.csv"]


def test_ablate_platforms(tempdir, config_file):
    out = os.path.join(tempdir, "ablate")
    argv = ["ablate", "--config", config_file, "--kind", "platforms", "--plot", "-o", out]
    assert cli.main(argv) == 0
    assert os.path.exists(os.path.join(out, "tiny_platforms.csv"))
    assert os.path.exists(os.path.join(out, "tiny_platforms.png"))
    with open(os.path.join(out, "tiny_platforms.csv")) as f:
        assert len(f.read().splitlines()) == 3


def test_gradcheck(capsys):
    assert cli.main(["gradcheck", "--max-coords", "4"]) == 0
    assert "aggregator" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--lambda-ldp", "-1"],
        ["train", "--train-fraction", "0"],
        ["train", "--config", "/nonexistent/fedctr.cfg"],
        ["train", "--predictor", "dot", "--aggregator", "concat"],
    ],
)
def test_invalid_config(argv, tempdir):
    assert cli.main(argv + ["-o", os.path.join(tempdir, "invalid")]) == 2


def test_other_errors_exit_one(tempdir, config_file):
    missing = os.path.join(tempdir, "no-such-data")
    argv = ["train", "--config", config_file, "--data", missing, "-o", tempdir]
    assert cli.main(argv) == 1
