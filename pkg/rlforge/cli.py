#! /usr/bin/env python
"""
Command-line interface for rlforge.
"""
__license__ = "MIT"

import argparse
import datetime
import json
import os
import shutil
import sys
from multiprocessing import cpu_count

import yaml
from psutil import virtual_memory

from rlforge import __version__
from rlforge.workflow.scripts.bench import bench, env_factories
from rlforge.workflow.scripts.collector import EVAL_MODES, Collector, evaluate
from rlforge.workflow.scripts.envs import make_env, parse_env_id
from rlforge.workflow.scripts.policy import POLICY_MAGIC, load_policy, make_policy
from rlforge.workflow.scripts.replay import load_buffer, make_buffer, save_buffer
from rlforge.workflow.scripts.returns import DiscountParams
from rlforge.workflow.scripts.serialization import atomic_write, read_bytes
from rlforge.workflow.scripts.trainer import CsvLogger, Trainer, TrainerConfig, read_checkpoint
from rlforge.workflow.scripts.utilities import (
    EXIT_CONFIG,
    EXIT_EARLY_STOP,
    EXIT_RUNTIME,
    EXIT_SUCCESS,
    ArgumentCustomFormatter,
    EnvIdType,
    FloatRangeType,
    FormatError,
    IntRangeType,
    PositiveIntType,
    ReadableFileType,
    RLForgeError,
    StorageError,
    ValidationError,
    WritablePathType,
    canonical_json,
    load_yaml,
    merge_config,
    parse_override,
    print_error,
    print_info,
    print_warning,
)
from rlforge.workflow.scripts.vector_env import ENV_MODES, make_vector_env

MAX_CPU = cpu_count()
MAX_MEM_MB = int(virtual_memory().total / 1024 ** 2)

CODE_DIR = os.path.abspath(os.path.dirname(__file__))

CONFIG_DEFAULT = f"{CODE_DIR}/config/config.yaml"

COMMANDS = ["train", "eval", "buffer", "bench", "config"]

BUFFER_MODES = ["export", "import", "info"]
CONFIG_MODES = ["dump"]

OUTPUT_ENV_VAR = "RLFORGE_OUT"

OVERRIDES_EPILOG = "Any configuration key can be overridden with --section.key=value, e.g. --trainer.max_epoch=5"

# file names inside the output directory
CONFIG_JSON = "config.json"
CONFIG_YAML = "config.yaml"
LOGS_CSV = "logs.csv"
REPORT_JSON = "report.json"
CHECKPOINT = "checkpoint.tsck"
FINAL_BUFFER = "final_buffer.tsbf"
DATASET = "dataset.tsbf"


class RLForge(object):
    """
    Command-line interface for running `rlforge`
    """

    def __init__(self):
        parser = argparse.ArgumentParser(
            usage="""rlforge <command> [<args>]

The rlforge commands are:
   train          Train a policy (on-policy, off-policy or offline)
   eval           Evaluate a saved policy or checkpoint
   buffer         Export, import or inspect replay buffer files
   bench          Compare lock-step and asynchronous collection throughput
   config         Print the effective configuration

""",
        )
        parser.add_argument("command", choices=COMMANDS, help="Command to run")

        # get the CLI arguments
        args, _ = self._parse_args(parser, level=1)

        # load the default config
        self.config_default = load_yaml(CONFIG_DEFAULT)

        try:
            # call the class method with the name given by `command`
            reval = getattr(self, args.command)()
            exit(reval)

        except ValidationError as error:
            print_error(f"{error}", EXIT_CONFIG)

        except RLForgeError as error:
            print_error(f"{type(error).__name__}: {error}", EXIT_RUNTIME)

        except OSError as error:
            print_error(f"{type(error).__name__}: {error}", EXIT_RUNTIME)

    @staticmethod
    def _parse_args(parser, level=1, known=False):
        """
        Handle the nested-subcommand CLI interface.
        """

        # if we don't have enough arguments, then print the help
        if len(sys.argv) <= level:
            parser.print_help()
            parser.exit()

        if {"-v", "--version"}.intersection(sys.argv):
            print(__version__)
            parser.exit()

        # slice the CLI arguments
        argv = sys.argv[1:2] if level == 1 else sys.argv[level:]

        if known:
            return parser.parse_known_args(argv)

        return parser.parse_args(argv), []

    def _config_arguments(self, parser):
        """
        Add the arguments that feed the effective configuration, shared by `train`, `bench` and `config`
        """
        common = parser.add_argument_group("Common arguments")

        # add the help option manually so we can control where it is shown in the menu
        common.add_argument("-h", "--help", action="help", help="Show this help message and exit")
        common.add_argument(
            "-v", "--version", action="version", version=__version__, help="Print the version number and exit"
        )

        common.add_argument(
            "--config",
            help="YAML file merged over the default configuration",
            metavar="<path>",
            type=ReadableFileType(),
        )

        common.add_argument(
            "--seed",
            help=f"Seed of the run (default: {self.config_default['trainer']['seed']})",
            metavar="<int>",
            type=IntRangeType(0, 2 ** 63 - 1),
            default=argparse.SUPPRESS,
        )

        common.add_argument(
            "--num-envs",
            help=f"Number of training environments (default: {self.config_default['venv']['num_envs']})",
            metavar="<int>",
            type=IntRangeType(1, 1024),
            default=argparse.SUPPRESS,
        )

        common.add_argument(
            "--env-mode",
            help=f"Vector env execution mode [%(choices)s] (default: {self.config_default['venv']['mode']})",
            metavar="<mode>",
            choices=ENV_MODES,
            default=argparse.SUPPRESS,
        )

        common.add_argument(
            "--async-min-ready",
            help="Minimum number of finished envs per wait in async mode "
            f"(default: {self.config_default['venv']['async_min_ready']})",
            metavar="<int>",
            type=PositiveIntType(),
            default=argparse.SUPPRESS,
        )

        common.add_argument(
            "--output",
            help=f"Output directory (default: ${OUTPUT_ENV_VAR} or {self.config_default['output']['dir']})",
            metavar="<path>",
            type=WritablePathType(),
            default=argparse.SUPPRESS,
        )

    def _effective_config(self, args, extras, base=None):
        """
        Merge the configuration layers: defaults < base < config file < dotted overrides < dedicated flags.
        """
        config = merge_config(self.config_default, base or {})

        if getattr(args, "config", None):
            config = merge_config(config, load_yaml(args.config))

        for extra in extras:
            if not extra.startswith("--") or "." not in extra.split("=")[0]:
                raise ValidationError(f"Unrecognized argument '{extra}'")

            config = merge_config(config, parse_override(extra))

        if os.environ.get(OUTPUT_ENV_VAR):
            config["output"]["dir"] = os.environ[OUTPUT_ENV_VAR]

        flags = {
            "seed": ("trainer", "seed"),
            "num_envs": ("venv", "num_envs"),
            "env_mode": ("venv", "mode"),
            "async_min_ready": ("venv", "async_min_ready"),
            "output": ("output", "dir"),
        }

        for name, (section, key) in flags.items():
            if name in vars(args):
                config[section][key] = vars(args)[name]

        self._check_config(config)
        return config

    @staticmethod
    def _check_config(config):
        parse_env_id(config["env"]["id"])

        if config["env"]["test_id"] is not None:
            parse_env_id(config["env"]["test_id"])

        overrides = {}
        for key, value in (config["env"]["overrides"] or {}).items():
            if not str(key).isdigit():
                raise ValidationError(f"env.overrides keys must be env indices, got '{key}'")

            parse_env_id(value)
            overrides[str(key)] = value

        # string keys, so the echoed config survives a JSON round trip unchanged
        config["env"]["overrides"] = overrides

        if config["venv"]["mode"] not in ENV_MODES:
            raise ValidationError(f"venv.mode must be one of {ENV_MODES}")

        for key in ("num_envs", "test_num_envs", "async_min_ready"):
            if not isinstance(config["venv"][key], int) or config["venv"][key] < 1:
                raise ValidationError(f"venv.{key} must be a positive integer")

        try:
            TrainerConfig.from_config(config["trainer"])
            DiscountParams(config["returns"]["gamma"], config["returns"]["lam"], config["returns"]["n_step"])
        except TypeError as error:
            raise ValidationError(f"Invalid configuration value: {error}")

    def train(self):
        """
        Train a policy
        """
        # noinspection PyTypeChecker
        parser = argparse.ArgumentParser(
            prog="rlforge train",
            description="Train a policy with the configured paradigm",
            epilog=OVERRIDES_EPILOG,
            formatter_class=ArgumentCustomFormatter,
            add_help=False,
        )

        optional = parser.add_argument_group("Optional arguments")

        optional.add_argument(
            "--resume",
            help="Continue the run stored in this checkpoint",
            metavar="<path>",
            type=ReadableFileType(),
        )

        self._config_arguments(parser)

        # get the CLI arguments
        args, extras = self._parse_args(parser, level=2, known=True)

        base = None
        if args.resume:
            base = read_checkpoint(args.resume)[0]["config"]

        config = self._effective_config(args, extras, base)
        out = config["output"]["dir"]
        os.makedirs(out, exist_ok=True)

        self._echo_config(config, out)
        self._print_header(config)

        report = self._run_training(config, out, resume=args.resume)
        report.save(os.path.join(out, REPORT_JSON))

        print_info(
            f"Finished after {report.env_steps} env steps and {report.update_steps} updates, "
            f"best eval score {report.best_score}",
            config["log"]["verbose"],
        )

        return EXIT_EARLY_STOP if report.early_stop else EXIT_SUCCESS

    def _run_training(self, config, out, resume=None):
        paradigm = config["trainer"]["paradigm"]
        venv_config = config["venv"]
        n_envs = venv_config["num_envs"]

        spec = make_env(config["env"]["id"]).spec()
        policy = make_policy(config["policy"], spec)
        params = DiscountParams(**config["returns"])
        trainer_config = TrainerConfig.from_config(config["trainer"], checkpoint_path=os.path.join(out, CHECKPOINT))

        test_id = config["env"]["test_id"] or config["env"]["id"]
        test_venv = make_vector_env(venv_config["mode"], env_factories(test_id, venv_config["test_num_envs"]))
        venv = None

        try:
            if paradigm == "offline":
                if not config["offline"]["dataset"]:
                    raise ValidationError("Offline training needs `offline.dataset` (see `rlforge buffer import`)")

                buffer = load_buffer(config["offline"]["dataset"])
                collector = None
            else:
                factories = env_factories(config["env"]["id"], n_envs, config["env"]["overrides"])
                venv = make_vector_env(venv_config["mode"], factories)
                buffer = make_buffer(config["buffer"], n_envs)
                collector = Collector(
                    policy,
                    venv,
                    buffer,
                    seed=config["trainer"]["seed"],
                    max_steps_without_episode=config["trainer"]["max_steps_without_episode"],
                )

            trainer = Trainer(
                policy,
                trainer_config,
                params,
                collector=collector,
                buffer=buffer,
                test_venv=test_venv,
                output_dir=out,
                logger=CsvLogger(os.path.join(out, LOGS_CSV), config["log"]["wall_clock"], append=bool(resume)),
                run_config=config,
                async_min_ready=venv_config["async_min_ready"] if venv_config["mode"] == "async" else None,
                wait_timeout=venv_config["wait_timeout"],
                beta_final=config["buffer"]["beta_final"],
                verbose=config["log"]["verbose"],
            )

            if resume:
                trainer.load_checkpoint(resume)

                if trainer.epoch >= trainer_config.max_epoch:
                    print_warning(
                        f"Checkpoint is already at epoch {trainer.epoch}, raise trainer.max_epoch to continue training"
                    )

            report = trainer.run()

            if paradigm != "offline":
                save_buffer(buffer, os.path.join(out, FINAL_BUFFER))
        finally:
            test_venv.close()
            if venv is not None:
                venv.close()

        return report

    def eval(self):
        """
        Evaluate a saved policy
        """
        # noinspection PyTypeChecker
        parser = argparse.ArgumentParser(
            prog="rlforge eval",
            description="Evaluate a policy file (TSPL) or a training checkpoint (TSCK)",
            formatter_class=ArgumentCustomFormatter,
            add_help=False,
        )

        required = parser.add_argument_group("Required arguments")

        required.add_argument(
            "--checkpoint",
            help="Policy file or checkpoint to evaluate",
            metavar="<path>",
            required=True,
        )

        optional = parser.add_argument_group("Optional arguments")

        optional.add_argument("-h", "--help", action="help", help="Show this help message and exit")

        optional.add_argument(
            "--env",
            help="Environment id (default: the checkpoint's test env, or the default env)",
            metavar="<id>",
            type=EnvIdType(),
        )

        optional.add_argument(
            "--episodes",
            help="Number of evaluation episodes",
            metavar="<int>",
            type=PositiveIntType(),
            default=self.config_default["trainer"]["eval_episodes"],
        )

        optional.add_argument(
            "--mode",
            help="Action selection [%(choices)s]",
            metavar="<mode>",
            choices=EVAL_MODES,
            default=self.config_default["trainer"]["eval_mode"],
        )

        optional.add_argument(
            "--eval-seed",
            help="Seed of the evaluation episodes",
            metavar="<int>",
            type=IntRangeType(0, 2 ** 63 - 1),
            default=self.config_default["trainer"]["eval_seed"],
        )

        optional.add_argument(
            "--num-envs",
            help="Number of evaluation environments",
            metavar="<int>",
            type=IntRangeType(1, 1024),
            default=self.config_default["venv"]["test_num_envs"],
        )

        # get the CLI arguments
        args, _ = self._parse_args(parser, level=2)

        config = self.config_default

        try:
            if read_bytes(args.checkpoint)[: len(POLICY_MAGIC)] == POLICY_MAGIC:
                policy = load_policy(args.checkpoint)
            else:
                manifest, policy, _ = read_checkpoint(args.checkpoint)
                config = manifest["config"] or config
        except (FormatError, StorageError) as error:
            raise ValidationError(f"Unable to read checkpoint '{args.checkpoint}': {error}")

        env_id = args.env or config["env"]["test_id"] or config["env"]["id"]

        with make_vector_env("dummy", env_factories(env_id, args.num_envs)) as venv:
            if venv.spec().obs_dim != policy.obs_dim:
                raise ValidationError(f"Env '{env_id}' does not match the policy's observation size")

            stats = evaluate(policy, venv, args.episodes, mode=args.mode, seed=args.eval_seed)

        result = {
            "env": env_id,
            "mode": args.mode,
            "episodes": stats.n_collected_episodes,
            "mean": stats.mean_return,
            "std": stats.std_return,
            "returns": stats.episode_returns,
            "lengths": stats.episode_lengths,
        }
        print(json.dumps(result, indent=2))

        return EXIT_SUCCESS

    def buffer(self):
        """
        Replay buffer file utilities
        """
        # noinspection PyTypeChecker
        parser = argparse.ArgumentParser(
            prog="rlforge buffer",
            usage="rlforge buffer {export,import,info} [<args>]",
            description="Export, import or inspect replay buffer files",
        )
        parser.add_argument("mode", choices=BUFFER_MODES, help="Buffer operation")

        if len(sys.argv) <= 2:
            parser.print_help()
            parser.exit()

        # only the mode is parsed here, the mode's own parser takes the rest
        args = parser.parse_args(sys.argv[2:3])
        sys.argv = sys.argv[:2] + sys.argv[3:]

        return getattr(self, f"_buffer_{args.mode}")()

    def _buffer_parser(self, mode, description):
        # noinspection PyTypeChecker
        parser = argparse.ArgumentParser(
            prog=f"rlforge buffer {mode}",
            description=description,
            formatter_class=ArgumentCustomFormatter,
            add_help=False,
        )
        parser.add_argument_group("Optional arguments").add_argument(
            "-h", "--help", action="help", help="Show this help message and exit"
        )
        return parser, parser.add_argument_group("Required arguments")

    def _buffer_export(self):
        parser, required = self._buffer_parser("export", "Write the final buffer of a run as a TSBF file")

        required.add_argument(
            "--from",
            help="Run output directory or off-policy checkpoint",
            metavar="<path>",
            dest="source",
            required=True,
        )

        required.add_argument("--output", help="TSBF file to write", metavar="<path>", required=True)

        args, _ = self._parse_args(parser, level=2)

        if os.path.isdir(args.source):
            buffer = load_buffer(os.path.join(args.source, FINAL_BUFFER))
        else:
            buffer = read_checkpoint(args.source)[2]

            if buffer is None:
                raise ValidationError(f"Checkpoint '{args.source}' does not hold a buffer")

        save_buffer(buffer, args.output)
        self._print_buffer(buffer)

        return EXIT_SUCCESS

    def _buffer_import(self):
        parser, required = self._buffer_parser("import", "Validate a TSBF dataset and copy it into a run directory")

        required.add_argument("--input", help="TSBF file to import", metavar="<path>", required=True)

        required.add_argument(
            "--output",
            help="Output directory that receives the dataset",
            metavar="<path>",
            type=WritablePathType(),
            required=True,
        )

        args, _ = self._parse_args(parser, level=2)

        buffer = load_buffer(args.input)
        target = os.path.join(args.output, DATASET)
        shutil.copyfile(args.input, target)

        self._print_buffer(buffer)
        print_info(f"Imported dataset to '{target}', train on it with --offline.dataset={target}")

        return EXIT_SUCCESS

    def _buffer_info(self):
        parser, required = self._buffer_parser("info", "Print the summary of a TSBF file")

        required.add_argument("path", help="TSBF file", metavar="<path>")

        args, _ = self._parse_args(parser, level=2)

        self._print_buffer(load_buffer(args.path))

        return EXIT_SUCCESS

    @staticmethod
    def _print_buffer(buffer):
        summary = buffer.summary()
        print(summary.to_string(index=False))

        totals = {
            "layout": buffer.layout,
            "n_envs": buffer.n_envs,
            "capacity": buffer.total_capacity,
            "size": len(buffer),
            "episodes": int(summary["episodes"].sum()),
            "tail_index": buffer.tail_index().tolist(),
        }
        print(json.dumps(totals))

    def bench(self):
        """
        Benchmark lock-step against asynchronous collection
        """
        # noinspection PyTypeChecker
        parser = argparse.ArgumentParser(
            prog="rlforge bench",
            description="Compare lock-step and asynchronous collection throughput",
            epilog=OVERRIDES_EPILOG,
            formatter_class=ArgumentCustomFormatter,
            add_help=False,
        )

        optional = parser.add_argument_group("Optional arguments")

        optional.add_argument(
            "--duration",
            help=f"Seconds per collection mode (default: {self.config_default['bench']['duration']})",
            metavar="<float>",
            type=FloatRangeType(0.01, 3600),
            default=argparse.SUPPRESS,
        )

        self._config_arguments(parser)

        args, extras = self._parse_args(parser, level=2, known=True)
        config = self._effective_config(args, extras)

        if "duration" in vars(args):
            config["bench"]["duration"] = args.duration

        self._print_header(config)

        report = bench(
            config["env"]["id"],
            config["venv"]["num_envs"],
            config["bench"]["duration"],
            overrides=config["env"]["overrides"],
            min_ready=config["venv"]["async_min_ready"],
            seed=config["trainer"]["seed"],
            verbose=config["log"]["verbose"],
        )
        print(json.dumps(report, indent=2))

        return EXIT_SUCCESS

    def config(self):
        """
        Configuration options
        """
        # noinspection PyTypeChecker
        parser = argparse.ArgumentParser(
            prog="rlforge config",
            description="Print the effective configuration as canonical JSON",
            epilog=OVERRIDES_EPILOG,
            formatter_class=ArgumentCustomFormatter,
            add_help=False,
        )

        parser.add_argument("mode", choices=CONFIG_MODES, help="Configuration operation")

        self._config_arguments(parser)

        args, extras = self._parse_args(parser, level=2, known=True)
        print(canonical_json(self._effective_config(args, extras)))

        return EXIT_SUCCESS

    @staticmethod
    def _echo_config(config, out):
        """
        Save the effective configuration next to the run outputs
        """
        atomic_write(os.path.join(out, CONFIG_JSON), (canonical_json(config) + "\n").encode())
        atomic_write(os.path.join(out, CONFIG_YAML), yaml.safe_dump(config, default_flow_style=False).encode())

    @staticmethod
    def _print_header(config):
        """
        Print the run header to stderr
        """
        verbose = config["log"]["verbose"]

        print_info(f"RLFORGE v {__version__}\n", verbose)
        print_info(f"Date: {datetime.datetime.now()}\n", verbose)
        print_info(f"Host: {MAX_CPU} CPUs, {MAX_MEM_MB} MB memory\n", verbose)

        print_info("Config parameters:\n", verbose)
        for section, values in config.items():
            for key, value in values.items():
                print_info(f" {section}.{key}: {value}", verbose)
        print_info("\n", verbose)


def main():
    RLForge()


if __name__ == "__main__":
    main()
