#!/usr/bin/env python
# Copyright (c) 2015-2019 The Switch Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

# Modifications copyright (c) 2025 The OmniAlign Authors. All rights reserved.

"""Sweep management module.

Trains and evaluates one model per value of a single config setting and
collects the alignment/discernibility frontier:

    omnialign sweep --param lambda_anchor --values 0,1,10,100 --out sweep_lambda

Each value runs in its own directory under --out. A queueing system
(based on lock directories within <out>/queue) makes sure every value is
run once, even by several sweep processes sharing the same --out.
Values that finished before are not rerun (use --force to rerun them);
values this job was running when it was interrupted are released again
the next time it starts, when it is restarted with the same --job-id.
"""

from __future__ import print_function

import json
import os
import socket
import sys
from concurrent.futures import ProcessPoolExecutor

import pandas as pd

from omnialign import config, reporting
from omnialign.evaluate import checkpoint_identity, evaluate
from omnialign.train import train
from omnialign.utilities import (
    ConfigInvalid,
    _ArgumentParser,
    add_standard_args,
    get_option_file_args,
    run_command,
    warn,
)

# short names for the usual sweep settings
PARAM_ALIASES = {
    "lambda_anchor": "loss.lambda_anchor",
    "alpha_max": "train.alpha_max",
    "frozen_layers": "model.frozen_layers",
}

RESULT_FILE = "result.json"
FRONTIER_COLUMNS = [
    "value",
    "alignment",
    "discernibility",
    "rgb_rgb_mismatched",
    "teacher_similarity",
    "R@1",
    "mAP",
    "teacher_alignment",
]


def resolve_param(param):
    dotted = PARAM_ALIASES.get(param, param)
    if dotted not in config.KEY_TYPES:
        raise ConfigInvalid(
            "unknown sweep parameter {}; use one of {} or a section.key name".format(
                param, ", ".join(PARAM_ALIASES)
            )
        )
    if config.KEY_TYPES[dotted] not in ("int", "float", "bool"):
        raise ConfigInvalid("sweep parameter {} is not a scalar setting".format(dotted))
    return dotted


def run_name(dotted, text):
    return "{}={}".format(dotted.split(".", 1)[1], text.strip())


def frontier_row(value, report):
    student = report["student"]
    return {
        "value": value,
        "alignment": student["diagnostics"]["alignment"],
        "discernibility": student["diagnostics"]["discernibility"],
        "rgb_rgb_mismatched": student["diagnostics"]["rgb_rgb_mismatched"],
        "teacher_similarity": report["teacher_similarity"],
        "R@1": student["retrieval"]["average"]["R@1"],
        "mAP": student["retrieval"]["average"]["mAP"],
        "teacher_alignment": report["teacher"]["diagnostics"]["alignment"],
    }


def run_value(job):
    """Train and evaluate one sweep point; runs in a worker process."""
    config_text, dotted, text, run_dir, verbose = job
    cfg = config.RunConfig.from_text(config_text)
    cfg[dotted] = text
    cfg.validate()
    os.makedirs(run_dir, exist_ok=True)
    cfg.write(os.path.join(run_dir, "config.txt"))
    ckpt_path = os.path.join(run_dir, "checkpoint.ckpt")
    result = train(
        cfg, ckpt_path, os.path.join(run_dir, "train_log.jsonl"), verbose=verbose
    )
    name, digest = checkpoint_identity(ckpt_path)
    report = evaluate(
        result.checkpoint, cfg, ("retrieval", "diagnostics"), label=name, digest=digest
    )
    reporting.write_json(os.path.join(run_dir, "report.json"), report)
    row = frontier_row(cfg[dotted], report)
    reporting.write_json(os.path.join(run_dir, RESULT_FILE), row)
    return row


class SweepQueue(object):
    """Lock-directory queue of sweep points, shared by all jobs using one --out."""

    def __init__(self, queue_dir, job_id):
        self.queue_dir = queue_dir
        self.running_file = os.path.join(queue_dir, job_id + "_running.txt")
        # list of points currently being run by this job
        self.running = []
        os.makedirs(queue_dir, exist_ok=True)

    def checkout(self, name, force=False):
        # write a flag that we are running this point before trying to lock it,
        # so an interruption in between can only cause a rerun
        self.running.append(name)
        self.write_running_file()
        try:
            # create a lock directory for this point
            os.mkdir(os.path.join(self.queue_dir, name))
            locked = True
        except FileExistsError:
            locked = False
        if locked or force:
            return True
        else:
            self.running.remove(name)
            self.write_running_file()
            return False

    def mark_completed(self, name):
        # the lock directory is left in place so the point won't get checked out again
        self.running.remove(name)
        self.write_running_file()

    def write_running_file(self):
        if self.running:
            with open(self.running_file, "w") as f:
                f.write("\n".join(self.running) + "\n")
        else:
            # remove the running file entirely if it would be empty
            try:
                os.remove(self.running_file)
            except FileNotFoundError:
                pass

    def unlock_interrupted(self):
        # remove lock directories for points this job was running when it was interrupted
        if os.path.exists(self.running_file):
            with open(self.running_file) as f:
                interrupted = f.read().splitlines()
            for name in interrupted:
                try:
                    os.rmdir(os.path.join(self.queue_dir, name))
                except FileNotFoundError:
                    pass
            os.remove(self.running_file)


def load_result(run_dir):
    path = os.path.join(run_dir, RESULT_FILE)
    if not os.path.exists(path):
        return None
    with open(path) as f:
        return json.load(f)


def run_sweep(cfg, param, values, out, jobs=1, force=False, job_id=None, verbose=False):
    """
    Run every sweep point that is not finished yet and return the frontier
    as a DataFrame with one row per value, in the order given.
    """
    dotted = resolve_param(param)
    texts = [v.strip() for v in values if v.strip()]
    if not texts:
        raise ConfigInvalid("--values needs at least one value")
    typed = [cfg.with_value(dotted, text).validate()[dotted] for text in texts]
    if len(set(typed)) != len(typed):
        raise ConfigInvalid("sweep values must be distinct")
    names = [run_name(dotted, t) for t in texts]

    queue = SweepQueue(
        os.path.join(out, "queue"),
        job_id or os.environ.get("OMNIALIGN_JOB_ID")
        or socket.gethostname() + "_" + str(os.getpid()),
    )
    queue.unlock_interrupted()

    todo = []
    for name, text in zip(names, texts):
        run_dir = os.path.join(out, name)
        if force or load_result(run_dir) is None:
            if queue.checkout(name, force=force):
                todo.append((name, (cfg.to_text(), dotted, text, run_dir, verbose)))
                continue
        if verbose:
            print("Skipping {} because it was already run.".format(name))

    print("Running {} of {} sweep points over {}.".format(len(todo), len(names), dotted))
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(name, pool.submit(run_value, job)) for name, job in todo]
            for name, future in futures:
                future.result()
                queue.mark_completed(name)
                print("Finished {}.".format(name))
    else:
        for name, job in todo:
            print("Running {}.".format(name))
            run_value(job)
            queue.mark_completed(name)

    rows = []
    for name in names:
        row = load_result(os.path.join(out, name))
        if row is None:
            warn("{} has no result yet (another job may be running it)".format(name))
            continue
        rows.append(row)
    return pd.DataFrame(rows, columns=FRONTIER_COLUMNS).set_index("value")


def write_frontier(out, dotted, frontier):
    reporting.write_json(
        os.path.join(out, "frontier.json"),
        {
            "param": dotted,
            "rows": [dict(value=v, **row) for v, row in frontier.to_dict("index").items()],
        },
    )
    text = "Frontier over {}\n{}\n".format(dotted, reporting.text_table(frontier, 4))
    with open(os.path.join(out, "frontier.txt"), "w") as f:
        f.write(text)
    reporting.write_frame(os.path.join(out, "frontier.csv"), frontier)
    return text


def define_arguments(argparser):
    add_standard_args(argparser)
    config.define_arguments(argparser)
    argparser.add_argument(
        "--param",
        required=True,
        help="Setting to sweep: lambda_anchor, alpha_max, frozen_layers "
        "or any section.key name",
    )
    argparser.add_argument(
        "--values",
        required=True,
        help="Comma-separated values, e.g. 0,1,10,100",
    )
    argparser.add_argument("--out", default="sweep", help="Sweep directory (default: sweep)")
    argparser.add_argument(
        "--jobs", type=int, default=1, help="Sweep points to run at once (default: 1)"
    )
    argparser.add_argument(
        "--force",
        default=False,
        action="store_true",
        help="Rerun sweep points that already finished",
    )
    argparser.add_argument(
        "--job-id",
        default=None,
        help="Identifier of this job, used to release points it was running "
        "when it was interrupted (default: $OMNIALIGN_JOB_ID or host_pid)",
    )


def main(args=None):
    if args is None:
        args = get_option_file_args(extra_args=sys.argv[1:])
    parser = _ArgumentParser(
        prog="omnialign sweep",
        description="Train and evaluate one model per value of a setting.",
    )
    define_arguments(parser)
    options = parser.parse_args(args)

    def body(options):
        cfg = config.run_config_from_options(options)
        if options.jobs < 1:
            raise ConfigInvalid("--jobs must be at least 1")
        os.makedirs(options.out, exist_ok=True)
        frontier = run_sweep(
            cfg,
            options.param,
            options.values.split(","),
            options.out,
            options.jobs,
            options.force,
            options.job_id,
            options.verbose,
        )
        print(write_frontier(options.out, resolve_param(options.param), frontier), end="")

    return run_command(body, options)


if __name__ == "__main__":
    sys.exit(main())
