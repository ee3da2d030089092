#!/usr/bin/env python3
# Copyright 2026 The dptab Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Converts the UCI Adult census files (adult.data + adult.test) into one CSV.

Keeps 7 categorical and 6 numerical columns. `education` is dropped because
`education-num` encodes it one-to-one, and `native-country` is dropped.
Missing values ("?") are kept as an ordinary category.

usage: adult_to_csv.py adult.data adult.test > data/adult.csv
"""
import csv
import sys

UCI_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]
KEEP = [
    "age", "workclass", "fnlwgt", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain",
    "capital-loss", "hours-per-week", "income",
]


def rows(path):
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(UCI_COLUMNS):
                continue
            record = dict(zip(UCI_COLUMNS, cells))
            record["income"] = record["income"].rstrip(".")
            yield [record[k] for k in KEEP]


def main(argv):
    if len(argv) < 2:
        sys.exit(__doc__)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(KEEP)
    for path in argv[1:]:
        for row in rows(path):
            out.writerow(row)


if __name__ == "__main__":
    main(sys.argv)
