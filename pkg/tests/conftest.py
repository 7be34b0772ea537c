import pathlib

import pytest

from capslang.anf import simplify_program
from capslang.congruence import NameSupply
from capslang.parser import parse
from capslang.reducer import Reducer
from capslang.typecheck import resolve_implicit_types

ROOT = pathlib.Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"


def load(src: str):
    """Parse and resolve a program from source text."""
    return resolve_implicit_types(parse(src))


def load_file(path):
    return load(pathlib.Path(path).read_text())


def reduce_source(src: str, fuel: int = 5000):
    """Full pipeline: parse, resolve, simplify, reduce.  Returns the
    simplified program and its reduction trace."""
    p = simplify_program(load(src))
    red = Reducer(p.table, NameSupply(100_000))
    return p, red.run(p.main, fuel=fuel)


@pytest.fixture(scope="session")
def corpus_accept():
    return sorted((CORPUS / "accept").glob("*.caps"))


@pytest.fixture(scope="session")
def corpus_reject():
    return sorted((CORPUS / "reject").glob("*.caps"))
