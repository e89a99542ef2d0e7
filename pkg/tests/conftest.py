from __future__ import annotations

from hypothesis import settings, strategies as st

from prompt_kit.events import VALID_ARGS, Event, EventKind, EventSpec

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

PAYLOAD_KINDS = [k for k in EventKind if k is not EventKind.STREAM_END]


@st.composite
def events(draw, kinds=PAYLOAD_KINDS):
    kind = draw(st.sampled_from(kinds))
    args = VALID_ARGS[kind]
    fields = {}
    if "address" in args:
        fields["address"] = draw(st.integers(0, 2**64 - 1))
    if "value" in args:
        fields["value"] = draw(st.integers(0, 2**64 - 1))
    if "size" in args:
        if kind in (EventKind.LOAD, EventKind.STORE):
            fields["size"] = draw(st.sampled_from([1, 2, 4, 8]))
        else:
            fields["size"] = draw(st.integers(1, 2**24 - 1))
    if "type_id" in args:
        fields["type_id"] = draw(st.integers(0, 2**16 - 1))
    return Event(kind, draw(st.integers(0, 2**32 - 1)), **fields)


@st.composite
def specs(draw):
    wanted = {}
    for kind in PAYLOAD_KINDS:
        if draw(st.booleans()):
            args = list(VALID_ARGS[kind])
            chosen = draw(st.lists(st.sampled_from(args), unique=True)) if args else []
            wanted[kind] = tuple(chosen)
    return EventSpec("m", wanted)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for name in sorted(ACCEPTANCE, key=lambda n: (len(n), n)):
            terminalreporter.write_line(ACCEPTANCE[name])
