"""Shared fixture: the 10-image conformance set.

toy_inputs is imported lazily so collecting this directory stays possible
in environments where the extractor package and its dependencies are absent
(the test modules themselves skip via importorskip).
"""

import pytest


@pytest.fixture(scope="session")
def toy_set(tmp_path_factory):
    """10 images with annotations, per the conformance contract."""
    from toy_inputs import toy_records, write_annotations

    root = tmp_path_factory.mktemp("toyset")
    (root / "images").mkdir()
    records = toy_records(10, root / "images")
    ann = write_annotations(root / "annotations.jsonl", records)
    return root, ann, records
