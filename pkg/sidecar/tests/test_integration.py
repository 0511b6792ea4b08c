"""Drive the engine pipeline against the sidecar over the wire protocol."""

import json

from fastapi.testclient import TestClient

from pairdiff.backend.client import HTTPBackend
from pairdiff.config import ThresholdConfig
from pairdiff.runner import PipelineRunner

from sidecar.bindings import default_bindings
from sidecar.server import create_app


def test_pipeline_runs_end_to_end_via_http(tmp_path):
    app = create_app(default_bindings(), max_batch=16)
    backend = HTTPBackend("http://testserver")
    backend._client = TestClient(app)

    captions = tmp_path / "captions.jsonl"
    with open(captions, "w") as f:
        for i, caption in enumerate(
            ["a red square and a blue circle", "a green circle", "a yellow square and a cyan circle"]
        ):
            f.write(json.dumps({"id": f"c{i}", "caption": caption}) + "\n")

    runner = PipelineRunner(
        tmp_path / "run", ThresholdConfig(), captions, backend=backend
    )
    runner.run()
    funnel = runner.aggregate_funnel()
    assert funnel.validate() == []
    assert (tmp_path / "run/dataset/manifest.json").exists()
