import pytest
from fastapi.testclient import TestClient

from subnav.service import app

client = TestClient(app)


def graph_payload():
    return {
        "scan": "svc",
        "nodes": [
            {"id": "A", "x": 0.0, "y": 0.0, "z": 0.0},
            {"id": "B", "x": 0.5, "y": 0.0, "z": 0.0},
            {"id": "C", "x": 3.0, "y": 0.0, "z": 0.0},
            {"id": "D", "x": 9.0, "y": 0.0, "z": 0.0},
        ],
        "edges": [["A", "B"], ["B", "C"], ["C", "D"]],
    }


def episode_payload(path_id="e0", path=("A", "B", "C"),
                    sub_paths=((0, 1), (1, 2))):
    return {
        "path_id": path_id,
        "scan": "svc",
        "path": list(path),
        "instruction": "walk then stop",
        "sub_instructions": [["walk", "to", "the", "bench"],
                             ["stop", "right", "there"]][:len(sub_paths)],
        "sub_paths": [list(sp) for sp in sub_paths],
        "heading": 0.0,
    }


def test_health_and_version():
    assert client.get("/health").json() == {"status": "ok"}
    assert "version" in client.get("/version").json()


def test_chunk_endpoint(fixtures_dir):
    conllu = (fixtures_dir / "walkthrough.conllu").read_text(encoding="utf-8")
    response = client.post("/chunk", json={"conllu": conllu})
    assert response.status_code == 200
    body = response.json()
    subs = body["instructions"][0]["sub_instructions"]
    assert [len(c) for c in subs] == [5, 9, 8, 3]
    assert [w.lower() for w in subs[3]] == ["and", "wait", "there"]
    spans = body["instructions"][0]["spans"]
    assert spans[0] == [[1, 5]]


def test_chunk_rejects_malformed_input():
    response = client.post("/chunk", json={"conllu": "1\tbroken"})
    assert response.status_code == 400


def test_validate_endpoint_flags_bad_alignment():
    good = episode_payload()
    bad = episode_payload(path_id="e1", sub_paths=((0, 0), (1, 2)))
    response = client.post("/episodes/validate", json={
        "episodes": [good, bad], "graph": graph_payload()})
    assert response.status_code == 200
    body = response.json()
    assert body["valid"] is False
    assert body["errors"] == [
        {"path_id": "e1", "rule": "boundary mismatch at sub-path 1"}]


def test_stats_endpoint():
    response = client.post("/episodes/stats",
                           json={"episodes": [episode_payload()]})
    assert response.status_code == 200
    body = response.json()
    assert body["mean_subinstr_per_instr"] == pytest.approx(2.0)
    assert body["mean_words_per_subinstr"] == pytest.approx(3.5)


def test_normalize_endpoint_merges_singleton():
    episode = episode_payload(sub_paths=((0, 0), (0, 2)))
    response = client.post("/episodes/normalize", json={"episode": episode})
    assert response.status_code == 200
    body = response.json()
    assert body["sub_paths"] == [[0, 2]]
    assert body["sub_instructions"][0][:4] == ["walk", "to", "the", "bench"]


def test_concat_endpoint_and_three_meter_rule():
    first = episode_payload(path_id="first", path=("A", "B", "C"),
                            sub_paths=((0, 1), (1, 2)))
    second = episode_payload(path_id="second", path=("C", "D"),
                             sub_paths=((0, 1),))
    second["sub_instructions"] = [["go", "to", "the", "end"]]
    response = client.post("/episodes/concat", json={
        "first": first, "second": second, "graph": graph_payload()})
    assert response.status_code == 200
    assert response.json()["path"] == ["A", "B", "C", "D"]

    # D -> A is 9 m away from every joinable endpoint
    far = episode_payload(path_id="far", path=("A", "B"), sub_paths=((0, 1),))
    far["sub_instructions"] = [["walk", "to", "the", "bench"]]
    response = client.post("/episodes/concat", json={
        "first": second | {"path_id": "second"}, "second": far,
        "graph": graph_payload()})
    assert response.status_code == 422
    assert "not concatenable" in response.json()["detail"]["rule"]


def test_shortest_dist_endpoint():
    response = client.post("/graph/shortest-dist", json={
        "graph": graph_payload(), "source": "A", "target": "D"})
    assert response.status_code == 200
    assert response.json() == {"distance": 9.0, "reachable": True}

    isolated = graph_payload()
    isolated["nodes"].append({"id": "Z", "x": 20.0, "y": 0.0, "z": 0.0})
    response = client.post("/graph/shortest-dist", json={
        "graph": isolated, "source": "A", "target": "Z"})
    assert response.json() == {"distance": None, "reachable": False}


def test_shift_signal_endpoint_boundary():
    # B sits exactly 0.5 m from A; sub-path 0 ends at B
    payload = {
        "graph": graph_payload(),
        "episode": episode_payload(),
        "agent_viewpoint": "A",
        "sub_idx": 0,
    }
    assert client.post("/shift-signal", json=payload).json() == {"signal": 1}
    payload["sub_idx"] = 1  # ends at C, 3 m from A
    assert client.post("/shift-signal", json=payload).json() == {"signal": 0}


def test_eval_endpoint_with_shifts():
    payload = {
        "graph": graph_payload(),
        "episodes": [episode_payload()],
        "trajectories": [{
            "path_id": "e0",
            "trajectory": ["A", "B", "C"],
            "shifts": [
                {"step": 1, "predicted": 0, "ground_truth": 1},
                {"step": 2, "predicted": 1, "ground_truth": 1},
                {"step": 3, "predicted": 0, "ground_truth": 0},
            ],
        }],
    }
    response = client.post("/eval", json=payload)
    assert response.status_code == 200
    body = response.json()
    assert body["results"][0]["ndtw"] == pytest.approx(1.0)
    assert body["results"][0]["success"] is True
    assert body["aggregate"]["sr"] == 1.0
    assert body["confusion_counts"] == {"tp": 1, "tn": 1, "fp": 0, "fn": 1}
    assert body["confusion"]["recall"] == pytest.approx(0.5)


def test_eval_unknown_trajectory_rejected():
    payload = {
        "graph": graph_payload(),
        "episodes": [episode_payload()],
        "trajectories": [{"path_id": "ghost", "trajectory": ["A"]}],
    }
    assert client.post("/eval", json=payload).status_code == 422


def test_confusion_endpoint_reproduces_published_row():
    response = client.post("/metrics/confusion", json={
        "tp": 608, "tn": 36344, "fp": 1602, "fn": 4796})
    body = response.json()
    assert body["accuracy"] == pytest.approx(0.852, abs=1e-3)
    assert body["precision"] == pytest.approx(0.275, abs=1e-3)
    assert body["recall"] == pytest.approx(0.113, abs=1e-3)
    assert body["f1"] == pytest.approx(0.160, abs=1e-3)


def test_confusion_endpoint_undefined_rates_are_null():
    response = client.post("/metrics/confusion", json={"tp": 0, "tn": 10})
    body = response.json()
    assert body["precision"] is None
    assert body["recall"] is None


def test_bleu_endpoint():
    response = client.post("/bleu", json={
        "candidate": ["go", "to", "the", "door"],
        "reference": ["go", "to", "the", "door"]})
    assert response.json()["score"] == pytest.approx(1.0)


def test_cluster_endpoint():
    results = [
        {"key": f"e:{i}", "words": words, "end_distance": d, "ndtw": 0.5,
         "viewpoint_span": 2}
        for i, (words, d) in enumerate([
            (["head", "down", "the", "stair"], 2.0),
            (["head", "down", "the", "stairs"], 2.5),
            (["walk", "past", "the", "sink"], 7.0),
            (["walk", "past", "the", "fridge"], 6.0),
        ])
    ]
    response = client.post("/cluster", json={"results": results, "k": 2})
    assert response.status_code == 200
    summaries = response.json()["summaries"]
    assert [s["rank"] for s in summaries] == [1, 2]
    assert summaries[0]["mean_distance"] <= summaries[1]["mean_distance"]
    assert sum(s["frequency"] for s in summaries) == 4


def test_toyworld_endpoint_is_deterministic():
    request = {"seed": 4, "n_nodes": 6, "n_episodes": 3}
    one = client.post("/toyworld/generate", json=request).json()
    two = client.post("/toyworld/generate", json=request).json()
    assert one == two
    assert len(one["episodes"]) == 3
    response = client.post("/episodes/validate", json={
        "episodes": one["episodes"], "graph": one["graph"]})
    assert response.json()["valid"] is True


def test_bad_graph_rejected():
    broken = graph_payload()
    broken["edges"].append(["A", "MISSING"])
    response = client.post("/graph/shortest-dist", json={
        "graph": broken, "source": "A", "target": "B"})
    assert response.status_code == 400
    assert "MISSING" in response.json()["detail"]
