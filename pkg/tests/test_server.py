"""HTTP contract: question serving, validation errors with field names,
idempotent submission, stats endpoints, and role confidentiality."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from legibility.server import create_app
from legibility.survey import (ResponseStore, SurveyQuestion, SurveyService)


def make_questions(n=6):
    out = []
    for i in range(n):
        a1, b, c = f"s0_{i}a.png", f"s1_{i}b.png", f"s2_{i}c.png"
        out.append(SurveyQuestion(
            question_id=f"q{i:03d}", segment_a=0, pano_id=f"pano_{i}",
            control_image=f"s0_{i}ctl.png",
            choices=(a1, b, c),
            roles={a1: "image_a_1", b: "image_b", c: "image_c"},
            choice_segments={a1: 0, b: 1, c: 2}))
    return out


@pytest.fixture()
def client(tmp_path):
    store = ResponseStore(tmp_path / "responses.jsonl")
    heat = np.zeros((64, 64))
    heat[10, 10] = 1.0
    questions = make_questions()
    heatmaps = {q.control_image: heat for q in questions}
    service = SurveyService(questions, store, image_size=(64, 64),
                            heatmaps=heatmaps)
    app = create_app(service)
    with TestClient(app) as c:
        c.service = service
        yield c


def valid_body(question, participant="alice", token=""):
    return {
        "participant": participant,
        "question_id": question["question_id"],
        "chosen_image": question["choice_urls"][0],
        "clicks": [{"x": 5, "y": 6, "property": "object"},
                   {"x": 10, "y": 11, "property": "color"},
                   {"x": 30, "y": 31, "property": "texture"}],
        "dwell_ms": 8000.0,
        "token": token,
    }


class TestQuestionEndpoint:
    def test_serves_valid_question(self, client):
        r = client.get("/api/question", params={"participant": "alice"})
        assert r.status_code == 200
        q = r.json()
        assert not q["done"]
        assert len(q["choice_urls"]) == 3
        assert q["rotation_ms"] == 10000
        assert q["panorama_url"].endswith(".png")
        assert q["image_width"] == 64

    def test_payload_never_leaks_roles(self, client):
        r = client.get("/api/question", params={"participant": "alice"})
        blob = json.dumps(r.json())
        assert "image_a_1" not in blob
        assert "image_b" not in blob
        assert "roles" not in r.json()
        assert "segment" not in blob.lower()

    def test_completion_after_quota(self, client):
        for _ in range(5):
            assert not client.get("/api/question",
                                  params={"participant": "bob"}).json()["done"]
        assert client.get("/api/question", params={"participant": "bob"}).json()["done"]

    def test_distinct_participants_tracked_separately(self, client):
        for p in ("u1", "u2"):
            ids = set()
            for _ in range(5):
                q = client.get("/api/question", params={"participant": p}).json()
                ids.add(q["question_id"])
            assert len(ids) == 5


class TestResponseEndpoint:
    def test_valid_response_stored(self, client):
        q = client.get("/api/question", params={"participant": "alice"}).json()
        r = client.post("/api/response", json=valid_body(q))
        assert r.status_code == 201
        assert r.json()["id"].startswith("r")

    def test_unknown_question_422_names_field(self, client):
        q = client.get("/api/question", params={"participant": "a"}).json()
        body = valid_body(q)
        body["question_id"] = "q999"
        r = client.post("/api/response", json=body)
        assert r.status_code == 422
        assert r.json()["detail"]["field"] == "question_id"

    def test_wrong_click_count_422(self, client):
        q = client.get("/api/question", params={"participant": "a"}).json()
        body = valid_body(q)
        body["clicks"] = body["clicks"][:2]
        r = client.post("/api/response", json=body)
        assert r.status_code == 422
        assert "clicks" in r.json()["detail"]["field"]

    def test_out_of_bounds_click_422(self, client):
        q = client.get("/api/question", params={"participant": "a"}).json()
        body = valid_body(q)
        body["clicks"][1]["x"] = 200
        r = client.post("/api/response", json=body)
        assert r.status_code == 422

    def test_bad_property_422(self, client):
        q = client.get("/api/question", params={"participant": "a"}).json()
        body = valid_body(q)
        body["clicks"][0]["property"] = "sound"
        r = client.post("/api/response", json=body)
        assert r.status_code == 422

    def test_foreign_choice_422(self, client):
        q = client.get("/api/question", params={"participant": "a"}).json()
        body = valid_body(q)
        body["chosen_image"] = "/static/nope.png"
        r = client.post("/api/response", json=body)
        assert r.status_code == 422
        assert r.json()["detail"]["field"] == "chosen_image"

    def test_duplicate_token_returns_same_id(self, client):
        q = client.get("/api/question", params={"participant": "a"}).json()
        body = valid_body(q, token="once")
        id1 = client.post("/api/response", json=body).json()["id"]
        id2 = client.post("/api/response", json=body).json()["id"]
        assert id1 == id2
        assert len(client.service.store) == 1

    def test_participant_key_is_hashed(self, client):
        q = client.get("/api/question", params={"participant": "carol"}).json()
        client.post("/api/response", json=valid_body(q, participant="carol"))
        stored = client.service.store.responses()[0]
        assert "carol" not in stored.participant
        assert len(stored.participant) == 16


class TestStatsEndpoints:
    def test_choices_and_properties(self, client):
        q = client.get("/api/question", params={"participant": "a"}).json()
        client.post("/api/response", json=valid_body(q))
        choices = client.get("/api/stats/choices").json()
        assert choices["total"] == 1
        assert sum(choices["percentages"].values()) == pytest.approx(100.0)
        props = client.get("/api/stats/properties").json()
        assert props["ranks"][0]["percentages"]["object"] == 100.0

    def test_eta_stats_available_with_heatmaps(self, client):
        q = client.get("/api/question", params={"participant": "a"}).json()
        client.post("/api/response", json=valid_body(q))
        stats = client.get("/api/stats/eta").json()
        assert stats["available"]
        assert stats["count"] == 1
        assert 0.0 <= stats["mean"] <= 1.0

    def test_eta_stats_unavailable_without_heatmaps(self, tmp_path):
        store = ResponseStore(tmp_path / "r2.jsonl")
        service = SurveyService(make_questions(), store, image_size=(64, 64))
        with TestClient(create_app(service)) as c:
            assert c.get("/api/stats/eta").json() == {"available": False}
