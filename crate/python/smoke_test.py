"""Smoke test for the Python bindings.

Build and install first:  pip install maturin && maturin develop --release -m crates/py/Cargo.toml
"""

import math

import homeplan_py as hp


def main():
    model, kb1 = hp.learn("paper_home", "Robot1", visits_per_room=10, seed=3)
    _, kb2 = hp.learn("paper_home", "Robot2", visits_per_room=10, seed=4)
    print(model, kb1, kb2)

    probs, zero = model.object_location_posterior(model.vocab_objects[0])
    assert not zero and math.isclose(sum(probs), 1.0, abs_tol=1e-9)
    assert 0 <= model.assign_region(0.0, 0.0) < model.num_regions

    back = hp.SpatialConceptModel.from_json(model.to_json())
    assert back.vocab_objects == model.vocab_objects
    assert hp.KnowledgeBase.from_json(kb1.to_json()).room_names == kb1.room_names

    table = hp.render_presence_table([kb1, kb2])
    assert "Robot1" in table and "Robot2" in table

    subtasks = hp.decompose("Could you please find apple and car_toy.")
    assert [s["target_object"] for s in subtasks] == ["apple", "car_toy"]
    assignments = hp.allocate("Could you please find apple and car_toy.", [kb1, kb2])
    print("assignments:", [(a["subtask"]["target_object"], a["robot_id"]) for a in assignments])
    assert [a["robot_id"] for a in assignments] == ["Robot1", "Robot2"]

    steps = [l for l in hp.field_trip(seed=7) if l["robot_id"] == "Robot2"]
    assert len(steps) == 11, steps

    report = hp.suite(seed=7)
    assert report["schema_version"] == hp.SCHEMA_VERSION
    print("proposed total:", report["grid"]["proposed"]["total"])

    try:
        hp.learn("paper_home", "Robot9")
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("unknown robot accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
